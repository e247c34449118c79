#include "pcb/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcb/error.hpp"

namespace pcb {

namespace {

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw UsageError(std::string(op) + ": operands must live on the same tape");
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Var& a, const Var& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

Tensor matrix_like(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

}  // namespace

// ---- Var / Tape -----------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(index_); }

double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) throw DimensionError("item() on non-scalar " + shape_string(v.shape()));
  return v[0];
}

Var Tape::push_node(Tensor value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push_node(std::move(value), false, {}); }

Var Tape::variable(Tensor value) { return push_node(std::move(value), true, {}); }

Var Tape::parameter(const ParameterStore& store, ParamId id) {
  for (const auto& [pid, node] : parameter_nodes_) {
    if (pid == id) return Var(this, node);
  }
  Var v = push_node(store.value(id), record_, {});
  parameter_nodes_.emplace_back(id, v.index());
  return v;
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(fn));
}

Var Tape::push(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw UsageError("operand belongs to another tape");
    needs = needs || nodes_[p.index()].requires_grad;
  }
  return push_node(std::move(value), needs, std::move(fn));
}

const Tensor* Tape::grad_of(std::size_t index) const {
  const Node& n = nodes_[index];
  return n.has_grad ? &n.grad : nullptr;
}

Tensor& Tape::grad_buffer(std::size_t index) {
  Node& n = nodes_[index];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw UsageError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " +
                     shape_string(loss.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_buffer(loss.index())[0] = 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.has_grad && n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.index()];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

void Tape::accumulate_parameter_grads(Gradients& grads, double scale) const {
  for (const auto& [pid, index] : parameter_nodes_) {
    const Node& n = nodes_[index];
    if (!n.has_grad) continue;
    Tensor& dst = grads[pid];
    if (dst.size() != n.grad.size()) {
      throw DimensionError("gradient buffer " + shape_string(dst.shape()) +
                           " does not match parameter " + shape_string(n.grad.shape()));
    }
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * n.grad[k];
  }
}

// ---- linear algebra -------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) shape_mismatch("matmul", a, b);
  Tensor out = matrix_like(m, n);
  const double* A = a.value().data();
  const double* B = b.value().data();
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().push(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const double* G = t.grad_of(self)->data();
    const double* A = t.value(ai).data();
    const double* B = t.value(bi).data();
    if (t.requires_grad(ai)) {
      // dA = G B^T, accumulated as row updates over a transposed copy of B.
      std::vector<double> bt(k * n);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      double* dA = t.grad_buffer(ai).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          if (g == 0.0) continue;
          const double* btrow = bt.data() + j * k;
          double* drow = dA + i * k;
          for (std::size_t p = 0; p < k; ++p) drow[p] += g * btrow[p];
        }
    }
    if (t.requires_grad(bi)) {
      double* dB = t.grad_buffer(bi).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          const double* grow = G + i * n;
          double* drow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
        }
    }
  });
}

Var matmul_transposed(Var a, Var b) {
  require_same_tape(a, b, "matmul_transposed");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) shape_mismatch("matmul_transposed", a, b);
  Tensor out = matrix_like(m, n);
  const double* A = a.value().data();
  const double* B = b.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      out.data()[i * n + j] = s;
    }
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().push(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const double* G = t.grad_of(self)->data();
    const double* A = t.value(ai).data();
    const double* B = t.value(bi).data();
    if (t.requires_grad(ai)) {
      double* dA = t.grad_buffer(ai).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += g * B[j * k + p];
        }
    }
    if (t.requires_grad(bi)) {
      double* dB = t.grad_buffer(bi).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) dB[j * k + p] += g * A[i * k + p];
        }
    }
  });
}

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const std::size_t m = a.rows(), n = a.cols();
  const bool broadcast = b.rows() == 1 && m != 1 && b.cols() == n;
  if (!broadcast && (b.rows() != m || b.cols() != n)) shape_mismatch("add", a, b);
  Tensor out = matrix_like(m, n);
  const double* A = a.value().data();
  const double* B = b.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.data()[i * n + j] = A[i * n + j] + B[broadcast ? j : i * n + j];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().push(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    if (t.requires_grad(ai)) t.grad_buffer(ai) += g;
    if (t.requires_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      if (broadcast) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
      } else {
        db += g;
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("sub", a, b);
  Tensor out = matrix_like(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().push(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    if (t.requires_grad(ai)) t.grad_buffer(ai) += g;
    if (t.requires_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("mul", a, b);
  Tensor out = matrix_like(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().push(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.requires_grad(ai)) {
      Tensor& da = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = matrix_like(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  const std::size_t ai = a.index();
  return a.tape().push(std::move(out), {a}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    Tensor& da = t.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
  });
}

Var relu(Var a) {
  Tensor out = matrix_like(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.value()[i]);
  const std::size_t ai = a.index();
  return a.tape().push(std::move(out), {a}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    const Tensor& av = t.value(ai);
    Tensor& da = t.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) da[i] += g[i];
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var sigmoid(Var a) {
  Tensor out = matrix_like(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a.value()[i]);
  const std::size_t ai = a.index();
  return a.tape().push(std::move(out), {a}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var dropout(Var a, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor mask = matrix_like(a.rows(), a.cols());
  for (double& m : mask.values()) m = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor out = matrix_like(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * mask[i];
  const std::size_t ai = a.index();
  return a.tape().push(std::move(out), {a},
                       [=, mask = std::move(mask)](Tape& t, std::size_t self) {
                         const Tensor& g = *t.grad_of(self);
                         Tensor& da = t.grad_buffer(ai);
                         for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * mask[i];
                       });
}

// ---- structural -----------------------------------------------------------

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw UsageError("concat axis must be 0 or 1");
  Tape& tape = parts[0].tape();
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat");
    if (axis == 0) {
      if (p.cols() != parts[0].cols()) shape_mismatch("concat", parts[0], p);
      rows += p.rows();
      cols = p.cols();
    } else {
      if (p.rows() != parts[0].rows()) shape_mismatch("concat", parts[0], p);
      cols += p.cols();
      rows = p.rows();
    }
  }
  Tensor out = matrix_like(rows, cols);
  std::vector<std::size_t> indices;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t pr = p.rows(), pc = p.cols();
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j) {
        if (axis == 0) out.at(offset + i, j) = v[i * pc + j];
        else out.at(i, offset + j) = v[i * pc + j];
      }
    indices.push_back(p.index());
    offsets.push_back(offset);
    offset += axis == 0 ? pr : pc;
  }
  return tape.push(std::move(out), parts,
                   [=, indices = std::move(indices), offsets = std::move(offsets)](
                       Tape& t, std::size_t self) {
                     const Tensor& g = *t.grad_of(self);
                     for (std::size_t q = 0; q < indices.size(); ++q) {
                       const std::size_t pi = indices[q];
                       if (!t.requires_grad(pi)) continue;
                       Tensor& dp = t.grad_buffer(pi);
                       const std::size_t pr = t.value(pi).rows(), pc = t.value(pi).cols();
                       for (std::size_t i = 0; i < pr; ++i)
                         for (std::size_t j = 0; j < pc; ++j)
                           dp[i * pc + j] += axis == 0 ? g.at(offsets[q] + i, j)
                                                       : g.at(i, offsets[q] + j);
                     }
                   });
}

Var slice(Var a, int axis, std::size_t begin, std::size_t count) {
  if (axis != 0 && axis != 1) throw UsageError("slice axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if (begin + count > extent || count == 0) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for shape " +
                         shape_string(a.shape()));
  }
  const std::size_t rows = axis == 0 ? count : m;
  const std::size_t cols = axis == 0 ? n : count;
  Tensor out = matrix_like(rows, cols);
  const Tensor& v = a.value();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out.at(i, j) = axis == 0 ? v[(begin + i) * n + j] : v[i * n + begin + j];
  const std::size_t ai = a.index();
  return a.tape().push(std::move(out), {a}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    Tensor& da = t.grad_buffer(ai);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        if (axis == 0) da[(begin + i) * n + j] += g.at(i, j);
        else da[i * n + begin + j] += g.at(i, j);
      }
  });
}

Var embedding_lookup(Var table, std::span<const std::int32_t> ids) {
  const std::size_t vocab = table.rows(), dim = table.cols();
  Tensor out = matrix_like(ids.size(), dim);
  const Tensor& tv = table.value();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw DataError("embedding id " + std::to_string(ids[r]) + " outside table of " +
                      std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + ids[r] * dim, dim, out.data() + r * dim);
  }
  const std::size_t ti = table.index();
  return table.tape().push(
      std::move(out), {table},
      [=, ids = std::vector<std::int32_t>(ids.begin(), ids.end())](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_of(self);
        Tensor& dt = t.grad_buffer(ti);
        for (std::size_t r = 0; r < ids.size(); ++r)
          for (std::size_t j = 0; j < dim; ++j) dt[ids[r] * dim + j] += g[r * dim + j];
      });
}

// ---- normalisation --------------------------------------------------------

namespace {

Var softmax_impl(Var a, const std::vector<std::uint8_t>* mask) {
  const std::size_t m = a.rows(), n = a.cols();
  if (mask && mask->size() != n) {
    throw DimensionError("masked_softmax: mask length " + std::to_string(mask->size()) +
                         " does not match shape " + shape_string(a.shape()));
  }
  Tensor out = matrix_like(m, n);
  const Tensor& v = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || (*mask)[j]) mx = std::max(mx, v[i * n + j]);
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // all masked
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[j]) continue;
      const double e = std::exp(v[i * n + j] - mx);
      out[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  const std::size_t ai = a.index();
  return a.tape().push(std::move(out), {a}, [=](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad_buffer(ai);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

}  // namespace

Var softmax(Var a) { return softmax_impl(a, nullptr); }

Var masked_softmax(Var a, std::span<const std::uint8_t> key_mask) {
  const std::vector<std::uint8_t> mask(key_mask.begin(), key_mask.end());
  return softmax_impl(a, &mask);
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  require_same_tape(a, gain, "layer_norm");
  require_same_tape(a, bias, "layer_norm");
  const std::size_t m = a.rows(), n = a.cols();
  if (gain.rows() != 1 || gain.cols() != n) shape_mismatch("layer_norm", a, gain);
  if (bias.rows() != 1 || bias.cols() != n) shape_mismatch("layer_norm", a, bias);
  Tensor out = matrix_like(m, n);
  Tensor normed = matrix_like(m, n);
  std::vector<double> inv_std(m);
  const Tensor& v = a.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += v[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = v[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (v[i * n + j] - mu) * inv_std[i];
      normed[i * n + j] = xh;
      out[i * n + j] = xh * gv[j] + bv[j];
    }
  }
  const std::size_t ai = a.index(), gi = gain.index(), bi = bias.index();
  return a.tape().push(
      std::move(out), {a, gain, bias},
      [=, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_of(self);
        const Tensor& gv = t.value(gi);
        if (t.requires_grad(gi)) {
          Tensor& dg = t.grad_buffer(gi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dg[j] += g[i * n + j] * normed[i * n + j];
        }
        if (t.requires_grad(bi)) {
          Tensor& db = t.grad_buffer(bi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
        }
        if (t.requires_grad(ai)) {
          Tensor& da = t.grad_buffer(ai);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[i * n + j] * gv[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * normed[i * n + j];
            }
            mean_dxh *= inv_n;
            mean_dxh_xh *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[i * n + j] * gv[j];
              da[i * n + j] +=
                  inv_std[i] * (dxh - mean_dxh - normed[i * n + j] * mean_dxh_xh);
            }
          }
        }
      });
}

// ---- reductions -----------------------------------------------------------

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ai = a.index();
  return a.tape().push(Tensor::scalar(s), {a}, [=](Tape& t, std::size_t self) {
    const double g = (*t.grad_of(self))[0];
    for (double& d : t.grad_buffer(ai).values()) d += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var straight_through(const Tensor& hard, Var soft) {
  if (hard.size() != soft.value().size()) {
    throw DimensionError("straight_through: hard " + shape_string(hard.shape()) +
                         " vs soft " + shape_string(soft.shape()));
  }
  Tensor out({soft.rows(), soft.cols()}, std::vector<double>(hard.values().begin(),
                                                             hard.values().end()));
  const std::size_t si = soft.index();
  return soft.tape().push(std::move(out), {soft}, [=](Tape& t, std::size_t self) {
    t.grad_buffer(si) += *t.grad_of(self);
  });
}

// ---- losses ---------------------------------------------------------------

double bce_with_logits_value(double x, double y) {
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

Var bce_with_logits(Var logit, double target) {
  if (logit.value().size() != 1) {
    throw DimensionError("bce_with_logits expects a single logit, got " +
                         shape_string(logit.shape()));
  }
  if (target != 0.0 && target != 1.0) {
    throw UsageError("bce_with_logits target must be 0 or 1, got " + std::to_string(target));
  }
  const double x = logit.value()[0];
  const std::size_t li = logit.index();
  return logit.tape().push(Tensor::scalar(bce_with_logits_value(x, target)), {logit},
                           [=](Tape& t, std::size_t self) {
                             const double g = (*t.grad_of(self))[0];
                             t.grad_buffer(li)[0] += g * (stable_sigmoid(x) - target);
                           });
}

Var ce_with_logits(Var logits, std::size_t target_class) {
  if (logits.rows() != 1) {
    throw DimensionError("ce_with_logits expects one row of logits, got " +
                         shape_string(logits.shape()));
  }
  const std::size_t k = logits.cols();
  if (target_class >= k) {
    throw UsageError("ce_with_logits class " + std::to_string(target_class) +
                     " outside [0, " + std::to_string(k) + ")");
  }
  const Tensor& v = logits.value();
  double mx = v[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, v[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) total += std::exp(v[j] - mx);
  const double lse = mx + std::log(total);
  const std::size_t li = logits.index();
  return logits.tape().push(
      Tensor::scalar(lse - v[target_class]), {logits}, [=](Tape& t, std::size_t self) {
        const double g = (*t.grad_of(self))[0];
        const Tensor& lv = t.value(li);
        Tensor& dl = t.grad_buffer(li);
        for (std::size_t j = 0; j < k; ++j) {
          const double p = std::exp(lv[j] - lse);
          dl[j] += g * (p - (j == target_class ? 1.0 : 0.0));
        }
      });
}

}  // namespace pcb
