#include <gtest/gtest.h>

#include <cmath>

#include "pcb/encoder.hpp"
#include "pcb/encoding.hpp"
#include "pcb/error.hpp"
#include "support.hpp"

using namespace pcb;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

// Plain-loop transformer used as an oracle. Computes every row.
struct Reference {
  const ParameterStore& store;
  int heads;

  Mat p(const std::string& name) const { return to_mat(store.value(*store.find(name))); }

  static Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t k = 0; k < b.size(); ++k)
        for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
  }
  static Mat add_row(Mat a, const Mat& row) {
    for (auto& r : a)
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += row[0][j];
    return a;
  }
  static Mat layer_norm(const Mat& x, const Mat& g, const Mat& b) {
    Mat out = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double n = static_cast<double>(x[i].size());
      double mu = 0, var = 0;
      for (double v : x[i]) mu += v / n;
      for (double v : x[i]) var += (v - mu) * (v - mu) / n;
      for (std::size_t j = 0; j < x[i].size(); ++j) {
        out[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-6) * g[0][j] + b[0][j];
      }
    }
    return out;
  }

  Mat layer(const std::string& pre, const Mat& x, const std::vector<std::uint8_t>& mask) const {
    const Mat h = layer_norm(x, p(pre + "ln1.gain"), p(pre + "ln1.bias"));
    const Mat q = add_row(matmul(h, p(pre + "attn.wq")), p(pre + "attn.bq"));
    const Mat k = add_row(matmul(h, p(pre + "attn.wk")), p(pre + "attn.bk"));
    const Mat v = add_row(matmul(h, p(pre + "attn.wv")), p(pre + "attn.bv"));
    const std::size_t n = x.size(), hid = x[0].size(), d = hid / static_cast<std::size_t>(heads);
    Mat o(n, std::vector<double>(hid, 0.0));
    for (int hd = 0; hd < heads; ++hd) {
      const std::size_t off = static_cast<std::size_t>(hd) * d;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(n, 0.0);
        double mx = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
          if (!mask[j]) continue;
          double s = 0;
          for (std::size_t c = 0; c < d; ++c) s += q[i][off + c] * k[j][off + c];
          w[j] = s / std::sqrt(static_cast<double>(d));
          mx = std::max(mx, w[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j < n; ++j) {
          w[j] = mask[j] ? std::exp(w[j] - mx) : 0.0;
          z += w[j];
        }
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < d; ++c) o[i][off + c] += w[j] / z * v[j][off + c];
      }
    }
    Mat r = add_row(matmul(o, p(pre + "attn.wo")), p(pre + "attn.bo"));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hid; ++j) r[i][j] += x[i][j];
    Mat f = add_row(matmul(layer_norm(r, p(pre + "ln2.gain"), p(pre + "ln2.bias")), p(pre + "ffn.w1")),
                    p(pre + "ffn.b1"));
    for (auto& row : f)
      for (auto& val : row) val = std::max(val, 0.0);
    f = add_row(matmul(f, p(pre + "ffn.w2")), p(pre + "ffn.b2"));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hid; ++j) r[i][j] += f[i][j];
    return r;
  }

  std::vector<double> forward(const EncoderConfig& c, const TokenSequence& seq) const {
    const Mat tok = p("embed.token"), age = p("embed.age"), seg = p("embed.segment"),
              pos = p("embed.position"), apos = p("aggregator.position");
    const std::size_t hid = static_cast<std::size_t>(c.hidden);
    Mat e(c.max_len, std::vector<double>(hid));
    for (std::size_t i = 0; i < c.max_len; ++i)
      for (std::size_t j = 0; j < hid; ++j)
        e[i][j] = tok[seq.tokens[i]][j] + age[seq.ages[i]][j] + seg[seq.segments[i]][j] +
                  pos[seq.positions[i]][j];
    Mat vectors;
    std::vector<std::uint8_t> active;
    for (std::size_t start = 0;; start += c.stride) {
      Mat win(c.window, std::vector<double>(hid, 0.0));
      std::vector<std::uint8_t> m(c.window, 0);
      for (std::size_t i = 0; i < c.window && start + i < c.max_len; ++i) {
        win[i] = e[start + i];
        m[i] = seq.mask[start + i];
      }
      bool any = false;
      for (auto b : m) any = any || b;
      if (any) {
        for (int l = 0; l < c.extractor_layers; ++l) win = layer("extractor." + std::to_string(l) + ".", win, m);
        vectors.push_back(win[0]);
      } else {
        vectors.push_back(std::vector<double>(hid, 0.0));
      }
      active.push_back(any ? 1 : 0);
      if (start + c.window >= c.max_len) break;
    }
    for (std::size_t s = 0; s < vectors.size(); ++s)
      for (std::size_t j = 0; j < hid; ++j) vectors[s][j] += apos[s][j];
    for (int l = 0; l < c.aggregator_layers; ++l) vectors = layer("aggregator." + std::to_string(l) + ".", vectors, active);
    return vectors[0];
  }
};

TokenSequence make_sequence(std::size_t max_len, std::size_t events, Rng& rng, int vocab) {
  TokenSequence s;
  s.tokens.assign(max_len, 0);
  s.ages.assign(max_len, 0);
  s.segments.assign(max_len, 0);
  s.mask.assign(max_len, 0);
  s.positions.resize(max_len);
  for (std::size_t i = 0; i < max_len; ++i) s.positions[i] = static_cast<std::int32_t>(i);
  s.tokens[0] = CodeVocabulary::kCls;
  for (std::size_t i = 0; i <= events; ++i) {
    if (i > 0) s.tokens[i] = static_cast<std::int32_t>(rng.uniform_int(4, vocab - 1));
    s.ages[i] = static_cast<std::int32_t>(rng.uniform_int(40, 90));
    s.segments[i] = static_cast<std::int32_t>((i / 3) % 2);
    s.mask[i] = 1;
  }
  s.length = events + 1;
  return s;
}

EncoderConfig tiny(int layers, int heads) {
  EncoderConfig c = EncoderConfig::desk(12);
  c.extractor_layers = layers;
  c.aggregator_layers = layers;
  c.hidden = 8;
  c.heads = heads;
  c.intermediate = 6;
  c.max_len = 14;
  c.window = 6;
  c.stride = 4;
  return c;
}

// Random non-default values everywhere so gains and biases matter.
void perturb(ParameterStore& store, Rng& rng) {
  for (ParamId id = 0; id < store.size(); ++id)
    for (auto& v : store.value(id).values()) v += 0.3 * rng.normal();
}

}  // namespace

TEST(Encoder, SegmentCountIncludesPartialWindow) {
  EncoderConfig c = EncoderConfig::reference(10);
  EXPECT_EQ(c.segment_count(), 40u);  // (1220 - 50) / 30 + 1 = 40, no remainder
  c.max_len = 1221;
  EXPECT_EQ(c.segment_count(), 41u);
  EncoderConfig d = EncoderConfig::desk(10);
  EXPECT_EQ(d.segment_count(), 7u);  // (64 - 16) / 8 + 1
  d.max_len = 40;
  EXPECT_EQ(d.segment_count(), 4u);  // 3 full windows plus a partial one
}

TEST(Encoder, SlideWindowsPadsFinalWindow) {
  Tape tape;
  Tensor x({10, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i + 1);
  std::vector<std::uint8_t> mask(10, 1);
  mask[9] = 0;
  auto w = slide_windows(tape.constant(x), mask, 4, 3);
  ASSERT_EQ(w.size(), 3u);  // starts 0, 3, 6
  EXPECT_EQ(w[2].start, 6u);
  EXPECT_EQ(w[2].mask, (std::vector<std::uint8_t>{1, 1, 1, 0}));
  EXPECT_EQ(w[2].rows.value().at(3, 0), 19.0);
  auto p = slide_windows(tape.constant(x), mask, 4, 4);
  ASSERT_EQ(p.size(), 3u);  // starts 0, 4, 8; last has two real rows
  EXPECT_EQ(p[2].mask, (std::vector<std::uint8_t>{1, 0, 0, 0}));
  EXPECT_EQ(p[2].rows.value().at(2, 0), 0.0);
  EXPECT_EQ(p[2].rows.value().at(3, 1), 0.0);
}

TEST(Encoder, SingleLayerSingleHeadMatchesHandTrace) {
  Rng rng(21);
  const EncoderConfig c = tiny(1, 1);
  ParameterStore store;
  Rng init(1);
  Encoder enc(c, store, "", init);
  perturb(store, rng);
  const TokenSequence seq = make_sequence(c.max_len, 9, rng, c.token_vocab);
  Tape tape(false);
  const Tensor out = enc.forward(tape, store, seq, {}).value();
  const auto expected = Reference{store, 1}.forward(c, seq);
  ASSERT_EQ(out.cols(), expected.size());
  for (std::size_t j = 0; j < expected.size(); ++j) EXPECT_NEAR(out[j], expected[j], 1e-12);
}

TEST(Encoder, MultiLayerMultiHeadMatchesReference) {
  Rng rng(22);
  const EncoderConfig c = tiny(2, 2);
  ParameterStore store;
  Rng init(2);
  Encoder enc(c, store, "", init);
  perturb(store, rng);
  // 4 events leave the last windows fully masked.
  for (std::size_t events : {4u, 13u}) {
    const TokenSequence seq = make_sequence(c.max_len, events, rng, c.token_vocab);
    Tape tape(false);
    const Tensor out = enc.forward(tape, store, seq, {}).value();
    const auto expected = Reference{store, 2}.forward(c, seq);
    for (std::size_t j = 0; j < expected.size(); ++j) EXPECT_NEAR(out[j], expected[j], 1e-12);
  }
}

TEST(Encoder, PaddingContentDoesNotChangeOutput) {
  Rng rng(23);
  const EncoderConfig c = tiny(2, 2);
  ParameterStore store;
  Rng init(3);
  Encoder enc(c, store, "", init);
  TokenSequence seq = make_sequence(c.max_len, 5, rng, c.token_vocab);
  Tape t1(false);
  const Tensor base = enc.forward(t1, store, seq, {}).value();
  for (std::size_t i = seq.length; i < c.max_len; ++i) {
    seq.tokens[i] = 7;
    seq.ages[i] = 99;
    seq.segments[i] = 1;
  }
  Tape t2(false);
  EXPECT_EQ(enc.forward(t2, store, seq, {}).value(), base);
}

TEST(Encoder, EvalModeIsDeterministicAndTrainModeNeedsRng) {
  Rng rng(24);
  const EncoderConfig c = tiny(1, 2);
  ParameterStore store;
  Rng init(4);
  Encoder enc(c, store, "", init);
  const TokenSequence seq = make_sequence(c.max_len, 8, rng, c.token_vocab);
  Tape a(false), b(false);
  EXPECT_EQ(enc.forward(a, store, seq, {}).value(), enc.forward(b, store, seq, {}).value());
  Tape t;
  EXPECT_THROW(enc.forward(t, store, seq, ForwardMode{true, nullptr}), UsageError);
}

TEST(Encoder, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(25);
  const EncoderConfig c = tiny(1, 2);
  ParameterStore store;
  Rng init(5);
  Encoder enc(c, store, "", init);
  perturb(store, rng);
  const TokenSequence seq = make_sequence(c.max_len, 10, rng, c.token_vocab);
  const auto r = pcbtest::check_parameter_gradients(
      [&](Tape& tape, const ParameterStore& s) {
        // Linear read-out keeps the loss O(1), so difference round-off stays
        // small next to the key-bias gradient, which is exactly zero.
        Var out = enc.forward(tape, s, seq, {});
        Tensor w(out.shape());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * std::cos(static_cast<double>(i));
        return sum(mul(out, tape.constant(w)));
      },
      store, 3);
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Encoder, ConfigValidationNamesKey) {
  EncoderConfig c = EncoderConfig::desk(10);
  c.heads = 5;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.heads"), std::string::npos);
  }
  c = EncoderConfig::desk(10);
  c.stride = 20;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Encoding, ClsTruncationAndSegments) {
  CodeVocabulary vocab;
  const TokenId a = vocab.add("DX/A"), b = vocab.add("DX/B"), x = vocab.add("DX/X");
  PatientRecord r;
  r.events = {{a, 60, 0}, {b, 60, 0}, {a, 61, 1}, {b, 62, 2}, {x, 63, 3}};
  r.visit_times = {60.0, 61.0, 62.0, 63.0};
  r.baseline_index = 4;  // the X event lies in the outcome window
  r.baseline_time = 62.5;
  const TokenSequence full = encode_patient(r, vocab, 8);
  EXPECT_EQ(full.length, 5u);
  EXPECT_EQ(full.tokens[0], CodeVocabulary::kCls);
  EXPECT_EQ(decode_tokens(full), (std::vector<TokenId>{a, b, a, b}));
  EXPECT_EQ(full.segments, (std::vector<std::int32_t>{0, 0, 0, 1, 0, 0, 0, 0}));
  EXPECT_EQ(full.mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0}));
  validate_sequence(full);

  const TokenSequence cut = encode_patient(r, vocab, 3);  // keeps the two most recent events
  EXPECT_EQ(decode_tokens(cut), (std::vector<TokenId>{a, b}));
  EXPECT_EQ(cut.ages[0], 61);

  r.baseline_index = 0;
  EXPECT_THROW(encode_patient(r, vocab, 8), DataError);
}
