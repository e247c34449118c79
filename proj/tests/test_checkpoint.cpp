#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pcb/checkpoint.hpp"
#include "pcb/error.hpp"
#include "support.hpp"

using namespace pcb;

namespace {

struct Saved {
  Dataset data;
  std::unique_ptr<RiskModel> model;
  std::string bytes;
};

Saved saved_model(ModelKind kind) {
  Saved s;
  s.data = generate_cohort(af_hf_template(40, 12));
  s.model = make_model(pcbtest::small_model_config(s.data, kind));
  Rng rng(2);
  ParameterStore& store = s.model->parameters();
  for (ParamId id = 0; id < store.size(); ++id)
    for (auto& v : store.value(id).values()) v += 0.01 * rng.normal();
  if (auto* pcb = dynamic_cast<PcbModel*>(s.model.get())) {
    QuantizerState q = pcb->quantizer();
    for (int i = 0; i < 17; ++i) q = temperature_step(q);
    pcb->set_quantizer(q);
  }
  s.bytes = serialize_checkpoint(*s.model, s.data.task, s.data.vocab, s.data.concepts);
  return s;
}

CheckpointError::Kind kind_of(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return CheckpointError::Kind::kIo;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  for (ModelKind kind : {ModelKind::kPcb, ModelKind::kBlackBox}) {
    const Saved s = saved_model(kind);
    const CheckpointBundle back = deserialize_checkpoint(s.bytes);
    EXPECT_EQ(back.task, s.data.task);
    EXPECT_EQ(back.vocab, s.data.vocab);
    EXPECT_EQ(back.concepts, s.data.concepts);
    ASSERT_EQ(back.model->kind(), kind);
    const ParameterStore& a = s.model->parameters();
    const ParameterStore& b = back.model->parameters();
    ASSERT_EQ(a.size(), b.size());
    for (ParamId id = 0; id < a.size(); ++id) {
      EXPECT_EQ(a.name(id), b.name(id));
      EXPECT_EQ(a.value(id), b.value(id)) << a.name(id);
    }
    EXPECT_EQ(serialize_checkpoint(*back.model, back.task, back.vocab, back.concepts), s.bytes);
    const auto examples = make_examples(s.data, {0, 1, 2, 3, 4}, 24);
    for (const auto& ex : examples) EXPECT_EQ(back.model->predict_risk(ex), s.model->predict_risk(ex));
    if (kind == ModelKind::kPcb) {
      const auto& qa = dynamic_cast<const PcbModel&>(*s.model).quantizer();
      const auto& qb = dynamic_cast<const PcbModel&>(*back.model).quantizer();
      EXPECT_EQ(qa.temperature, qb.temperature);
      EXPECT_EQ(qa.steps, qb.steps);
    }
  }
}

TEST(Checkpoint, CorruptionIsClassified) {
  const Saved s = saved_model(ModelKind::kPcb);
  using Kind = CheckpointError::Kind;

  std::string bad_magic = s.bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of(bad_magic), Kind::kFormat);

  std::string version = s.bytes;
  version[8] = 2;  // first byte of the little-endian version
  EXPECT_EQ(kind_of(version), Kind::kUnsupportedVersion);

  EXPECT_EQ(kind_of(s.bytes.substr(0, 5)), Kind::kTruncated);
  EXPECT_EQ(kind_of(s.bytes.substr(0, s.bytes.size() - 1)), Kind::kTruncated);
  EXPECT_EQ(kind_of(s.bytes + "x"), Kind::kFormat);

  // Flip one bit in every 997th payload byte; each must fail the checksum.
  for (std::size_t i = 24; i < s.bytes.size(); i += 997) {
    std::string flipped = s.bytes;
    flipped[i] = static_cast<char>(flipped[i] ^ 0x10);
    ASSERT_EQ(kind_of(flipped), Kind::kChecksum) << "offset " << i;
  }
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const Saved s = saved_model(ModelKind::kPcb);
  const auto dir = std::filesystem::temp_directory_path() / "pcb_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, *s.model, s.data.task, s.data.vocab, s.data.concepts);
  std::ifstream in(path, std::ios::binary);
  const std::string disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(disk, s.bytes);
  EXPECT_EQ(load_checkpoint(path).task, s.data.task);
  try {
    load_checkpoint((dir / "absent.ckpt").string());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kIo);
  }
  std::filesystem::remove_all(dir);
}
