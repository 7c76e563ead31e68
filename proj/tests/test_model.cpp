#include "a3t/model.hpp"
#include "a3t/random.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

#include "doctest.h"

using namespace a3t;
using a3t::testing::gradient_check;

namespace {

ModelConfig micro() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.encoder_kernel = 3;
  c.decoder_kernel = 3;
  c.postnet_layers = 2;
  c.postnet_channels = 8;
  c.postnet_kernel = 3;
  c.max_segments = 16;
  c.dropout = 0.0;
  return c;
}

ModelInput toy_input(int T, int P, std::uint64_t seed) {
  Rng rng(seed);
  ModelInput in;
  in.frames.resize(T, kMelBins);
  for (Eigen::Index i = 0; i < in.frames.size(); ++i) in.frames.data()[i] = rng.uniform(-4.0, 0.0);
  for (int p = 0; p < P; ++p) in.phones.ids.push_back(2 + static_cast<int>(rng.uniform_index(70)));
  for (int t = 0; t < T; ++t) in.frame_segments.push_back(std::min(P - 1, t * P / T));
  return in;
}

std::vector<ad::Tensor> params_with_prefix(A3tModel& m, const std::string& prefix) {
  std::vector<ad::Tensor> out;
  for (auto& [name, p] : m.parameters())
    if (name.rfind(prefix, 0) == 0) out.push_back(p);
  return out;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  const ModelConfig c;
  CHECK(c.d_model == 384);
  CHECK(c.heads == 2);
  CHECK(c.encoder_layers == 4);
  CHECK(c.decoder_layers == 4);
  CHECK(c.encoder_kernel == 7);
  CHECK(c.decoder_kernel == 31);
  CHECK(c.postnet_layers == 5);
  CHECK(c.max_segments == 500);
  CHECK(c.phone_vocab == 73);
  ModelConfig bad = c;
  bad.heads = 5;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.decoder_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.encoder_layers = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK(block_kind_from_string(to_string(BlockKind::Transformer)) == BlockKind::Transformer);
  CHECK(loss_kind_from_string(to_string(LossKind::L2)) == LossKind::L2);
}

TEST_CASE("joint sequence shape at full width") {
  ModelConfig c;
  c.encoder_layers = c.decoder_layers = 1;
  c.postnet_layers = 1;
  A3tModel m(c, 1);
  const ModelInput in = toy_input(3, 2, 5);
  const ad::Tensor h = m.embed_inputs(in);
  CHECK(h.rows() == 5);
  CHECK(h.cols() == 384);
  CHECK(m.parameters().get("alignment_embedding").rows() == 500);
  CHECK(m.parameters().get("phone_embedding").rows() == 73);
}

TEST_CASE("forward shapes and post-net switch") {
  A3tModel m(ModelConfig::tiny(), 3);
  const ModelInput in = toy_input(6, 3, 7);
  const ModelOutput out = m.forward(in);
  CHECK(out.reconstructed.rows() == 6);
  CHECK(out.reconstructed.cols() == 80);
  CHECK(out.refined.rows() == 6);
  CHECK(out.encoder_states.rows() == 9);
  CHECK(out.refined.value() != out.reconstructed.value());

  ModelConfig c = ModelConfig::tiny();
  c.use_postnet = false;
  A3tModel plain(c, 3);
  const ModelOutput o2 = plain.forward(in);
  CHECK(o2.refined.value() == o2.reconstructed.value());
}

TEST_CASE("forward is deterministic for a fixed seed") {
  A3tModel a(ModelConfig::tiny(), 11), b(ModelConfig::tiny(), 11);
  const ModelInput in = toy_input(8, 4, 2);
  CHECK(a.forward(in).refined.value() == b.forward(in).refined.value());
  A3tModel c(ModelConfig::tiny(), 12);
  CHECK(a.forward(in).refined.value() != c.forward(in).refined.value());
}

TEST_CASE("frames and their phoneme share the alignment row") {
  A3tModel m(ModelConfig::tiny(), 5);
  const Utterance u = fixtures::synthetic_utterance(3);
  const ModelInput in = make_input(u.spec.frames, {}, u.phones, u.alignment);
  const auto [frame_rows, phone_rows] = m.alignment_rows(in);
  for (int t = 0; t < u.spec.num_frames(); ++t) CHECK(frame_rows.row(t) == phone_rows.row(in.frame_segments[t]));
}

TEST_CASE("alignment embeddings are purely additive") {
  ModelConfig on = ModelConfig::tiny(), off = on;
  off.use_alignment_embeddings = false;
  A3tModel with(on, 9), without(off, 9);
  const Utterance u = fixtures::synthetic_utterance(4);
  const ModelInput in = make_input(u.spec.frames, {1, 2, 3}, u.phones, u.alignment);
  const auto [fr, pr] = with.alignment_rows(in);
  Matrix aln(fr.rows() + pr.rows(), fr.cols());
  aln << fr, pr;
  CHECK(with.embed_inputs(in).value() == without.embed_inputs(in).value() + aln);
  CHECK(without.alignment_rows(in).first.size() == 0);
}

TEST_CASE("speech-only input drops the text stream") {
  A3tModel m(ModelConfig::tiny(), 5);
  const ModelInput in = make_speech_only_input(toy_input(7, 2, 1).frames, {2, 3});
  const ModelOutput out = m.forward(in);
  CHECK(out.encoder_states.rows() == 7);
  CHECK(out.refined.rows() == 7);
}

TEST_CASE("masked rows see the mask vector, not their content") {
  A3tModel m(ModelConfig::tiny(), 5);
  ModelInput in = toy_input(8, 3, 4);
  in.masked_rows = {2, 3};
  const Matrix before = m.forward(in).refined.value();
  in.frames.row(2).setConstant(100.0);
  in.frames.row(3).setConstant(-100.0);
  CHECK(m.forward(in).refined.value() == before);
}

TEST_CASE("input validation") {
  A3tModel m(ModelConfig::tiny(), 5);
  ModelInput in = toy_input(4, 2, 4);
  in.frame_segments[0] = 500;
  CHECK_THROWS_AS(m.forward(in), DataError);
  in = toy_input(4, 2, 4);
  in.phones.ids[0] = 73;
  CHECK_THROWS_AS(m.forward(in), DataError);
  in = toy_input(4, 2, 4);
  in.frame_segments.pop_back();
  CHECK_THROWS_AS(m.forward(in), DataError);
  in = toy_input(4, 2, 4);
  in.frames = Matrix::Zero(4, 79);
  CHECK_THROWS_AS(m.forward(in), DataError);
}

TEST_CASE("initialization conventions") {
  A3tModel m(ModelConfig::tiny(), 5);
  const auto& p = m.parameters();
  CHECK(p.get("encoder.0.final_norm.gain").value() == Matrix::Ones(1, 32));
  CHECK(p.get("encoder.0.final_norm.bias").value() == Matrix::Zero(1, 32));
  const Matrix& aln = p.get("alignment_embedding").value();
  const double sd = std::sqrt(aln.array().square().mean());
  CHECK(sd == doctest::Approx(0.02).epsilon(0.05));
  const Matrix& w = p.get("acoustic_encoder.weight").value();
  CHECK(w.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(80.0));
}

TEST_CASE("transformer blocks have no convolution module") {
  ModelConfig c = ModelConfig::tiny();
  c.block_kind = BlockKind::Transformer;
  A3tModel m(c, 1);
  CHECK_FALSE(m.parameters().contains("encoder.0.conv.depthwise.weight"));
  CHECK(A3tModel(ModelConfig::tiny(), 1).parameters().contains("encoder.0.conv.depthwise.weight"));
  const ModelOutput out = m.forward(toy_input(5, 2, 3));
  CHECK(out.refined.rows() == 5);
}

TEST_CASE("block output shape and block gradients") {
  for (BlockKind kind : {BlockKind::Conformer, BlockKind::Transformer}) {
    ModelConfig c = micro();
    c.block_kind = kind;
    A3tModel m(c, 21);
    Rng rng(1);
    Matrix h0(5, 8);
    for (Eigen::Index i = 0; i < h0.size(); ++i) h0.data()[i] = rng.uniform(-1, 1);
    const ad::Tensor h = ad::Tensor::constant(h0);
    CHECK(m.block("encoder.0.", h, {}).rows() == 5);
    Matrix dir(5, 8);
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = rng.uniform(-1, 1);
    const auto params = params_with_prefix(m, "encoder.0.");
    REQUIRE(!params.empty());
    auto loss = [&] { return ad::sum(ad::mul(m.block("encoder.0.", h, {}), ad::Tensor::constant(dir))); };
    CHECK(gradient_check(params, loss) < 1e-3);
  }
}

TEST_CASE("loss closed form and empty mask") {
  const ad::Tensor target = ad::Tensor::constant(Matrix::Zero(3, 80));
  ModelOutput out;
  out.reconstructed = ad::Tensor::parameter(Matrix::Ones(3, 80));
  out.refined = ad::Tensor::parameter(Matrix::Ones(3, 80));
  CHECK(masked_recon_loss(out, target, {1}, LossKind::L1).item() == 2.0);
  CHECK(masked_recon_loss(out, target, {1}, LossKind::L2).item() == 2.0);
  ModelOutput exact{ad::Tensor::parameter(Matrix::Zero(3, 80)), ad::Tensor::parameter(Matrix::Zero(3, 80)), {}};
  CHECK(masked_recon_loss(exact, target, {0, 2}, LossKind::L1).item() == 0.0);
  CHECK_THROWS_AS(masked_recon_loss(out, target, {}, LossKind::L1), DataError);
}

TEST_CASE("full objective passes a finite-difference check on a 2-frame, 2-phone toy") {
  for (LossKind kind : {LossKind::L1, LossKind::L2}) {
    ModelConfig c = micro();
    c.loss_kind = kind;
    A3tModel m(c, 8);
    ModelInput in = toy_input(2, 2, 9);
    in.frame_segments = {0, 1};
    in.masked_rows = {1};
    const ad::Tensor target = ad::Tensor::constant(in.frames);
    std::vector<ad::Tensor> params;
    for (auto& [name, p] : m.parameters()) params.push_back(p);
    auto loss = [&] { return masked_recon_loss(m.forward(in), target, in.masked_rows, kind); };
    CHECK(gradient_check(params, loss) < 1e-3);
  }
}
