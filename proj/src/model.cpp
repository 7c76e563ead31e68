#include "a3t/model.hpp"

#include "a3t/random.hpp"

#include <cmath>

namespace a3t {

std::string to_string(BlockKind kind) { return kind == BlockKind::Conformer ? "conformer" : "transformer"; }
std::string to_string(LossKind kind) { return kind == LossKind::L1 ? "L1" : "L2"; }

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "conformer") return BlockKind::Conformer;
  if (s == "transformer") return BlockKind::Transformer;
  throw UsageError("unknown block_kind: " + s);
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "L1" || s == "l1") return LossKind::L1;
  if (s == "L2" || s == "l2") return LossKind::L2;
  throw UsageError("unknown loss_kind: " + s);
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("model config: ") + what);
  };
  require(d_model >= 1 && heads >= 1 && d_model % heads == 0, "d_model must be divisible by heads");
  require(encoder_layers >= 1 && decoder_layers >= 1, "layer counts must be >= 1");
  require(postnet_layers >= 1 && postnet_channels >= 1, "post-net sizes must be >= 1");
  require(ffn_dim >= 1, "ffn_dim must be >= 1");
  require(encoder_kernel % 2 == 1 && decoder_kernel % 2 == 1 && postnet_kernel % 2 == 1 && encoder_kernel > 0 &&
              decoder_kernel > 0 && postnet_kernel > 0,
          "kernels must be odd");
  require(max_segments >= 1 && phone_vocab >= 1, "table sizes must be >= 1");
  require(n_mels == kMelBins, "n_mels must be 80");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.d_model = 32;
  c.heads = 2;
  c.ffn_dim = 128;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.postnet_channels = 32;
  c.dropout = 0.0;
  return c;
}

ModelInput make_input(const Matrix& frames, const std::vector<int>& masked_rows, const PhonemeSequence& phones,
                      const AlignmentMap& alignment) {
  ModelInput in;
  in.frames = frames;
  in.masked_rows = masked_rows;
  in.phones = phones;
  in.frame_segments = frame_segment_indices(alignment, static_cast<int>(frames.rows()));
  return in;
}

ModelInput make_speech_only_input(const Matrix& frames, const std::vector<int>& masked_rows) {
  ModelInput in;
  in.frames = frames;
  in.masked_rows = masked_rows;
  in.speech_only = true;
  return in;
}

Matrix sinusoidal_positions(int length, int dim) {
  Matrix pe(length, dim);
  for (int pos = 0; pos < length; ++pos)
    for (int i = 0; i < dim; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
    }
  return pe;
}

A3tModel::A3tModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  build(seed);
}

void A3tModel::add_linear(const std::string& name, int in, int out) {
  params_.add(name + ".weight", Matrix::Zero(in, out));
  params_.add(name + ".bias", Matrix::Zero(1, out));
}

void A3tModel::add_layer_norm(const std::string& name, int dim) {
  params_.add(name + ".gain", Matrix::Ones(1, dim));
  params_.add(name + ".bias", Matrix::Zero(1, dim));
}

void A3tModel::add_block(const std::string& prefix, int kernel) {
  const int d = cfg_.d_model;
  const bool conformer = cfg_.block_kind == BlockKind::Conformer;
  if (conformer) {
    add_layer_norm(prefix + "ffn1.norm", d);
    add_linear(prefix + "ffn1.in", d, cfg_.ffn_dim);
    add_linear(prefix + "ffn1.out", cfg_.ffn_dim, d);
  }
  add_layer_norm(prefix + "attn.norm", d);
  add_linear(prefix + "attn.q", d, d);
  add_linear(prefix + "attn.k", d, d);
  add_linear(prefix + "attn.v", d, d);
  add_linear(prefix + "attn.out", d, d);
  if (conformer) {
    add_layer_norm(prefix + "conv.norm", d);
    add_linear(prefix + "conv.pointwise1", d, 2 * d);
    params_.add(prefix + "conv.depthwise.weight", Matrix::Zero(kernel, d));
    params_.add(prefix + "conv.depthwise.bias", Matrix::Zero(1, d));
    add_linear(prefix + "conv.pointwise2", d, d);
  }
  add_layer_norm(prefix + "ffn2.norm", d);
  add_linear(prefix + "ffn2.in", d, cfg_.ffn_dim);
  add_linear(prefix + "ffn2.out", cfg_.ffn_dim, d);
  add_layer_norm(prefix + "final_norm", d);
}

void A3tModel::build(std::uint64_t seed) {
  const int d = cfg_.d_model;
  params_.add("mask_vector", Matrix::Zero(1, cfg_.n_mels));
  add_linear("acoustic_encoder", cfg_.n_mels, d);
  params_.add("phone_embedding", Matrix::Zero(cfg_.phone_vocab, d));
  params_.add("alignment_embedding", Matrix::Zero(cfg_.max_segments, d));
  for (int l = 0; l < cfg_.encoder_layers; ++l) add_block("encoder." + std::to_string(l) + ".", cfg_.encoder_kernel);
  for (int l = 0; l < cfg_.decoder_layers; ++l) add_block("decoder." + std::to_string(l) + ".", cfg_.decoder_kernel);
  add_linear("head", d, cfg_.n_mels);
  if (cfg_.use_postnet) {
    for (int l = 0; l < cfg_.postnet_layers; ++l) {
      const int in = l == 0 ? cfg_.n_mels : cfg_.postnet_channels;
      const int out = l == cfg_.postnet_layers - 1 ? cfg_.n_mels : cfg_.postnet_channels;
      const std::string name = "postnet." + std::to_string(l);
      params_.add(name + ".weight", Matrix::Zero(cfg_.postnet_kernel * in, out));
      params_.add(name + ".bias", Matrix::Zero(1, out));
    }
  }

  // Embedding tables and the mask vector ~ N(0, 0.02^2); layer norms stay at
  // identity; everything else ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Rng rng(seed);
  Eigen::Index fan_in = 1;
  for (auto& [name, tensor] : params_) {
    Matrix& w = tensor.mutable_value();
    const bool is_norm = name.find("norm.") != std::string::npos;
    if (is_norm) continue;
    if (name == "mask_vector" || name == "phone_embedding" || name == "alignment_embedding") {
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, 0.02);
      continue;
    }
    if (name.ends_with(".weight")) fan_in = w.rows();  // biases follow their weight
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  }
}

RowVector A3tModel::mask_vector() const { return params_.get("mask_vector").value().row(0); }

ad::Tensor A3tModel::linear(const std::string& name, const ad::Tensor& x) {
  return ad::add(ad::matmul(x, params_.get(name + ".weight")), params_.get(name + ".bias"));
}

ad::Tensor A3tModel::norm(const std::string& name, const ad::Tensor& x) {
  return ad::layer_norm(x, params_.get(name + ".gain"), params_.get(name + ".bias"));
}

ad::Tensor A3tModel::drop(const ad::Tensor& x, const ForwardOptions& opt) {
  if (!opt.training || cfg_.dropout == 0.0) return x;
  return ad::dropout(x, cfg_.dropout, derive_seed(opt.dropout_seed, ++dropout_counter_));
}

ad::Tensor A3tModel::feed_forward(const std::string& prefix, const ad::Tensor& x, const ForwardOptions& opt,
                                  bool swish_act) {
  ad::Tensor h = linear(prefix + "in", norm(prefix + "norm", x));
  h = swish_act ? ad::swish(h) : ad::relu(h);
  return drop(linear(prefix + "out", drop(h, opt)), opt);
}

ad::Tensor A3tModel::self_attention(const std::string& prefix, const ad::Tensor& x, const ForwardOptions& opt) {
  const ad::Tensor h = norm(prefix + "norm", x);
  auto att = ad::scaled_dot_attention(linear(prefix + "q", h), linear(prefix + "k", h), linear(prefix + "v", h),
                                      params_.get(prefix + "out.weight"), params_.get(prefix + "out.bias"),
                                      cfg_.heads);
  return drop(att.output, opt);
}

ad::Tensor A3tModel::conv_module(const std::string& prefix, const ad::Tensor& x, const ForwardOptions& opt) {
  ad::Tensor h = ad::glu(linear(prefix + "pointwise1", norm(prefix + "norm", x)));
  h = ad::depthwise_conv1d(h, params_.get(prefix + "depthwise.weight"), params_.get(prefix + "depthwise.bias"));
  h = ad::swish(h);
  return drop(linear(prefix + "pointwise2", h), opt);
}

ad::Tensor A3tModel::block(const std::string& prefix, const ad::Tensor& x, const ForwardOptions& opt) {
  ad::Tensor h = x;
  if (cfg_.block_kind == BlockKind::Conformer) {
    h = ad::add(h, ad::scale(feed_forward(prefix + "ffn1.", h, opt, true), 0.5));
    h = ad::add(h, self_attention(prefix + "attn.", h, opt));
    h = ad::add(h, conv_module(prefix + "conv.", h, opt));
    h = ad::add(h, ad::scale(feed_forward(prefix + "ffn2.", h, opt, true), 0.5));
  } else {
    h = ad::add(h, self_attention(prefix + "attn.", h, opt));
    h = ad::add(h, feed_forward(prefix + "ffn2.", h, opt, false));
  }
  return norm(prefix + "final_norm", h);
}

void A3tModel::check_input(const ModelInput& in) const {
  const int T = in.num_frames();
  if (T < 1) throw DataError("model input has no frames");
  if (in.frames.cols() != cfg_.n_mels) throw DataError("model input frames must have 80 columns");
  if (in.speech_only) return;
  in.phones.validate();
  for (int id : in.phones.ids)
    if (id >= cfg_.phone_vocab) throw DataError("phone id " + std::to_string(id) + " outside the phone table");
  if (uses_alignment(in)) {
    if (static_cast<int>(in.frame_segments.size()) != T) throw DataError("one segment index per frame is required");
    if (!in.phone_segments.empty() && in.phone_segments.size() != in.phones.ids.size())
      throw DataError("one segment index per phoneme is required");
    auto check = [&](int s) {
      if (s < 0 || s >= cfg_.max_segments)
        throw DataError("segment index " + std::to_string(s) + " exceeds the alignment table (" +
                        std::to_string(cfg_.max_segments) + ")");
    };
    for (int s : in.frame_segments) check(s);
    for (int s : in.phone_segments) check(s);
    if (in.phone_segments.empty() && in.phones.size() > cfg_.max_segments)
      throw DataError("more phonemes than alignment segments");
  }
}

namespace {
std::vector<int> phone_segments_of(const ModelInput& in) {
  if (!in.phone_segments.empty()) return in.phone_segments;
  std::vector<int> seg(in.phones.ids.size());
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = static_cast<int>(i);
  return seg;
}
}  // namespace

std::pair<Matrix, Matrix> A3tModel::alignment_rows(const ModelInput& in) const {
  if (!uses_alignment(in)) return {};
  const Matrix& table = params_.get("alignment_embedding").value();
  const auto phone_seg = phone_segments_of(in);
  Matrix frames(in.frame_segments.size(), cfg_.d_model), phones(phone_seg.size(), cfg_.d_model);
  for (std::size_t t = 0; t < in.frame_segments.size(); ++t) frames.row(t) = table.row(in.frame_segments[t]);
  for (std::size_t p = 0; p < phone_seg.size(); ++p) phones.row(p) = table.row(phone_seg[p]);
  return {frames, phones};
}

ad::Tensor A3tModel::embed_inputs(const ModelInput& in) {
  check_input(in);
  const int T = in.num_frames();
  const int d = cfg_.d_model;

  ad::Tensor frames = ad::Tensor::constant(in.frames);
  if (!in.masked_rows.empty()) frames = ad::replace_rows(frames, in.masked_rows, params_.get("mask_vector"));
  ad::Tensor acoustic = ad::relu(linear("acoustic_encoder", frames));
  acoustic = ad::add(acoustic, ad::Tensor::constant(sinusoidal_positions(T, d)));
  if (uses_alignment(in)) acoustic = ad::add(acoustic, ad::embedding(params_.get("alignment_embedding"), in.frame_segments));
  if (in.speech_only || in.phones.empty()) return acoustic;

  const int P = in.phones.size();
  ad::Tensor text = ad::embedding(params_.get("phone_embedding"), in.phones.ids);
  text = ad::add(text, ad::Tensor::constant(sinusoidal_positions(P, d)));
  if (uses_alignment(in))
    text = ad::add(text, ad::embedding(params_.get("alignment_embedding"), phone_segments_of(in)));
  return ad::concat_rows({acoustic, text});
}

ad::Tensor A3tModel::postnet(const ad::Tensor& x, const ForwardOptions& opt) {
  ad::Tensor h = x;
  for (int l = 0; l < cfg_.postnet_layers; ++l) {
    const std::string name = "postnet." + std::to_string(l);
    h = ad::conv1d(h, params_.get(name + ".weight"), params_.get(name + ".bias"), cfg_.postnet_kernel);
    if (l + 1 < cfg_.postnet_layers) h = drop(ad::tanh(h), opt);
  }
  return h;
}

ModelOutput A3tModel::forward(const ModelInput& in, const ForwardOptions& opt) {
  dropout_counter_ = 0;
  const int T = in.num_frames();
  ModelOutput out;
  ad::Tensor h = drop(embed_inputs(in), opt);
  for (int l = 0; l < cfg_.encoder_layers; ++l)
    h = block("encoder." + std::to_string(l) + ".", h, opt);
  out.encoder_states = h;
  if (h.rows() != T) h = ad::slice_rows(h, 0, T);
  for (int l = 0; l < cfg_.decoder_layers; ++l)
    h = block("decoder." + std::to_string(l) + ".", h, opt);
  out.reconstructed = linear("head", h);
  out.refined = cfg_.use_postnet ? ad::add(out.reconstructed, postnet(out.reconstructed, opt)) : out.reconstructed;
  return out;
}

ad::Tensor masked_recon_loss(const ModelOutput& out, const ad::Tensor& target, const std::vector<int>& masked_rows,
                             LossKind kind) {
  if (masked_rows.empty()) throw DataError("reconstruction loss is undefined for an empty mask");
  auto distance = kind == LossKind::L1 ? &ad::l1_loss : &ad::l2_loss;
  return ad::add(distance(out.refined, target, masked_rows), distance(out.reconstructed, target, masked_rows));
}

}  // namespace a3t
