#pragma once

#include "a3t/alignment.hpp"
#include "a3t/autodiff.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace a3t {

enum class BlockKind { Conformer, Transformer };
enum class LossKind { L1, L2 };

std::string to_string(BlockKind kind);
std::string to_string(LossKind kind);
BlockKind block_kind_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);

struct ModelConfig {
  int d_model = 384;
  int heads = 2;
  int ffn_dim = 1536;
  int encoder_layers = 4;
  int decoder_layers = 4;
  int encoder_kernel = 7;
  int decoder_kernel = 31;
  int postnet_layers = 5;
  int postnet_channels = 384;
  int postnet_kernel = 5;
  BlockKind block_kind = BlockKind::Conformer;
  bool use_alignment_embeddings = true;
  bool use_postnet = true;
  LossKind loss_kind = LossKind::L1;
  int max_segments = kMaxSegments;
  int phone_vocab = kPhoneVocabSize;
  int n_mels = kMelBins;
  double dropout = 0.1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// d_model 32, one encoder and one decoder layer, two heads.
  static ModelConfig tiny();
};

/// One utterance as the network sees it. `frames` holds T rows of raw
/// features; rows listed in `masked_rows` are replaced by the learned mask
/// vector before encoding, so placeholder content there is ignored.
struct ModelInput {
  Matrix frames;
  std::vector<int> masked_rows;
  PhonemeSequence phones;
  std::vector<int> frame_segments;  // one per frame
  std::vector<int> phone_segments;  // one per phoneme; empty means 0 .. P-1
  bool speech_only = false;         // no text stream, no alignment embeddings

  int num_frames() const { return static_cast<int>(frames.rows()); }
};

ModelInput make_input(const Matrix& frames, const std::vector<int>& masked_rows, const PhonemeSequence& phones,
                      const AlignmentMap& alignment);
ModelInput make_speech_only_input(const Matrix& frames, const std::vector<int>& masked_rows);

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

struct ModelOutput {
  ad::Tensor reconstructed;   // T x 80, the decoder head
  ad::Tensor refined;         // reconstructed + Post-Net residual
  ad::Tensor encoder_states;  // (T + P) x d_model
};

/// Fixed sinusoidal position table, rows 0 .. length-1.
Matrix sinusoidal_positions(int length, int dim);

class A3tModel {
 public:
  A3tModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& parameters() { return params_; }
  const ad::ParameterStore& parameters() const { return params_; }

  RowVector mask_vector() const;

  /// Joint (T + P) x d_model input sequence, acoustic positions first.
  ad::Tensor embed_inputs(const ModelInput& in);
  /// The alignment-embedding rows the input adds to its frames and phonemes
  /// (empty tensors when alignment embeddings are off).
  std::pair<Matrix, Matrix> alignment_rows(const ModelInput& in) const;

  /// One encoder or decoder block ("encoder.0." etc.); the depthwise kernel
  /// size was fixed when the block's parameters were created.
  ad::Tensor block(const std::string& prefix, const ad::Tensor& h, const ForwardOptions& opt);
  ModelOutput forward(const ModelInput& in, const ForwardOptions& opt = {});

 private:
  void build(std::uint64_t seed);
  void add_linear(const std::string& name, int in, int out);
  void add_layer_norm(const std::string& name, int dim);
  void add_block(const std::string& prefix, int kernel);
  ad::Tensor linear(const std::string& name, const ad::Tensor& x);
  ad::Tensor norm(const std::string& name, const ad::Tensor& x);
  ad::Tensor feed_forward(const std::string& prefix, const ad::Tensor& x, const ForwardOptions& opt, bool swish_act);
  ad::Tensor self_attention(const std::string& prefix, const ad::Tensor& x, const ForwardOptions& opt);
  ad::Tensor conv_module(const std::string& prefix, const ad::Tensor& x, const ForwardOptions& opt);
  ad::Tensor postnet(const ad::Tensor& x, const ForwardOptions& opt);
  ad::Tensor drop(const ad::Tensor& x, const ForwardOptions& opt);
  bool uses_alignment(const ModelInput& in) const { return cfg_.use_alignment_embeddings && !in.speech_only; }
  void check_input(const ModelInput& in) const;

  ModelConfig cfg_;
  ad::ParameterStore params_;
  std::uint64_t dropout_counter_ = 0;
};

/// Masked reconstruction objective: distance of both the refined and the
/// reconstructed output to the target, each averaged over masked rows and
/// mel bins. Unmasked rows contribute nothing.
ad::Tensor masked_recon_loss(const ModelOutput& out, const ad::Tensor& target, const std::vector<int>& masked_rows,
                             LossKind kind);

}  // namespace a3t
