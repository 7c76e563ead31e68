#pragma once

#include "a3t/alignment.hpp"
#include "a3t/dsp.hpp"
#include "a3t/masking.hpp"
#include "a3t/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace a3t {

enum class MaskMode { SpeechText, SpeechOnly };

std::string to_string(MaskMode mode);
MaskMode mask_mode_from_string(const std::string& s);

struct TrainConfig {
  double base_lr = 1.0;
  int warmup_steps = 4000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  int max_batch_bin = 4000;
  int max_steps = 1000;
  std::uint64_t seed = 1;
  MaskMode mask_mode = MaskMode::SpeechText;
  double mask_ratio = -1.0;  // < 0: 0.8 for speech-text, 0.15 for speech-only
  int max_phoneme_span = 10;
  int max_frame_span = 5;
  double grad_clip = 1.0;  // global-norm threshold; 0 disables
  int checkpoint_interval = 0;  // 0: only the final checkpoint
  bool shuffle = true;

  double effective_mask_ratio() const;
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// base_lr * d^-0.5 * min(step^-0.5, step * warmup^-1.5)
double noam_lr(long step, int d_model, const TrainConfig& cfg);

/// Adam with bias correction. Moments are kept per parameter, in the
/// parameter store's order.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  explicit Adam(const TrainConfig& cfg) : Adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {}

  /// Applies one update with every parameter's current grad; throws if any
  /// parameter has no grad buffer.
  void step(ad::ParameterStore& params, double lr);

  long steps_taken() const { return t_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void restore(long t, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Scales every grad so their joint L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(ad::ParameterStore& params, double max_norm);

struct UtteranceSize {
  std::string id;
  int frames = 0;
  int phones = 0;
  int size() const { return frames + phones; }
};

/// Shuffles (when a seed is given) and greedily packs utterances into
/// batches whose total frames + phonemes stay within max_batch_bin. Batches
/// hold indices into `manifest`.
std::vector<std::vector<int>> make_batches(const std::vector<UtteranceSize>& manifest, int max_batch_bin,
                                           std::optional<std::uint64_t> seed);

struct Utterance {
  std::string id;
  Spectrogram spec;
  PhonemeSequence phones;  // empty for speech-only data
  AlignmentMap alignment;
};

using Dataset = std::vector<Utterance>;

/// JSON-lines manifest {id, feature_path, alignment_path}; relative paths
/// resolve against the manifest's directory. alignment_path may be omitted
/// for speech-only data.
Dataset load_manifest(const std::filesystem::path& manifest, const PhoneVocab& vocab, const AudioConfig& audio,
                      int sample_rate_hz);

struct StepRecord {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, const StepRecord& r);

class Trainer {
 public:
  /// Keeps its own copy of the data.
  Trainer(const Dataset& data, ModelConfig model_cfg, TrainConfig train_cfg);

  /// Rebuilds a trainer (model weights, optimizer moments and data cursor)
  /// from a checkpoint, optionally with a new step budget.
  static Trainer resume(const Dataset& data, const std::filesystem::path& checkpoint,
                        std::optional<int> max_steps = std::nullopt);

  StepRecord step();
  /// Runs until max_steps, appending to `log` and writing checkpoints into
  /// `out_dir` when given.
  std::vector<StepRecord> run(std::ostream* log = nullptr, const std::filesystem::path& out_dir = {});

  void save_checkpoint(const std::filesystem::path& path) const;

  A3tModel& model() { return model_; }
  const A3tModel& model() const { return model_; }
  const TrainConfig& train_config() const { return train_cfg_; }
  long steps_done() const { return step_; }

 private:
  const std::vector<int>& current_batch();
  ModelInput input_for(const Utterance& u, const MaskPlan& plan) const;
  MaskPlan plan_for(const Utterance& u, long step, int slot) const;

  Dataset data_;
  TrainConfig train_cfg_;
  A3tModel model_;
  Adam adam_;
  long step_ = 0;
  long epoch_ = 0;
  std::size_t batch_index_ = 0;
  std::vector<std::vector<int>> epoch_batches_;
  std::vector<UtteranceSize> sizes_;
};

/// Masked mean absolute error of the refined output over `plan`'s frames
/// (no dropout, deterministic).
double masked_l1(A3tModel& model, const Utterance& u, const MaskPlan& plan);

}  // namespace a3t
