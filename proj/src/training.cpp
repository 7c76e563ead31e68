#include "a3t/training.hpp"

#include "a3t/checkpoint.hpp"
#include "a3t/random.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace a3t {

std::string to_string(MaskMode mode) { return mode == MaskMode::SpeechText ? "speech_text" : "speech_only"; }

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "speech_text") return MaskMode::SpeechText;
  if (s == "speech_only") return MaskMode::SpeechOnly;
  throw UsageError("unknown mask_mode: " + s);
}

double TrainConfig::effective_mask_ratio() const {
  if (mask_ratio >= 0.0) return mask_ratio;
  return mask_mode == MaskMode::SpeechText ? 0.8 : 0.15;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("train config: ") + what);
  };
  require(base_lr > 0.0, "base_lr must be positive");
  require(warmup_steps >= 1, "warmup_steps must be >= 1");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam betas in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(max_batch_bin >= 1, "max_batch_bin must be >= 1");
  require(max_steps >= 0, "max_steps must be >= 0");
  require(mask_ratio <= 1.0, "mask_ratio must be <= 1");
  require(max_phoneme_span >= 1 && max_frame_span >= 1, "span limits must be >= 1");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
  require(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
}

double noam_lr(long step, int d_model, const TrainConfig& cfg) {
  if (step < 1) throw UsageError("noam_lr requires step >= 1");
  const double s = static_cast<double>(step);
  return cfg.base_lr * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(cfg.warmup_steps), -1.5));
}

void Adam::step(ad::ParameterStore& params, double lr) {
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (m_.size() != params.size()) throw DataError("optimizer state does not match the parameter store");
  for (const auto& [name, p] : params)
    if (!p.has_grad()) throw DataError("missing gradient for parameter " + name);

  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& [name, p] : params) {
    const Matrix& g = p.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    p.mutable_value().array() -= lr * m_hat / (v_hat.sqrt() + eps_);
    ++i;
  }
}

void Adam::restore(long t, std::vector<Matrix> m, std::vector<Matrix> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

double clip_grad_norm(ad::ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params)
    if (p.has_grad()) sq += p.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, p] : params)
      if (p.has_grad()) p.mutable_grad() *= factor;
  }
  return norm;
}

std::vector<std::vector<int>> make_batches(const std::vector<UtteranceSize>& manifest, int max_batch_bin,
                                           std::optional<std::uint64_t> seed) {
  std::vector<int> order(manifest.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  if (seed) {
    Rng rng(*seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  std::vector<std::vector<int>> batches;
  int filled = 0;
  for (int idx : order) {
    const int size = manifest[idx].size();
    if (size > max_batch_bin)
      throw DataError("utterance " + manifest[idx].id + " (" + std::to_string(size) +
                      " elements) exceeds the batch bin of " + std::to_string(max_batch_bin));
    if (batches.empty() || filled + size > max_batch_bin) {
      batches.emplace_back();
      filled = 0;
    }
    batches.back().push_back(idx);
    filled += size;
  }
  return batches;
}

Dataset load_manifest(const std::filesystem::path& manifest, const PhoneVocab& vocab, const AudioConfig& audio,
                      int sample_rate_hz) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest: " + manifest.string());
  const auto base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  const int hop = audio.hop_samples(sample_rate_hz);
  Dataset data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("feature_path"))
      throw DataError("manifest line " + std::to_string(line_no) + ": id and feature_path are required");
    Utterance u;
    u.id = j.at("id").get<std::string>();
    u.spec = read_features(resolve(j.at("feature_path").get<std::string>()), hop, sample_rate_hz);
    if (j.contains("alignment_path")) {
      auto parsed = parse_alignment_file(resolve(j.at("alignment_path").get<std::string>()), vocab, hop,
                                         sample_rate_hz);
      u.phones = std::move(parsed.phonemes);
      u.alignment = clamp_to_frames(std::move(parsed.alignment), u.spec.num_frames());
      frame_segment_indices(u.alignment, u.spec.num_frames());
    }
    data.push_back(std::move(u));
  }
  if (data.empty()) throw DataError("manifest lists no utterances: " + manifest.string());
  return data;
}

void write_loss_header(std::ostream& os) { os << "step,lr,loss\n"; }

void write_loss_row(std::ostream& os, const StepRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g\n", r.step, r.lr, r.loss);
  os << buf;
}

Trainer::Trainer(const Dataset& data, ModelConfig model_cfg, TrainConfig train_cfg)
    : data_(data), train_cfg_(train_cfg), model_(model_cfg, derive_seed(train_cfg.seed, 1)), adam_(train_cfg) {
  train_cfg_.validate();
  if (data.empty()) throw DataError("training requires at least one utterance");
  for (const auto& u : data) {
    if (train_cfg_.mask_mode == MaskMode::SpeechText && u.phones.empty())
      throw DataError("speech-text training needs phonemes and an alignment for utterance " + u.id);
    sizes_.push_back({u.id, u.spec.num_frames(),
                      train_cfg_.mask_mode == MaskMode::SpeechText ? u.phones.size() : 0});
  }
}

Trainer Trainer::resume(const Dataset& data, const std::filesystem::path& checkpoint, std::optional<int> max_steps) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  TrainConfig train = ckpt.train;
  if (max_steps) train.max_steps = *max_steps;
  Trainer t(data, ckpt.model, train);
  t.model_ = model_from_checkpoint(ckpt);
  std::vector<Matrix> m, v;
  for (const auto& [name, p] : t.model_.parameters()) {
    const Matrix* mm = ckpt.find("adam.m/" + name);
    const Matrix* vv = ckpt.find("adam.v/" + name);
    if (ckpt.adam_steps > 0) {
      if (!mm || !vv) throw DataError("checkpoint lacks optimizer moments for " + name);
      m.push_back(*mm);
      v.push_back(*vv);
    }
  }
  t.adam_.restore(ckpt.adam_steps, std::move(m), std::move(v));
  t.step_ = ckpt.step;
  t.epoch_ = ckpt.epoch;
  t.batch_index_ = static_cast<std::size_t>(ckpt.batch_index);
  return t;
}

const std::vector<int>& Trainer::current_batch() {
  if (epoch_batches_.empty()) {
    std::optional<std::uint64_t> shuffle_seed;
    if (train_cfg_.shuffle) shuffle_seed = derive_seed(train_cfg_.seed, 2, static_cast<std::uint64_t>(epoch_));
    epoch_batches_ = make_batches(sizes_, train_cfg_.max_batch_bin, shuffle_seed);
    if (batch_index_ >= epoch_batches_.size()) throw DataError("checkpoint data cursor is outside the epoch");
  }
  return epoch_batches_[batch_index_];
}

MaskPlan Trainer::plan_for(const Utterance& u, long step, int slot) const {
  const std::uint64_t seed = derive_seed(train_cfg_.seed, 3 + (static_cast<std::uint64_t>(step) << 8),
                                         static_cast<std::uint64_t>(slot));
  SpanLimits limits{train_cfg_.max_phoneme_span, train_cfg_.max_frame_span};
  if (train_cfg_.mask_mode == MaskMode::SpeechText)
    return plan_phoneme_span_mask(u.alignment, train_cfg_.effective_mask_ratio(), seed, limits);
  return plan_frame_span_mask(u.spec.num_frames(), train_cfg_.effective_mask_ratio(), seed, limits);
}

ModelInput Trainer::input_for(const Utterance& u, const MaskPlan& plan) const {
  if (train_cfg_.mask_mode == MaskMode::SpeechOnly) return make_speech_only_input(u.spec.frames, plan.masked_frames);
  return make_input(u.spec.frames, plan.masked_frames, u.phones, u.alignment);
}

StepRecord Trainer::step() {
  const std::vector<int> batch = current_batch();
  const long step_no = step_ + 1;

  std::vector<std::pair<int, MaskPlan>> work;
  for (int idx : batch) {
    MaskPlan plan = plan_for(data_[idx], step_no, idx);
    if (!plan.empty()) work.emplace_back(idx, std::move(plan));
  }
  if (work.empty()) throw DataError("mask ratio selects no frames for any utterance in the batch");

  auto& params = model_.parameters();
  params.zero_grad();
  double total = 0.0;
  for (const auto& [idx, plan] : work) {
    const Utterance& u = data_[idx];
    ForwardOptions opt{true, derive_seed(train_cfg_.seed, 4 + (static_cast<std::uint64_t>(step_no) << 8),
                                         static_cast<std::uint64_t>(idx))};
    const ModelOutput out = model_.forward(input_for(u, plan), opt);
    const ad::Tensor loss =
        masked_recon_loss(out, ad::Tensor::constant(u.spec.frames), plan.masked_frames, model_.config().loss_kind);
    if (!std::isfinite(loss.item()))
      throw NumericError("non-finite loss at step " + std::to_string(step_no) + " on utterance " + u.id);
    total += loss.item();
    ad::backward(ad::scale(loss, 1.0 / static_cast<double>(work.size())));
  }

  if (train_cfg_.grad_clip > 0.0) clip_grad_norm(params, train_cfg_.grad_clip);
  const double lr = noam_lr(step_no, model_.config().d_model, train_cfg_);
  adam_.step(params, lr);
  for (const auto& [name, p] : params)
    if (!p.value().allFinite()) throw NumericError("non-finite parameter " + name + " after step " + std::to_string(step_no));

  step_ = step_no;
  if (++batch_index_ >= epoch_batches_.size()) {
    ++epoch_;
    batch_index_ = 0;
    epoch_batches_.clear();
  }
  return {step_no, lr, total / static_cast<double>(work.size())};
}

std::vector<StepRecord> Trainer::run(std::ostream* log, const std::filesystem::path& out_dir) {
  std::vector<StepRecord> records;
  while (step_ < train_cfg_.max_steps) {
    records.push_back(step());
    if (log) write_loss_row(*log, records.back());
    if (!out_dir.empty() && train_cfg_.checkpoint_interval > 0 && step_ % train_cfg_.checkpoint_interval == 0)
      save_checkpoint(out_dir / ("checkpoint_" + std::to_string(step_) + ".a3t"));
  }
  if (log) log->flush();
  if (!out_dir.empty()) save_checkpoint(out_dir / "model.a3t");
  return records;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.model = model_.config();
  ckpt.train = train_cfg_;
  ckpt.step = step_;
  ckpt.epoch = epoch_;
  ckpt.batch_index = static_cast<long>(batch_index_);
  ckpt.adam_steps = adam_.steps_taken();
  std::size_t i = 0;
  for (const auto& [name, p] : model_.parameters()) ckpt.tensors.emplace_back("param/" + name, p.value());
  if (adam_.steps_taken() > 0) {
    for (const auto& [name, p] : model_.parameters()) {
      ckpt.tensors.emplace_back("adam.m/" + name, adam_.first_moments()[i]);
      ckpt.tensors.emplace_back("adam.v/" + name, adam_.second_moments()[i]);
      ++i;
    }
  }
  a3t::save_checkpoint(path, ckpt);
}

double masked_l1(A3tModel& model, const Utterance& u, const MaskPlan& plan) {
  if (plan.empty()) throw DataError("masked_l1 needs a non-empty plan");
  const ModelInput in = u.phones.empty() ? make_speech_only_input(u.spec.frames, plan.masked_frames)
                                         : make_input(u.spec.frames, plan.masked_frames, u.phones, u.alignment);
  const ModelOutput out = model.forward(in);
  double total = 0.0;
  for (int t : plan.masked_frames) total += (out.refined.value().row(t) - u.spec.frames.row(t)).cwiseAbs().sum();
  return total / static_cast<double>(plan.masked_frames.size() * u.spec.frames.cols());
}

}  // namespace a3t
