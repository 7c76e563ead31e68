#include "a3t/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace a3t {

namespace {

// Reads a JSON object field by field; anything left over is an unknown key.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw UsageError("config section '" + section_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw UsageError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw UsageError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw UsageError("");
      } else {
        if (!it->is_string()) throw UsageError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw UsageError("config key '" + qualified(key) + "' has the wrong type");
    }
  }

  template <typename Enum, typename Parse>
  void read_enum(const char* key, Enum& out, Parse parse) {
    std::string s;
    bool present = j_.contains(key);
    read(key, s);
    if (present) out = parse(s);
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw UsageError("unknown config key '" + qualified(it.key()) + "'");
  }

 private:
  std::string qualified(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }

  const Json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace

Json to_json(const AudioConfig& c) {
  return Json{{"frame_length_s", c.frame_length_s}, {"hop_s", c.hop_s},       {"n_fft", c.n_fft},
              {"n_mels", c.n_mels},                 {"fmin_hz", c.fmin_hz},   {"fmax_hz", c.fmax_hz},
              {"log_floor", c.log_floor},           {"sample_rate_hz", c.sample_rate_hz}};
}

Json to_json(const ModelConfig& c) {
  return Json{{"d_model", c.d_model},
              {"heads", c.heads},
              {"ffn_dim", c.ffn_dim},
              {"encoder_layers", c.encoder_layers},
              {"decoder_layers", c.decoder_layers},
              {"encoder_kernel", c.encoder_kernel},
              {"decoder_kernel", c.decoder_kernel},
              {"postnet_layers", c.postnet_layers},
              {"postnet_channels", c.postnet_channels},
              {"postnet_kernel", c.postnet_kernel},
              {"block_kind", to_string(c.block_kind)},
              {"use_alignment_embeddings", c.use_alignment_embeddings},
              {"use_postnet", c.use_postnet},
              {"loss_kind", to_string(c.loss_kind)},
              {"max_segments", c.max_segments},
              {"phone_vocab", c.phone_vocab},
              {"n_mels", c.n_mels},
              {"dropout", c.dropout}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"base_lr", c.base_lr},
              {"warmup_steps", c.warmup_steps},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"max_batch_bin", c.max_batch_bin},
              {"max_steps", c.max_steps},
              {"seed", c.seed},
              {"mask_mode", to_string(c.mask_mode)},
              {"mask_ratio", c.mask_ratio},
              {"max_phoneme_span", c.max_phoneme_span},
              {"max_frame_span", c.max_frame_span},
              {"grad_clip", c.grad_clip},
              {"checkpoint_interval", c.checkpoint_interval},
              {"shuffle", c.shuffle}};
}

Json to_json(const RunConfig& c) {
  return Json{{"audio", to_json(c.audio)},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"paths", Json{{"vocab", c.paths.vocab}, {"manifest", c.paths.manifest}, {"output_dir", c.paths.output_dir}}},
              {"seed", c.seed}};
}

AudioConfig audio_config_from_json(const Json& j) {
  AudioConfig c;
  ObjectReader r(j, "audio");
  r.read("frame_length_s", c.frame_length_s);
  r.read("hop_s", c.hop_s);
  r.read("n_fft", c.n_fft);
  r.read("n_mels", c.n_mels);
  r.read("fmin_hz", c.fmin_hz);
  r.read("fmax_hz", c.fmax_hz);
  r.read("log_floor", c.log_floor);
  r.read("sample_rate_hz", c.sample_rate_hz);
  r.finish();
  return c;
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  ObjectReader r(j, "model");
  r.read("d_model", c.d_model);
  r.read("heads", c.heads);
  r.read("ffn_dim", c.ffn_dim);
  r.read("encoder_layers", c.encoder_layers);
  r.read("decoder_layers", c.decoder_layers);
  r.read("encoder_kernel", c.encoder_kernel);
  r.read("decoder_kernel", c.decoder_kernel);
  r.read("postnet_layers", c.postnet_layers);
  r.read("postnet_channels", c.postnet_channels);
  r.read("postnet_kernel", c.postnet_kernel);
  r.read_enum("block_kind", c.block_kind, block_kind_from_string);
  r.read("use_alignment_embeddings", c.use_alignment_embeddings);
  r.read("use_postnet", c.use_postnet);
  r.read_enum("loss_kind", c.loss_kind, loss_kind_from_string);
  r.read("max_segments", c.max_segments);
  r.read("phone_vocab", c.phone_vocab);
  r.read("n_mels", c.n_mels);
  r.read("dropout", c.dropout);
  r.finish();
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  ObjectReader r(j, "train");
  r.read("base_lr", c.base_lr);
  r.read("warmup_steps", c.warmup_steps);
  r.read("adam_beta1", c.adam_beta1);
  r.read("adam_beta2", c.adam_beta2);
  r.read("adam_eps", c.adam_eps);
  r.read("max_batch_bin", c.max_batch_bin);
  r.read("max_steps", c.max_steps);
  r.read("seed", c.seed);
  r.read_enum("mask_mode", c.mask_mode, mask_mode_from_string);
  r.read("mask_ratio", c.mask_ratio);
  r.read("max_phoneme_span", c.max_phoneme_span);
  r.read("max_frame_span", c.max_frame_span);
  r.read("grad_clip", c.grad_clip);
  r.read("checkpoint_interval", c.checkpoint_interval);
  r.read("shuffle", c.shuffle);
  r.finish();
  c.validate();
  return c;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  ObjectReader r(j, "");
  if (const Json* a = r.child("audio")) c.audio = audio_config_from_json(*a);
  if (const Json* m = r.child("model")) c.model = model_config_from_json(*m);
  if (const Json* t = r.child("train")) c.train = train_config_from_json(*t);
  if (const Json* p = r.child("paths")) {
    ObjectReader pr(*p, "paths");
    pr.read("vocab", c.paths.vocab);
    pr.read("manifest", c.paths.manifest);
    pr.read("output_dir", c.paths.output_dir);
    pr.finish();
  }
  c.seed = c.train.seed;
  r.read("seed", c.seed);
  c.train.seed = c.seed;
  r.finish();
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const RunConfig& c) { return to_json(c).dump(2); }

bool RunConfig::operator==(const RunConfig& o) const { return to_json(*this) == to_json(o); }

void require_paths(const RunConfig& c, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    const std::string* value = n == "vocab" ? &c.paths.vocab
                               : n == "manifest" ? &c.paths.manifest
                               : n == "output_dir" ? &c.paths.output_dir
                                                   : nullptr;
    if (!value) throw UsageError("unknown path name: " + n);
    if (value->empty()) throw UsageError("missing required path '" + n + "'");
  }
}

}  // namespace a3t
