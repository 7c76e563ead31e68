#include "a3t/alignment.hpp"
#include "a3t/checkpoint.hpp"
#include "a3t/config.hpp"
#include "a3t/dsp.hpp"
#include "a3t/eval.hpp"
#include "a3t/inference.hpp"
#include "a3t/masking.hpp"
#include "a3t/training.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace a3t;

namespace {

struct Overrides {
  std::string config;
  std::string vocab, manifest, output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> sample_rate, steps, warmup, checkpoint_interval, batch_bin;
  std::optional<double> lr, mask_ratio;
  std::optional<std::string> mask_mode, model_preset;
  bool no_alignment_embeddings = false, transformer = false, no_postnet = false, l2 = false;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run config");
  app->add_option("--vocab", o.vocab, "phone inventory file");
  app->add_option("--output-dir,-o", o.output_dir, "directory for outputs");
  app->add_option("--seed", o.seed);
  app->add_option("--sample-rate", o.sample_rate, "rate assumed for feature files (24000 or 22050)");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : parse_config(o.config);
  if (o.model_preset) {
    if (*o.model_preset == "tiny")
      c.model = ModelConfig::tiny();
    else if (*o.model_preset != "base")
      throw UsageError("unknown model preset '" + *o.model_preset + "'");
  }
  if (!o.vocab.empty()) c.paths.vocab = o.vocab;
  if (!o.manifest.empty()) c.paths.manifest = o.manifest;
  if (!o.output_dir.empty()) c.paths.output_dir = o.output_dir;
  if (o.seed) c.seed = c.train.seed = *o.seed;
  if (o.sample_rate) c.audio.sample_rate_hz = *o.sample_rate;
  if (o.steps) c.train.max_steps = *o.steps;
  if (o.warmup) c.train.warmup_steps = *o.warmup;
  if (o.checkpoint_interval) c.train.checkpoint_interval = *o.checkpoint_interval;
  if (o.batch_bin) c.train.max_batch_bin = *o.batch_bin;
  if (o.lr) c.train.base_lr = *o.lr;
  if (o.mask_ratio) c.train.mask_ratio = *o.mask_ratio;
  if (o.mask_mode) c.train.mask_mode = mask_mode_from_string(*o.mask_mode);
  if (o.no_alignment_embeddings) c.model.use_alignment_embeddings = false;
  if (o.transformer) c.model.block_kind = BlockKind::Transformer;
  if (o.no_postnet) c.model.use_postnet = false;
  if (o.l2) c.model.loss_kind = LossKind::L2;
  if (!is_supported_sample_rate(c.audio.sample_rate_hz)) throw UsageError("unsupported sample rate");
  c.audio.validate(c.audio.sample_rate_hz);
  c.model.validate();
  c.train.validate();
  return c;
}

fs::path prepare_output(const RunConfig& c) {
  require_paths(c, {"output_dir"});
  const fs::path dir = c.paths.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory: " + dir.string());
  std::ofstream out(dir / "config.json");
  out << serialize_config(c) << '\n';
  if (!out) throw DataError("cannot write config into " + dir.string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

// WAV files go through feature extraction; anything else is a feature file.
Spectrogram load_spectrogram(const fs::path& path, const RunConfig& c) {
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".wav") return logmel(load_wav(path), c.audio);
  const int sr = c.audio.sample_rate_hz;
  return read_features(path, c.audio.hop_samples(sr), sr);
}

ParsedAlignment load_alignment(const fs::path& path, const PhoneVocab& vocab, const Spectrogram& s) {
  ParsedAlignment parsed = parse_alignment_file(path, vocab, s.hop_samples, s.sample_rate_hz);
  parsed.alignment = clamp_to_frames(std::move(parsed.alignment), s.num_frames());
  frame_segment_indices(parsed.alignment, s.num_frames());
  return parsed;
}

void check_phones(const PhonemeSequence& from_alignment, const std::string& phones_file, const PhoneVocab& vocab) {
  if (phones_file.empty()) return;
  if (read_phoneme_file(phones_file, vocab).ids != from_alignment.ids)
    throw DataError("phone file does not match the alignment's phones");
}

DurationStats load_stats(const std::string& stats_path, const fs::path& checkpoint, const PhoneVocab& vocab) {
  fs::path p = stats_path.empty() ? checkpoint.parent_path() / "duration_stats.json" : fs::path(stats_path);
  if (!fs::exists(p)) {
    if (stats_path.empty()) return {};
    throw DataError("duration stats not found: " + p.string());
  }
  return DurationStats::load(p, vocab);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Masked spectrogram reconstruction, speech editing and prompt-based synthesis"};
  app.require_subcommand(1);
  Overrides o;

  std::string wav, features_in, checkpoint, alignment, phones, modified, target, stats, durations, original_durations,
      ref, hyp, resume;
  int region_begin = -1, region_end = -1;
  bool silent_prompt = false;

  auto* extract = app.add_subcommand("extract-features", "WAV to log-mel feature file");
  add_common(extract, o);
  extract->add_option("--wav", wav, "16-bit PCM mono WAV")->required();

  auto* train = app.add_subcommand("train", "masked reconstruction training");
  add_common(train, o);
  train->add_option("--manifest", o.manifest, "JSON-lines manifest");
  train->add_option("--steps", o.steps);
  train->add_option("--warmup", o.warmup);
  train->add_option("--lr", o.lr);
  train->add_option("--batch-bin", o.batch_bin);
  train->add_option("--checkpoint-interval", o.checkpoint_interval);
  train->add_option("--mask-ratio", o.mask_ratio);
  train->add_option("--mask-mode", o.mask_mode, "speech_text or speech_only");
  train->add_option("--model", o.model_preset, "preset: base or tiny");
  train->add_flag("--no-alignment-embeddings", o.no_alignment_embeddings);
  train->add_flag("--transformer", o.transformer);
  train->add_flag("--no-postnet", o.no_postnet);
  train->add_flag("--l2", o.l2);
  train->add_option("--resume", resume, "continue from a checkpoint");

  auto add_model_inputs = [&](CLI::App* sub, const char* input_desc) {
    add_common(sub, o);
    sub->add_option("--checkpoint", checkpoint)->required();
    sub->add_option("--input", features_in, input_desc)->required();
    sub->add_option("--alignment", alignment, "alignment TSV")->required();
    sub->add_option("--phones", phones, "phones file, checked against the alignment");
  };

  auto* reconstruct = app.add_subcommand("reconstruct", "regenerate a phone range and score it");
  add_model_inputs(reconstruct, "WAV or feature file");
  reconstruct->add_option("--region-begin", region_begin, "first phone (default: middle third)");
  reconstruct->add_option("--region-end", region_end, "one past the last phone");

  auto* edit_cmd = app.add_subcommand("edit", "text-based speech editing");
  add_model_inputs(edit_cmd, "WAV or feature file");
  edit_cmd->add_option("--modified-phones", modified)->required();
  edit_cmd->add_option("--stats", stats, "duration statistics JSON");
  edit_cmd->add_option("--durations", durations, "per-phone seconds for the modified phones");
  edit_cmd->add_option("--original-durations", original_durations, "per-phone predicted seconds for the original");

  auto* prompt = app.add_subcommand("prompt-tts", "synthesize target phones after a prompt");
  add_model_inputs(prompt, "prompt WAV or feature file");
  prompt->add_option("--target-phones", target)->required();
  prompt->add_option("--stats", stats, "duration statistics JSON");
  prompt->add_option("--durations", durations, "per-phone seconds for the target phones");
  prompt->add_option("--original-durations", original_durations, "per-phone predicted seconds for the prompt");
  prompt->add_flag("--silent-prompt", silent_prompt, "replace every prompt frame with the mask vector");

  auto* mcd = app.add_subcommand("mcd", "masked-region mel-cepstral distortion");
  add_common(mcd, o);
  mcd->add_option("--ref", ref)->required();
  mcd->add_option("--hyp", hyp)->required();
  mcd->add_option("--begin", region_begin, "first frame (default 0)");
  mcd->add_option("--end", region_end, "one past the last frame (default T)");

  auto* plot = app.add_subcommand("plot", "spectrogram as a PGM image");
  add_common(plot, o);
  plot->add_option("--input", features_in, "WAV or feature file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const RunConfig cfg = resolve(o);

  if (*extract) {
    const fs::path dir = prepare_output(cfg);
    const Spectrogram s = logmel(load_wav(wav), cfg.audio);
    write_features(dir / "features.a3tf", s);
    std::cout << "frames " << s.num_frames() << "\n";
    return 0;
  }

  if (*train) {
    require_paths(cfg, {"vocab", "manifest", "output_dir"});
    const fs::path dir = prepare_output(cfg);
    const PhoneVocab vocab = PhoneVocab::load(cfg.paths.vocab);
    const Dataset data = load_manifest(cfg.paths.manifest, vocab, cfg.audio, cfg.audio.sample_rate_hz);

    std::vector<DurationStats::Entry> entries;
    for (const auto& u : data)
      if (!u.phones.empty()) entries.push_back({&u.phones, &u.alignment});
    if (!entries.empty())
      DurationStats::from_corpus(entries, cfg.audio.hop_samples(cfg.audio.sample_rate_hz), cfg.audio.sample_rate_hz)
          .save(dir / "duration_stats.json", vocab);

    Trainer trainer = resume.empty() ? Trainer(data, cfg.model, cfg.train) : Trainer::resume(data, resume, o.steps);
    std::ofstream log(dir / "loss.csv", resume.empty() ? std::ios::trunc : std::ios::app);
    if (resume.empty()) write_loss_header(log);
    const auto records = trainer.run(&log, dir);
    if (!log) throw DataError("cannot write loss log");
    if (!records.empty()) std::cout << "step " << records.back().step << " loss " << records.back().loss << "\n";
    return 0;
  }

  if (*reconstruct || *edit_cmd || *prompt) {
    require_paths(cfg, {"vocab", "output_dir"});
    const fs::path dir = prepare_output(cfg);
    const PhoneVocab vocab = PhoneVocab::load(cfg.paths.vocab);
    A3tModel model = model_from_checkpoint(load_checkpoint(checkpoint));
    const Spectrogram s = load_spectrogram(features_in, cfg);
    const ParsedAlignment parsed = load_alignment(alignment, vocab, s);
    check_phones(parsed.phonemes, phones, vocab);

    if (*reconstruct) {
      std::pair<int, int> range = middle_third_phonemes(parsed.phonemes.size());
      if (region_begin >= 0 || region_end >= 0) {
        if (region_begin < 0 || region_end < 0) throw UsageError("give both --region-begin and --region-end");
        range = {region_begin, region_end};
      }
      EditRequest req{s, parsed.phonemes, parsed.alignment, parsed.phonemes, range};
      const EditResult r = a3t::edit(req, model, DurationStats{});
      write_features(dir / "reconstructed.a3tf", r.spliced);
      const McdReport m =
          mcd_masked_region(s, r.spliced, {r.prefix_frames, r.prefix_frames + r.inserted_frames});
      write_text(dir / "edit_report.json", edit_report_json(r));
      write_text(dir / "mcd.json", m.to_json());
      std::cout << "mcd_db " << m.mcd_db << " frames " << m.frames_scored << "\n";
      return 0;
    }

    const DurationStats dstats = load_stats(stats, checkpoint, vocab);
    EditOptions opt;

    if (*edit_cmd) {
      const PhonemeSequence mod = read_phoneme_file(modified, vocab);
      if (!durations.empty()) opt.modified_durations = read_duration_file(durations, mod);
      if (!original_durations.empty()) opt.original_durations = read_duration_file(original_durations, parsed.phonemes);
      EditRequest req{s, parsed.phonemes, parsed.alignment, mod, std::nullopt};
      const EditResult r = a3t::edit(req, model, dstats, opt);
      write_features(dir / "edited.a3tf", r.spliced);
      write_text(dir / "edit_report.json", edit_report_json(r));
      std::cout << "frames " << r.spliced.num_frames() << " inserted " << r.inserted_frames << "\n";
      return 0;
    }

    const PhonemeSequence tgt = read_phoneme_file(target, vocab);
    if (!durations.empty()) opt.modified_durations = read_duration_file(durations, tgt);
    if (!original_durations.empty()) opt.original_durations = read_duration_file(original_durations, parsed.phonemes);
    PromptRequest req{s, parsed.phonemes, parsed.alignment, tgt, silent_prompt};
    const PromptResult r = prompt_tts(req, model, dstats, opt);
    write_features(dir / "target.a3tf", r.target);
    nlohmann::ordered_json report;
    report["frames"] = r.target.num_frames();
    report["phone_frames"] = r.phone_frames;
    report["adjusted_durations_s"] = r.adjusted_durations.values;
    write_text(dir / "prompt_report.json", report.dump(2));
    std::cout << "frames " << r.target.num_frames() << "\n";
    return 0;
  }

  if (*mcd) {
    const Spectrogram a = load_spectrogram(ref, cfg);
    const Spectrogram b = load_spectrogram(hyp, cfg);
    const FrameRange range{region_begin < 0 ? 0 : region_begin, region_end < 0 ? a.num_frames() : region_end};
    const McdReport m = mcd_masked_region(a, b, range);
    if (!cfg.paths.output_dir.empty()) write_text(prepare_output(cfg) / "mcd.json", m.to_json());
    std::cout << m.to_json() << "\n";
    return 0;
  }

  if (*plot) {
    const fs::path dir = prepare_output(cfg);
    plot_spectrogram(load_spectrogram(features_in, cfg), dir / "spectrogram.pgm");
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
