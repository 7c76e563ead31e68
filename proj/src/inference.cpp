#include "a3t/inference.hpp"

#include "a3t/masking.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace a3t {

DurationStats DurationStats::from_corpus(const std::vector<Entry>& corpus, int hop_samples, int sample_rate_hz) {
  std::map<int, std::pair<double, long>> acc;
  double total = 0.0;
  long count = 0;
  for (const auto& e : corpus) {
    const DurationSet d = phoneme_durations(*e.alignment, hop_samples, sample_rate_hz);
    for (int i = 0; i < d.size(); ++i) {
      auto& [sum, n] = acc[e.phones->ids[i]];
      sum += d.values[i];
      ++n;
      total += d.values[i];
      ++count;
    }
  }
  DurationStats stats;
  for (const auto& [id, sn] : acc) stats.per_phone[id] = sn.first / static_cast<double>(sn.second);
  if (count > 0) stats.global_mean = total / static_cast<double>(count);
  return stats;
}

void DurationStats::save(const std::filesystem::path& path, const PhoneVocab& vocab) const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [id, mean] : per_phone) per[vocab.symbol(id)] = mean;
  j["per_phone"] = per;
  j["global_mean"] = global_mean ? nlohmann::ordered_json(*global_mean) : nlohmann::ordered_json(nullptr);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write duration stats: " + path.string());
  out << j.dump(2) << '\n';
}

DurationStats DurationStats::load(const std::filesystem::path& path, const PhoneVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open duration stats: " + path.string());
  DurationStats stats;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [symbol, mean] : j.at("per_phone").items()) stats.per_phone[vocab.id(symbol)] = mean.get<double>();
    if (j.contains("global_mean") && !j.at("global_mean").is_null()) stats.global_mean = j.at("global_mean").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed duration stats: ") + e.what());
  }
  return stats;
}

DurationSet predict_durations(const PhonemeSequence& x, const DurationStats& stats) {
  DurationSet d;
  for (int id : x.ids) {
    auto it = stats.per_phone.find(id);
    if (it != stats.per_phone.end())
      d.values.push_back(it->second);
    else if (stats.global_mean)
      d.values.push_back(*stats.global_mean);
    else
      throw DataError("no duration statistics for phone id " + std::to_string(id) + " and no global fallback");
  }
  return d;
}

DurationSet read_duration_file(const std::filesystem::path& path, const PhonemeSequence& expected) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open duration file: " + path.string());
  DurationSet d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string symbol;
    double seconds = 0.0;
    if (!(fields >> symbol >> seconds) || !std::isfinite(seconds) || seconds < 0.0)
      throw DataError("bad duration line: " + line);
    const auto i = static_cast<std::size_t>(d.size());
    if (i >= expected.ids.size()) throw DataError("duration file has more lines than phones");
    if (!expected.symbols.empty() && expected.symbols[i] != symbol)
      throw DataError("duration file phone '" + symbol + "' does not match '" + expected.symbols[i] + "'");
    d.values.push_back(seconds);
  }
  if (d.size() != expected.size()) throw DataError("duration file has fewer lines than phones");
  return d;
}

DurationSet adjust_durations(const DurationSet& predicted, const DurationSet& original_actual,
                             const DurationSet& original_predicted) {
  if (original_actual.size() != original_predicted.size())
    throw DataError("original durations and their predictions differ in length");
  if (original_actual.size() == 0) throw DataError("rate adjustment needs at least one original phone");
  double ratio_sum = 0.0;
  for (int j = 0; j < original_actual.size(); ++j) {
    if (!(original_predicted.values[j] > 0.0)) throw DataError("zero predicted original duration");
    ratio_sum += original_actual.values[j] / original_predicted.values[j];
  }
  const double rate = ratio_sum / original_actual.size();
  DurationSet out;
  for (double d : predicted.values) out.values.push_back(d * rate);
  return out;
}

int mask_frame_count(const DurationSet& d, int sample_rate_hz, int hop_samples) {
  if (hop_samples <= 0) throw UsageError("hop must be positive");
  return static_cast<int>(round_half_up(d.total() * sample_rate_hz / hop_samples));
}

std::vector<int> allocate_frames(const DurationSet& d, int n, int sample_rate_hz, int hop_samples) {
  std::vector<int> counts;
  if (d.size() == 0) {
    if (n != 0) throw DataError("cannot allocate frames to zero phones");
    return counts;
  }
  int assigned = 0;
  for (double v : d.values) {
    counts.push_back(static_cast<int>(round_half_up(v * sample_rate_hz / hop_samples)));
    assigned += counts.back();
  }
  int remainder = n - assigned;
  // A negative remainder is taken from the last phone first, then earlier ones.
  for (auto it = counts.rbegin(); it != counts.rend(); ++it) {
    if (remainder >= 0) {
      *it += remainder;
      remainder = 0;
      break;
    }
    const int take = std::min(*it, -remainder);
    *it -= take;
    remainder += take;
  }
  return counts;
}

ModifiedRegion find_modified_region(const PhonemeSequence& original, const PhonemeSequence& modified) {
  const int no = original.size(), nm = modified.size();
  int prefix = 0;
  while (prefix < no && prefix < nm && original.ids[prefix] == modified.ids[prefix]) ++prefix;
  int suffix = 0;
  while (suffix < std::min(no, nm) - prefix && original.ids[no - 1 - suffix] == modified.ids[nm - 1 - suffix])
    ++suffix;
  return {prefix, no - suffix, nm - suffix};
}

namespace {

struct Placement {
  int prefix_frames = 0;
  int suffix_start = 0;
};

Placement place_region(const AlignmentMap& a, int num_frames, int begin, int end) {
  Placement p;
  p.prefix_frames = begin < a.num_phonemes() ? a.intervals[begin].start_frame : num_frames;
  p.suffix_start = end > begin ? a.intervals[end - 1].end_frame : p.prefix_frames;
  return p;
}

DurationSet slice(const DurationSet& d, int begin, int end) {
  DurationSet out;
  out.values.assign(d.values.begin() + begin, d.values.begin() + end);
  return out;
}

}  // namespace

EditResult edit(const EditRequest& req, A3tModel& model, const DurationStats& stats, const EditOptions& opt) {
  const Spectrogram& s = req.original;
  const int T = s.num_frames();
  if (req.original_phones.empty() || req.modified_phones.empty()) throw DataError("edit needs non-empty phone sequences");
  if (req.original_alignment.num_phonemes() != req.original_phones.size())
    throw DataError("original alignment and phones differ in length");
  if (req.original_alignment.num_frames() < T) throw DataError("uncovered frames");
  if (req.modified_phones.size() > model.config().max_segments)
    throw DataError("modified phone sequence exceeds the alignment-embedding table");
  if (s.hop_samples <= 0 || s.sample_rate_hz <= 0) throw DataError("spectrogram lacks hop / sample-rate metadata");

  EditResult result;
  ModifiedRegion region;
  const bool override_timing = req.region_override.has_value();
  if (override_timing) {
    if (req.original_phones.ids != req.modified_phones.ids)
      throw DataError("a region override requires identical original and modified phones");
    const auto [b, e] = *req.region_override;
    if (b < 0 || e > req.original_phones.size() || b >= e) throw DataError("region override out of range");
    region = {b, e, e};
  } else {
    region = find_modified_region(req.original_phones, req.modified_phones);
    if (region.begin == region.original_end && region.begin == region.modified_end)
      throw DataError("original and modified phones are identical; supply a region override");
  }
  result.region = region;

  const Placement place = place_region(req.original_alignment, T, region.begin, region.original_end);
  const int num_region_phones = region.modified_end - region.begin;

  if (override_timing) {
    for (int p = region.begin; p < region.original_end; ++p)
      result.region_phone_frames.push_back(req.original_alignment.intervals[p].length());
    result.adjusted_durations =
        slice(phoneme_durations(req.original_alignment, s.hop_samples, s.sample_rate_hz), region.begin, region.original_end);
  } else {
    const DurationSet modified_pred = opt.modified_durations ? *opt.modified_durations
                                                             : predict_durations(req.modified_phones, stats);
    const DurationSet original_pred = opt.original_durations ? *opt.original_durations
                                                             : predict_durations(req.original_phones, stats);
    if (modified_pred.size() != req.modified_phones.size() || original_pred.size() != req.original_phones.size())
      throw DataError("duration predictions do not match the phone sequences");
    const DurationSet original_actual = phoneme_durations(req.original_alignment, s.hop_samples, s.sample_rate_hz);
    result.adjusted_durations =
        adjust_durations(slice(modified_pred, region.begin, region.modified_end), original_actual, original_pred);
    const int n = mask_frame_count(result.adjusted_durations, s.sample_rate_hz, s.hop_samples);
    result.region_phone_frames = allocate_frames(result.adjusted_durations, n, s.sample_rate_hz, s.hop_samples);
  }
  int n = 0;
  for (int c : result.region_phone_frames) n += c;

  result.prefix_frames = place.prefix_frames;
  result.inserted_frames = n;
  result.suffix_frames = T - place.suffix_start;

  const int total = result.prefix_frames + n + result.suffix_frames;
  if (total < 1) throw DataError("edit would produce an empty spectrogram");
  Spectrogram& out = result.spliced;
  out.hop_samples = s.hop_samples;
  out.sample_rate_hz = s.sample_rate_hz;
  out.frames.resize(total, s.frames.cols());
  out.frames.topRows(result.prefix_frames) = s.frames.topRows(result.prefix_frames);
  out.frames.bottomRows(result.suffix_frames) = s.frames.bottomRows(result.suffix_frames);
  if (n == 0) return result;

  // Model input: context frames around n placeholder rows that the model
  // swaps for the mask vector.
  const std::vector<int> original_seg = frame_segment_indices(req.original_alignment, T);
  const int shift = region.modified_end - region.original_end;
  ModelInput in;
  in.frames = Matrix::Zero(total, s.frames.cols());
  in.frames.topRows(result.prefix_frames) = s.frames.topRows(result.prefix_frames);
  in.frames.bottomRows(result.suffix_frames) = s.frames.bottomRows(result.suffix_frames);
  in.phones = req.modified_phones;
  in.frame_segments.reserve(total);
  for (int t = 0; t < result.prefix_frames; ++t) in.frame_segments.push_back(original_seg[t]);
  for (int i = 0; i < num_region_phones; ++i)
    for (int c = 0; c < result.region_phone_frames[i]; ++c) in.frame_segments.push_back(region.begin + i);
  for (int t = place.suffix_start; t < T; ++t) in.frame_segments.push_back(original_seg[t] + shift);
  for (int t = 0; t < n; ++t) in.masked_rows.push_back(result.prefix_frames + t);

  const ModelOutput pred = model.forward(in);
  out.frames.middleRows(result.prefix_frames, n) = pred.refined.value().middleRows(result.prefix_frames, n);
  return result;
}

EditResult reconstruct_middle_third(const Spectrogram& s, const PhonemeSequence& phones, const AlignmentMap& a,
                                    A3tModel& model) {
  EditRequest req{s, phones, a, phones, middle_third_phonemes(phones.size())};
  return edit(req, model, DurationStats{}, {});
}

PromptResult prompt_tts(const PromptRequest& req, A3tModel& model, const DurationStats& stats, const EditOptions& opt) {
  const Spectrogram& p = req.prompt;
  const int Tp = p.num_frames();
  if (req.target_phones.empty()) throw DataError("target phones are empty");
  if (req.prompt_phones.empty()) throw DataError("prompt phones are empty");
  if (req.prompt_alignment.num_phonemes() != req.prompt_phones.size())
    throw DataError("prompt alignment and phones differ in length");
  const PhonemeSequence joint = req.prompt_phones.concat(req.target_phones);
  if (joint.size() > model.config().max_segments)
    throw DataError("prompt plus target phones exceed the alignment-embedding table");

  const DurationSet target_pred =
      opt.modified_durations ? *opt.modified_durations : predict_durations(req.target_phones, stats);
  const DurationSet prompt_pred =
      opt.original_durations ? *opt.original_durations : predict_durations(req.prompt_phones, stats);
  if (target_pred.size() != req.target_phones.size() || prompt_pred.size() != req.prompt_phones.size())
    throw DataError("duration predictions do not match the phone sequences");
  const DurationSet prompt_actual = phoneme_durations(req.prompt_alignment, p.hop_samples, p.sample_rate_hz);

  PromptResult result;
  result.adjusted_durations = adjust_durations(target_pred, prompt_actual, prompt_pred);
  const int n = mask_frame_count(result.adjusted_durations, p.sample_rate_hz, p.hop_samples);
  if (n < 1) throw DataError("predicted target duration rounds to zero frames");
  result.phone_frames = allocate_frames(result.adjusted_durations, n, p.sample_rate_hz, p.hop_samples);

  ModelInput in;
  in.frames = Matrix::Zero(Tp + n, p.frames.cols());
  in.frames.topRows(Tp) = p.frames;
  in.phones = joint;
  in.frame_segments = frame_segment_indices(req.prompt_alignment, Tp);
  const int P = req.prompt_phones.size();
  for (int i = 0; i < req.target_phones.size(); ++i)
    for (int c = 0; c < result.phone_frames[i]; ++c) in.frame_segments.push_back(P + i);
  for (int t = req.silent_prompt ? -Tp : 0; t < n; ++t) in.masked_rows.push_back(Tp + t);

  const ModelOutput pred = model.forward(in);
  result.target.hop_samples = p.hop_samples;
  result.target.sample_rate_hz = p.sample_rate_hz;
  result.target.frames = pred.refined.value().bottomRows(n);
  return result;
}

std::string edit_report_json(const EditResult& r) {
  nlohmann::ordered_json j;
  j["prefix_frames"] = r.prefix_frames;
  j["inserted_frames"] = r.inserted_frames;
  j["suffix_frames"] = r.suffix_frames;
  j["total_frames"] = r.spliced.num_frames();
  j["inserted_region"] = {r.prefix_frames, r.prefix_frames + r.inserted_frames};
  j["original_phone_range"] = {r.region.begin, r.region.original_end};
  j["modified_phone_range"] = {r.region.begin, r.region.modified_end};
  j["region_phone_frames"] = r.region_phone_frames;
  j["adjusted_durations_s"] = r.adjusted_durations.values;
  return j.dump(2);
}

}  // namespace a3t
