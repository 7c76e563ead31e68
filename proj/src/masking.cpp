#include "a3t/masking.hpp"

#include "a3t/random.hpp"

#include "json.hpp"

#include <algorithm>

namespace a3t {

namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw UsageError("mask ratio must lie in [0, 1]");
}

// Draws spans until exactly `target` of `count` items are selected. The last
// span is cut short once the target is reached.
std::vector<int> draw_spans(int count, int target, int max_span, Rng& rng) {
  std::vector<char> chosen(count, 0);
  int selected = 0;
  while (selected < target) {
    const int start = static_cast<int>(rng.uniform_index(count));
    const int length = static_cast<int>(rng.uniform_int(1, max_span));
    for (int i = start; i < std::min(count, start + length) && selected < target; ++i) {
      if (!chosen[i]) {
        chosen[i] = 1;
        ++selected;
      }
    }
  }
  std::vector<int> out;
  out.reserve(target);
  for (int i = 0; i < count; ++i)
    if (chosen[i]) out.push_back(i);
  return out;
}

std::vector<int> frames_of(const AlignmentMap& a, const std::vector<int>& phonemes) {
  std::vector<int> frames;
  for (int p : phonemes)
    for (int t = a.intervals[p].start_frame; t < a.intervals[p].end_frame; ++t) frames.push_back(t);
  return frames;
}

}  // namespace

MaskPlan plan_phoneme_span_mask(const AlignmentMap& a, double ratio, std::uint64_t seed, const SpanLimits& limits) {
  check_ratio(ratio);
  if (a.intervals.empty()) throw DataError("cannot mask an empty alignment");
  if (limits.max_phoneme_span < 1) throw UsageError("max phoneme span must be >= 1");
  const int P = a.num_phonemes();
  const int target = static_cast<int>(round_half_up(ratio * P));
  Rng rng(seed);
  MaskPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.masked_phonemes = draw_spans(P, std::min(target, P), limits.max_phoneme_span, rng);
  plan.masked_frames = frames_of(a, plan.masked_phonemes);
  return plan;
}

MaskPlan plan_frame_span_mask(int num_frames, double ratio, std::uint64_t seed, const SpanLimits& limits) {
  check_ratio(ratio);
  if (num_frames < 1) throw DataError("cannot mask an empty spectrogram");
  if (limits.max_frame_span < 1) throw UsageError("max frame span must be >= 1");
  const int target = static_cast<int>(round_half_up(ratio * num_frames));
  Rng rng(seed);
  MaskPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.masked_frames = draw_spans(num_frames, std::min(target, num_frames), limits.max_frame_span, rng);
  return plan;
}

MaskPlan plan_phoneme_range(const AlignmentMap& a, int begin, int end) {
  if (begin < 0 || end > a.num_phonemes() || begin > end) throw DataError("phoneme range out of bounds");
  MaskPlan plan;
  for (int p = begin; p < end; ++p) plan.masked_phonemes.push_back(p);
  plan.masked_frames = frames_of(a, plan.masked_phonemes);
  plan.ratio = a.num_phonemes() > 0 ? static_cast<double>(end - begin) / a.num_phonemes() : 0.0;
  return plan;
}

std::pair<int, int> middle_third_phonemes(int num_phonemes) {
  if (num_phonemes < 1) throw DataError("cannot select a region of an empty phoneme sequence");
  const int count = std::max(1, static_cast<int>(round_half_up(num_phonemes / 3.0)));
  const int begin = (num_phonemes - count) / 2;
  return {begin, begin + count};
}

Spectrogram apply_mask(const Spectrogram& s, const MaskPlan& plan, const RowVector& mask_vector) {
  if (mask_vector.size() != s.frames.cols()) throw DataError("mask vector width differs from spectrogram");
  Spectrogram out = s;
  for (int t : plan.masked_frames) {
    if (t < 0 || t >= s.num_frames()) throw DataError("masked frame index out of range: " + std::to_string(t));
    out.frames.row(t) = mask_vector;
  }
  return out;
}

std::string mask_plan_to_json(const MaskPlan& plan) {
  nlohmann::ordered_json j;
  j["frames"] = plan.masked_frames;
  j["phonemes"] = plan.masked_phonemes;
  j["ratio"] = plan.ratio;
  j["seed"] = plan.seed;
  return j.dump();
}

MaskPlan mask_plan_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MaskPlan plan;
    plan.masked_frames = j.at("frames").get<std::vector<int>>();
    plan.masked_phonemes = j.at("phonemes").get<std::vector<int>>();
    plan.ratio = j.at("ratio").get<double>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad mask plan JSON: ") + e.what());
  }
}

}  // namespace a3t
