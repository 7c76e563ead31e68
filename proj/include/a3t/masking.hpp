#pragma once

#include "a3t/alignment.hpp"
#include "a3t/dsp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace a3t {

struct MaskPlan {
  std::vector<int> masked_frames;    // sorted, unique
  std::vector<int> masked_phonemes;  // sorted, unique; empty for speech-only plans
  double ratio = 0.0;
  std::uint64_t seed = 0;

  bool empty() const { return masked_frames.empty(); }
  bool operator==(const MaskPlan&) const = default;
};

struct SpanLimits {
  int max_phoneme_span = 10;
  int max_frame_span = 5;
};

/// Masks exactly round(ratio * P) phonemes, drawn as random spans, plus all
/// of their frames.
MaskPlan plan_phoneme_span_mask(const AlignmentMap& a, double ratio, std::uint64_t seed, const SpanLimits& limits = {});

/// Speech-only variant: exactly round(ratio * T) frames, no phonemes.
MaskPlan plan_frame_span_mask(int num_frames, double ratio, std::uint64_t seed, const SpanLimits& limits = {});

/// Deterministic plan covering phonemes [begin, end) and their frames.
MaskPlan plan_phoneme_range(const AlignmentMap& a, int begin, int end);

/// The evaluation protocol's region: round(P / 3) phonemes centred in the
/// utterance (at least one).
std::pair<int, int> middle_third_phonemes(int num_phonemes);

/// Copy of s with every masked row replaced by mask_vector.
Spectrogram apply_mask(const Spectrogram& s, const MaskPlan& plan, const RowVector& mask_vector);

std::string mask_plan_to_json(const MaskPlan& plan);
MaskPlan mask_plan_from_json(const std::string& text);

}  // namespace a3t
