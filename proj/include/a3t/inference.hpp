#pragma once

#include "a3t/alignment.hpp"
#include "a3t/dsp.hpp"
#include "a3t/model.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace a3t {

/// Mean duration per phone id, with a corpus-wide fallback for unseen phones.
struct DurationStats {
  std::map<int, double> per_phone;
  std::optional<double> global_mean;

  struct Entry {
    const PhonemeSequence* phones;
    const AlignmentMap* alignment;
  };
  static DurationStats from_corpus(const std::vector<Entry>& corpus, int hop_samples, int sample_rate_hz);

  void save(const std::filesystem::path& path, const PhoneVocab& vocab) const;
  static DurationStats load(const std::filesystem::path& path, const PhoneVocab& vocab);
};

/// d'_i = stats[x_i], falling back to the global mean.
DurationSet predict_durations(const PhonemeSequence& x, const DurationStats& stats);

/// External predictor hook: "symbol\tseconds" per line, one per phone of
/// `expected`, in order.
DurationSet read_duration_file(const std::filesystem::path& path, const PhonemeSequence& expected);

/// Rate adjustment: d^_i = d'_i * r, r = mean_j(actual_j / predicted_orig_j)
/// over all original phones.
DurationSet adjust_durations(const DurationSet& predicted, const DurationSet& original_actual,
                             const DurationSet& original_predicted);

/// round(sum(d) * sr / h)
int mask_frame_count(const DurationSet& d, int sample_rate_hz, int hop_samples);

/// Splits n frames over the phones: round(d_i * sr / h) each, the remainder
/// (positive or negative) settled on the last phone, never below zero.
std::vector<int> allocate_frames(const DurationSet& d, int n, int sample_rate_hz, int hop_samples);

/// Phones [begin, original_end) of the original sequence are replaced by
/// phones [begin, modified_end) of the modified one.
struct ModifiedRegion {
  int begin = 0;
  int original_end = 0;
  int modified_end = 0;
  bool operator==(const ModifiedRegion&) const = default;
};

/// Longest common prefix, then the longest common suffix of what remains.
ModifiedRegion find_modified_region(const PhonemeSequence& original, const PhonemeSequence& modified);

struct EditRequest {
  Spectrogram original;
  PhonemeSequence original_phones;
  AlignmentMap original_alignment;
  PhonemeSequence modified_phones;
  /// Explicit phone range of the original to regenerate; required when the
  /// two phone sequences are equal. The range keeps its original timing.
  std::optional<std::pair<int, int>> region_override;
};

struct EditOptions {
  std::optional<DurationSet> modified_durations;  // d' for every phone of the modified sequence
  std::optional<DurationSet> original_durations;  // d' for every phone of the original sequence
};

struct EditResult {
  Spectrogram spliced;
  int prefix_frames = 0;
  int inserted_frames = 0;
  int suffix_frames = 0;
  ModifiedRegion region;
  std::vector<int> region_phone_frames;
  DurationSet adjusted_durations;
};

EditResult edit(const EditRequest& req, A3tModel& model, const DurationStats& stats, const EditOptions& opt = {});

/// Regenerates the middle third of an utterance's phones with the original
/// timing.
EditResult reconstruct_middle_third(const Spectrogram& s, const PhonemeSequence& phones, const AlignmentMap& a,
                                    A3tModel& model);

struct PromptRequest {
  Spectrogram prompt;
  PhonemeSequence prompt_phones;
  AlignmentMap prompt_alignment;
  PhonemeSequence target_phones;
  bool silent_prompt = false;  // every prompt frame replaced by the mask vector
};

struct PromptResult {
  Spectrogram target;
  std::vector<int> phone_frames;
  DurationSet adjusted_durations;
};

PromptResult prompt_tts(const PromptRequest& req, A3tModel& model, const DurationStats& stats,
                        const EditOptions& opt = {});

std::string edit_report_json(const EditResult& r);

}  // namespace a3t
