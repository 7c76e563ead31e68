#pragma once

#include "a3t/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace a3t {

/// Phone inventory read from a text file, one symbol per line, line number = id.
class PhoneVocab {
 public:
  PhoneVocab() = default;
  explicit PhoneVocab(std::vector<std::string> symbols);

  static PhoneVocab load(const std::filesystem::path& path);

  int id(std::string_view symbol) const;  // throws DataError on unknown symbols
  bool contains(std::string_view symbol) const;
  const std::string& symbol(int id) const;
  int size() const { return static_cast<int>(symbols_.size()); }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

struct PhonemeSequence {
  std::vector<int> ids;
  std::vector<std::string> symbols;

  int size() const { return static_cast<int>(ids.size()); }
  bool empty() const { return ids.empty(); }
  void validate() const;

  PhonemeSequence slice(int begin, int end) const;
  PhonemeSequence concat(const PhonemeSequence& tail) const;
};

PhonemeSequence make_phonemes(const PhoneVocab& vocab, const std::vector<std::string>& symbols);

/// Whitespace-separated phone symbols, as used by the CLI's text files.
PhonemeSequence read_phoneme_file(const std::filesystem::path& path, const PhoneVocab& vocab);

struct PhoneInterval {
  int phoneme = 0;
  int start_frame = 0;
  int end_frame = 0;  // exclusive

  int length() const { return end_frame - start_frame; }
  bool operator==(const PhoneInterval&) const = default;
};

struct AlignmentMap {
  std::vector<PhoneInterval> intervals;

  int num_phonemes() const { return static_cast<int>(intervals.size()); }
  int num_frames() const { return intervals.empty() ? 0 : intervals.back().end_frame; }
  void validate() const;
  bool operator==(const AlignmentMap&) const = default;
};

/// Per-phoneme durations in seconds.
struct DurationSet {
  std::vector<double> values;

  int size() const { return static_cast<int>(values.size()); }
  double total() const;
};

struct ParsedAlignment {
  PhonemeSequence phonemes;
  AlignmentMap alignment;
};

/// Tab-separated "symbol\tstart_s\tend_s" lines; times become frame indices
/// via floor(t * sr / h).
ParsedAlignment parse_alignment(std::string_view text, const PhoneVocab& vocab, int hop_samples, int sample_rate_hz);
ParsedAlignment parse_alignment_file(const std::filesystem::path& path, const PhoneVocab& vocab, int hop_samples,
                                     int sample_rate_hz);

std::string serialize_alignment(const PhonemeSequence& phones, const AlignmentMap& a, int hop_samples,
                                int sample_rate_hz);

/// Clamps the final interval to end at `num_frames`.
AlignmentMap clamp_to_frames(AlignmentMap a, int num_frames);

/// Segment index of every frame: the position of the phoneme whose interval
/// holds it. Phoneme p carries index p itself.
std::vector<int> frame_segment_indices(const AlignmentMap& a, int num_frames);

DurationSet phoneme_durations(const AlignmentMap& a, int hop_samples, int sample_rate_hz);

}  // namespace a3t
