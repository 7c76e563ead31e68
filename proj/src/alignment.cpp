#include "a3t/alignment.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace a3t {

PhoneVocab::PhoneVocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (int i = 0; i < static_cast<int>(symbols_.size()); ++i) {
    if (!index_.emplace(symbols_[i], i).second) throw DataError("duplicate phone symbol in vocabulary: " + symbols_[i]);
  }
  if (size() > kPhoneVocabSize)
    throw DataError("phone vocabulary has " + std::to_string(size()) + " entries; at most 73 are allowed");
}

PhoneVocab PhoneVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open phone vocabulary: " + path.string());
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line.empty()) throw DataError("blank line in phone vocabulary: " + path.string());
    symbols.push_back(line);
  }
  if (symbols.empty()) throw DataError("empty phone vocabulary: " + path.string());
  return PhoneVocab(std::move(symbols));
}

int PhoneVocab::id(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) throw DataError("unknown phone symbol: " + std::string(symbol));
  return it->second;
}

bool PhoneVocab::contains(std::string_view symbol) const { return index_.count(std::string(symbol)) > 0; }

const std::string& PhoneVocab::symbol(int id) const {
  if (id < 0 || id >= size()) throw DataError("phone id out of range: " + std::to_string(id));
  return symbols_[id];
}

void PhonemeSequence::validate() const {
  if (!symbols.empty() && symbols.size() != ids.size())
    throw DataError("phoneme ids and symbols differ in length");
  if (size() > kMaxSegments) throw DataError("phoneme sequence longer than 500");
  for (int id : ids)
    if (id < 0 || id >= kPhoneVocabSize) throw DataError("phone id out of range: " + std::to_string(id));
}

PhonemeSequence PhonemeSequence::slice(int begin, int end) const {
  PhonemeSequence out;
  out.ids.assign(ids.begin() + begin, ids.begin() + end);
  if (!symbols.empty()) out.symbols.assign(symbols.begin() + begin, symbols.begin() + end);
  return out;
}

PhonemeSequence PhonemeSequence::concat(const PhonemeSequence& tail) const {
  PhonemeSequence out = *this;
  out.ids.insert(out.ids.end(), tail.ids.begin(), tail.ids.end());
  if (!symbols.empty() && !tail.symbols.empty())
    out.symbols.insert(out.symbols.end(), tail.symbols.begin(), tail.symbols.end());
  else
    out.symbols.clear();
  return out;
}

PhonemeSequence make_phonemes(const PhoneVocab& vocab, const std::vector<std::string>& symbols) {
  PhonemeSequence seq;
  for (const auto& s : symbols) {
    seq.ids.push_back(vocab.id(s));
    seq.symbols.push_back(s);
  }
  seq.validate();
  return seq;
}

PhonemeSequence read_phoneme_file(const std::filesystem::path& path, const PhoneVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open phone file: " + path.string());
  std::vector<std::string> symbols;
  std::string tok;
  while (in >> tok) symbols.push_back(tok);
  if (symbols.empty()) throw DataError("empty phone file: " + path.string());
  return make_phonemes(vocab, symbols);
}

void AlignmentMap::validate() const {
  int expected_start = 0;
  for (int i = 0; i < num_phonemes(); ++i) {
    const auto& iv = intervals[i];
    if (iv.phoneme != i) throw DataError("alignment phoneme positions must increase from 0");
    if (iv.start_frame != expected_start) throw DataError("alignment intervals must be contiguous from frame 0");
    if (iv.end_frame <= iv.start_frame) throw DataError("alignment interval with non-positive length");
    expected_start = iv.end_frame;
  }
}

double DurationSet::total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

ParsedAlignment parse_alignment(std::string_view text, const PhoneVocab& vocab, int hop_samples, int sample_rate_hz) {
  if (hop_samples <= 0 || sample_rate_hz <= 0) throw UsageError("hop and sample rate must be positive");
  ParsedAlignment out;
  std::istringstream in{std::string(text)};
  std::string line;
  double prev_end = 0.0;
  int line_no = 0;
  const double frames_per_second = static_cast<double>(sample_rate_hz) / hop_samples;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string symbol, start_s, end_s, extra;
    if (!std::getline(fields, symbol, '\t') || !std::getline(fields, start_s, '\t') ||
        !std::getline(fields, end_s, '\t') || std::getline(fields, extra, '\t'))
      throw DataError("alignment line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    double start = 0.0, end = 0.0;
    try {
      start = std::stod(start_s);
      end = std::stod(end_s);
    } catch (const std::exception&) {
      throw DataError("alignment line " + std::to_string(line_no) + ": bad time value");
    }
    if (!(end >= start) || start < prev_end - 1e-9 || start < 0.0)
      throw DataError("non-monotone alignment at line " + std::to_string(line_no));
    prev_end = end;

    const int id = vocab.id(symbol);
    // Small epsilon so that times written from exact frame boundaries do not
    // floor one frame short.
    const int start_frame = static_cast<int>(std::floor(start * frames_per_second + 1e-9));
    const int end_frame = static_cast<int>(std::floor(end * frames_per_second + 1e-9));
    const int position = out.phonemes.size();
    if (end_frame <= start_frame)
      throw DataError("alignment line " + std::to_string(line_no) + ": phone shorter than one frame");
    const int expected = out.alignment.intervals.empty() ? 0 : out.alignment.intervals.back().end_frame;
    if (start_frame != expected) {
      if (start_frame < expected) throw DataError("non-monotone alignment at line " + std::to_string(line_no));
      throw DataError("alignment line " + std::to_string(line_no) + ": gap between phones");
    }
    out.phonemes.ids.push_back(id);
    out.phonemes.symbols.push_back(symbol);
    out.alignment.intervals.push_back({position, start_frame, end_frame});
  }
  if (out.phonemes.empty()) throw DataError("empty alignment");
  out.phonemes.validate();
  out.alignment.validate();
  return out;
}

ParsedAlignment parse_alignment_file(const std::filesystem::path& path, const PhoneVocab& vocab, int hop_samples,
                                     int sample_rate_hz) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open alignment file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_alignment(buf.str(), vocab, hop_samples, sample_rate_hz);
}

std::string serialize_alignment(const PhonemeSequence& phones, const AlignmentMap& a, int hop_samples,
                                int sample_rate_hz) {
  if (phones.symbols.size() != a.intervals.size()) throw DataError("phone symbols and alignment differ in length");
  std::ostringstream out;
  out.precision(17);
  const double seconds_per_frame = static_cast<double>(hop_samples) / sample_rate_hz;
  for (const auto& iv : a.intervals)
    out << phones.symbols[iv.phoneme] << '\t' << iv.start_frame * seconds_per_frame << '\t'
        << iv.end_frame * seconds_per_frame << '\n';
  return out.str();
}

AlignmentMap clamp_to_frames(AlignmentMap a, int num_frames) {
  if (a.intervals.empty()) return a;
  auto& last = a.intervals.back();
  last.end_frame = num_frames;
  a.validate();
  return a;
}

std::vector<int> frame_segment_indices(const AlignmentMap& a, int num_frames) {
  if (num_frames > a.num_frames()) throw DataError("uncovered frames");
  std::vector<int> seg(num_frames);
  for (const auto& iv : a.intervals)
    for (int t = iv.start_frame; t < iv.end_frame && t < num_frames; ++t) seg[t] = iv.phoneme;
  return seg;
}

DurationSet phoneme_durations(const AlignmentMap& a, int hop_samples, int sample_rate_hz) {
  DurationSet d;
  d.values.reserve(a.intervals.size());
  for (const auto& iv : a.intervals)
    d.values.push_back(static_cast<double>(iv.length()) * hop_samples / sample_rate_hz);
  return d;
}

}  // namespace a3t
