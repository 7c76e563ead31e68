#pragma once

#include "a3t/alignment.hpp"
#include "a3t/dsp.hpp"
#include "a3t/random.hpp"
#include "a3t/training.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace a3t::fixtures {

inline constexpr int kRate = 24000;
inline constexpr int kHop = 300;

inline PhoneVocab vocab() { return PhoneVocab::load(A3T_DATA_DIR "/phones.txt"); }

/// A mel row per phone id: a floor near -4 with two formant-like bumps.
inline RowVector phone_template(int id) {
  RowVector row(kMelBins);
  const double f1 = 5 + (id * 7) % 35;
  const double f2 = 42 + (id * 13) % 30;
  for (int m = 0; m < kMelBins; ++m) {
    const double a = (m - f1) / 5.0, b = (m - f2) / 7.0;
    row(m) = -4.0 + 2.5 * std::exp(-a * a) + 1.5 * std::exp(-b * b) - 0.01 * m;
  }
  return row;
}

/// Utterance of `num_phones` phones drawn from the vocabulary's real phones,
/// each lasting 5..11 frames; rows are the phone template plus a slow ramp.
/// Phones come from `text_seed` and durations from `seed`, so two utterances
/// may share a transcript but not its timing.
inline Utterance synthetic_utterance(std::uint64_t seed, int num_phones = 10, std::uint64_t text_seed = 0) {
  Rng rng(seed);
  Rng text_rng(derive_seed(text_seed == 0 ? seed : text_seed, 1));
  Utterance u;
  u.id = "utt" + std::to_string(seed);
  int frame = 0;
  for (int p = 0; p < num_phones; ++p) {
    const int id = 2 + static_cast<int>(text_rng.uniform_index(kPhoneVocabSize - 2));
    const int len = 5 + static_cast<int>(rng.uniform_index(7));
    u.phones.ids.push_back(id);
    u.alignment.intervals.push_back({p, frame, frame + len});
    frame += len;
  }
  u.spec.hop_samples = kHop;
  u.spec.sample_rate_hz = kRate;
  u.spec.frames.resize(frame, kMelBins);
  for (const auto& iv : u.alignment.intervals) {
    const RowVector base = phone_template(u.phones.ids[iv.phoneme]);
    for (int t = iv.start_frame; t < iv.end_frame; ++t) {
      const double pos = static_cast<double>(t - iv.start_frame) / iv.length();
      u.spec.frames.row(t) = base.array() + 0.3 * (pos - 0.5);
    }
  }
  return u;
}

/// Symbols filled from the vocabulary so sequences print and serialize.
inline void name_phones(Utterance& u, const PhoneVocab& v) {
  u.phones.symbols.clear();
  for (int id : u.phones.ids) u.phones.symbols.push_back(v.symbol(id));
}

}  // namespace a3t::fixtures
