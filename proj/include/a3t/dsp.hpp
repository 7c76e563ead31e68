#pragma once

#include "a3t/types.hpp"

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

namespace a3t {

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 0;
};

bool is_supported_sample_rate(int sample_rate_hz);

/// Framing and filterbank parameters. n_fft == 0 and fmax_hz <= 0 mean
/// "derive from the sample rate" (next power of two above the frame, and
/// Nyquist respectively).
struct AudioConfig {
  double frame_length_s = 0.050;
  double hop_s = 0.0125;
  int n_fft = 0;
  int n_mels = kMelBins;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;
  double log_floor = 1e-10;
  int sample_rate_hz = 24000;  // assumed for feature files, which carry no rate

  int frame_samples(int sample_rate_hz) const;
  int hop_samples(int sample_rate_hz) const;
  int fft_size(int sample_rate_hz) const;
  double max_frequency(int sample_rate_hz) const;
  void validate(int sample_rate_hz) const;
};

/// T x n_mels natural-log mel energies.
struct Spectrogram {
  Matrix frames;
  int hop_samples = 0;
  int sample_rate_hz = 0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
};

Waveform load_wav(const std::filesystem::path& path);
void save_wav(const std::filesystem::path& path, const Waveform& w);

/// floor((N - L) / h) + 1, or 0 when N < L.
int frame_count(long num_samples, int frame_samples, int hop_samples);

/// Symmetric Hann window, w[n] = 0.5 (1 - cos(2 pi n / (L - 1))).
template <typename Scalar = double>
VectorT<Scalar> hann_window(int length) {
  VectorT<Scalar> w(length);
  if (length == 1) {
    w(0) = Scalar(1);
    return w;
  }
  for (int n = 0; n < length; ++n)
    w(n) = Scalar(0.5) * (Scalar(1) - std::cos(Scalar(2) * std::numbers::pi_v<Scalar> * n / (length - 1)));
  return w;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular HTK-scale filterbank, n_mels x (n_fft / 2 + 1). Row m spans
/// edges[m] .. edges[m + 2] with its peak at edges[m + 1].
struct MelFilterbank {
  Matrix weights;
  std::vector<double> edges_hz;  // n_mels + 2 points

  double lower_hz(int m) const { return edges_hz[m]; }
  double center_hz(int m) const { return edges_hz[m + 1]; }
  double upper_hz(int m) const { return edges_hz[m + 2]; }
};

MelFilterbank mel_filterbank(int n_mels, int n_fft, int sample_rate_hz, double fmin_hz, double fmax_hz);

/// |DFT|^2 of a real frame zero-padded to n_fft, bins 0 .. n_fft / 2.
Vector power_spectrum(std::span<const double> frame, int n_fft);

Spectrogram logmel(const Waveform& w, const AudioConfig& cfg = {});

/// Feature cache: "A3TF", u32 version, u32 T, u32 n_mels, then float32
/// row-major frames, all little-endian.
void write_features(const std::filesystem::path& path, const Spectrogram& s);
Spectrogram read_features(const std::filesystem::path& path, int hop_samples = 0, int sample_rate_hz = 0);

}  // namespace a3t
