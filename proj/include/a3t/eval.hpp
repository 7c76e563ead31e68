#pragma once

#include "a3t/dsp.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

namespace a3t {

inline constexpr int kCepstralOrder = 13;

/// 10 * sqrt(2) / ln 10
inline const double kMcdScale = 10.0 * std::sqrt(2.0) / std::numbers::ln10;

/// Orthonormal DCT-II of each row, coefficients 1..order (c0 dropped).
template <typename Scalar>
MatrixT<Scalar> mel_cepstra(const MatrixT<Scalar>& logmel, int order = kCepstralOrder) {
  const int M = static_cast<int>(logmel.cols());
  if (order < 1 || order > M - 1) throw UsageError("cepstral order out of range");
  MatrixT<Scalar> basis(M, order);
  const double pi = std::numbers::pi;
  for (int m = 0; m < M; ++m)
    for (int k = 1; k <= order; ++k)
      basis(m, k - 1) = static_cast<Scalar>(std::sqrt(2.0 / M) * std::cos(pi * k * (2 * m + 1) / (2.0 * M)));
  return logmel * basis;
}

Matrix mel_cepstra(const Spectrogram& s, int order = kCepstralOrder);

struct FrameRange {
  int begin = 0;
  int end = 0;  // exclusive
  int length() const { return end - begin; }
};

struct McdReport {
  double mcd_db = 0.0;
  int frames_scored = 0;
  FrameRange region;
  std::string to_json() const;
};

McdReport mcd_masked_region(const Spectrogram& ref, const Spectrogram& hyp, FrameRange region,
                            int order = kCepstralOrder);

/// Binary PGM: width T, height n_mels with the top mel bin on the first row.
void plot_spectrogram(const Spectrogram& s, const std::filesystem::path& path);

}  // namespace a3t
