#include "a3t/eval.hpp"

#include "json.hpp"

#include <fstream>

namespace a3t {

Matrix mel_cepstra(const Spectrogram& s, int order) { return mel_cepstra<double>(s.frames, order); }

std::string McdReport::to_json() const {
  nlohmann::ordered_json j;
  j["mcd_db"] = mcd_db;
  j["frames_scored"] = frames_scored;
  j["region"] = {region.begin, region.end};
  return j.dump(2);
}

McdReport mcd_masked_region(const Spectrogram& ref, const Spectrogram& hyp, FrameRange region, int order) {
  if (ref.frames.rows() != hyp.frames.rows() || ref.frames.cols() != hyp.frames.cols())
    throw DataError("reference and hypothesis shapes differ");
  if (region.length() <= 0) throw DataError("empty MCD region");
  if (region.begin < 0 || region.end > ref.num_frames()) throw DataError("MCD region outside the spectrogram");
  const Matrix a = mel_cepstra<double>(ref.frames.middleRows(region.begin, region.length()), order);
  const Matrix b = mel_cepstra<double>(hyp.frames.middleRows(region.begin, region.length()), order);
  const double mean_dist = (a - b).rowwise().norm().mean();
  McdReport r;
  r.mcd_db = kMcdScale * mean_dist;
  r.frames_scored = region.length();
  r.region = region;
  return r;
}

void plot_spectrogram(const Spectrogram& s, const std::filesystem::path& path) {
  const int T = s.num_frames();
  const int M = static_cast<int>(s.frames.cols());
  if (T < 1 || M < 1) throw DataError("cannot plot an empty spectrogram");
  const double lo = s.frames.minCoeff();
  const double hi = s.frames.maxCoeff();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image: " + path.string());
  out << "P5\n" << T << ' ' << M << "\n255\n";
  std::string row(static_cast<std::size_t>(T), '\0');
  for (int m = M - 1; m >= 0; --m) {
    for (int t = 0; t < T; ++t) {
      const double v = hi > lo ? (s.frames(t, m) - lo) / (hi - lo) * 255.0 : 0.0;
      row[static_cast<std::size_t>(t)] = static_cast<char>(static_cast<unsigned char>(round_half_up(v)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("failed writing image: " + path.string());
}

}  // namespace a3t
