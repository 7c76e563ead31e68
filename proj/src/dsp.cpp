#include "a3t/dsp.hpp"

#include "binary_io.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <fstream>
#include <string>

namespace a3t {

namespace {

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!io::get_le(is, v)) throw DataError("truncated WAV header");
  return v;
}

std::uint16_t read_u16(std::istream& is) {
  std::uint16_t v = 0;
  if (!io::get_le(is, v)) throw DataError("truncated WAV header");
  return v;
}

}  // namespace

bool is_supported_sample_rate(int sample_rate_hz) {
  return sample_rate_hz == 24000 || sample_rate_hz == 22050;
}

int AudioConfig::frame_samples(int sample_rate_hz) const {
  return static_cast<int>(round_half_up(frame_length_s * sample_rate_hz));
}

int AudioConfig::hop_samples(int sample_rate_hz) const {
  return static_cast<int>(round_half_up(hop_s * sample_rate_hz));
}

int AudioConfig::fft_size(int sample_rate_hz) const {
  if (n_fft > 0) return n_fft;
  const int frame = frame_samples(sample_rate_hz);
  int n = 1;
  while (n < frame) n <<= 1;
  return n;
}

double AudioConfig::max_frequency(int sample_rate_hz) const {
  return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0;
}

void AudioConfig::validate(int sample_rate_hz) const {
  if (!(frame_length_s > hop_s && hop_s > 0.0))
    throw UsageError("audio config requires frame_length_s > hop_s > 0");
  if (fft_size(sample_rate_hz) < frame_samples(sample_rate_hz))
    throw UsageError("audio config requires n_fft >= frame length in samples");
  if (n_mels != kMelBins) throw UsageError("audio config requires n_mels = 80");
  if (!(fmin_hz >= 0.0 && fmin_hz < max_frequency(sample_rate_hz) &&
        max_frequency(sample_rate_hz) <= sample_rate_hz / 2.0))
    throw UsageError("audio config requires 0 <= fmin < fmax <= sr/2");
  if (!(log_floor > 0.0)) throw UsageError("audio config requires log_floor > 0");
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());

  char tag[4];
  if (!in.read(tag, 4) || std::string(tag, 4) != "RIFF") throw DataError("not a RIFF file: " + path.string());
  read_u32(in);
  if (!in.read(tag, 4) || std::string(tag, 4) != "WAVE") throw DataError("not a WAVE file: " + path.string());

  Waveform w;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    const std::string chunk(tag, 4);
    const std::uint32_t size = read_u32(in);
    if (chunk == "fmt ") {
      const std::uint16_t format = read_u16(in);
      const std::uint16_t channels = read_u16(in);
      const std::uint32_t rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      const std::uint16_t bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      if (format != 1) throw DataError("unsupported WAV encoding (PCM only)");
      if (channels != 1) throw DataError("non-mono input");
      if (bits != 16) throw DataError("unsupported bit depth " + std::to_string(bits) + " (16-bit only)");
      if (!is_supported_sample_rate(static_cast<int>(rate)))
        throw DataError("unsupported sample rate " + std::to_string(rate));
      w.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) throw DataError("WAV data chunk precedes fmt chunk");
      w.samples.resize(size / 2);
      for (auto& s : w.samples) {
        std::int16_t v = 0;
        if (!io::get_le(in, v)) throw DataError("truncated WAV data");
        s = static_cast<double>(v) / 32768.0;
      }
      break;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
    }
  }
  if (!have_fmt) throw DataError("WAV file has no fmt chunk");
  if (w.samples.empty()) throw DataError("WAV file has no samples");
  return w;
}

void save_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  io::put_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  io::put_le<std::uint32_t>(out, 16);
  io::put_le<std::uint16_t>(out, 1);
  io::put_le<std::uint16_t>(out, 1);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  io::put_le<std::uint16_t>(out, 2);
  io::put_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  io::put_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    io::put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clipped * 32768.0)));
  }
}

int frame_count(long num_samples, int frame_samples, int hop_samples) {
  if (num_samples < frame_samples) return 0;
  return static_cast<int>((num_samples - frame_samples) / hop_samples) + 1;
}

MelFilterbank mel_filterbank(int n_mels, int n_fft, int sample_rate_hz, double fmin_hz, double fmax_hz) {
  MelFilterbank fb;
  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);
  fb.edges_hz.resize(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    fb.edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  const int bins = n_fft / 2 + 1;
  fb.weights = Matrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = fb.lower_hz(m), mid = fb.center_hz(m), hi = fb.upper_hz(m);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate_hz / n_fft;
      double v = 0.0;
      if (f > lo && f <= mid)
        v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi)
        v = (hi - f) / (hi - mid);
      fb.weights(m, k) = v;
    }
  }
  return fb;
}

Vector power_spectrum(std::span<const double> frame, int n_fft) {
  std::vector<double> padded(n_fft, 0.0);
  std::copy(frame.begin(), frame.end(), padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  Vector power(n_fft / 2 + 1);
  for (int k = 0; k <= n_fft / 2; ++k) power(k) = std::norm(spectrum[k]);
  return power;
}

Spectrogram logmel(const Waveform& w, const AudioConfig& cfg) {
  const int sr = w.sample_rate_hz;
  cfg.validate(sr);
  for (double s : w.samples)
    if (!std::isfinite(s) || s < -1.0 || s > 1.0) throw DataError("waveform samples must be finite and in [-1, 1]");

  const int frame_len = cfg.frame_samples(sr);
  const int hop = cfg.hop_samples(sr);
  const int n_fft = cfg.fft_size(sr);
  const int T = frame_count(static_cast<long>(w.samples.size()), frame_len, hop);
  if (T < 1) throw DataError("waveform shorter than one frame");

  const Vector window = hann_window(frame_len);
  const MelFilterbank fb = mel_filterbank(cfg.n_mels, n_fft, sr, cfg.fmin_hz, cfg.max_frequency(sr));

  Spectrogram out;
  out.hop_samples = hop;
  out.sample_rate_hz = sr;
  out.frames.resize(T, cfg.n_mels);
  std::vector<double> frame(frame_len);
  for (int t = 0; t < T; ++t) {
    const double* src = w.samples.data() + static_cast<long>(t) * hop;
    for (int n = 0; n < frame_len; ++n) frame[n] = src[n] * window(n);
    const Vector energies = fb.weights * power_spectrum(frame, n_fft);
    for (int m = 0; m < cfg.n_mels; ++m) out.frames(t, m) = std::log(std::max(energies(m), cfg.log_floor));
  }
  return out;
}

void write_features(const std::filesystem::path& path, const Spectrogram& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file: " + path.string());
  out.write("A3TF", 4);
  io::put_le<std::uint32_t>(out, 1);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.frames.rows()));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.frames.cols()));
  for (Eigen::Index t = 0; t < s.frames.rows(); ++t)
    for (Eigen::Index m = 0; m < s.frames.cols(); ++m) io::put_le<float>(out, static_cast<float>(s.frames(t, m)));
  if (!out) throw DataError("failed writing feature file: " + path.string());
}

Spectrogram read_features(const std::filesystem::path& path, int hop_samples, int sample_rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "A3TF") throw DataError("bad feature file magic: " + path.string());
  std::uint32_t version = 0, T = 0, mels = 0;
  if (!io::get_le(in, version) || !io::get_le(in, T) || !io::get_le(in, mels))
    throw DataError("truncated feature header: " + path.string());
  if (version != 1) throw DataError("unsupported feature file version " + std::to_string(version));
  if (mels != kMelBins) throw DataError("feature file must have 80 mel bins");
  if (T < 1) throw DataError("feature file has no frames");
  Spectrogram s;
  s.hop_samples = hop_samples;
  s.sample_rate_hz = sample_rate_hz;
  s.frames.resize(T, mels);
  for (std::uint32_t t = 0; t < T; ++t)
    for (std::uint32_t m = 0; m < mels; ++m) {
      float v = 0;
      if (!io::get_le(in, v)) throw DataError("truncated feature data: " + path.string());
      if (!std::isfinite(v)) throw DataError("non-finite feature value: " + path.string());
      s.frames(t, m) = v;
    }
  return s;
}

}  // namespace a3t
