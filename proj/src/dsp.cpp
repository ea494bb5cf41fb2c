#include "rose/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <string>

namespace rose::dsp {
namespace {

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

struct Radix2Plan {
  std::vector<std::size_t> bitrev;
  std::vector<std::complex<double>> twiddle;  // e^{-2 pi i k / n}, k < n/2
};

const Radix2Plan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, Radix2Plan> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Radix2Plan p;
  p.bitrev.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    p.bitrev[i] = r;
  }
  p.twiddle.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    p.twiddle[k] = {std::cos(ang), std::sin(ang)};
  }
  return cache.emplace(n, std::move(p)).first->second;
}

void check_kind(const SpectralFeatures& m, FeatureKind want, const char* op) {
  if (m.kind != want) throw ConfigError(std::string(op) + ": expects magnitude features");
}

// One windowed, zero-padded frame spectrum.
void frame_spectrum(const auto* x, std::size_t start, const std::vector<double>& window,
                    std::vector<std::complex<double>>& buf) {
  std::fill(buf.begin(), buf.end(), std::complex<double>{});
  for (std::size_t n = 0; n < window.size(); ++n) buf[n] = window[n] * static_cast<double>(x[start + n]);
  fft(buf);
}

}  // namespace

void StftConfig::validate() const {
  if (fft_bins < 2) throw ConfigError("fft_bins must be >= 2");
  if (window_len == 0 || window_len > fft_bins) {
    throw ConfigError("window_len must be in [1, fft_bins], got " + std::to_string(window_len));
  }
  if (hop == 0) throw ConfigError("hop must be >= 1");
  if (mfcc_dim == 0 || mfcc_dim > mel_bands) {
    throw ConfigError("mel_bands (" + std::to_string(mel_bands) + ") must be >= mfcc_dim (" +
                      std::to_string(mfcc_dim) + ")");
  }
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (!(log_floor > 0.0)) throw ConfigError("log_floor must be positive");
}

std::size_t StftConfig::frame_count(std::size_t n) const {
  if (n < window_len) {
    throw LengthError("signal of " + std::to_string(n) + " samples is shorter than one window (" +
                      std::to_string(window_len) + ")");
  }
  return 1 + (n - window_len) / hop;
}

void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if (!is_pow2(n)) {
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc{};
      for (std::size_t j = 0; j < n; ++j) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) /
                           static_cast<double>(n);
        acc += a[j] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out[k] = acc;
    }
    a = std::move(out);
    return;
  }
  const auto& p = plan_for(n);
  for (std::size_t i = 0; i < n; ++i)
    if (i < p.bitrev[i]) std::swap(a[i], a[p.bitrev[i]]);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2, step = n / len;
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t j = 0; j < half; ++j) {
        const auto w = p.twiddle[j * step] * a[i + j + half];
        a[i + j + half] = a[i + j] - w;
        a[i + j] += w;
      }
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

SpectralFeatures stft_magnitude(std::span<const float> x, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t frames = cfg.frame_count(x.size());
  const std::size_t bins = cfg.bins();
  const auto window = hann_window(cfg.window_len);
  SpectralFeatures out{FeatureKind::kMagnitude, frames, bins, std::vector<double>(frames * bins)};
  std::vector<std::complex<double>> buf(cfg.fft_bins);
  for (std::size_t f = 0; f < frames; ++f) {
    frame_spectrum(x.data(), f * cfg.hop, window, buf);
    for (std::size_t k = 0; k < bins; ++k) out.values[f * bins + k] = std::abs(buf[k]);
  }
  return out;
}

SpectralFeatures log_magnitude(const SpectralFeatures& m, double log_floor) {
  check_kind(m, FeatureKind::kMagnitude, "log_magnitude");
  SpectralFeatures out = m;
  out.kind = FeatureKind::kLogMagnitude;
  for (auto& v : out.values) v = std::log(std::max(v, log_floor));
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_centre_frequencies(const StftConfig& cfg) {
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centres(cfg.mel_bands);
  for (std::size_t m = 0; m < cfg.mel_bands; ++m)
    centres[m] = mel_to_hz(top * static_cast<double>(m + 1) / static_cast<double>(cfg.mel_bands + 1));
  return centres;
}

std::vector<double> mel_filter_weights(const StftConfig& cfg) {
  cfg.validate();
  const std::size_t bands = cfg.mel_bands, bins = cfg.bins();
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(bands + 1));
  std::vector<double> w(bands * bins, 0.0);
  for (std::size_t m = 0; m < bands; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    double row_sum = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_bins);
      double v = 0.0;
      if (f > lo && f <= mid) v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
      w[m * bins + k] = v;
      row_sum += v;
    }
    if (row_sum <= 0.0) {
      throw ConfigError("mel filter " + std::to_string(m) +
                        " covers no FFT bin; increase fft_bins or reduce mel_bands");
    }
  }
  return w;
}

SpectralFeatures mel_filterbank(const SpectralFeatures& m, const StftConfig& cfg) {
  check_kind(m, FeatureKind::kMagnitude, "mel_filterbank");
  if (m.cols != cfg.bins()) throw DimensionError("mel_filterbank: bin count does not match config");
  const auto w = mel_filter_weights(cfg);
  SpectralFeatures out{FeatureKind::kMel, m.frames, cfg.mel_bands,
                       std::vector<double>(m.frames * cfg.mel_bands, 0.0)};
  for (std::size_t f = 0; f < m.frames; ++f)
    for (std::size_t b = 0; b < cfg.mel_bands; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < m.cols; ++k) {
        const double mag = m.at(f, k);
        acc += w[b * m.cols + k] * mag * mag;
      }
      out.values[f * cfg.mel_bands + b] = acc;
    }
  return out;
}

std::vector<double> dct_basis(std::size_t out_dim, std::size_t in_dim) {
  std::vector<double> d(out_dim * in_dim);
  for (std::size_t q = 0; q < out_dim; ++q) {
    const double s = std::sqrt((q == 0 ? 1.0 : 2.0) / static_cast<double>(in_dim));
    for (std::size_t m = 0; m < in_dim; ++m)
      d[q * in_dim + m] = s * std::cos(std::numbers::pi * static_cast<double>(q) *
                                       (static_cast<double>(m) + 0.5) / static_cast<double>(in_dim));
  }
  return d;
}

SpectralFeatures mfcc(std::span<const float> x, const StftConfig& cfg) {
  const auto mel = mel_filterbank(stft_magnitude(x, cfg), cfg);
  const auto basis = dct_basis(cfg.mfcc_dim, cfg.mel_bands);
  SpectralFeatures out{FeatureKind::kMfcc, mel.frames, cfg.mfcc_dim,
                       std::vector<double>(mel.frames * cfg.mfcc_dim)};
  std::vector<double> logmel(cfg.mel_bands);
  for (std::size_t f = 0; f < mel.frames; ++f) {
    for (std::size_t b = 0; b < cfg.mel_bands; ++b)
      logmel[b] = std::log(std::max(mel.at(f, b), cfg.log_floor));
    for (std::size_t q = 0; q < cfg.mfcc_dim; ++q) {
      double acc = 0.0;
      for (std::size_t b = 0; b < cfg.mel_bands; ++b) acc += basis[q * cfg.mel_bands + b] * logmel[b];
      out.values[f * cfg.mfcc_dim + q] = acc;
    }
  }
  return out;
}

template <typename T>
Tensor<T> stft_magnitude(const Tensor<T>& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.rank() != 1) throw DimensionError("stft_magnitude expects a waveform, got " + shape_str(x.shape()));
  const std::size_t n = x.numel();
  const std::size_t frames = cfg.frame_count(n);
  const std::size_t bins = cfg.bins(), nfft = cfg.fft_bins, hop = cfg.hop;
  auto window = std::make_shared<std::vector<double>>(hann_window(cfg.window_len));
  auto spectra = std::make_shared<std::vector<std::complex<double>>>(frames * bins);
  std::vector<T> out(frames * bins);
  std::vector<std::complex<double>> buf(nfft);
  auto xs = x.data();
  for (std::size_t f = 0; f < frames; ++f) {
    frame_spectrum(xs.data(), f * hop, *window, buf);
    for (std::size_t k = 0; k < bins; ++k) {
      (*spectra)[f * bins + k] = buf[k];
      out[f * bins + k] = static_cast<T>(std::abs(buf[k]));
    }
  }
  return make_op_result<T>(
      Shape{frames, bins}, std::move(out), {x},
      [x, window, spectra, frames, bins, nfft, hop](std::span<const T> g) {
        auto gx = grad_sink(x);
        std::vector<std::complex<double>> buf(nfft);
        for (std::size_t f = 0; f < frames; ++f) {
          // d|X_k|/du_n = Re(conj(X_k) e^{-2 pi i k n / N}) / |X_k|, so the
          // frame gradient is the real part of a forward DFT of the weighted
          // conjugate spectrum.
          std::fill(buf.begin(), buf.end(), std::complex<double>{});
          bool any = false;
          for (std::size_t k = 0; k < bins; ++k) {
            const auto spec = (*spectra)[f * bins + k];
            const double mag = std::abs(spec);
            const double gk = g[f * bins + k];
            if (mag > 0.0 && gk != 0.0) {
              buf[k] = gk * std::conj(spec) / mag;
              any = true;
            }
          }
          if (!any) continue;
          fft(buf);
          for (std::size_t i = 0; i < window->size(); ++i)
            gx[f * hop + i] += static_cast<T>((*window)[i] * buf[i].real());
        }
      });
}

template <typename T>
Tensor<T> mfcc(const Tensor<T>& x, const StftConfig& cfg) {
  const auto mag = stft_magnitude(x, cfg);
  const std::size_t bins = cfg.bins();
  const auto w = mel_filter_weights(cfg);
  std::vector<T> wt(bins * cfg.mel_bands);
  for (std::size_t b = 0; b < cfg.mel_bands; ++b)
    for (std::size_t k = 0; k < bins; ++k) wt[k * cfg.mel_bands + b] = static_cast<T>(w[b * bins + k]);
  const auto basis = dct_basis(cfg.mfcc_dim, cfg.mel_bands);
  std::vector<T> dt(cfg.mel_bands * cfg.mfcc_dim);
  for (std::size_t q = 0; q < cfg.mfcc_dim; ++q)
    for (std::size_t b = 0; b < cfg.mel_bands; ++b)
      dt[b * cfg.mfcc_dim + q] = static_cast<T>(basis[q * cfg.mel_bands + b]);
  const Tensor<T> mel_t(Shape{bins, cfg.mel_bands}, std::move(wt));
  const Tensor<T> dct_t(Shape{cfg.mel_bands, cfg.mfcc_dim}, std::move(dt));
  const auto mel = matmul(square(mag), mel_t);
  return matmul(log_floor(mel, static_cast<T>(cfg.log_floor)), dct_t);
}

template Tensor<float> stft_magnitude(const Tensor<float>&, const StftConfig&);
template Tensor<double> stft_magnitude(const Tensor<double>&, const StftConfig&);
template Tensor<float> mfcc(const Tensor<float>&, const StftConfig&);
template Tensor<double> mfcc(const Tensor<double>&, const StftConfig&);

void write_spectrogram_pgm(std::span<const float> x, const StftConfig& cfg,
                           const std::filesystem::path& path) {
  const auto m = stft_magnitude(x, cfg);
  double peak = 0.0;
  for (double v : m.values) peak = std::max(peak, v);
  const std::size_t width = m.frames, height = m.cols;
  std::vector<unsigned char> pixels(width * height, 0);
  if (peak > 0.0) {
    for (std::size_t f = 0; f < width; ++f)
      for (std::size_t k = 0; k < height; ++k) {
        const double v = m.at(f, k);
        double db = v > 0.0 ? 20.0 * std::log10(v / peak) : -80.0;
        db = std::clamp(db, -80.0, 0.0);
        const std::size_t row = height - 1 - k;
        pixels[row * width + f] = static_cast<unsigned char>(std::lround(255.0 * (db + 80.0) / 80.0));
      }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace rose::dsp
