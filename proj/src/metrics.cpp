#include "rose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "rose/error.hpp"

namespace rose::metrics {
namespace {

void require_pair(std::span<const float> ref, std::span<const float> est, const char* what) {
  if (ref.size() != est.size()) {
    throw DimensionError(std::string(what) + ": reference length " + std::to_string(ref.size()) +
                         " vs estimate length " + std::to_string(est.size()));
  }
}

double energy(std::span<const float> x) {
  double e = 0.0;
  for (float v : x) e += static_cast<double>(v) * v;
  return e;
}

}  // namespace

double si_sdr(std::span<const float> ref, std::span<const float> est) {
  require_pair(ref, est, "si_sdr");
  const double rr = energy(ref);
  if (rr == 0.0) throw DegenerateInputError("si_sdr: silent reference");
  double dot = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) dot += static_cast<double>(est[i]) * ref[i];
  const double alpha = dot / rr;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double t = alpha * ref[i];
    const double r = t - est[i];
    target += t * t;
    residual += r * r;
  }
  if (target == 0.0) return -kSiSdrCapDb;
  if (residual == 0.0) return kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / residual), -kSiSdrCapDb, kSiSdrCapDb);
}

double segmental_snr(std::span<const float> ref, std::span<const float> est, std::size_t frame, std::size_t hop) {
  require_pair(ref, est, "segmental_snr");
  if (frame == 0 || hop == 0) throw ConfigError("segmental_snr: frame and hop must be positive");
  if (ref.size() < frame) {
    throw LengthError("segmental_snr: " + std::to_string(ref.size()) + " samples < frame " + std::to_string(frame));
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + frame <= ref.size(); start += hop, ++count) {
    double p_ref = 0.0, p_err = 0.0;
    for (std::size_t i = start; i < start + frame; ++i) {
      const double e = static_cast<double>(ref[i]) - est[i];
      p_ref += static_cast<double>(ref[i]) * ref[i];
      p_err += e * e;
    }
    double snr;
    if (p_err == 0.0) snr = 35.0;
    else if (p_ref == 0.0) snr = -10.0;
    else snr = std::clamp(10.0 * std::log10(p_ref / p_err), -10.0, 35.0);
    total += snr;
  }
  return total / static_cast<double>(count);
}

double log_spectral_distance(std::span<const float> ref, std::span<const float> est, const dsp::StftConfig& cfg) {
  require_pair(ref, est, "log_spectral_distance");
  const auto a = dsp::log_magnitude(dsp::stft_magnitude(ref, cfg), cfg.log_floor);
  const auto b = dsp::log_magnitude(dsp::stft_magnitude(est, cfg), cfg.log_floor);
  const double to_db = 20.0 / std::log(10.0);
  double total = 0.0;
  for (std::size_t f = 0; f < a.frames; ++f) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double d = to_db * (a.at(f, k) - b.at(f, k));
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(a.cols));
  }
  return total / static_cast<double>(a.frames);
}

std::vector<float> resample_sinc(std::span<const float> x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ConfigError("resample_sinc: rates must be positive");
  if (from_rate == to_rate) return {x.begin(), x.end()};
  const std::size_t n = x.size();
  const auto m = static_cast<std::size_t>(
      std::ceil(static_cast<double>(n) * to_rate / static_cast<double>(from_rate)));
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to the input Nyquist
  constexpr double kZeroCrossings = 16.0;
  constexpr double kBeta = 8.0;
  const double half = kZeroCrossings / cutoff;  // half-width in input samples
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
  std::vector<float> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double centre = static_cast<double>(j) / ratio;
    const auto lo = static_cast<long>(std::ceil(centre - half));
    const auto hi = static_cast<long>(std::floor(centre + half));
    double acc = 0.0;
    for (long i = std::max(lo, 0L); i <= std::min(hi, static_cast<long>(n) - 1); ++i) {
      const double t = static_cast<double>(i) - centre;
      const double u = t / half;
      const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0_beta;
      const double arg = M_PI * cutoff * t;
      const double sinc = t == 0.0 ? 1.0 : std::sin(arg) / arg;
      acc += x[static_cast<std::size_t>(i)] * cutoff * sinc * window;
    }
    out[j] = static_cast<float>(acc);
  }
  return out;
}

namespace {

constexpr int kStoiRate = 10000;
constexpr std::size_t kStoiFrame = 256;
constexpr std::size_t kStoiFft = 512;
constexpr std::size_t kStoiHop = kStoiFrame / 2;
constexpr std::size_t kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr std::size_t kStoiSegment = 30;
constexpr double kStoiBeta = -15.0;
constexpr double kStoiDynRange = 40.0;
constexpr double kEps = 2.220446049250313e-16;

// Hann of length n+2 without its zero end points.
std::vector<double> stoi_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  }
  return w;
}

// Drops frames more than kStoiDynRange dB below the loudest reference frame
// and overlap-adds the survivors.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = stoi_window(kStoiFrame);
  std::vector<std::vector<double>> xf, yf;
  std::vector<double> energies;
  for (std::size_t s = 0; s + kStoiFrame <= x.size(); s += kStoiHop) {
    std::vector<double> a(kStoiFrame), b(kStoiFrame);
    double e = 0.0;
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
      a[i] = w[i] * x[s + i];
      b[i] = w[i] * y[s + i];
      e += a[i] * a[i];
    }
    energies.push_back(20.0 * std::log10(std::sqrt(e) + kEps));
    xf.push_back(std::move(a));
    yf.push_back(std::move(b));
  }
  if (energies.empty()) throw LengthError("stoi: signal shorter than one analysis frame");
  const double peak = *std::max_element(energies.begin(), energies.end());
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < energies.size(); ++f) {
    if (peak - kStoiDynRange - energies[f] < 0.0) keep.push_back(f);
  }
  const std::size_t len = keep.empty() ? 0 : (keep.size() - 1) * kStoiHop + kStoiFrame;
  std::vector<double> xo(len, 0.0), yo(len, 0.0);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
      xo[k * kStoiHop + i] += xf[keep[k]][i];
      yo[k * kStoiHop + i] += yf[keep[k]][i];
    }
  }
  x = std::move(xo);
  y = std::move(yo);
}

// One-third-octave band envelopes, bands x frames.
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  const auto w = stoi_window(kStoiFrame);
  const std::size_t bins = kStoiFft / 2 + 1;
  std::vector<std::size_t> lo(kStoiBands), hi(kStoiBands);
  auto nearest_bin = [&](double hz) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kStoiRate / static_cast<double>(kStoiFft);
      const double d = (f - hz) * (f - hz);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  };
  for (std::size_t b = 0; b < kStoiBands; ++b) {
    const double k = static_cast<double>(b);
    lo[b] = nearest_bin(kStoiMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0));
    hi[b] = nearest_bin(kStoiMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0));
  }
  std::vector<std::vector<double>> env(kStoiBands);
  std::vector<std::complex<double>> buf(kStoiFft);
  // Frame starts strictly below len - frame, as in the reference implementation.
  for (std::size_t s = 0; s + kStoiFrame < x.size(); s += kStoiHop) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < kStoiFrame; ++i) buf[i] = w[i] * x[s + i];
    dsp::fft(buf);
    for (std::size_t b = 0; b < kStoiBands; ++b) {
      double p = 0.0;
      for (std::size_t k = lo[b]; k < hi[b]; ++k) p += std::norm(buf[k]);
      env[b].push_back(std::sqrt(p));
    }
  }
  return env;
}

}  // namespace

double stoi(std::span<const float> ref, std::span<const float> est, int sample_rate) {
  require_pair(ref, est, "stoi");
  const auto r = resample_sinc(ref, sample_rate, kStoiRate);
  const auto e = resample_sinc(est, sample_rate, kStoiRate);
  std::vector<double> x(r.begin(), r.end()), y(e.begin(), e.end());
  remove_silent_frames(x, y);
  const auto xe = band_envelopes(x);
  const auto ye = band_envelopes(y);
  const std::size_t frames = xe[0].size();
  if (frames < kStoiSegment) {
    throw LengthError("stoi: " + std::to_string(frames) + " speech-active frames < " +
                      std::to_string(kStoiSegment) + " required");
  }
  const double clip = std::pow(10.0, -kStoiBeta / 20.0);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xs(kStoiSegment), ys(kStoiSegment);
  for (std::size_t m = kStoiSegment; m <= frames; ++m) {
    for (std::size_t b = 0; b < kStoiBands; ++b) {
      double nx = 0.0, ny = 0.0;
      for (std::size_t t = 0; t < kStoiSegment; ++t) {
        xs[t] = xe[b][m - kStoiSegment + t];
        ys[t] = ye[b][m - kStoiSegment + t];
        nx += xs[t] * xs[t];
        ny += ys[t] * ys[t];
      }
      const double gain = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      for (std::size_t t = 0; t < kStoiSegment; ++t) ys[t] = std::min(ys[t] * gain, xs[t] * (1.0 + clip));
      const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / kStoiSegment;
      const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / kStoiSegment;
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (std::size_t t = 0; t < kStoiSegment; ++t) {
        const double a = xs[t] - mx, c = ys[t] - my;
        sxx += a * a;
        syy += c * c;
        sxy += a * c;
      }
      total += sxy / ((std::sqrt(sxx) + kEps) * (std::sqrt(syy) + kEps));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

ClipMetrics evaluate_pair(const std::string& name, std::span<const float> ref, std::span<const float> est,
                          int sample_rate, const dsp::StftConfig& cfg) {
  ClipMetrics m;
  m.clip = name;
  m.si_sdr_db = si_sdr(ref, est);
  m.seg_snr_db = segmental_snr(ref, est);
  m.lsd = log_spectral_distance(ref, est, cfg);
  m.stoi = stoi(ref, est, sample_rate);
  return m;
}

ClipMetrics MetricReport::mean() const {
  ClipMetrics m;
  m.clip = "MEAN";
  if (clips.empty()) return m;
  for (const auto& c : clips) {
    m.si_sdr_db += c.si_sdr_db;
    m.seg_snr_db += c.seg_snr_db;
    m.lsd += c.lsd;
    m.stoi += std::clamp(c.stoi, 0.0, 1.0);
  }
  const auto n = static_cast<double>(clips.size());
  m.si_sdr_db /= n;
  m.seg_snr_db /= n;
  m.lsd /= n;
  m.stoi /= n;
  return m;
}

void MetricReport::write_csv(std::ostream& out) const {
  auto row = [&](const ClipMetrics& c) {
    out << c.clip << ',' << c.si_sdr_db << ',' << c.seg_snr_db << ',' << c.lsd << ','
        << std::clamp(c.stoi, 0.0, 1.0) << '\n';
  };
  out << "clip,si_sdr_db,seg_snr_db,lsd,stoi\n";
  for (const auto& c : clips) row(c);
  row(mean());
}

}  // namespace rose::metrics
