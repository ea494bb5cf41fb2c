#include "rose/echo_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "kernels.hpp"
#include "rose/error.hpp"

namespace rose {
namespace {

void check_clip(const AudioClip& c, const char* what) {
  for (float v : c.samples) {
    if (!std::isfinite(v)) throw DegenerateInputError(std::string(what) + " contains non-finite samples");
  }
}

std::string pair_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.wav", prefix, i);
  return buf;
}

AudioClip to_rate(const AudioClip& c, int rate) {
  return c.sample_rate == rate ? c : resample_linear(c, rate);
}

}  // namespace

void EchoParams::validate() const {
  if (delay_min_ms < 0.0 || delay_max_ms < delay_min_ms) {
    throw ConfigError("echo delay range must satisfy 0 <= min <= max (ms)");
  }
}

double signal_power(std::span<const float> x) {
  if (x.empty()) return 0.0;
  return kernels::dot(x.data(), x.data(), x.size()) / static_cast<double>(x.size());
}

std::vector<float> gaussian_noise_at_snr(std::span<const float> signal, double snr_db, Rng& rng) {
  const double ps = signal_power(signal);
  if (!(ps > 0.0)) throw DegenerateInputError("cannot set an SNR against a silent signal");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> raw(signal.size());
  double pr = 0.0;
  for (auto& v : raw) {
    v = normal(rng);
    pr += v * v;
  }
  pr /= static_cast<double>(raw.size());
  const double target = ps / std::pow(10.0, snr_db / 10.0);
  const double k = pr > 0.0 ? std::sqrt(target / pr) : 0.0;
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(k * raw[i]);
  return out;
}

std::size_t draw_delay_samples(const EchoParams& p, int sample_rate, Rng& rng) {
  p.validate();
  const auto lo = static_cast<std::uint64_t>(std::llround(p.delay_min_ms * sample_rate / 1000.0));
  const auto hi = static_cast<std::uint64_t>(std::llround(p.delay_max_ms * sample_rate / 1000.0));
  std::uniform_int_distribution<std::uint64_t> pick(lo, hi);
  return static_cast<std::size_t>(pick(rng));
}

EchoResult simulate_echo(const AudioClip& clean, const EchoParams& p, Rng& rng) {
  check_clip(clean, "clean clip");
  const std::size_t n = clean.samples.size();
  EchoResult r;
  r.delay_samples = draw_delay_samples(p, clean.sample_rate, rng);
  if (r.delay_samples >= n) {
    throw LengthError("echo delay of " + std::to_string(r.delay_samples) +
                      " samples is not shorter than the clip (" + std::to_string(n) + ")");
  }
  r.sent_noise = gaussian_noise_at_snr(clean.samples, p.sent_snr_db, rng);
  r.received_noise = gaussian_noise_at_snr(clean.samples, p.received_snr_db, rng);

  r.noisy.sample_rate = clean.sample_rate;
  r.noisy.samples.resize(n);
  const std::size_t d = r.delay_samples;
  float peak = 0.0f;
  for (std::size_t t = 0; t < n; ++t) {
    float v = clean.samples[t] + r.sent_noise[t];
    if (t >= d) v += clean.samples[t - d] + r.received_noise[t - d];
    r.noisy.samples[t] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 1.0f) {
    const float k = 0.9f / peak;
    for (auto& v : r.noisy.samples) v *= k;
    r.normalized = true;
  }
  return r;
}

MixResult mix_additive_noise(const AudioClip& clean, const AudioClip& noise, double snr_db, Rng& rng) {
  check_clip(clean, "clean clip");
  check_clip(noise, "noise clip");
  if (!(signal_power(clean.samples) > 0.0)) throw DegenerateInputError("clean clip is silent");
  if (!(signal_power(noise.samples) > 0.0)) throw DegenerateInputError("noise clip is silent");
  const std::size_t n = clean.samples.size(), m = noise.samples.size();
  MixResult r;
  r.snr_db = snr_db;
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  r.offset = pick(rng);
  std::vector<float> seg(n);
  for (std::size_t t = 0; t < n; ++t) seg[t] = noise.samples[(r.offset + t) % m];
  const double pseg = signal_power(seg);
  if (!(pseg > 0.0)) throw DegenerateInputError("selected noise segment is silent");
  r.alpha = std::sqrt(signal_power(clean.samples) / (pseg * std::pow(10.0, snr_db / 10.0)));
  r.noisy.sample_rate = clean.sample_rate;
  r.noisy.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    r.noisy.samples[t] = clean.samples[t] + static_cast<float>(r.alpha * seg[t]);
  return r;
}

Manifest synth_corpus(const std::vector<AudioClip>& sources, const std::filesystem::path& out_dir,
                      const SynthOptions& opts) {
  if (sources.empty()) throw ConfigError("synth_corpus: no source clips");
  if (opts.mode == SynthMode::kAdditive && opts.mix.snr_db.empty()) {
    throw ConfigError("synth_corpus: additive mode needs at least one SNR level");
  }
  opts.echo.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  }

  Manifest manifest;
  manifest.directory = out_dir;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    ManifestRow row;
    row.index = i;
    row.mode = opts.mode;
    row.seed = opts.seed + i;
    row.clean_path = pair_name("clean", i);
    row.noisy_path = pair_name("noisy", i);
    Rng rng(row.seed);
    const AudioClip clean = fit_length(to_rate(sources[i], opts.sample_rate), opts.clip_seconds);
    AudioClip noisy;
    if (opts.mode == SynthMode::kEcho) {
      auto r = simulate_echo(clean, opts.echo, rng);
      noisy = std::move(r.noisy);
      row.delay_samples = r.delay_samples;
      row.snr_db = opts.echo.received_snr_db;
      row.normalized = r.normalized;
    } else {
      row.snr_db = opts.mix.snr_db[i % opts.mix.snr_db.size()];
      AudioClip noise;
      if (opts.noise_sources.empty()) {
        std::normal_distribution<double> normal(0.0, 1.0);
        noise.sample_rate = opts.sample_rate;
        noise.samples.resize(clean.samples.size());
        for (auto& v : noise.samples) v = static_cast<float>(normal(rng));
      } else {
        noise = to_rate(opts.noise_sources[i % opts.noise_sources.size()], opts.sample_rate);
      }
      noisy = mix_additive_noise(clean, noise, row.snr_db, rng).noisy;
      float peak = 0.0f;
      for (float v : noisy.samples) peak = std::max(peak, std::abs(v));
      if (peak > 1.0f) {
        for (auto& v : noisy.samples) v *= 0.9f / peak;
        row.normalized = true;
      }
    }
    write_wav(clean, out_dir / row.clean_path);
    write_wav(noisy, out_dir / row.noisy_path);
    manifest.rows.push_back(row);
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kManifestHeader << '\n';
  for (const auto& r : m.rows) {
    out << r.index << ',' << r.clean_path << ',' << r.noisy_path << ','
        << (r.mode == SynthMode::kEcho ? "echo" : "additive") << ',' << r.delay_samples << ','
        << r.snr_db << ',' << r.seed << ',' << (r.normalized ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.directory = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw FormatError(path.string() + ": unexpected manifest header");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 8 fields");
    }
    try {
      ManifestRow r;
      r.index = std::stoul(f[0]);
      r.clean_path = f[1];
      r.noisy_path = f[2];
      if (f[3] == "echo") r.mode = SynthMode::kEcho;
      else if (f[3] == "additive") r.mode = SynthMode::kAdditive;
      else throw FormatError("mode '" + f[3] + "'");
      r.delay_samples = std::stoul(f[4]);
      r.snr_db = std::stod(f[5]);
      r.seed = std::stoull(f[6]);
      r.normalized = f[7] == "1";
      m.rows.push_back(r);
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad field: " + e.what());
    }
  }
  return m;
}

AudioClip synth_voiced_clip(double seconds, int sample_rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n, 0.0);
  const double fs = sample_rate;
  const double nyq = fs / 2.0;

  // Syllable-like voiced segments separated by short dips.
  std::size_t start = static_cast<std::size_t>(0.02 * fs);
  while (start < n) {
    const auto len = static_cast<std::size_t>((0.12 + 0.2 * u(rng)) * fs);
    const double f0a = 100.0 + 120.0 * u(rng);
    const double f0b = f0a * (0.8 + 0.4 * u(rng));
    const double formants[3] = {350.0 + 500.0 * u(rng), 900.0 + 1300.0 * u(rng), 2300.0 + 800.0 * u(rng)};
    const double bw[3] = {120.0, 180.0, 260.0};
    const double level = 0.6 + 0.4 * u(rng);
    double phase = 0.0;
    for (std::size_t t = 0; t < len && start + t < n; ++t) {
      const double pos = static_cast<double>(t) / static_cast<double>(len);
      const double f0 = f0a + (f0b - f0a) * pos;
      phase += 2.0 * std::numbers::pi * f0 / fs;
      const double env = level * std::sin(std::numbers::pi * pos);
      double v = 0.0;
      for (int h = 1; h * f0 < nyq * 0.95; ++h) {
        const double fh = h * f0;
        double gain = 0.02;
        for (int k = 0; k < 3; ++k) gain += std::exp(-0.5 * std::pow((fh - formants[k]) / bw[k], 2.0)) / (k + 1);
        v += gain * std::sin(h * phase) / std::sqrt(static_cast<double>(h));
      }
      x[start + t] += env * v;
    }
    // Occasional fricative burst after the vowel.
    if (u(rng) < 0.4) {
      const auto flen = static_cast<std::size_t>(0.05 * fs);
      double prev = 0.0;
      for (std::size_t t = 0; t < flen && start + len + t < n; ++t) {
        const double w = normal(rng);
        const double hp = w - prev;
        prev = w;
        x[start + len + t] += 0.08 * hp * std::sin(std::numbers::pi * t / flen);
      }
    }
    start += len + static_cast<std::size_t>((0.03 + 0.06 * u(rng)) * fs);
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  const double k = peak > 0.0 ? 0.3 / peak : 0.0;
  for (std::size_t t = 0; t < n; ++t) clip.samples[t] = static_cast<float>(k * x[t] + 1e-3 * normal(rng));
  return clip;
}

}  // namespace rose
