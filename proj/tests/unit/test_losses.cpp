#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "rose/dsp.hpp"
#include "rose/losses.hpp"

using namespace rose;
using rose::testing::gradcheck;
using rose::testing::random_floats;

namespace {

Tensor<double> wave(const std::vector<float>& v) {
  return Tensor<double>(Shape{v.size()}, std::vector<double>(v.begin(), v.end()));
}

dsp::StftConfig short_window() {
  dsp::StftConfig c;
  c.fft_bins = 128;
  c.window_len = 100;
  c.hop = 50;
  c.mel_bands = 16;
  c.mfcc_dim = 13;
  return c;
}

double frobenius(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("mae examples") {
  const Tensor<double> s(Shape{2}, {0.0, 0.0});
  const Tensor<double> e(Shape{2}, {1.0, -1.0});
  CHECK(mae_loss(s, e).item() == doctest::Approx(1.0));
  CHECK(mae_loss(s, s).item() == 0.0);
  std::mt19937_64 rng(1);
  const auto a = wave(random_floats(300, rng)), b = wave(random_floats(300, rng));
  CHECK(mae_loss(a, b).item() == doctest::Approx(mae_loss(b, a).item()));
  CHECK_THROWS_AS(mae_loss(a, wave(random_floats(299, rng))), DimensionError);
}

TEST_CASE("log-magnitude loss of a doubled signal is ln 2") {
  std::mt19937_64 rng(2);
  const auto x = random_floats(4000, rng, 0.3);
  std::vector<float> x2(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x2[i] = 2.0f * x[i];
  const dsp::StftConfig cfg;
  CHECK(stft_mag_loss(wave(x), wave(x2), cfg).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(stft_mag_loss(wave(x), wave(x), cfg).item() == 0.0);
  std::vector<float> y = x;
  y[1234] += 0.1f;
  CHECK(stft_mag_loss(wave(x), wave(y), cfg).item() > 0.0);
}

TEST_CASE("spectral convergence") {
  std::mt19937_64 rng(3);
  const auto s = random_floats(3000, rng, 0.3);
  const auto e = random_floats(3000, rng, 0.3);
  const dsp::StftConfig cfg;
  const auto zero = wave(std::vector<float>(3000, 0.0f));
  CHECK(sc_loss(wave(s), zero, ScKind::kSpectrogram, cfg).item() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sc_loss(wave(s), wave(s), ScKind::kSpectrogram, cfg).item() == 0.0);
  CHECK(sc_loss(wave(s), wave(s), ScKind::kMfcc, cfg).item() == 0.0);

  // Frobenius-ratio oracle on the plain feature extractors.
  for (auto kind : {ScKind::kSpectrogram, ScKind::kMfcc}) {
    const auto a = kind == ScKind::kSpectrogram ? dsp::stft_magnitude(s, cfg) : dsp::mfcc(s, cfg);
    const auto b = kind == ScKind::kSpectrogram ? dsp::stft_magnitude(e, cfg) : dsp::mfcc(e, cfg);
    std::vector<double> diff(a.values.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.values[i] - b.values[i];
    const double oracle = frobenius(diff) / (frobenius(a.values) + 1e-8);
    CHECK(sc_loss(wave(s), wave(e), kind, cfg).item() == doctest::Approx(oracle).epsilon(1e-6));
  }

  std::vector<float> scaled(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) scaled[i] = 1.5f * s[i];
  CHECK(sc_loss(wave(s), wave(scaled), ScKind::kSpectrogram, cfg).item() > 0.0);
}

TEST_CASE("silent reference is guarded and flagged") {
  const auto zero = wave(std::vector<float>(1000, 0.0f));
  std::mt19937_64 rng(4);
  const auto e = wave(random_floats(1000, rng, 0.1));
  const auto v = sc_loss(zero, e, ScKind::kSpectrogram, dsp::StftConfig{}).item();
  CHECK(std::isfinite(v));
  CHECK(v > 1e3);
  const auto t = total_loss(zero, e, LossConfig{});
  CHECK(t.degenerate_reference);
}

TEST_CASE("total loss identities over random clips") {
  std::mt19937_64 rng(5);
  const LossConfig cfg;
  for (int i = 0; i < 20; ++i) {
    const auto s = wave(random_floats(2000, rng, 0.2));
    const auto b = total_loss(s, s, cfg).breakdown(cfg);
    CHECK(b.mae == 0.0);
    CHECK(b.mag == 0.0);
    CHECK(b.spec == 0.0);
    CHECK(b.mfcc == 0.0);
    CHECK(b.total == 0.0);
  }
  const auto s = wave(random_floats(2000, rng, 0.2));
  const auto e = wave(random_floats(2000, rng, 0.2));
  const auto b = total_loss(s, e, cfg).breakdown(cfg);
  CHECK(b.se_total == doctest::Approx(b.mae + b.mag));
  CHECK(b.asr_total == doctest::Approx(b.spec + b.mfcc));
  CHECK(b.total == doctest::Approx(b.mae + b.mag + b.spec + b.mfcc));
  for (double v : {b.mae, b.mag, b.spec, b.mfcc}) CHECK(v > 0.0);

  LossConfig se_only = cfg;
  se_only.lambda_asr = 0.0;
  const auto t = total_loss(s, e, se_only);
  CHECK(t.total.item() == doctest::Approx(b.se_total).epsilon(1e-12));
  CHECK(t.breakdown(se_only).spec == doctest::Approx(b.spec));

  LossConfig weighted = cfg;
  weighted.lambda_se = 0.5;
  weighted.lambda_asr = 2.0;
  CHECK(total_loss(s, e, weighted).total.item() == doctest::Approx(0.5 * b.se_total + 2.0 * b.asr_total));
}

TEST_CASE("loss config validation") {
  LossConfig c;
  c.lambda_se = c.lambda_asr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda_asr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("finite-difference: each loss term and the total") {
  LossConfig cfg;
  cfg.stft = short_window();
  std::mt19937_64 rng(6);
  const auto s = wave(random_floats(1000, rng, 0.3));
  const auto e = wave(random_floats(1000, rng, 0.3));
  using V = std::vector<Tensor<double>>;
  const std::vector<std::pair<const char*, rose::testing::ScalarFn>> cases = {
      {"mae", [&](const V& v) { return mae_loss(s, v[0]); }},
      {"mag", [&](const V& v) { return stft_mag_loss(s, v[0], cfg.stft); }},
      {"spec", [&](const V& v) { return sc_loss(s, v[0], ScKind::kSpectrogram, cfg.stft); }},
      {"mfcc", [&](const V& v) { return sc_loss(s, v[0], ScKind::kMfcc, cfg.stft); }},
      {"total", [&](const V& v) { return total_loss(s, v[0], cfg).total; }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    const auto r = gradcheck(fn, {e}, 1e-6, 1000);
    CHECK(r.rel_error < 1e-3);
  }
}
