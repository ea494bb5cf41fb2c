#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "rose/echo_sim.hpp"
#include "rose/error.hpp"
#include "rose/metrics.hpp"

using namespace rose;
using rose::testing::random_floats;

namespace {

std::vector<float> voiced(std::uint64_t seed, double seconds = 1.0) {
  Rng rng(seed);
  return synth_voiced_clip(seconds, 16000, rng).samples;
}

std::vector<float> add_noise(const std::vector<float>& s, double snr_db, std::uint64_t seed) {
  Rng rng(seed);
  const auto n = gaussian_noise_at_snr(s, snr_db, rng);
  std::vector<float> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] + n[i];
  return out;
}

}  // namespace

TEST_CASE("si-sdr matches the projection formula") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = random_floats(2000, rng, 0.5);
    const auto e = random_floats(2000, rng, 0.5);
    double ss = 0, se = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      ss += double(s[i]) * s[i];
      se += double(s[i]) * e[i];
    }
    double pt = 0, pr = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double t = se / ss * s[i];
      pt += t * t;
      pr += (e[i] - t) * (e[i] - t);
    }
    CHECK(metrics::si_sdr(s, e) == doctest::Approx(10.0 * std::log10(pt / pr)).epsilon(1e-9));
  }
}

TEST_CASE("si-sdr is scale invariant and capped") {
  std::mt19937_64 rng(2);
  const auto s = random_floats(1000, rng);
  auto half = s;
  for (auto& v : half) v *= 0.5f;
  CHECK(metrics::si_sdr(s, s) == metrics::kSiSdrCapDb);
  CHECK(metrics::si_sdr(s, half) == metrics::kSiSdrCapDb);
  const auto e = add_noise(s, 20.0, 3);
  auto e3 = e;
  for (auto& v : e3) v *= 3.0f;
  CHECK(metrics::si_sdr(s, e3) == doctest::Approx(metrics::si_sdr(s, e)).epsilon(1e-5));
  CHECK(metrics::si_sdr(s, e) == doctest::Approx(20.0).epsilon(0.02));
  CHECK(metrics::si_sdr(s, std::vector<float>(1000, 0.0f)) == -metrics::kSiSdrCapDb);
  CHECK_THROWS_AS(metrics::si_sdr(std::vector<float>(1000, 0.0f), s), DegenerateInputError);
  CHECK_THROWS_AS(metrics::si_sdr(s, std::vector<float>(999, 0.0f)), DimensionError);
}

TEST_CASE("segmental snr against a loop oracle") {
  std::mt19937_64 rng(4);
  const auto s = random_floats(4000, rng, 0.3);
  auto e = add_noise(s, 5.0, 5);
  for (std::size_t i = 1000; i < 1600; ++i) e[i] = s[i];  // exact frames clamp at 35
  double total = 0;
  int count = 0;
  for (std::size_t st = 0; st + 256 <= s.size(); st += 128, ++count) {
    double a = 0, b = 0;
    for (std::size_t i = st; i < st + 256; ++i) {
      a += double(s[i]) * s[i];
      b += (double(s[i]) - e[i]) * (double(s[i]) - e[i]);
    }
    total += b == 0 ? 35.0 : std::clamp(10 * std::log10(a / b), -10.0, 35.0);
  }
  CHECK(metrics::segmental_snr(s, e) == doctest::Approx(total / count).epsilon(1e-9));
  CHECK(metrics::segmental_snr(s, s) == 35.0);
  CHECK(metrics::segmental_snr(s, std::vector<float>(4000, 0.0f)) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(metrics::segmental_snr(std::vector<float>(100), std::vector<float>(100)), LengthError);
}

TEST_CASE("log spectral distance") {
  const dsp::StftConfig cfg;
  const auto s = voiced(7);
  const auto e = add_noise(s, 10.0, 8);
  CHECK(metrics::log_spectral_distance(s, s, cfg) == 0.0);
  CHECK(metrics::log_spectral_distance(s, e, cfg) == doctest::Approx(metrics::log_spectral_distance(e, s, cfg)));
  auto doubled = s;
  for (auto& v : doubled) v *= 2.0f;
  // Every bin above the floor moves by 20 log10 2 dB.
  CHECK(metrics::log_spectral_distance(s, doubled, cfg) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-3));
}

TEST_CASE("stoi of identical signals is one") {
  const auto s = voiced(11);
  CHECK(metrics::stoi(s, s, 16000) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("stoi ignores polarity") {
  // The measure works on short-time magnitudes, so a sign flip is invisible.
  const auto s = voiced(12);
  auto neg = s;
  for (auto& v : neg) v = -v;
  CHECK(metrics::stoi(s, neg, 16000) == doctest::Approx(metrics::stoi(s, s, 16000)).epsilon(1e-6));
}

TEST_CASE("stoi grows with snr") {
  const auto s = voiced(13, 2.0);
  double prev = -1.0;
  for (double snr : {-10.0, 0.0, 10.0, 30.0}) {
    const double v = metrics::stoi(s, add_noise(s, snr, 14), 16000);
    CAPTURE(snr);
    CHECK(v > prev);
    prev = v;
  }
  CHECK(prev > 0.9);
}

TEST_CASE("stoi needs enough speech frames") {
  const auto s = voiced(15, 0.2);
  CHECK_THROWS_AS(metrics::stoi(s, s, 16000), LengthError);
}

TEST_CASE("sinc resampler") {
  std::vector<float> tone(16000);
  for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = float(std::sin(2 * M_PI * 440.0 * i / 16000.0));
  const auto r = metrics::resample_sinc(tone, 16000, 10000);
  CHECK(r.size() == 10000);
  double err = 0;
  for (std::size_t i = 200; i + 200 < r.size(); ++i) {
    err = std::max(err, std::abs(r[i] - std::sin(2 * M_PI * 440.0 * i / 10000.0)));
  }
  CHECK(err < 1e-3);
  CHECK(metrics::resample_sinc(tone, 16000, 16000) == tone);
  CHECK_THROWS_AS(metrics::resample_sinc(tone, 0, 16000), ConfigError);
}

TEST_CASE("report csv") {
  metrics::MetricReport rep;
  rep.clips.push_back({"a", 10.0, 5.0, 2.0, 0.8});
  rep.clips.push_back({"b", 0.0, -5.0, 4.0, 1.2});
  const auto m = rep.mean();
  CHECK(m.si_sdr_db == 5.0);
  CHECK(m.seg_snr_db == 0.0);
  CHECK(m.lsd == 3.0);
  CHECK(m.stoi == doctest::Approx(0.9));
  std::ostringstream os;
  rep.write_csv(os);
  CHECK(os.str() == "clip,si_sdr_db,seg_snr_db,lsd,stoi\na,10,5,2,0.8\nb,0,-5,4,1\nMEAN,5,0,3,0.9\n");
}

TEST_CASE("evaluate_pair fills every field") {
  const auto s = voiced(21);
  const auto e = add_noise(s, 10.0, 22);
  const auto m = metrics::evaluate_pair("x", s, e, 16000, dsp::StftConfig{});
  CHECK(m.clip == "x");
  CHECK(m.si_sdr_db == doctest::Approx(10.0).epsilon(0.05));
  CHECK(m.lsd > 0.0);
  CHECK(m.stoi > 0.5);
  CHECK(m.stoi < 1.0);
}
