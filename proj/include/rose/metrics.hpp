#pragma once

// Objective quality measures for clean/enhanced pairs.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rose/dsp.hpp"

namespace rose::metrics {

inline constexpr double kSiSdrCapDb = 100.0;

// Scale-invariant SDR in dB, clamped to [-100, 100].
double si_sdr(std::span<const float> ref, std::span<const float> est);

// Mean over frames of per-frame SNR, each clamped to [-10, 35] dB.
double segmental_snr(std::span<const float> ref, std::span<const float> est, std::size_t frame = 256,
                     std::size_t hop = 128);

// Mean over frames of the RMS (over bins) log-magnitude difference in dB.
double log_spectral_distance(std::span<const float> ref, std::span<const float> est,
                             const dsp::StftConfig& cfg);

// Short-time objective intelligibility. Works at 10 kHz internally; needs at
// least 30 analysis frames of speech-active signal.
double stoi(std::span<const float> ref, std::span<const float> est, int sample_rate);

// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
std::vector<float> resample_sinc(std::span<const float> x, int from_rate, int to_rate);

struct ClipMetrics {
  std::string clip;
  double si_sdr_db = 0.0;
  double seg_snr_db = 0.0;
  double lsd = 0.0;
  double stoi = 0.0;
};

ClipMetrics evaluate_pair(const std::string& name, std::span<const float> ref, std::span<const float> est,
                          int sample_rate, const dsp::StftConfig& cfg);

struct MetricReport {
  std::vector<ClipMetrics> clips;

  ClipMetrics mean() const;
  // Header, one row per clip, then MEAN. STOI is clamped to [0, 1] here.
  void write_csv(std::ostream& out) const;
};

}  // namespace rose::metrics
