#pragma once

// Paired clean/noisy corpus synthesis.
//
// The echo channel models a controller position that sums the outgoing
// utterance with its radio-returned copy: both carry their own Gaussian noise
// floor and the returned copy lags by a random 10-200 ms.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rose/audio_io.hpp"

namespace rose {

using Rng = std::mt19937_64;

struct EchoParams {
  double delay_min_ms = 10.0;
  double delay_max_ms = 200.0;
  double sent_snr_db = 30.0;
  double received_snr_db = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MixParams {
  std::vector<double> snr_db = {-3.0, 0.0, 3.0, 6.0};
  std::uint64_t seed = 0;
};

struct EchoResult {
  AudioClip noisy;
  std::size_t delay_samples = 0;
  bool normalized = false;
  // Realized noise floors added to the sent and received copies (before the
  // shift and any normalization).
  std::vector<float> sent_noise;
  std::vector<float> received_noise;
};

double signal_power(std::span<const float> x);

// Zero-mean Gaussian noise scaled so its sample power sits exactly snr_db below
// the signal power. Throws DegenerateInputError on a silent signal.
std::vector<float> gaussian_noise_at_snr(std::span<const float> signal, double snr_db, Rng& rng);

// Uniform integer delay in samples over the configured millisecond range.
std::size_t draw_delay_samples(const EchoParams& p, int sample_rate, Rng& rng);

// noisy[t] = sent[t] + received[t - d]; truncated to the clean length and
// rescaled to a 0.9 peak when the sum exceeds 1.0.
EchoResult simulate_echo(const AudioClip& clean, const EchoParams& p, Rng& rng);

struct MixResult {
  AudioClip noisy;
  double snr_db = 0.0;
  double alpha = 0.0;
  std::size_t offset = 0;
};

// clean + alpha * noise segment (looping the noise source from a random start).
MixResult mix_additive_noise(const AudioClip& clean, const AudioClip& noise, double snr_db, Rng& rng);

enum class SynthMode { kEcho, kAdditive };

struct ManifestRow {
  std::size_t index = 0;
  std::string clean_path;
  std::string noisy_path;
  SynthMode mode = SynthMode::kEcho;
  std::size_t delay_samples = 0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  bool normalized = false;
};

struct Manifest {
  std::filesystem::path directory;  // paths in rows are relative to this
  std::vector<ManifestRow> rows;

  std::filesystem::path clean_file(std::size_t i) const { return directory / rows[i].clean_path; }
  std::filesystem::path noisy_file(std::size_t i) const { return directory / rows[i].noisy_path; }
};

inline constexpr const char* kManifestHeader =
    "index,clean_path,noisy_path,mode,delay_samples,snr_db,seed,normalized";

struct SynthOptions {
  SynthMode mode = SynthMode::kEcho;
  EchoParams echo;
  MixParams mix;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double clip_seconds = 4.0;
  // Additive-mode noise source; generated white noise when empty.
  std::vector<AudioClip> noise_sources;
};

// Writes clean_XXXX.wav / noisy_XXXX.wav pairs and manifest.csv into out_dir.
// Pair i uses its own generator seeded with seed + i.
Manifest synth_corpus(const std::vector<AudioClip>& sources, const std::filesystem::path& out_dir,
                      const SynthOptions& opts);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// Harmonic, formant-shaped test utterance: a few voiced segments with gliding
// pitch over a faint broadband floor. Deterministic in rng.
AudioClip synth_voiced_clip(double seconds, int sample_rate, Rng& rng);

}  // namespace rose
