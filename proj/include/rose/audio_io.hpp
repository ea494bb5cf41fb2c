#pragma once

#include <filesystem>
#include <vector>

namespace rose {

// Mono waveform; samples nominally in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// RIFF/WAVE, PCM 16-bit mono. Chunks other than "fmt " and "data" are skipped.
// Throws FormatError naming the offending field.
AudioClip read_wav(const std::filesystem::path& path);

// PCM 16-bit mono little-endian; samples are clamped to [-1, 1] and quantized
// as round-half-away-from-zero of s * 32768, saturating at 32767.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

// Encodes into an in-memory WAV image (used by write_wav and by tests).
std::vector<unsigned char> encode_wav(const AudioClip& clip);
AudioClip decode_wav(const std::vector<unsigned char>& bytes);

// Linear interpolation onto the target grid; output length is
// round(n * target / source).
AudioClip resample_linear(const AudioClip& clip, int target_rate);

// Truncates or zero-pads at the tail to round(seconds * sample_rate) samples.
AudioClip fit_length(const AudioClip& clip, double seconds);

}  // namespace rose
