#pragma once

// Short-time Fourier features: magnitude, log-magnitude, mel energies, MFCC.
//
// Frames start at multiples of `hop` with no centre padding, so a signal of
// N >= window_len samples yields 1 + (N - window_len) / hop frames. Each frame
// is Hann-windowed (periodic), zero-padded to fft_bins, and transformed; bins
// 0..fft_bins/2 are kept.

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

#include "rose/tensor.hpp"

namespace rose::dsp {

struct StftConfig {
  std::size_t fft_bins = 512;
  std::size_t hop = 100;
  std::size_t window_len = 400;
  std::size_t mel_bands = 40;
  std::size_t mfcc_dim = 13;
  int sample_rate = 16000;
  double log_floor = 1e-7;

  void validate() const;
  std::size_t bins() const { return fft_bins / 2 + 1; }
  // Throws LengthError when n < window_len.
  std::size_t frame_count(std::size_t n) const;
};

enum class FeatureKind { kMagnitude, kLogMagnitude, kMel, kMfcc };

// frames x cols matrix, row-major.
struct SpectralFeatures {
  FeatureKind kind = FeatureKind::kMagnitude;
  std::size_t frames = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t frame, std::size_t col) const { return values[frame * cols + col]; }
};

// In-place forward DFT (e^{-2 pi i k n / N}). Radix-2 for powers of two,
// direct summation otherwise.
void fft(std::vector<std::complex<double>>& a);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

SpectralFeatures stft_magnitude(std::span<const float> x, const StftConfig& cfg);
// ln(max(m, log_floor)) entrywise; requires a magnitude matrix.
SpectralFeatures log_magnitude(const SpectralFeatures& m, double log_floor = 1e-7);
// Triangular filters on the 2595*log10(1 + f/700) scale, 0 Hz .. sample_rate/2,
// applied to power (magnitude squared).
SpectralFeatures mel_filterbank(const SpectralFeatures& m, const StftConfig& cfg);
SpectralFeatures mfcc(std::span<const float> x, const StftConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// mel_bands x bins weights.
std::vector<double> mel_filter_weights(const StftConfig& cfg);
// Centre frequency (Hz) of each mel filter.
std::vector<double> mel_centre_frequencies(const StftConfig& cfg);
// Orthonormal DCT-II basis, rows x cols = out_dim x in_dim.
std::vector<double> dct_basis(std::size_t out_dim, std::size_t in_dim);

// Differentiable counterparts used by the training losses.
template <typename T>
Tensor<T> stft_magnitude(const Tensor<T>& x, const StftConfig& cfg);
template <typename T>
Tensor<T> mfcc(const Tensor<T>& x, const StftConfig& cfg);

// Binary PGM: rows are bins (low frequencies at the bottom), columns are
// frames, grey level maps [-80, 0] dB relative to the loudest bin onto 0..255.
void write_spectrogram_pgm(std::span<const float> x, const StftConfig& cfg,
                           const std::filesystem::path& path);

}  // namespace rose::dsp
