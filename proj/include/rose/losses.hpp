#pragma once

// Training objective: waveform L1 + log-STFT magnitude (enhancement terms) and
// spectral convergence on the spectrogram and on MFCCs (recognition terms).
//
//   total = lambda_se * (mae + mag) + lambda_asr * (spec + mfcc)

#include "rose/dsp.hpp"
#include "rose/tensor.hpp"

namespace rose {

struct LossConfig {
  double lambda_se = 1.0;
  double lambda_asr = 1.0;
  dsp::StftConfig stft;
  double eps_denominator = 1e-8;

  void validate() const;
};

enum class ScKind { kSpectrogram, kMfcc };

struct LossBreakdown {
  double mae = 0.0;
  double mag = 0.0;
  double spec = 0.0;
  double mfcc = 0.0;
  double se_total = 0.0;
  double asr_total = 0.0;
  double total = 0.0;
  // Set when a reference feature had (near) zero norm and the SC terms rest on eps.
  bool degenerate_reference = false;
};

template <typename T>
struct LossTerms {
  Tensor<T> mae, mag, spec, mfcc, total;
  bool degenerate_reference = false;

  LossBreakdown breakdown(const LossConfig& cfg) const;
};

template <typename T>
Tensor<T> mae_loss(const Tensor<T>& clean, const Tensor<T>& estimate);

// ||log|S(s)| - log|S(s~)|||_F / sqrt(#entries)
template <typename T>
Tensor<T> stft_mag_loss(const Tensor<T>& clean, const Tensor<T>& estimate, const dsp::StftConfig& cfg);

// ||D(s) - D(s~)||_F / (||D(s)||_F + eps)
template <typename T>
Tensor<T> sc_loss(const Tensor<T>& clean, const Tensor<T>& estimate, ScKind kind,
                  const dsp::StftConfig& cfg, double eps = 1e-8);

template <typename T>
LossTerms<T> total_loss(const Tensor<T>& clean, const Tensor<T>& estimate, const LossConfig& cfg);

}  // namespace rose
