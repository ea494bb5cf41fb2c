#include "rose/losses.hpp"

#include <cmath>

namespace rose {
namespace {

template <typename T>
void require_same_length(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.rank() != 1 || b.rank() != 1) throw DimensionError(std::string(what) + ": expects waveforms");
  if (a.numel() != b.numel()) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a.numel()) + " vs " +
                         std::to_string(b.numel()));
  }
}

template <typename T>
Tensor<T> features(const Tensor<T>& x, ScKind kind, const dsp::StftConfig& cfg) {
  return kind == ScKind::kSpectrogram ? dsp::stft_magnitude(x, cfg) : dsp::mfcc(x, cfg);
}

template <typename T>
double value(const Tensor<T>& t) {
  return static_cast<double>(t.item());
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda_se >= 0.0) || !(lambda_asr >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (lambda_se == 0.0 && lambda_asr == 0.0) throw ConfigError("loss weights cannot both be zero");
  if (!(eps_denominator > 0.0)) throw ConfigError("eps_denominator must be positive");
  stft.validate();
}

template <typename T>
LossBreakdown LossTerms<T>::breakdown(const LossConfig& cfg) const {
  LossBreakdown b;
  b.mae = value(mae);
  b.mag = value(mag);
  b.spec = value(spec);
  b.mfcc = value(mfcc);
  b.se_total = b.mae + b.mag;
  b.asr_total = b.spec + b.mfcc;
  b.total = cfg.lambda_se * b.se_total + cfg.lambda_asr * b.asr_total;
  b.degenerate_reference = degenerate_reference;
  return b;
}

template <typename T>
Tensor<T> mae_loss(const Tensor<T>& clean, const Tensor<T>& estimate) {
  require_same_length(clean, estimate, "mae_loss");
  return mean(abs(sub(estimate, clean)));
}

template <typename T>
Tensor<T> stft_mag_loss(const Tensor<T>& clean, const Tensor<T>& estimate, const dsp::StftConfig& cfg) {
  require_same_length(clean, estimate, "stft_mag_loss");
  const T floor = static_cast<T>(cfg.log_floor);
  const auto a = log_floor(dsp::stft_magnitude(clean, cfg), floor);
  const auto b = log_floor(dsp::stft_magnitude(estimate, cfg), floor);
  const auto d = norm(sub(a, b));
  return scale(d, static_cast<T>(1.0 / std::sqrt(static_cast<double>(a.numel()))));
}

template <typename T>
Tensor<T> sc_loss(const Tensor<T>& clean, const Tensor<T>& estimate, ScKind kind,
                  const dsp::StftConfig& cfg, double eps) {
  require_same_length(clean, estimate, "sc_loss");
  const auto ref = features(clean.detach(), kind, cfg);
  const auto est = features(estimate, kind, cfg);
  const double denom = value(norm(ref)) + eps;
  return scale(norm(sub(ref, est)), static_cast<T>(1.0 / denom));
}

template <typename T>
LossTerms<T> total_loss(const Tensor<T>& clean, const Tensor<T>& estimate, const LossConfig& cfg) {
  cfg.validate();
  require_same_length(clean, estimate, "total_loss");
  const auto ref = clean.detach();
  LossTerms<T> t;
  // A term with zero weight is still reported but kept off the tape.
  const auto se_in = cfg.lambda_se == 0.0 ? estimate.detach() : estimate;
  const auto asr_in = cfg.lambda_asr == 0.0 ? estimate.detach() : estimate;
  t.mae = mae_loss(ref, se_in);
  t.mag = stft_mag_loss(ref, se_in, cfg.stft);
  t.spec = sc_loss(ref, asr_in, ScKind::kSpectrogram, cfg.stft, cfg.eps_denominator);
  t.mfcc = sc_loss(ref, asr_in, ScKind::kMfcc, cfg.stft, cfg.eps_denominator);
  t.degenerate_reference = value(norm(dsp::stft_magnitude(ref, cfg.stft))) <= cfg.eps_denominator;
  const auto se = scale(add(t.mae, t.mag), static_cast<T>(cfg.lambda_se));
  const auto asr = scale(add(t.spec, t.mfcc), static_cast<T>(cfg.lambda_asr));
  if (cfg.lambda_asr == 0.0) t.total = se;
  else if (cfg.lambda_se == 0.0) t.total = asr;
  else t.total = add(se, asr);
  return t;
}

#define ROSE_INSTANTIATE_LOSSES(T)                                                                   \
  template struct LossTerms<T>;                                                                      \
  template Tensor<T> mae_loss(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> stft_mag_loss(const Tensor<T>&, const Tensor<T>&, const dsp::StftConfig&);      \
  template Tensor<T> sc_loss(const Tensor<T>&, const Tensor<T>&, ScKind, const dsp::StftConfig&,     \
                             double);                                                                \
  template LossTerms<T> total_loss(const Tensor<T>&, const Tensor<T>&, const LossConfig&);

ROSE_INSTANTIATE_LOSSES(float)
ROSE_INSTANTIATE_LOSSES(double)

}  // namespace rose
