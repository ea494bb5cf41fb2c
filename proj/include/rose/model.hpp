#pragma once

// Time-domain U-Net enhancer.
//
//   encoder level i : conv(K, S) -> relu -> 1x1 conv (C -> 2C) -> glu -> CSAtt
//   bottleneck      : bidirectional LSTM stack, 1x1 projection back to C
//   decoder level i : ABSF(E_i, D) -> 1x1 conv (C -> 2C) -> glu -> conv^T(K, S) -> relu
//
// The last decoder level emits one channel and has no relu. Inputs of any
// length are zero-padded at the tail to the nearest length for which every
// strided level divides exactly, and the output is trimmed back.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rose/tensor.hpp"

namespace rose {

struct ModelConfig {
  std::size_t depth = 5;
  std::size_t hidden = 48;
  std::size_t kernel = 8;
  std::size_t stride = 4;
  std::size_t growth = 2;
  std::size_t squeeze = 2;
  std::size_t lstm_layers = 2;
  std::size_t lstm_hidden = 0;  // 0: bottleneck channel count

  void validate() const;
  // Output channels of encoder level i (input channels of decoder level i).
  std::size_t channels(std::size_t level) const;
  // Channels entering encoder level i; 1 for the waveform.
  std::size_t input_channels(std::size_t level) const;
  std::size_t bottleneck_channels() const { return channels(depth - 1); }
  std::size_t effective_lstm_hidden() const {
    return lstm_hidden ? lstm_hidden : bottleneck_channels();
  }
  // Smallest length >= n on which the encoder/decoder lengths telescope exactly.
  std::size_t padded_length(std::size_t n) const;
};

// Named parameters in a fixed (lexicographic) order.
template <typename T>
class ModelWeights {
 public:
  void add(const std::string& name, Tensor<T> t);
  const Tensor<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, Tensor<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t parameter_count() const;
  // Fresh leaves with copied values; gradients are not shared.
  ModelWeights clone(bool requires_grad) const;
  template <typename U>
  ModelWeights<U> cast(bool requires_grad) const {
    ModelWeights<U> out;
    for (const auto& [name, t] : params_) {
      auto c = t.template cast<U>();
      c.set_requires_grad(requires_grad);
      out.add(name, c);
    }
    return out;
  }
  void zero_grad();

 private:
  std::map<std::string, Tensor<T>> params_;
};

// Parameter names and shapes implied by a configuration.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg);

// Uniform(+-1/sqrt(fan_in)) weights and biases; LSTM forget-gate biases are 1.
ModelWeights<float> init_weights(const ModelConfig& cfg, std::uint64_t seed);

// Attention masks captured during a forward pass.
template <typename T>
struct AttentionTrace {
  std::vector<Tensor<T>> channel_weights;   // W_C per encoder level, C x 1
  std::vector<Tensor<T>> sequence_weights;  // W_L per encoder level, 1 x L
  std::vector<Tensor<T>> skip_masks;        // A_i per decoder level, C x L
};

template <typename T>
Tensor<T> csatt_forward(const Tensor<T>& x, const std::string& prefix, std::size_t squeeze,
                        const ModelWeights<T>& w, AttentionTrace<T>* trace = nullptr);

template <typename T>
Tensor<T> absf_fuse(const Tensor<T>& skip, const Tensor<T>& dec, const std::string& prefix,
                    const ModelWeights<T>& w, AttentionTrace<T>* trace = nullptr);

template <typename T>
Tensor<T> encoder_block_forward(const Tensor<T>& x, std::size_t level, const ModelConfig& cfg,
                                const ModelWeights<T>& w, AttentionTrace<T>* trace = nullptr);

template <typename T>
Tensor<T> decoder_block_forward(const Tensor<T>& x, std::size_t level, const ModelConfig& cfg,
                                const ModelWeights<T>& w);

// x: L x Din (time-major). Returns L x 2*hidden, forward state first.
template <typename T>
Tensor<T> bilstm_forward(const Tensor<T>& x, const ModelWeights<T>& w, const std::string& prefix,
                         std::size_t layers);

// Waveform in, waveform of the same length out.
template <typename T>
Tensor<T> rose_forward(const Tensor<T>& x, const ModelConfig& cfg, const ModelWeights<T>& w,
                       AttentionTrace<T>* trace = nullptr);

// Inference without a tape.
std::vector<float> enhance(std::span<const float> x, const ModelConfig& cfg,
                           const ModelWeights<float>& w);

}  // namespace rose
