#include "rose/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rose {
namespace {

std::string enc(std::size_t i) { return "enc" + std::to_string(i) + "."; }
std::string dec(std::size_t i) { return "dec" + std::to_string(i) + "."; }
std::string skip(std::size_t i) { return "absf" + std::to_string(i) + "."; }

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const ModelWeights<T>& w, const std::string& name) {
  return conv1d(x, w.at(name + ".w"), w.at(name + ".b"), 1);
}

}  // namespace

void ModelConfig::validate() const {
  if (depth == 0) throw ConfigError("depth must be >= 1");
  if (hidden == 0) throw ConfigError("hidden must be >= 1");
  if (stride == 0) throw ConfigError("stride must be >= 1");
  if (kernel < stride) throw ConfigError("kernel must be >= stride");
  if (growth == 0) throw ConfigError("growth must be >= 1");
  if (squeeze == 0) throw ConfigError("squeeze must be >= 1");
  if (lstm_layers == 0) throw ConfigError("lstm_layers must be >= 1");
  for (std::size_t i = 0; i < depth; ++i) {
    if (channels(i) % squeeze != 0) {
      throw ConfigError("channel count " + std::to_string(channels(i)) + " at level " +
                        std::to_string(i) + " is not divisible by squeeze " + std::to_string(squeeze));
    }
  }
}

std::size_t ModelConfig::channels(std::size_t level) const {
  std::size_t c = hidden;
  for (std::size_t i = 0; i < level; ++i) c *= growth;
  return c;
}

std::size_t ModelConfig::input_channels(std::size_t level) const {
  return level == 0 ? 1 : channels(level - 1);
}

std::size_t ModelConfig::padded_length(std::size_t n) const {
  std::size_t base = 1, span = 1;  // bottleneck length 1, and S^depth
  for (std::size_t i = 0; i < depth; ++i) {
    base = (base - 1) * stride + kernel;
    span *= stride;
  }
  if (n <= base) return base;
  return base + ((n - base + span - 1) / span) * span;
}

template <typename T>
void ModelWeights<T>::add(const std::string& name, Tensor<T> t) {
  if (!params_.emplace(name, std::move(t)).second) throw ConfigError("duplicate parameter " + name);
}

template <typename T>
const Tensor<T>& ModelWeights<T>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("missing parameter " + name);
  return it->second;
}

template <typename T>
std::size_t ModelWeights<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

template <typename T>
ModelWeights<T> ModelWeights<T>::clone(bool requires_grad) const {
  ModelWeights out;
  for (const auto& [name, t] : params_) {
    out.add(name, Tensor<T>(t.shape(), std::vector<T>(t.data().begin(), t.data().end()), requires_grad));
  }
  return out;
}

template <typename T>
void ModelWeights<T>::zero_grad() {
  for (auto& [_, t] : params_) const_cast<Tensor<T>&>(t).zero_grad();
}

template class ModelWeights<float>;
template class ModelWeights<double>;

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> out;
  auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k) {
    out.push_back({name + ".w", {cout, cin, k}});
    out.push_back({name + ".b", {cout}});
  };
  const std::size_t k = cfg.kernel;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t c = cfg.channels(i), cin = cfg.input_channels(i);
    conv(enc(i) + "conv", c, cin, k);
    conv(enc(i) + "pw", 2 * c, c, 1);
    conv(enc(i) + "csatt.squeeze", c / cfg.squeeze, c, 1);
    conv(enc(i) + "csatt.excite", c, c / cfg.squeeze, 1);
    conv(enc(i) + "csatt.seq", 1, c, 1);
  }
  const std::size_t cb = cfg.bottleneck_channels(), h = cfg.effective_lstm_hidden();
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
    const std::size_t din = l == 0 ? cb : 2 * h;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string p = "lstm.l" + std::to_string(l) + "." + dir + ".";
      out.push_back({p + "w_ih", {4 * h, din}});
      out.push_back({p + "w_hh", {4 * h, h}});
      out.push_back({p + "b", {4 * h}});
    }
  }
  conv("lstm.proj", cb, 2 * h, 1);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t c = cfg.channels(i), cdown = cfg.input_channels(i);
    conv(skip(i) + "enc", c, c, 1);
    conv(skip(i) + "dec", c, c, 1);
    conv(skip(i) + "mask", c, c, 1);
    conv(dec(i) + "pw", 2 * c, c, 1);
    out.push_back({dec(i) + "convtr.w", {c, cdown, k}});
    out.push_back({dec(i) + "convtr.b", {cdown}});
  }
  return out;
}

ModelWeights<float> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelWeights<float> w;
  const std::size_t h = cfg.effective_lstm_hidden();
  const auto layout = parameter_layout(cfg);
  // Bias bounds follow the matching weight tensor.
  std::map<std::string, double> bound;
  for (const auto& [name, shape] : layout) {
    const bool is_lstm = name.rfind("lstm.l", 0) == 0;
    const bool is_bias = name.size() >= 2 && name.substr(name.size() - 2) == ".b";
    const std::string stem = name.substr(0, name.rfind('.'));
    double b = 0.0;
    if (is_lstm) {
      if (name.ends_with("w_ih")) b = 1.0 / std::sqrt(static_cast<double>(shape[1]));
      else b = 1.0 / std::sqrt(static_cast<double>(h));
    } else if (is_bias) {
      b = bound.at(stem);
    } else {
      // conv: Cout x Cin x K; conv^T: Cin x Cout x K. Fan-in counts input taps.
      const bool transposed = name.ends_with("convtr.w");
      const std::size_t fan_in = (transposed ? shape[0] : shape[1]) * shape[2];
      b = 1.0 / std::sqrt(static_cast<double>(fan_in));
      bound[stem] = b;
    }
    std::uniform_real_distribution<double> dist(-b, b);
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<float>(dist(rng));
    if (is_lstm && name.ends_with(".b")) std::fill_n(v.begin() + h, h, 1.0f);
    w.add(name, Tensor<float>(shape, std::move(v), true));
  }
  return w;
}

template <typename T>
Tensor<T> csatt_forward(const Tensor<T>& x, const std::string& prefix, std::size_t squeeze,
                        const ModelWeights<T>& w, AttentionTrace<T>* trace) {
  if (x.rank() != 2) throw DimensionError("csatt expects C x L");
  if (squeeze == 0 || x.dim(0) % squeeze != 0) {
    throw ConfigError("csatt: " + std::to_string(x.dim(0)) + " channels not divisible by r=" +
                      std::to_string(squeeze));
  }
  const auto squeezed = relu(pointwise(global_avg_pool(x), w, prefix + "csatt.squeeze"));
  const auto channel_w = sigmoid(pointwise(squeezed, w, prefix + "csatt.excite"));
  const auto sequence_w = sigmoid(pointwise(x, w, prefix + "csatt.seq"));
  if (trace) {
    trace->channel_weights.push_back(channel_w);
    trace->sequence_weights.push_back(sequence_w);
  }
  return add(mul(x, channel_w), mul(x, sequence_w));
}

template <typename T>
Tensor<T> absf_fuse(const Tensor<T>& skip_in, const Tensor<T>& dec_in, const std::string& prefix,
                    const ModelWeights<T>& w, AttentionTrace<T>* trace) {
  if (skip_in.shape() != dec_in.shape()) {
    throw DimensionError("absf: encoder feature " + shape_str(skip_in.shape()) +
                         " vs decoder feature " + shape_str(dec_in.shape()));
  }
  const auto b = sigmoid(add(pointwise(skip_in, w, prefix + "enc"), pointwise(dec_in, w, prefix + "dec")));
  const auto a = sigmoid(pointwise(b, w, prefix + "mask"));
  if (trace) trace->skip_masks.push_back(a);
  return add(dec_in, mul(skip_in, a));
}

template <typename T>
Tensor<T> encoder_block_forward(const Tensor<T>& x, std::size_t level, const ModelConfig& cfg,
                                const ModelWeights<T>& w, AttentionTrace<T>* trace) {
  const std::string p = enc(level);
  auto h = relu(conv1d(x, w.at(p + "conv.w"), w.at(p + "conv.b"), cfg.stride));
  h = glu(pointwise(h, w, p + "pw"));
  return csatt_forward(h, p, cfg.squeeze, w, trace);
}

template <typename T>
Tensor<T> decoder_block_forward(const Tensor<T>& x, std::size_t level, const ModelConfig& cfg,
                                const ModelWeights<T>& w) {
  const std::string p = dec(level);
  if (x.rank() != 2 || x.dim(0) != cfg.channels(level)) {
    throw DimensionError("decoder level " + std::to_string(level) + " expects " +
                         std::to_string(cfg.channels(level)) + " channels, got " + shape_str(x.shape()));
  }
  auto h = glu(pointwise(x, w, p + "pw"));
  h = conv_transpose1d(h, w.at(p + "convtr.w"), w.at(p + "convtr.b"), cfg.stride);
  return level == 0 ? h : relu(h);
}

template <typename T>
Tensor<T> bilstm_forward(const Tensor<T>& x, const ModelWeights<T>& w, const std::string& prefix,
                         std::size_t layers) {
  Tensor<T> h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = prefix + "l" + std::to_string(l) + ".";
    const auto fwd = lstm_direction(h, w.at(p + "fwd.w_ih"), w.at(p + "fwd.w_hh"), w.at(p + "fwd.b"), false);
    const auto bwd = lstm_direction(h, w.at(p + "bwd.w_ih"), w.at(p + "bwd.w_hh"), w.at(p + "bwd.b"), true);
    h = concat<T>({fwd, bwd}, 1);
  }
  return h;
}

template <typename T>
Tensor<T> rose_forward(const Tensor<T>& x, const ModelConfig& cfg, const ModelWeights<T>& w,
                       AttentionTrace<T>* trace) {
  cfg.validate();
  if (x.rank() != 1 || x.numel() == 0) {
    throw DimensionError("rose_forward expects a non-empty waveform, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.numel();
  const std::size_t padded = cfg.padded_length(n);
  auto h = reshape(pad_last(x, padded), Shape{1, padded});

  std::vector<Tensor<T>> skips;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    h = encoder_block_forward(h, i, cfg, w, trace);
    skips.push_back(h);
  }

  const auto seq = bilstm_forward(transpose(h), w, "lstm.", cfg.lstm_layers);
  h = conv1d(transpose(seq), w.at("lstm.proj.w"), w.at("lstm.proj.b"), 1);

  for (std::size_t i = cfg.depth; i-- > 0;) {
    auto e = skips[i];
    const std::size_t len = std::min(e.dim(1), h.dim(1));
    if (e.dim(1) != len) e = slice_last(e, 0, len);
    if (h.dim(1) != len) h = slice_last(h, 0, len);
    h = absf_fuse(e, h, skip(i), w, trace);
    h = decoder_block_forward(h, i, cfg, w);
  }
  return slice_last(reshape(h, Shape{h.numel()}), 0, n);
}

std::vector<float> enhance(std::span<const float> x, const ModelConfig& cfg, const ModelWeights<float>& w) {
  const Tensor<float> in(Shape{x.size()}, std::vector<float>(x.begin(), x.end()));
  // Parameters that require grad would record a tape; use a frozen view.
  const auto frozen = w.clone(false);
  const auto out = rose_forward(in, cfg, frozen);
  return {out.data().begin(), out.data().end()};
}

#define ROSE_INSTANTIATE_MODEL(T)                                                               \
  template Tensor<T> csatt_forward(const Tensor<T>&, const std::string&, std::size_t,           \
                                   const ModelWeights<T>&, AttentionTrace<T>*);                 \
  template Tensor<T> absf_fuse(const Tensor<T>&, const Tensor<T>&, const std::string&,          \
                               const ModelWeights<T>&, AttentionTrace<T>*);                     \
  template Tensor<T> encoder_block_forward(const Tensor<T>&, std::size_t, const ModelConfig&,   \
                                           const ModelWeights<T>&, AttentionTrace<T>*);         \
  template Tensor<T> decoder_block_forward(const Tensor<T>&, std::size_t, const ModelConfig&,   \
                                           const ModelWeights<T>&);                             \
  template Tensor<T> bilstm_forward(const Tensor<T>&, const ModelWeights<T>&, const std::string&, \
                                    std::size_t);                                               \
  template Tensor<T> rose_forward(const Tensor<T>&, const ModelConfig&, const ModelWeights<T>&, \
                                  AttentionTrace<T>*);

ROSE_INSTANTIATE_MODEL(float)
ROSE_INSTANTIATE_MODEL(double)

}  // namespace rose
