#include <algorithm>
#include <string>

#include "kernels.hpp"
#include "rose/tensor.hpp"

namespace rose {
namespace {

// Polyphase view of a C x L signal for stride S: phase p holds samples
// u*S + p, so strided taps become contiguous reads. Each phase has
// ceil(L / S) slots; slots past the end of the signal are zero.
template <typename T>
struct Phases {
  std::size_t channels = 0, stride = 1, len = 0;
  std::vector<T> buf;

  Phases(std::size_t c, std::size_t s, std::size_t l)
      : channels(c), stride(s), len((l + s - 1) / s), buf(c * s * ((l + s - 1) / s), T(0)) {}

  T* at(std::size_t c, std::size_t p) { return buf.data() + (c * stride + p) * len; }
  const T* at(std::size_t c, std::size_t p) const { return buf.data() + (c * stride + p) * len; }
};

template <typename T>
Phases<T> split_phases(std::span<const T> x, std::size_t c, std::size_t l, std::size_t s) {
  Phases<T> ph(c, s, l);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < l; ++t) ph.at(ch, t % s)[t / s] = x[ch * l + t];
  return ph;
}

template <typename T>
void merge_phases(const Phases<T>& ph, std::span<T> out, std::size_t c, std::size_t l, std::size_t s) {
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < l; ++t) out[ch * l + t] += ph.at(ch, t % s)[t / s];
}

void check_bias(const Shape& b, std::size_t cout, const char* op) {
  if (b.size() != 1 || b[0] != cout) {
    throw DimensionError(std::string(op) + ": bias shape " + shape_str(b) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride) {
  if (x.rank() != 2 || w.rank() != 3) {
    throw DimensionError("conv1d expects x: C x L and w: Cout x Cin x K, got " + shape_str(x.shape()) +
                         " and " + shape_str(w.shape()));
  }
  if (stride == 0) throw ConfigError("conv1d stride must be >= 1");
  const std::size_t cin = x.dim(0), lin = x.dim(1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw DimensionError("conv1d: input has " + std::to_string(cin) + " channels, kernel expects " +
                         std::to_string(w.dim(1)));
  }
  if (b.defined()) check_bias(b.shape(), cout, "conv1d");
  if (lin < k) {
    throw LengthError("conv1d: input length " + std::to_string(lin) + " shorter than kernel " +
                      std::to_string(k));
  }
  const std::size_t lout = (lin - k) / stride + 1;

  auto ph = std::make_shared<Phases<T>>(split_phases(x.data(), cin, lin, stride));
  auto ws = w.data();
  std::vector<T> out(cout * lout, T(0));
  for (std::size_t o = 0; o < cout; ++o) {
    T* row = out.data() + o * lout;
    if (b.defined()) std::fill_n(row, lout, b.data()[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t j = 0; j < k; ++j) {
        const T wv = ws[(o * cin + c) * k + j];
        const T* src = ph->at(c, j % stride) + j / stride;
        for (std::size_t t = 0; t < lout; ++t) row[t] += wv * src[t];
      }
    }
  }

  return make_op_result<T>(
      Shape{cout, lout}, std::move(out), {x, w, b},
      [x, w, b, ph, cin, lin, cout, k, stride, lout](std::span<const T> g) {
        auto ws = w.data();
        if (auto gb = grad_sink(b); !gb.empty()) {
          for (std::size_t o = 0; o < cout; ++o) {
            gb[o] += static_cast<T>(kernels::sum(g.data() + o * lout, lout));
          }
        }
        if (auto gw = grad_sink(w); !gw.empty()) {
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t j = 0; j < k; ++j) {
                const T* src = ph->at(c, j % stride) + j / stride;
                gw[(o * cin + c) * k + j] += static_cast<T>(kernels::dot(g.data() + o * lout, src, lout));
              }
        }
        if (auto gx = grad_sink(x); !gx.empty()) {
          Phases<T> gph(cin, stride, lin);
          for (std::size_t o = 0; o < cout; ++o) {
            const T* grow = g.data() + o * lout;
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t j = 0; j < k; ++j) {
                const T wv = ws[(o * cin + c) * k + j];
                T* dst = gph.at(c, j % stride) + j / stride;
                for (std::size_t t = 0; t < lout; ++t) dst[t] += wv * grow[t];
              }
          }
          merge_phases(gph, gx, cin, lin, stride);
        }
      });
}

template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::size_t stride) {
  if (x.rank() != 2 || w.rank() != 3) {
    throw DimensionError("conv_transpose1d expects x: C x L and w: Cin x Cout x K, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (stride == 0) throw ConfigError("conv_transpose1d stride must be >= 1");
  const std::size_t cin = x.dim(0), lin = x.dim(1);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cin) {
    throw DimensionError("conv_transpose1d: input has " + std::to_string(cin) +
                         " channels, kernel expects " + std::to_string(w.dim(0)));
  }
  if (b.defined()) check_bias(b.shape(), cout, "conv_transpose1d");
  if (lin == 0) throw LengthError("conv_transpose1d of an empty sequence");
  const std::size_t lout = (lin - 1) * stride + k;

  auto xs = x.data();
  auto ws = w.data();
  Phases<T> yph(cout, stride, lout);
  for (std::size_t c = 0; c < cin; ++c) {
    const T* src = xs.data() + c * lin;
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t j = 0; j < k; ++j) {
        const T wv = ws[(c * cout + o) * k + j];
        T* dst = yph.at(o, j % stride) + j / stride;
        for (std::size_t t = 0; t < lin; ++t) dst[t] += wv * src[t];
      }
  }
  std::vector<T> out(cout * lout, T(0));
  if (b.defined()) {
    for (std::size_t o = 0; o < cout; ++o) std::fill_n(out.data() + o * lout, lout, b.data()[o]);
  }
  merge_phases(yph, std::span<T>(out), cout, lout, stride);

  return make_op_result<T>(
      Shape{cout, lout}, std::move(out), {x, w, b},
      [x, w, b, cin, lin, cout, k, stride, lout](std::span<const T> g) {
        if (auto gb = grad_sink(b); !gb.empty()) {
          for (std::size_t o = 0; o < cout; ++o) {
            gb[o] += static_cast<T>(kernels::sum(g.data() + o * lout, lout));
          }
        }
        auto gw = grad_sink(w);
        auto gx = grad_sink(x);
        if (gw.empty() && gx.empty()) return;
        auto gph = split_phases(g, cout, lout, stride);
        auto xs = x.data();
        auto ws = w.data();
        for (std::size_t c = 0; c < cin; ++c) {
          const T* xrow = xs.data() + c * lin;
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t j = 0; j < k; ++j) {
              const T* gsrc = gph.at(o, j % stride) + j / stride;
              if (!gw.empty()) gw[(c * cout + o) * k + j] += static_cast<T>(kernels::dot(xrow, gsrc, lin));
              if (!gx.empty()) {
                const T wv = ws[(c * cout + o) * k + j];
                T* gxrow = gx.data() + c * lin;
                for (std::size_t t = 0; t < lin; ++t) gxrow[t] += wv * gsrc[t];
              }
            }
        }
      });
}

template Tensor<float> conv1d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              std::size_t);
template Tensor<double> conv1d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                               std::size_t);
template Tensor<float> conv_transpose1d(const Tensor<float>&, const Tensor<float>&,
                                        const Tensor<float>&, std::size_t);
template Tensor<double> conv_transpose1d(const Tensor<double>&, const Tensor<double>&,
                                         const Tensor<double>&, std::size_t);

}  // namespace rose
