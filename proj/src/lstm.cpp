#include <cmath>
#include <string>

#include "kernels.hpp"
#include "rose/tensor.hpp"

namespace rose {
namespace {

template <typename T>
T sig(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  T e = std::exp(v);
  return e / (T(1) + e);
}

struct LstmDims {
  std::size_t len, din, hidden;
};

}  // namespace

template <typename T>
Tensor<T> lstm_direction(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                         const Tensor<T>& bias, bool reverse) {
  if (x.rank() != 2 || w_ih.rank() != 2 || w_hh.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("lstm_direction expects x: L x Din, w_ih: 4H x Din, w_hh: 4H x H, bias: 4H");
  }
  const std::size_t hidden = w_hh.dim(1);
  const std::size_t g4 = 4 * hidden;
  const LstmDims d{x.dim(0), x.dim(1), hidden};
  if (w_ih.dim(0) != g4 || w_hh.dim(0) != g4 || bias.dim(0) != g4 || w_ih.dim(1) != d.din) {
    throw DimensionError("lstm_direction: inconsistent shapes x" + shape_str(x.shape()) + " w_ih" +
                         shape_str(w_ih.shape()) + " w_hh" + shape_str(w_hh.shape()) + " b" +
                         shape_str(bias.shape()));
  }

  // Transposed weights turn every matrix-vector product into contiguous axpys.
  std::vector<T> wih_t(d.din * g4), whh_t(hidden * g4);
  {
    auto a = w_ih.data();
    for (std::size_t r = 0; r < g4; ++r)
      for (std::size_t c = 0; c < d.din; ++c) wih_t[c * g4 + r] = a[r * d.din + c];
    auto h = w_hh.data();
    for (std::size_t r = 0; r < g4; ++r)
      for (std::size_t c = 0; c < hidden; ++c) whh_t[c * g4 + r] = h[r * hidden + c];
  }

  auto gates = std::make_shared<std::vector<T>>(d.len * g4);
  auto cells = std::make_shared<std::vector<T>>(d.len * hidden);
  auto tanh_cells = std::make_shared<std::vector<T>>(d.len * hidden);
  std::vector<T> out(d.len * hidden);
  auto xs = x.data();
  auto bs = bias.data();
  std::vector<T> z(g4);
  std::vector<T> h_prev(hidden, T(0)), c_prev(hidden, T(0));

  for (std::size_t step = 0; step < d.len; ++step) {
    const std::size_t t = reverse ? d.len - 1 - step : step;
    std::copy(bs.begin(), bs.end(), z.begin());
    for (std::size_t c = 0; c < d.din; ++c) kernels::axpy(xs[t * d.din + c], wih_t.data() + c * g4, z.data(), g4);
    for (std::size_t c = 0; c < hidden; ++c) kernels::axpy(h_prev[c], whh_t.data() + c * g4, z.data(), g4);
    T* gt = gates->data() + t * g4;
    for (std::size_t j = 0; j < hidden; ++j) {
      const T ig = sig(z[j]);
      const T fg = sig(z[hidden + j]);
      const T gg = std::tanh(z[2 * hidden + j]);
      const T og = sig(z[3 * hidden + j]);
      gt[j] = ig;
      gt[hidden + j] = fg;
      gt[2 * hidden + j] = gg;
      gt[3 * hidden + j] = og;
      const T cv = fg * c_prev[j] + ig * gg;
      const T tc = std::tanh(cv);
      (*cells)[t * hidden + j] = cv;
      (*tanh_cells)[t * hidden + j] = tc;
      out[t * hidden + j] = og * tc;
    }
    std::copy_n(cells->data() + t * hidden, hidden, c_prev.begin());
    std::copy_n(out.data() + t * hidden, hidden, h_prev.begin());
  }

  auto hs = std::make_shared<std::vector<T>>(out);
  return make_op_result<T>(
      Shape{d.len, hidden}, std::move(out), {x, w_ih, w_hh, bias},
      [x, w_ih, w_hh, bias, reverse, d, gates, cells, tanh_cells, hs](std::span<const T> g) {
        const std::size_t hidden = d.hidden, g4 = 4 * d.hidden;
        auto gx = grad_sink(x);
        auto gwih = grad_sink(w_ih);
        auto gwhh = grad_sink(w_hh);
        auto gb = grad_sink(bias);
        auto xs = x.data();
        auto wih = w_ih.data();
        auto whh = w_hh.data();
        std::vector<T> dh_next(hidden, T(0)), dc_next(hidden, T(0)), dz(g4);
        const std::vector<T> zeros(hidden, T(0));
        for (std::size_t step = d.len; step-- > 0;) {
          const std::size_t t = reverse ? d.len - 1 - step : step;
          const bool first = step == 0;
          const std::size_t tp = reverse ? t + 1 : t - 1;  // previous step in recurrence order
          const T* c_prev = first ? zeros.data() : cells->data() + tp * hidden;
          const T* h_prev = first ? zeros.data() : hs->data() + tp * hidden;
          const T* gt = gates->data() + t * g4;
          const T* tc = tanh_cells->data() + t * hidden;
          for (std::size_t j = 0; j < hidden; ++j) {
            const T ig = gt[j], fg = gt[hidden + j], gg = gt[2 * hidden + j], og = gt[3 * hidden + j];
            const T dh = g[t * hidden + j] + dh_next[j];
            const T dc = dh * og * (T(1) - tc[j] * tc[j]) + dc_next[j];
            dz[j] = dc * gg * ig * (T(1) - ig);
            dz[hidden + j] = dc * c_prev[j] * fg * (T(1) - fg);
            dz[2 * hidden + j] = dc * ig * (T(1) - gg * gg);
            dz[3 * hidden + j] = dh * tc[j] * og * (T(1) - og);
            dc_next[j] = dc * fg;
          }
          std::fill(dh_next.begin(), dh_next.end(), T(0));
          for (std::size_t r = 0; r < g4; ++r) {
            const T dr = dz[r];
            if (dr == T(0)) continue;
            kernels::axpy(dr, whh.data() + r * hidden, dh_next.data(), hidden);
            if (!gwhh.empty() && !first) kernels::axpy(dr, h_prev, gwhh.data() + r * hidden, hidden);
            if (!gwih.empty()) kernels::axpy(dr, xs.data() + t * d.din, gwih.data() + r * d.din, d.din);
            if (!gx.empty()) kernels::axpy(dr, wih.data() + r * d.din, gx.data() + t * d.din, d.din);
            if (!gb.empty()) gb[r] += dr;
          }
        }
      });
}

template Tensor<float> lstm_direction(const Tensor<float>&, const Tensor<float>&,
                                      const Tensor<float>&, const Tensor<float>&, bool);
template Tensor<double> lstm_direction(const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, const Tensor<double>&, bool);

}  // namespace rose
