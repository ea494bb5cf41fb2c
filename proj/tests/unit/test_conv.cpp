#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "rose/tensor.hpp"

using namespace rose;
using rose::testing::gradcheck;
using rose::testing::project;
using rose::testing::random_tensor;

namespace {

using TD = Tensor<double>;
using V = std::vector<TD>;

// Direct-sum definitions, independent of the polyphase kernels.
std::vector<double> conv_oracle(const TD& x, const TD& w, const TD& b, std::size_t s) {
  const std::size_t cin = x.dim(0), lin = x.dim(1), cout = w.dim(0), k = w.dim(2);
  const std::size_t lout = (lin - k) / s + 1;
  std::vector<double> y(cout * lout);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < lout; ++t) {
      double acc = b(o);
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < k; ++j) acc += w(o, c, j) * x(c, t * s + j);
      y[o * lout + t] = acc;
    }
  return y;
}

std::vector<double> convtr_oracle(const TD& x, const TD& w, const TD& b, std::size_t s) {
  const std::size_t cin = x.dim(0), lin = x.dim(1), cout = w.dim(1), k = w.dim(2);
  const std::size_t lout = (lin - 1) * s + k;
  std::vector<double> y(cout * lout);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < lout; ++t) y[o * lout + t] = b(o);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t t = 0; t < lin; ++t)
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t j = 0; j < k; ++j) y[o * lout + t * s + j] += w(c, o, j) * x(c, t);
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("conv1d output length follows floor((L-K)/S)+1") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 1024}, rng);
  auto w = random_tensor({48, 1, 8}, rng);
  auto b = random_tensor({48}, rng);
  CHECK(conv1d(x, w, b, 4).shape() == Shape{48, 255});
  auto xt = random_tensor({3, 255}, rng);
  CHECK(conv_transpose1d(xt, random_tensor({3, 2, 8}, rng), random_tensor({2}, rng), 4).shape() ==
        Shape{2, (255 - 1) * 4 + 8});
}

TEST_CASE("conv1d and conv_transpose1d match direct sums") {
  std::mt19937_64 rng(2);
  for (std::size_t s : {1u, 2u, 3u, 4u}) {
    for (std::size_t k : {s, s + 1, 2 * s + 3}) {
      CAPTURE(s);
      CAPTURE(k);
      auto x = random_tensor({3, 29}, rng);
      auto w = random_tensor({5, 3, k}, rng);
      auto b = random_tensor({5}, rng);
      const auto ref = conv_oracle(x, w, b, s);
      const auto y = conv1d(x, w, b, s);
      REQUIRE(y.numel() == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));

      auto xt = random_tensor({5, 11}, rng);
      auto wt = random_tensor({5, 3, k}, rng);
      auto bt = random_tensor({3}, rng);
      const auto reft = convtr_oracle(xt, wt, bt, s);
      const auto yt = conv_transpose1d(xt, wt, bt, s);
      REQUIRE(yt.numel() == reft.size());
      for (std::size_t i = 0; i < reft.size(); ++i) CHECK(yt.data()[i] == doctest::Approx(reft[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  // <conv(x; W), y> == <x, conv^T(y; W)> with zero biases and L - K divisible by S.
  std::mt19937_64 rng(3);
  const std::size_t s = 4, k = 8, cin = 3, cout = 6, lout = 17;
  const std::size_t lin = (lout - 1) * s + k;
  auto x = random_tensor({cin, lin}, rng);
  auto y = random_tensor({cout, lout}, rng);
  auto w = random_tensor({cout, cin, k}, rng);
  const auto lhs = conv1d(x, w, TD::zeros({cout}), s);
  const auto rhs = conv_transpose1d(y, w, TD::zeros({cin}), s);
  REQUIRE(rhs.shape() == x.shape());
  CHECK(dot(lhs.data(), y.data()) == doctest::Approx(dot(x.data(), rhs.data())).epsilon(1e-12));
}

TEST_CASE("conv without bias") {
  std::mt19937_64 rng(4);
  auto x = random_tensor({2, 10}, rng);
  auto w = random_tensor({3, 2, 3}, rng);
  auto with_zero = conv1d(x, w, TD::zeros({3}), 2);
  auto none = conv1d(x, w, TD(), 2);
  for (std::size_t i = 0; i < none.numel(); ++i) CHECK(none.data()[i] == with_zero.data()[i]);
}

TEST_CASE("conv errors") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 5}, rng);
  CHECK_THROWS_AS(conv1d(x, random_tensor({3, 2, 8}, rng), random_tensor({3}, rng), 4), LengthError);
  CHECK_THROWS_AS(conv1d(x, random_tensor({3, 1, 2}, rng), random_tensor({3}, rng), 1), DimensionError);
  CHECK_THROWS_AS(conv1d(x, random_tensor({3, 2, 2}, rng), random_tensor({2}, rng), 1), DimensionError);
  CHECK_THROWS_AS(conv1d(x, random_tensor({3, 2, 2}, rng), random_tensor({3}, rng), 0), ConfigError);
  CHECK_THROWS_AS(conv_transpose1d(x, random_tensor({3, 2, 2}, rng), random_tensor({2}, rng), 2), DimensionError);
}

TEST_CASE("finite-difference: conv1d") {
  std::mt19937_64 rng(6);
  for (std::size_t s : {1u, 4u}) {
    CAPTURE(s);
    auto x = random_tensor({3, 37}, rng);
    auto w = random_tensor({4, 3, 8}, rng);
    auto b = random_tensor({4}, rng);
    auto r = gradcheck([s](const V& v) { return project(conv1d(v[0], v[1], v[2], s)); }, {x, w, b});
    CHECK(r.rel_error < 1e-3);
  }
}

TEST_CASE("finite-difference: conv_transpose1d") {
  std::mt19937_64 rng(7);
  for (std::size_t s : {1u, 4u}) {
    CAPTURE(s);
    auto x = random_tensor({4, 9}, rng);
    auto w = random_tensor({4, 3, 8}, rng);
    auto b = random_tensor({3}, rng);
    auto r = gradcheck([s](const V& v) { return project(conv_transpose1d(v[0], v[1], v[2], s)); }, {x, w, b});
    CHECK(r.rel_error < 1e-3);
  }
}

TEST_CASE("finite-difference: pointwise (1x1) convolution") {
  std::mt19937_64 rng(8);
  auto x = random_tensor({6, 20}, rng);
  auto w = random_tensor({12, 6, 1}, rng);
  auto b = random_tensor({12}, rng);
  auto r = gradcheck([](const V& v) { return project(glu(conv1d(v[0], v[1], v[2], 1))); }, {x, w, b});
  CHECK(r.rel_error < 1e-3);
}

TEST_CASE("float conv agrees with double conv") {
  std::mt19937_64 rng(9);
  auto x = random_tensor({8, 400}, rng);
  auto w = random_tensor({16, 8, 8}, rng);
  auto b = random_tensor({16}, rng);
  auto yd = conv1d(x, w, b, 4);
  auto yf = conv1d(x.cast<float>(), w.cast<float>(), b.cast<float>(), 4);
  for (std::size_t i = 0; i < yd.numel(); ++i) CHECK(yf.data()[i] == doctest::Approx(yd.data()[i]).epsilon(1e-4));
}
