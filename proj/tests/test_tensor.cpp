// Forward-value tests for the tensor core: elementwise ops, GEMM-backed
// layers against naive loop oracles, batch norm statistics, losses, Adam.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "aegan/adam.hpp"
#include "aegan/tensor.hpp"

using namespace aegan;

namespace {

TensorF rand_tensor(Shape shape, std::mt19937_64& rng, bool rg = false) {
  return TensorF::randn(std::move(shape), rng, 0.f, 1.f, rg);
}

// Naive direct convolution, no GEMM, no im2col.
std::vector<float> conv2d_oracle(const std::vector<float>& x,
                                 const std::vector<float>& w,
                                 const std::vector<float>& bias, int b,
                                 int cin, int h, int wd, int cout, int k,
                                 int stride, int pad, int& ho, int& wo) {
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<float> y(static_cast<size_t>(b) * cout * ho * wo, 0.f);
  for (int n = 0; n < b; ++n)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          float acc = bias[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                int iy = oy * stride - pad + ky;
                int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x[((static_cast<int64_t>(n) * cin + ci) * h + iy) * wd + ix] *
                       w[((static_cast<int64_t>(co) * cin + ci) * k + ky) * k + kx];
              }
          y[((static_cast<int64_t>(n) * cout + co) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

// Naive transposed convolution by scattering each input pixel.
std::vector<float> convt2d_oracle(const std::vector<float>& x,
                                  const std::vector<float>& w,
                                  const std::vector<float>& bias, int b,
                                  int cin, int h, int wd, int cout, int k,
                                  int stride, int pad, int& ho, int& wo) {
  ho = (h - 1) * stride - 2 * pad + k;
  wo = (wd - 1) * stride - 2 * pad + k;
  std::vector<float> y(static_cast<size_t>(b) * cout * ho * wo, 0.f);
  for (int n = 0; n < b; ++n)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          y[((static_cast<int64_t>(n) * cout + co) * ho + oy) * wo + ox] = bias[co];
  for (int n = 0; n < b; ++n)
    for (int ci = 0; ci < cin; ++ci)
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < wd; ++ix) {
          float v = x[((static_cast<int64_t>(n) * cin + ci) * h + iy) * wd + ix];
          for (int co = 0; co < cout; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                int oy = iy * stride - pad + ky;
                int ox = ix * stride - pad + kx;
                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                y[((static_cast<int64_t>(n) * cout + co) * ho + oy) * wo + ox] +=
                    v * w[((static_cast<int64_t>(ci) * cout + co) * k + ky) * k + kx];
              }
        }
  return y;
}

}  // namespace

TEST_CASE("factories and accessors") {
  auto z = TensorF::zeros({2, 3});
  REQUIRE(z.shape() == Shape{2, 3});
  REQUIRE(z.size() == 6);
  for (float v : z.values()) REQUIRE(v == 0.f);

  auto f = TensorF::full({4}, 2.5f);
  for (float v : f.values()) REQUIRE(v == 2.5f);

  REQUIRE(TensorF::scalar(7.f).item() == 7.f);
  REQUIRE_THROWS(TensorF::from({2, 2}, {1.f, 2.f, 3.f}));
  REQUIRE_THROWS(f.item());
}

TEST_CASE("randn moments") {
  std::mt19937_64 rng(42);
  auto t = TensorF::randn({100000}, rng, 0.f, 0.02f);
  double mean = 0, var = 0;
  for (float v : t.values()) mean += v;
  mean /= t.size();
  for (float v : t.values()) var += (v - mean) * (v - mean);
  var /= t.size();
  REQUIRE(std::abs(mean) < 5e-4);
  REQUIRE(std::sqrt(var) == Catch::Approx(0.02).margin(5e-4));
}

TEST_CASE("elementwise ops") {
  auto a = TensorF::from({3}, {1.f, -2.f, 3.f});
  auto b = TensorF::from({3}, {0.5f, 4.f, -1.f});
  REQUIRE(add(a, b).values() == std::vector<float>{1.5f, 2.f, 2.f});
  REQUIRE(sub(a, b).values() == std::vector<float>{0.5f, -6.f, 4.f});
  REQUIRE(mul(a, b).values() == std::vector<float>{0.5f, -8.f, -3.f});
  REQUIRE(scale(a, 2.f).values() == std::vector<float>{2.f, -4.f, 6.f});
  REQUIRE_THROWS(add(a, TensorF::zeros({4})));

  REQUIRE(relu(a).values() == std::vector<float>{1.f, 0.f, 3.f});
  REQUIRE(leaky_relu(a, 0.2f).values() ==
          std::vector<float>{1.f, -0.4f, 3.f});
  auto th = tanh_act(a);
  REQUIRE(th.values()[0] == Catch::Approx(std::tanh(1.0)));
  REQUIRE(th.values()[1] == Catch::Approx(std::tanh(-2.0)));

  REQUIRE(sum(a).item() == 2.f);
  REQUIRE(mean(a).item() == Catch::Approx(2.0 / 3.0));

  auto r = reshape(a, {1, 3});
  REQUIRE(r.shape() == Shape{1, 3});
  REQUIRE(r.values() == a.values());
  REQUIRE_THROWS(reshape(a, {2, 2}));
}

TEST_CASE("linear matches explicit loops") {
  std::mt19937_64 rng(1);
  auto x = rand_tensor({4, 5}, rng);
  auto w = rand_tensor({3, 5}, rng);
  auto b = rand_tensor({3}, rng);
  auto y = linear(x, w, b);
  REQUIRE(y.shape() == Shape{4, 3});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      float acc = b.values()[j];
      for (int k = 0; k < 5; ++k)
        acc += x.values()[i * 5 + k] * w.values()[j * 5 + k];
      REQUIRE(y.values()[i * 3 + j] == Catch::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("conv2d matches naive convolution") {
  std::mt19937_64 rng(2);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {4, 2, 1}, {3, 2, 0},
                                {1, 1, 0}, {5, 1, 2}}) {
    const int b = 2, cin = 3, cout = 4, h = 9, wd = 8;
    auto x = rand_tensor({b, cin, h, wd}, rng);
    auto w = rand_tensor({cout, cin, k, k}, rng);
    auto bias = rand_tensor({cout}, rng);
    auto y = conv2d(x, w, bias, stride, pad);
    int ho, wo;
    auto ref = conv2d_oracle(x.values(), w.values(), bias.values(), b, cin, h,
                             wd, cout, k, stride, pad, ho, wo);
    REQUIRE(y.shape() == Shape{b, cout, ho, wo});
    for (size_t i = 0; i < ref.size(); ++i)
      REQUIRE(y.values()[i] == Catch::Approx(ref[i]).margin(1e-4));
  }
}

TEST_CASE("conv_transpose2d matches naive scatter") {
  std::mt19937_64 rng(3);
  for (auto [k, stride, pad] : {std::tuple{4, 2, 1}, {3, 1, 1}, {2, 2, 0}}) {
    const int b = 2, cin = 3, cout = 2, h = 5, wd = 6;
    auto x = rand_tensor({b, cin, h, wd}, rng);
    auto w = rand_tensor({cin, cout, k, k}, rng);
    auto bias = rand_tensor({cout}, rng);
    auto y = conv_transpose2d(x, w, bias, stride, pad);
    int ho, wo;
    auto ref = convt2d_oracle(x.values(), w.values(), bias.values(), b, cin,
                              h, wd, cout, k, stride, pad, ho, wo);
    REQUIRE(y.shape() == Shape{b, cout, ho, wo});
    for (size_t i = 0; i < ref.size(); ++i)
      REQUIRE(y.values()[i] == Catch::Approx(ref[i]).margin(1e-4));
  }
}

TEST_CASE("conv shape errors") {
  std::mt19937_64 rng(4);
  auto x = rand_tensor({1, 3, 8, 8}, rng);
  auto w = rand_tensor({4, 2, 3, 3}, rng);  // wrong cin
  auto b = rand_tensor({4}, rng);
  REQUIRE_THROWS(conv2d(x, w, b, 1, 1));
}

TEST_CASE("batch_norm train mode normalizes, eval uses running stats") {
  std::mt19937_64 rng(5);
  const int b = 8, c = 3, h = 6, w = 6;
  auto x = TensorF::randn({b, c, h, w}, rng, 2.f, 3.f);
  auto gamma = TensorF::full({c}, 1.f);
  auto beta = TensorF::zeros({c});
  RunningStats<float> stats(c);

  auto y = batch_norm(x, gamma, beta, stats, true);
  const int64_t sp = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    double m = 0, v = 0;
    for (int n = 0; n < b; ++n)
      for (int64_t i = 0; i < sp; ++i)
        m += y.values()[(n * c + ci) * sp + i];
    m /= b * sp;
    for (int n = 0; n < b; ++n)
      for (int64_t i = 0; i < sp; ++i) {
        double d = y.values()[(n * c + ci) * sp + i] - m;
        v += d * d;
      }
    v /= b * sp;
    REQUIRE(std::abs(m) < 1e-4);
    REQUIRE(v == Catch::Approx(1.0).margin(1e-3));
  }
  // running stats moved toward the batch statistics
  for (int ci = 0; ci < c; ++ci) {
    REQUIRE(stats.mean[ci] != 0.f);
    REQUIRE(stats.var[ci] != 1.f);
  }

  // eval mode: deterministic, uses running stats, does not mutate them
  auto saved_mean = stats.mean;
  auto e1 = batch_norm(x, gamma, beta, stats, false);
  auto e2 = batch_norm(x, gamma, beta, stats, false);
  REQUIRE(e1.values() == e2.values());
  REQUIRE(stats.mean == saved_mean);

  // affine parameters apply after normalization
  auto g2 = TensorF::full({c}, 2.f);
  auto b2 = TensorF::full({c}, 0.5f);
  auto y2 = batch_norm(x, g2, b2, stats, false);
  for (size_t i = 0; i < y2.values().size(); ++i)
    REQUIRE(y2.values()[i] ==
            Catch::Approx(2.f * e1.values()[i] + 0.5f).margin(1e-4));
}

TEST_CASE("loss values") {
  auto a = TensorF::from({4}, {1.f, 2.f, 3.f, 4.f});
  auto b = TensorF::from({4}, {2.f, 2.f, 1.f, 8.f});
  REQUIRE(l1_loss(a, b).item() == Catch::Approx((1 + 0 + 2 + 4) / 4.0));

  auto logits = TensorF::from({2}, {0.3f, -1.2f});
  auto expect = [](float l, float t) {
    return std::max(l, 0.f) - l * t + std::log1p(std::exp(-std::abs(l)));
  };
  REQUIRE(bce_with_logits(logits, 1.f).item() ==
          Catch::Approx((expect(0.3f, 1) + expect(-1.2f, 1)) / 2));
  REQUIRE(bce_with_logits(logits, 0.f).item() ==
          Catch::Approx((expect(0.3f, 0) + expect(-1.2f, 0)) / 2));
  // stability at large magnitudes
  auto big = TensorF::from({2}, {80.f, -80.f});
  REQUIRE(std::isfinite(bce_with_logits(big, 1.f).item()));
  REQUIRE(bce_with_logits(big, 1.f).item() == Catch::Approx(40.0).margin(1e-4));

  auto cls = TensorF::from({2, 3}, {1.f, 2.f, 3.f, 0.f, 0.f, 0.f});
  double l0 = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  double l1v = -std::log(1.0 / 3.0);
  REQUIRE(softmax_cross_entropy(cls, {2, 0}).item() ==
          Catch::Approx((l0 + l1v) / 2));
  REQUIRE_THROWS(softmax_cross_entropy(cls, {3, 0}));
  REQUIRE_THROWS(softmax_cross_entropy(cls, {0}));
}

TEST_CASE("adam first step and bias correction") {
  // Scalar oracle: after one step theta -= lr * g / (|g| * sqrt(1)) ~ lr*sign(g)
  auto p = TensorF::from({2}, {1.f, -1.f}, true);
  p.grad() = {0.5f, -2.f};
  AdamF opt(AdamConfig<float>{0.1f});
  opt.add_param("p", p);
  opt.step();
  REQUIRE(p.values()[0] == Catch::Approx(1.f - 0.1f).margin(1e-5));
  REQUIRE(p.values()[1] == Catch::Approx(-1.f + 0.1f).margin(1e-5));

  // multi-step against an independent scalar reference
  float theta = 0.7f, m = 0, v = 0;
  auto q = TensorF::from({1}, {0.7f}, true);
  AdamF opt2(AdamConfig<float>{0.05f});
  opt2.add_param("q", q);
  std::mt19937_64 rng(6);
  std::normal_distribution<float> g(0.f, 1.f);
  for (int t = 1; t <= 25; ++t) {
    float grad = g(rng);
    q.grad() = {grad};
    opt2.step();
    m = 0.9f * m + 0.1f * grad;
    v = 0.999f * v + 0.001f * grad * grad;
    float mhat = m / (1 - std::pow(0.9f, t));
    float vhat = v / (1 - std::pow(0.999f, t));
    theta -= 0.05f * mhat / (std::sqrt(vhat) + 1e-8f);
    q.zero_grad();
  }
  REQUIRE(q.values()[0] == Catch::Approx(theta).margin(1e-5));
}

TEST_CASE("adam zero learning rate leaves parameters bitwise unchanged") {
  std::mt19937_64 rng(7);
  auto p = rand_tensor({32}, rng, true);
  auto before = p.values();
  AdamF opt(AdamConfig<float>{0.f});
  opt.add_param("p", p);
  for (int i = 0; i < 5; ++i) {
    p.grad().assign(32, 1.f);
    opt.step();
  }
  REQUIRE(p.values() == before);
}

TEST_CASE("adam missing gradient names the parameter") {
  auto p = TensorF::zeros({2}, true);
  AdamF opt(AdamConfig<float>{0.1f});
  opt.add_param("H.down0.conv.w", p);
  REQUIRE_THROWS_WITH(opt.step(),
                      Catch::Matchers::ContainsSubstring("H.down0.conv.w"));
  REQUIRE_THROWS(opt.add_param("H.down0.conv.w", p));
}
