// Reverse-mode gradient verification: central finite differences against the
// backward pass for every differentiable op, in both precisions, plus graph
// mechanics (accumulation, detach, shared subexpressions).

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "aegan/tensor.hpp"

using namespace aegan;

namespace {

// Scalar-valued function of a list of leaf tensors.
template <class T>
using Fn = std::function<Tensor<T>(const std::vector<Tensor<T>>&)>;

// Max relative discrepancy between analytic and central-difference gradients.
template <class T>
double gradcheck(const Fn<T>& fn, std::vector<Tensor<T>> leaves, T h) {
  for (auto& l : leaves) l.zero_grad();
  auto loss = fn(leaves);
  loss.backward();
  double worst = 0;
  for (auto& leaf : leaves) {
    REQUIRE(leaf.has_grad());
    for (size_t i = 0; i < leaf.values().size(); ++i) {
      const T saved = leaf.values()[i];
      leaf.values()[i] = saved + h;
      const double up = fn(leaves).item();
      leaf.values()[i] = saved - h;
      const double down = fn(leaves).item();
      leaf.values()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = leaf.grad()[i];
      const double denom =
          std::max({1.0, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

// Values bounded away from zero so kinked activations stay differentiable at
// every probe point.
template <class T>
Tensor<T> rand_away(Shape shape, std::mt19937_64& rng, bool rg = true) {
  std::uniform_real_distribution<double> mag(0.2, 1.5);
  std::bernoulli_distribution sign(0.5);
  std::vector<T> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v)
    x = static_cast<T>(sign(rng) ? mag(rng) : -mag(rng));
  return Tensor<T>::from(std::move(shape), std::move(v), rg);
}

template <class T>
Tensor<T> randn_t(Shape shape, std::mt19937_64& rng, bool rg = true) {
  return Tensor<T>::randn(std::move(shape), rng, T(0), T(1), rg);
}

constexpr double kH64 = 1e-6;
constexpr double kTol64 = 1e-6;
constexpr float kH32 = 1e-2f;
constexpr double kTol32 = 1e-3;

}  // namespace

TEST_CASE("gradients of elementwise and reduction ops, 20 instances each") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    Shape shape{2 + trial % 3, 3};
    SECTION("instance " + std::to_string(trial)) {
      auto a = rand_away<double>(shape, rng);
      auto b = rand_away<double>(shape, rng);

      Fn<double> fns[] = {
          [](const auto& l) { return sum(add(l[0], l[1])); },
          [](const auto& l) { return sum(sub(l[0], l[1])); },
          [](const auto& l) { return sum(mul(l[0], l[1])); },
          [](const auto& l) { return mean(scale(l[0], 1.7)); },
          [](const auto& l) { return sum(mul(l[0], l[0])); },  // reuse
          [&shape](const auto& l) {
            return sum(mul(reshape(l[0], {numel(shape)}),
                           reshape(l[1], {numel(shape)})));
          },
          [](const auto& l) { return sum(tanh_act(l[0])); },
          [](const auto& l) { return sum(leaky_relu(l[0], 0.2)); },
          [](const auto& l) { return sum(mul(relu(l[0]), l[1])); },
          [](const auto& l) { return mean(mul(l[0], l[1])); },
      };
      for (const auto& fn : fns)
        REQUIRE(gradcheck<double>(fn, {a, b}, kH64) < kTol64);
    }
  }
}

TEST_CASE("gradients of linear, 20 instances") {
  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 1 + trial % 3, in = 2 + trial % 4, out = 1 + trial % 3;
    auto x = randn_t<double>({b, in}, rng);
    auto w = randn_t<double>({out, in}, rng);
    auto bias = randn_t<double>({out}, rng);
    Fn<double> fn = [](const auto& l) {
      return sum(tanh_act(linear(l[0], l[1], l[2])));
    };
    REQUIRE(gradcheck<double>(fn, {x, w, bias}, kH64) < kTol64);
  }
}

TEST_CASE("gradients of conv2d, 20 instances") {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 3;
    const int stride = 1 + trial % 2;
    const int pad = trial % 2;
    const int b = 1 + trial % 2, cin = 1 + trial % 2, cout = 1 + trial % 3;
    const int h = k + 2 + trial % 3, w = k + 1 + trial % 3;
    auto x = randn_t<double>({b, cin, h, w}, rng);
    auto wt = randn_t<double>({cout, cin, k, k}, rng);
    auto bias = randn_t<double>({cout}, rng);
    Fn<double> fn = [stride, pad](const auto& l) {
      return sum(tanh_act(conv2d(l[0], l[1], l[2], stride, pad)));
    };
    REQUIRE(gradcheck<double>(fn, {x, wt, bias}, kH64) < kTol64);
  }
}

TEST_CASE("gradients of conv_transpose2d, 20 instances") {
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 3;
    const int stride = 1 + trial % 2;
    const int pad = std::min(trial % 2, k - 1);
    const int b = 1 + trial % 2, cin = 1 + trial % 3, cout = 1 + trial % 2;
    const int h = 2 + trial % 3, w = 2 + trial % 2;
    auto x = randn_t<double>({b, cin, h, w}, rng);
    auto wt = randn_t<double>({cin, cout, k, k}, rng);
    auto bias = randn_t<double>({cout}, rng);
    Fn<double> fn = [stride, pad](const auto& l) {
      return sum(tanh_act(conv_transpose2d(l[0], l[1], l[2], stride, pad)));
    };
    REQUIRE(gradcheck<double>(fn, {x, wt, bias}, kH64) < kTol64);
  }
}

TEST_CASE("gradients of batch_norm, 20 instances") {
  std::mt19937_64 rng(105);
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 2 + trial % 3, c = 1 + trial % 3, h = 2 + trial % 2, w = 3;
    auto x = randn_t<double>({b, c, h, w}, rng);
    auto gamma = rand_away<double>({c}, rng);
    auto beta = randn_t<double>({c}, rng);
    Fn<double> fn = [c](const auto& l) {
      // fresh stats per call so finite differences see a pure function
      RunningStats<double> stats(c);
      return sum(tanh_act(batch_norm(l[0], l[1], l[2], stats, true)));
    };
    REQUIRE(gradcheck<double>(fn, {x, gamma, beta}, kH64) < kTol64);
  }
}

TEST_CASE("gradients of losses, 20 instances each") {
  std::mt19937_64 rng(106);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = rand_away<double>({3, 4}, rng);
    auto b = rand_away<double>({3, 4}, rng);
    // keep |a-b| away from the l1 kink
    for (size_t i = 0; i < a.values().size(); ++i)
      if (std::abs(a.values()[i] - b.values()[i]) < 0.05)
        b.values()[i] += 0.2;
    Fn<double> l1 = [](const auto& l) { return l1_loss(l[0], l[1]); };
    REQUIRE(gradcheck<double>(l1, {a, b}, kH64) < kTol64);

    auto logits = randn_t<double>({5}, rng);
    Fn<double> bce1 = [](const auto& l) { return bce_with_logits(l[0], 1.0); };
    Fn<double> bce0 = [](const auto& l) { return bce_with_logits(l[0], 0.0); };
    REQUIRE(gradcheck<double>(bce1, {logits}, kH64) < kTol64);
    REQUIRE(gradcheck<double>(bce0, {logits}, kH64) < kTol64);

    auto cls = randn_t<double>({4, 3}, rng);
    std::vector<int> labels = {trial % 3, 0, 2, 1};
    Fn<double> ce = [labels](const auto& l) {
      return softmax_cross_entropy(l[0], labels);
    };
    REQUIRE(gradcheck<double>(ce, {cls}, kH64) < kTol64);
  }
}

TEST_CASE("32-bit gradients within 1e-3") {
  std::mt19937_64 rng(107);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = randn_t<float>({2, 2, 5, 5}, rng);
    auto w = randn_t<float>({3, 2, 3, 3}, rng);
    auto b = randn_t<float>({3}, rng);
    Fn<float> fn = [](const auto& l) {
      return mean(tanh_act(conv2d(l[0], l[1], l[2], 2, 1)));
    };
    REQUIRE(gradcheck<float>(fn, {x, w, b}, kH32) < kTol32);
  }
}

TEST_CASE("composite network-like graph") {
  std::mt19937_64 rng(108);
  auto x = randn_t<double>({2, 2, 6, 6}, rng, false);
  auto w1 = randn_t<double>({3, 2, 4, 4}, rng);
  auto b1 = randn_t<double>({3}, rng);
  auto w2 = randn_t<double>({3, 2, 4, 4}, rng);  // deconv weight [cin,cout,k,k]
  auto b2 = randn_t<double>({2}, rng);
  Fn<double> fn = [x](const auto& l) {
    auto h = tanh_act(conv2d(x, l[0], l[1], 2, 1));
    auto y = tanh_act(conv_transpose2d(h, l[2], l[3], 2, 1));
    return l1_loss(y, scale(x, 0.5));
  };
  REQUIRE(gradcheck<double>(fn, {w1, b1, w2, b2}, kH64) < 1e-5);
}

TEST_CASE("gradient accumulation across backward calls") {
  auto x = TensorD::from({2}, {1.0, 2.0}, true);
  auto loss1 = sum(mul(x, x));
  loss1.backward();
  REQUIRE(x.grad()[0] == Catch::Approx(2.0));
  auto loss2 = sum(x);
  loss2.backward();
  REQUIRE(x.grad()[0] == Catch::Approx(3.0));  // accumulated
  x.zero_grad();
  REQUIRE(!x.has_grad());
}

TEST_CASE("detach blocks gradient flow") {
  auto x = TensorD::from({2}, {1.0, 2.0}, true);
  auto y = detach(mul(x, x));
  REQUIRE(y.values() == std::vector<double>{1.0, 4.0});
  auto loss = sum(mul(y, x));
  loss.backward();
  REQUIRE(x.has_grad());
  REQUIRE(x.grad()[0] == Catch::Approx(1.0));  // only the outer mul
  REQUIRE(x.grad()[1] == Catch::Approx(4.0));
}

TEST_CASE("shared subexpression contributes twice") {
  auto x = TensorD::from({1}, {3.0}, true);
  auto s = mul(x, x);           // x^2
  auto loss = sum(add(s, s));   // 2 x^2, d/dx = 4x = 12
  loss.backward();
  REQUIRE(x.grad()[0] == Catch::Approx(12.0));
}

TEST_CASE("backward requires scalar and releases graph") {
  auto x = TensorD::from({2}, {1.0, 2.0}, true);
  auto y = mul(x, x);
  REQUIRE_THROWS(y.backward());
  auto loss = sum(y);
  loss.backward();
  // graph released: second backward through the same loss has no parents to
  // traverse, so gradients do not double
  auto g = x.grad()[0];
  loss.backward();
  REQUIRE(x.grad()[0] == Catch::Approx(g));
}

TEST_CASE("retain_graph keeps the graph usable") {
  auto x = TensorD::from({1}, {2.0}, true);
  auto loss = sum(mul(x, x));
  loss.backward(true);
  REQUIRE(x.grad()[0] == Catch::Approx(4.0));
  loss.backward(true);
  REQUIRE(x.grad()[0] == Catch::Approx(8.0));
}
