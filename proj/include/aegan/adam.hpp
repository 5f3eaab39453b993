#pragma once
// Adam optimizer over a named parameter collection.

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aegan/tensor.hpp"

namespace aegan {

template <class T>
struct AdamConfig {
  T learning_rate = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
};

// Per-parameter first/second moments plus the shared step counter.
template <class T>
class Adam {
 public:
  struct Slot {
    Tensor<T> param;
    std::vector<T> m;
    std::vector<T> v;
  };

  Adam() = default;
  explicit Adam(AdamConfig<T> cfg) : cfg_(cfg) {}

  void add_param(const std::string& name, const Tensor<T>& p) {
    if (slots_.count(name))
      throw std::invalid_argument("adam: duplicate parameter " + name);
    Slot s;
    s.param = p;
    s.m.assign(p.values().size(), T(0));
    s.v.assign(p.values().size(), T(0));
    slots_.emplace(name, std::move(s));
  }

  // One update for every registered parameter. A registered parameter with
  // no populated gradient is an error: it means a sub-network that should be
  // training is silently disconnected from the loss.
  void step() {
    ++step_count_;
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, step_count_));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, step_count_));
    for (auto& [name, s] : slots_) {
      if (!s.param.has_grad())
        throw std::runtime_error("adam: parameter " + name +
                                 " has no gradient at step " +
                                 std::to_string(step_count_));
      const auto& g = s.param.grad();
      auto& theta = s.param.values();
      for (size_t i = 0; i < theta.size(); ++i) {
        s.m[i] = cfg_.beta1 * s.m[i] + (T(1) - cfg_.beta1) * g[i];
        s.v[i] = cfg_.beta2 * s.v[i] + (T(1) - cfg_.beta2) * g[i] * g[i];
        const T mhat = s.m[i] / bc1;
        const T vhat = s.v[i] / bc2;
        theta[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

  void zero_grad() {
    for (auto& [name, s] : slots_) s.param.zero_grad();
  }

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t n) { step_count_ = n; }
  AdamConfig<T>& config() { return cfg_; }
  const AdamConfig<T>& config() const { return cfg_; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  AdamConfig<T> cfg_;
  std::map<std::string, Slot> slots_;
  int64_t step_count_ = 0;
};

using AdamF = Adam<float>;

}  // namespace aegan
