#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "styleswap/error.hpp"

namespace styleswap {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moments. Parameters are addressed by slot so one
/// optimizer can drive several tensors; moment buffers are created on first
/// use of a slot.
template <typename T>
class Adam {
 public:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };

  explicit Adam(AdamConfig config) : config_(config) {
    if (!(config.learning_rate > 0.0)) throw ConfigError("Adam learning rate must be > 0");
  }

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return step_; }

  /// Advances the timestep; call once before the updates of one iteration.
  void begin_step() { ++step_; }

  void update(std::size_t slot, std::span<T> param, std::span<const T> grad) {
    if (step_ == 0) throw ConfigError("Adam::update before begin_step");
    if (param.size() != grad.size()) throw ShapeError("Adam: parameter and gradient sizes differ");
    if (slot >= slots_.size()) slots_.resize(slot + 1);
    Moments& mo = slots_[slot];
    if (mo.m.empty()) {
      mo.m.assign(param.size(), T(0));
      mo.v.assign(param.size(), T(0));
    } else if (mo.m.size() != param.size()) {
      throw ShapeError("Adam: slot size changed between steps");
    }
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double m = b1 * static_cast<double>(mo.m[i]) + (1.0 - b1) * g;
      const double v = b2 * static_cast<double>(mo.v[i]) + (1.0 - b2) * g * g;
      mo.m[i] = static_cast<T>(m);
      mo.v[i] = static_cast<T>(v);
      const double step = config_.learning_rate * (m / c1) / (std::sqrt(v / c2) + config_.epsilon);
      param[i] = static_cast<T>(static_cast<double>(param[i]) - step);
    }
  }

  const std::vector<Moments>& moments() const noexcept { return slots_; }

  void restore(std::uint64_t steps, std::vector<Moments> moments) {
    step_ = steps;
    slots_ = std::move(moments);
  }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Moments> slots_;
};

}  // namespace styleswap
