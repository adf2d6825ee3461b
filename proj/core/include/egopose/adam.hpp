#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace egopose {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moments over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t size, AdamConfig config = {});

  void step(std::span<double> params, std::span<const double> grad);
  void reset();

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace egopose
