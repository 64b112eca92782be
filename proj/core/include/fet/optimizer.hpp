#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fet {

// One trainable tensor and its gradient, flattened.
struct ParameterRef {
  std::span<double> values;
  std::span<const double> grads;
  bool weight_decay = true;
};

// Adam with decoupled weight decay. Moment buffers are keyed by the position
// of each ParameterRef, so callers must pass parameters in a stable order.
class AdamW {
 public:
  struct Options {
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
  };

  explicit AdamW(Options options);

  void step(const std::vector<ParameterRef>& params);
  std::size_t steps_taken() const noexcept { return t_; }
  const Options& options() const noexcept { return options_; }

 private:
  Options options_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Scales all gradients in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(const std::vector<std::span<double>>& grads, double max_norm);

}  // namespace fet
