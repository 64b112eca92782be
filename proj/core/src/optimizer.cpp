#include "fet/optimizer.hpp"

#include <cmath>

#include "fet/errors.hpp"

namespace fet {

AdamW::AdamW(Options options) : options_(options) {
  if (!(options_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(options_.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
}

void AdamW::step(const std::vector<ParameterRef>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.values.size(), 0.0);
      v_.emplace_back(p.values.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ConfigError("optimizer parameter list changed between steps");
  ++t_;
  const double lr = options_.learning_rate;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values;
    auto grads = params[k].grads;
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != values.size() || grads.size() != values.size()) {
      throw ConfigError("optimizer parameter shape changed between steps");
    }
    const double decay = params[k].weight_decay ? lr * options_.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= decay * values[i];
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

double clip_global_norm(const std::vector<std::span<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (auto g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto g : grads)
      for (auto& x : g) x *= scale;
  }
  return norm;
}

}  // namespace fet
