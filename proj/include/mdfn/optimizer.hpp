#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mdfn/error.hpp"
#include "mdfn/registry.hpp"

namespace mdfn {

struct OptimConfig {
  double lr = 1e-3;  // desk-scale default; full-scale presets ship in configs/
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled
  int epochs = 5;
  int batch_size = 8;
  uint64_t seed = 42;
  double early_stop_r1 = 0.0;  // stop after an epoch whose val R@1 reaches this (0 = off)
};

// Adam with decoupled weight decay: the decay shrinks parameters directly
// and is not folded into the gradient moments.
template <typename T>
class AdamW {
 public:
  AdamW(nn::ParamRegistry<T>& reg, const OptimConfig& cfg) : reg_(reg), cfg_(cfg) {
    if (cfg.lr <= 0) fail(ErrorCode::ConfigError, "lr must be positive");
    if (cfg.batch_size < 1) fail(ErrorCode::ConfigError, "batch_size must be >= 1");
    for (auto& [name, t] : reg.trainable()) {
      m_.emplace_back(t.val().size(), 0.0);
      v_.emplace_back(t.val().size(), 0.0);
    }
  }

  int step_count() const { return t_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    size_t p = 0;
    for (auto& [name, param] : reg_.trainable()) {
      auto& val = param.val();
      auto& grad = param.grad();
      auto& m = m_[p];
      auto& v = v_[p];
      ++p;
      for (size_t i = 0; i < val.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        if (!std::isfinite(g))
          fail(ErrorCode::NanGradient,
               "non-finite gradient in " + name + "[" + std::to_string(i) + "]");
        double w = static_cast<double>(val[i]);
        w -= cfg_.lr * cfg_.weight_decay * w;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        val[i] = static_cast<T>(w);
      }
    }
  }

 private:
  nn::ParamRegistry<T>& reg_;
  OptimConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace mdfn
