#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/autograd.hpp"

namespace consor {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;  // decoupled; only parameters flagged `decay`
};

/// Adam with decoupled weight decay. Moments are keyed by parameter name.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(const std::vector<Parameter*>& params, double lr);

  const AdamWConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }

  struct Moments {
    Mat m;
    Mat v;
  };
  const std::map<std::string, Moments>& state() const { return state_; }
  void restore(std::int64_t t, std::map<std::string, Moments> state) {
    t_ = t;
    state_ = std::move(state);
  }

 private:
  AdamWConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

/// lr0 * (1 + cos(pi * step / (total - 1))) / 2, so the last of `total`
/// steps runs at 0. A single-step run uses lr0.
double cosine_lr(double lr0, std::int64_t step, std::int64_t total);

}  // namespace consor
