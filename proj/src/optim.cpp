#include "consor/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace consor {

void AdamW::step(const std::vector<Parameter*>& params, double lr) {
  if (lr < 0.0) throw std::invalid_argument("learning rate must be non-negative");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    auto it = state_.find(p->name);
    if (it == state_.end()) {
      it = state_.emplace(p->name, Moments{Mat::Zero(p->value.rows(), p->value.cols()),
                                           Mat::Zero(p->value.rows(), p->value.cols())}).first;
    }
    Moments& s = it->second;
    s.m = config_.beta1 * s.m + (1.0 - config_.beta1) * p->grad;
    s.v = config_.beta2 * s.v + (1.0 - config_.beta2) * p->grad.cwiseProduct(p->grad);
    if (lr == 0.0) continue;
    if (p->decay && config_.weight_decay != 0.0) p->value *= 1.0 - lr * config_.weight_decay;
    p->value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + config_.eps);
  }
}

double cosine_lr(double lr0, std::int64_t step, std::int64_t total) {
  if (total < 1 || step < 0 || step >= total) throw std::out_of_range("cosine_lr: step outside schedule");
  if (total == 1) return lr0;
  const double frac = static_cast<double>(step) / static_cast<double>(total - 1);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace consor
