#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/nn.hpp"

namespace consor {

struct GradCheckOptions {
  int n_coords = 200;
  double step = 1e-3;
  double tol = 1e-4;
  double abs_floor = 1e-8;  // denominator floor for near-zero gradients
  std::uint64_t seed = 0;
  /// Only parameters whose name starts with one of these; all when empty.
  std::vector<std::string> prefixes;
  /// Runs after the analytic backward pass; lets tests corrupt gradients.
  std::function<void(ParamStore&)> after_backward;
};

struct GradCheckEntry {
  std::string param;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tol = 0.0;

  bool passed() const;
  std::vector<GradCheckEntry> failing() const;
  nlohmann::json to_json() const;
};

/// Builds the scalar loss on a fresh tape.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares the backpropagated gradient with central differences
/// (f(x+h) - f(x-h)) / 2h on sampled coordinates. Coordinates are drawn
/// round-robin over the eligible parameter tensors so every tensor is
/// visited before any is visited twice.
GradCheckReport grad_check(ParamStore& store, const LossBuilder& loss, const GradCheckOptions& options);

}  // namespace consor
