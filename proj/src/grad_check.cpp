#include "consor/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace consor {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.pass; });
}

std::vector<GradCheckEntry> GradCheckReport::failing() const {
  std::vector<GradCheckEntry> out;
  for (const auto& e : entries) {
    if (!e.pass) out.push_back(e);
  }
  return out;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    rows.push_back({{"param", e.param}, {"index", e.index}, {"analytic", e.analytic}, {"numeric", e.numeric},
                    {"rel_error", e.rel_error}, {"pass", e.pass}});
  }
  return {{"passed", passed()}, {"max_rel_error", max_rel_error}, {"tol", tol},
          {"n_coords", entries.size()}, {"entries", rows}};
}

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape(false);
  return loss(tape).value()(0, 0);
}

}  // namespace

GradCheckReport grad_check(ParamStore& store, const LossBuilder& loss, const GradCheckOptions& options) {
  GradCheckReport report;
  report.tol = options.tol;
  if (options.n_coords <= 0) return report;

  std::vector<Parameter*> eligible;
  for (Parameter* p : store.all()) {
    if (options.prefixes.empty()) {
      eligible.push_back(p);
      continue;
    }
    for (const auto& prefix : options.prefixes) {
      if (p->name.rfind(prefix, 0) == 0) {
        eligible.push_back(p);
        break;
      }
    }
  }
  if (eligible.empty()) return report;

  store.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  if (options.after_backward) options.after_backward(store);

  Rng rng(options.seed);
  std::vector<std::size_t> order(eligible.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  for (int c = 0; c < options.n_coords; ++c) {
    const std::size_t round = static_cast<std::size_t>(c) % eligible.size();
    if (round == 0) rng.shuffle(order.begin(), order.end());
    Parameter& p = *eligible[order[round]];
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.value.size())));
    double& x = p.value.data()[idx];
    const double saved = x;
    x = saved + options.step;
    const double up = evaluate(loss);
    x = saved - options.step;
    const double down = evaluate(loss);
    x = saved;

    GradCheckEntry e;
    e.param = p.name;
    e.index = idx;
    e.analytic = p.grad.data()[idx];
    e.numeric = (up - down) / (2.0 * options.step);
    const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), options.abs_floor});
    e.rel_error = std::abs(e.analytic - e.numeric) / denom;
    e.pass = e.rel_error < options.tol;
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace consor
