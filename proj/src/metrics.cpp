#include "consor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace consor {
namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

void require_rows(const ScoreTable& table) {
  if (table.rows.empty()) throw std::invalid_argument("score table is empty");
  if (table.num_classes < 1) throw std::invalid_argument("score table has no classes");
}

nlohmann::json nullable(const std::vector<double>& v) {
  nlohmann::json j = nlohmann::json::array();
  for (double x : v) {
    if (std::isnan(x)) j.push_back(nullptr);
    else j.push_back(x);
  }
  return j;
}

std::vector<double> from_nullable(const nlohmann::json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(x.is_null() ? kUndefined : x.get<double>());
  return v;
}

/// Running sum of fractions kept exact while it fits in 64 bits, so that
/// small tables produce correctly rounded results.
struct ExactSum {
  std::int64_t num = 0;
  std::int64_t den = 1;
  bool ok = true;

  void add(std::int64_t n, std::int64_t d) {
    if (!ok) return;
    const std::int64_t g = std::gcd(den, d);
    std::int64_t new_den, a, b;
    if (__builtin_mul_overflow(den / g, d, &new_den) || __builtin_mul_overflow(num, d / g, &a) ||
        __builtin_mul_overflow(n, den / g, &b) || __builtin_add_overflow(a, b, &num)) {
      ok = false;
      return;
    }
    den = new_den;
    const std::int64_t r = std::gcd(num, den);
    num /= r;
    den /= r;
  }

  /// num / (den * divisor) when both parts are exact doubles.
  bool ratio(std::int64_t divisor, double& out) const {
    constexpr std::int64_t kExact = std::int64_t{1} << 53;
    std::int64_t d;
    if (!ok || __builtin_mul_overflow(den, divisor, &d) || num > kExact || d > kExact) return false;
    out = static_cast<double>(num) / static_cast<double>(d);
    return true;
  }
};

}  // namespace

void ScoreTable::validate() const {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const ScoreRow& row = rows[r];
    const std::string where = "score row " + std::to_string(r) + " (" + row.sample_id + ")";
    if (static_cast<int>(row.scores.size()) != num_classes) throw std::invalid_argument(where + ": wrong width");
    if (row.label < 0 || row.label >= num_classes) throw std::invalid_argument(where + ": label out of range");
    const double s = std::accumulate(row.scores.begin(), row.scores.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-5) throw std::invalid_argument(where + ": scores do not sum to 1");
  }
}

std::string ScoreTable::to_csv() const {
  std::ostringstream out;
  out << "sample_id,label";
  for (int c = 0; c < num_classes; ++c) out << ",score_" << c;
  out << "\n" << std::setprecision(17);
  for (const auto& row : rows) {
    out << row.sample_id << "," << row.label;
    for (double s : row.scores) out << "," << s;
    out << "\n";
  }
  return out.str();
}

ScoreTable ScoreTable::from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("score csv is empty");
  ScoreTable t;
  t.num_classes = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
  if (line.rfind("sample_id,label", 0) != 0 || t.num_classes < 1) throw std::invalid_argument("bad score csv header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    ScoreRow row;
    std::getline(cells, row.sample_id, ',');
    std::getline(cells, cell, ',');
    row.label = std::stoi(cell);
    while (std::getline(cells, cell, ',')) row.scores.push_back(std::stod(cell));
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

int argmax(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (int c = 1; c < static_cast<int>(scores.size()); ++c) {
    if (scores[static_cast<std::size_t>(c)] > scores[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

std::vector<double> per_class_recall(const ScoreTable& table) {
  require_rows(table);
  std::vector<int> hits(static_cast<std::size_t>(table.num_classes), 0);
  std::vector<int> totals(static_cast<std::size_t>(table.num_classes), 0);
  for (const auto& row : table.rows) {
    const auto c = static_cast<std::size_t>(row.label);
    ++totals.at(c);
    if (argmax(row.scores) == row.label) ++hits[c];
  }
  std::vector<double> out;
  for (std::size_t c = 0; c < totals.size(); ++c) {
    out.push_back(totals[c] == 0 ? kUndefined : static_cast<double>(hits[c]) / totals[c]);
  }
  return out;
}

double average_precision(const ScoreTable& table, int cls) {
  require_rows(table);
  std::vector<const ScoreRow*> ranked;
  for (const auto& row : table.rows) ranked.push_back(&row);
  const auto c = static_cast<std::size_t>(cls);
  std::sort(ranked.begin(), ranked.end(), [c](const ScoreRow* a, const ScoreRow* b) {
    if (a->scores[c] != b->scores[c]) return a->scores[c] > b->scores[c];
    return a->sample_id < b->sample_id;
  });
  int positives = 0;
  double sum = 0.0;
  ExactSum exact;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k]->label == cls) {
      ++positives;
      sum += static_cast<double>(positives) / static_cast<double>(k + 1);
      exact.add(positives, static_cast<std::int64_t>(k + 1));
    }
  }
  if (positives == 0) return kUndefined;
  double value = 0.0;
  if (exact.ratio(positives, value)) return value;
  return sum / positives;
}

ApResult mean_average_precision(const ScoreTable& table) {
  require_rows(table);
  ApResult r;
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < table.num_classes; ++c) {
    const double ap = average_precision(table, c);
    r.per_class_ap.push_back(ap);
    if (!std::isnan(ap)) {
      sum += ap;
      ++defined;
    }
  }
  r.map = defined == 0 ? kUndefined : sum / defined;
  return r;
}

double top1_accuracy(const ScoreTable& table) {
  require_rows(table);
  int correct = 0;
  for (const auto& row : table.rows) {
    if (argmax(row.scores) == row.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(table.rows.size());
}

nlohmann::json MetricsReport::to_json() const {
  return {{"taxonomy", taxonomy},
          {"mode", mode},
          {"n_samples", n_samples},
          {"per_class_recall", nullable(per_class_recall)},
          {"per_class_ap", nullable(per_class_ap)},
          {"map", std::isnan(map) ? nlohmann::json(nullptr) : nlohmann::json(map)},
          {"acc1", acc1}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.taxonomy = j.at("taxonomy").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.per_class_recall = from_nullable(j.at("per_class_recall"));
  r.per_class_ap = from_nullable(j.at("per_class_ap"));
  r.map = j.at("map").is_null() ? kUndefined : j.at("map").get<double>();
  r.acc1 = j.at("acc1").get<double>();
  return r;
}

MetricsReport compute_metrics(const ScoreTable& table, const std::string& taxonomy, const std::string& mode) {
  table.validate();
  MetricsReport r;
  r.taxonomy = taxonomy;
  r.mode = mode;
  r.n_samples = table.rows.size();
  r.per_class_recall = per_class_recall(table);
  ApResult ap = mean_average_precision(table);
  r.per_class_ap = std::move(ap.per_class_ap);
  r.map = ap.map;
  r.acc1 = top1_accuracy(table);
  return r;
}

}  // namespace consor
