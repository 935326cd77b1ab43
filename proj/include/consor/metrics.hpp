#pragma once

// Classification metrics over a table of per-sample class probabilities.
// Classes without positives are undefined: their recall and AP are NaN and
// they are left out of the mAP mean.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace consor {

struct ScoreRow {
  std::string sample_id;
  int label = 0;
  std::vector<double> scores;  // softmax probabilities, one per class
};

struct ScoreTable {
  int num_classes = 0;
  std::vector<ScoreRow> rows;

  /// Throws std::invalid_argument on wrong row widths, labels out of range
  /// or rows that do not sum to 1 within 1e-5.
  void validate() const;
  /// Header: sample_id,label,score_0..score_{C-1}.
  std::string to_csv() const;
  static ScoreTable from_csv(const std::string& csv);
};

/// Index of the largest score; ties go to the lowest index.
int argmax(const std::vector<double>& scores);

std::vector<double> per_class_recall(const ScoreTable& table);

/// Mean of precision@k over the ranks k of the positives, ranking rows by
/// the class score descending and by sample_id on ties.
double average_precision(const ScoreTable& table, int cls);

struct ApResult {
  std::vector<double> per_class_ap;
  double map = 0.0;
};
ApResult mean_average_precision(const ScoreTable& table);

double top1_accuracy(const ScoreTable& table);

struct MetricsReport {
  std::string taxonomy;
  std::string mode = "standard";
  std::size_t n_samples = 0;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_ap;
  double map = 0.0;
  double acc1 = 0.0;

  /// NaN entries are written as null.
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

MetricsReport compute_metrics(const ScoreTable& table, const std::string& taxonomy, const std::string& mode);

}  // namespace consor
