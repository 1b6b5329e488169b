#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisyal/labels.hpp"

namespace noisyal {

struct ClassConfusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  friend bool operator==(const ClassConfusion&, const ClassConfusion&) = default;
};

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, accuracy = 0.0, f1 = 0.0;
  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

/// Macro-averaged multi-label evaluation of set predictions. mAP here is the
/// macro mean of per-class precision (a threshold metric, not ranking AP).
struct EvaluationReport {
  std::string stage;
  std::string dataset_hash;
  int num_classes = 0;
  std::int64_t samples = 0;
  std::vector<ClassConfusion> confusion;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> mean_loss;

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// Per-class confusion from set membership; undefined precision/recall/F1 are
/// 0 and accuracy is (TP+TN)/N (1 for an empty evaluation). Macro values are
/// unweighted means over all T classes. Throws on length mismatch.
EvaluationReport evaluate(std::span<const LabelSet> preds, std::span<const LabelSet> truths,
                          int num_classes);

/// Stable-field-order JSON record.
std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(std::string_view text);
/// Human-readable per-class table with the macro row.
std::string format_report(const EvaluationReport& report);

struct ComparisonRow {
  std::string stage;
  double map = 0.0, mar = 0.0, maa = 0.0, maf1 = 0.0;
  /// Differences against the first row.
  double d_map = 0.0, d_mar = 0.0, d_maa = 0.0, d_maf1 = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

ComparisonTable compare_stages(std::span<const EvaluationReport> reports);
std::string format_comparison(const ComparisonTable& table);
std::string comparison_to_json(const ComparisonTable& table);

}  // namespace noisyal
