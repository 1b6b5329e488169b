#include "noisyal/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "noisyal/error.hpp"

namespace noisyal {

using ordered_json = nlohmann::ordered_json;

EvaluationReport evaluate(std::span<const LabelSet> preds, std::span<const LabelSet> truths,
                          int num_classes) {
  require(preds.size() == truths.size(), "prediction/truth count mismatch");
  require(num_classes > 0, "class count must be positive");
  EvaluationReport r;
  r.num_classes = num_classes;
  r.samples = static_cast<std::int64_t>(preds.size());
  r.confusion.assign(num_classes, {});
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require(preds[i].within(num_classes) && truths[i].within(num_classes),
            "label id outside [0, T)");
    for (ClassId c : preds[i]) {
      if (truths[i].contains(c)) ++r.confusion[c].tp;
      else ++r.confusion[c].fp;
    }
    for (ClassId c : truths[i])
      if (!preds[i].contains(c)) ++r.confusion[c].fn;
  }
  for (auto& cm : r.confusion) cm.tn = r.samples - cm.tp - cm.fp - cm.fn;

  auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  for (const auto& cm : r.confusion) {
    ClassMetrics m;
    m.precision = ratio(cm.tp, cm.tp + cm.fp);
    m.recall = ratio(cm.tp, cm.tp + cm.fn);
    m.accuracy = r.samples == 0 ? 1.0 : ratio(cm.tp + cm.tn, r.samples);
    m.f1 = m.precision + m.recall == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    r.per_class.push_back(m);
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_accuracy += m.accuracy;
    r.macro_f1 += m.f1;
  }
  r.macro_precision /= num_classes;
  r.macro_recall /= num_classes;
  r.macro_accuracy /= num_classes;
  r.macro_f1 /= num_classes;
  return r;
}

std::string report_to_json(const EvaluationReport& r) {
  ordered_json j;
  j["stage"] = r.stage;
  j["dataset_hash"] = r.dataset_hash;
  j["num_classes"] = r.num_classes;
  j["samples"] = r.samples;
  j["mAP"] = r.macro_precision;
  j["mAR"] = r.macro_recall;
  j["mAA"] = r.macro_accuracy;
  j["mAF1"] = r.macro_f1;
  j["mean_loss"] = r.mean_loss ? ordered_json(*r.mean_loss) : ordered_json(nullptr);
  auto classes = ordered_json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    ordered_json row;
    row["class"] = c;
    row["tp"] = r.confusion[c].tp;
    row["fp"] = r.confusion[c].fp;
    row["fn"] = r.confusion[c].fn;
    row["tn"] = r.confusion[c].tn;
    row["precision"] = r.per_class[c].precision;
    row["recall"] = r.per_class[c].recall;
    row["accuracy"] = r.per_class[c].accuracy;
    row["f1"] = r.per_class[c].f1;
    classes.push_back(std::move(row));
  }
  j["per_class"] = std::move(classes);
  return j.dump(2) + "\n";
}

EvaluationReport report_from_json(std::string_view text) {
  try {
    auto j = ordered_json::parse(text);
    EvaluationReport r;
    r.stage = j.at("stage").get<std::string>();
    r.dataset_hash = j.at("dataset_hash").get<std::string>();
    r.num_classes = j.at("num_classes").get<int>();
    r.samples = j.at("samples").get<std::int64_t>();
    r.macro_precision = j.at("mAP").get<double>();
    r.macro_recall = j.at("mAR").get<double>();
    r.macro_accuracy = j.at("mAA").get<double>();
    r.macro_f1 = j.at("mAF1").get<double>();
    if (!j.at("mean_loss").is_null()) r.mean_loss = j.at("mean_loss").get<double>();
    for (const auto& row : j.at("per_class")) {
      r.confusion.push_back({row.at("tp").get<std::int64_t>(), row.at("fp").get<std::int64_t>(),
                             row.at("fn").get<std::int64_t>(), row.at("tn").get<std::int64_t>()});
      r.per_class.push_back({row.at("precision").get<double>(), row.at("recall").get<double>(),
                             row.at("accuracy").get<double>(), row.at("f1").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("report: ") + e.what());
  }
}

std::string format_report(const EvaluationReport& r) {
  std::ostringstream out;
  char line[160];
  out << "stage: " << r.stage << "  samples: " << r.samples << "  dataset: " << r.dataset_hash
      << '\n';
  std::snprintf(line, sizeof line, "%-6s %8s %8s %8s %8s %7s %7s %7s\n", "class", "prec",
                "recall", "acc", "f1", "tp", "fp", "fn");
  out << line;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    const auto& cm = r.confusion[c];
    std::snprintf(line, sizeof line, "%-6zu %8.5f %8.5f %8.5f %8.5f %7lld %7lld %7lld\n", c,
                  m.precision, m.recall, m.accuracy, m.f1, static_cast<long long>(cm.tp),
                  static_cast<long long>(cm.fp), static_cast<long long>(cm.fn));
    out << line;
  }
  std::snprintf(line, sizeof line, "%-6s %8.5f %8.5f %8.5f %8.5f\n", "macro", r.macro_precision,
                r.macro_recall, r.macro_accuracy, r.macro_f1);
  out << line;
  return out.str();
}

ComparisonTable compare_stages(std::span<const EvaluationReport> reports) {
  ComparisonTable table;
  for (const auto& r : reports) {
    ComparisonRow row{r.stage, r.macro_precision, r.macro_recall, r.macro_accuracy, r.macro_f1};
    if (!table.rows.empty()) {
      const auto& base = table.rows.front();
      row.d_map = row.map - base.map;
      row.d_mar = row.mar - base.mar;
      row.d_maa = row.maa - base.maa;
      row.d_maf1 = row.maf1 - base.maf1;
    }
    table.rows.push_back(row);
  }
  return table;
}

std::string format_comparison(const ComparisonTable& table) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %9s %9s %9s %9s\n", "stage", "mAP",
                "mAR", "mAA", "mAF1", "dmAP", "dmAR", "dmAA", "dmAF1");
  out << line;
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof line, "%-24s %8.5f %8.5f %8.5f %8.5f %+9.5f %+9.5f %+9.5f %+9.5f\n",
                  r.stage.c_str(), r.map, r.mar, r.maa, r.maf1, r.d_map, r.d_mar, r.d_maa,
                  r.d_maf1);
    out << line;
  }
  return out.str();
}

std::string comparison_to_json(const ComparisonTable& table) {
  auto rows = ordered_json::array();
  for (const auto& r : table.rows) {
    ordered_json j;
    j["stage"] = r.stage;
    j["mAP"] = r.map;
    j["mAR"] = r.mar;
    j["mAA"] = r.maa;
    j["mAF1"] = r.maf1;
    j["delta_mAP"] = r.d_map;
    j["delta_mAR"] = r.d_mar;
    j["delta_mAA"] = r.d_maa;
    j["delta_mAF1"] = r.d_maf1;
    rows.push_back(std::move(j));
  }
  return rows.dump(2) + "\n";
}

}  // namespace noisyal
