// Thin Python surface over the core library. Label sets cross the boundary as
// lists of ints; datasets stay opaque apart from a few read-only views.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "noisyal/error.hpp"
#include "noisyal/experiments.hpp"
#include "noisyal/loss.hpp"
#include "noisyal/manifest.hpp"
#include "noisyal/rng.hpp"
#include "noisyal/sampling.hpp"

namespace py = pybind11;
using namespace noisyal;

namespace {

std::vector<LabelSet> to_sets(const std::vector<std::vector<int>>& raw) {
  std::vector<LabelSet> out;
  out.reserve(raw.size());
  for (const auto& ids : raw) out.emplace_back(ids);
  return out;
}

std::vector<EpistemicScore> to_scores(const std::vector<std::pair<SampleId, double>>& raw) {
  std::vector<EpistemicScore> out;
  for (const auto& [id, s] : raw) out.push_back({id, s});
  return out;
}

}  // namespace

PYBIND11_MODULE(_noisyal, m) {
  m.doc() = "Noisy-label active learning and self-training core";

  py::register_exception<Error>(m, "NoisyalError", PyExc_RuntimeError);

  py::class_<NoiseSpec>(m, "NoiseSpec")
      .def(py::init<>())
      .def_readwrite("p_absent", &NoiseSpec::p_absent)
      .def_readwrite("p_spurious", &NoiseSpec::p_spurious)
      .def_readwrite("imbalance_exponent", &NoiseSpec::imbalance_exponent)
      .def_readwrite("groups", &NoiseSpec::groups)
      .def_readwrite("frames_min", &NoiseSpec::frames_min)
      .def_readwrite("frames_max", &NoiseSpec::frames_max)
      .def_readwrite("signal_scale", &NoiseSpec::signal_scale)
      .def_readwrite("feature_noise", &NoiseSpec::feature_noise)
      .def_readwrite("installed_cue_scale", &NoiseSpec::installed_cue_scale);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("num_classes", &Dataset::num_classes)
      .def_property_readonly("feature_dim", &Dataset::feature_dim)
      .def("__len__", &Dataset::size)
      .def("sample_ids", [](const Dataset& ds) {
        std::vector<SampleId> ids;
        for (const Sample& s : ds.samples()) ids.push_back(s.sample_id);
        return ids;
      })
      .def("features", [](const Dataset& ds, SampleId id) { return ds.by_id(id).features; })
      .def("assigned_labels", [](const Dataset& ds, SampleId id) { return ds.by_id(id).assigned_labels.ids(); })
      .def("true_labels", [](const Dataset& ds, SampleId id) { return ds.by_id(id).true_labels.ids(); })
      .def("group", [](const Dataset& ds, SampleId id) { return ds.by_id(id).group_id; })
      .def("class_distribution", [](const Dataset& ds) { return class_distribution(ds); })
      .def("noisy_fraction", [](const Dataset& ds) { return noisy_fraction(ds); })
      .def("to_manifest", [](const Dataset& ds) { return format_manifest(ds); })
      .def_static("from_manifest", [](const std::string& text) { return parse_manifest(text); });

  m.def("generate_synthetic", &generate_synthetic, py::arg("spec"), py::arg("feature_dim"), py::arg("num_classes"),
        py::arg("seed"));
  m.def(
      "group_aware_split",
      [](const Dataset& ds, double test_fraction, std::uint64_t seed) {
        const DataSplit s = group_aware_split(ds, test_fraction, seed);
        return py::make_tuple(s.train_ids, s.test_ids);
      },
      py::arg("dataset"), py::arg("test_fraction"), py::arg("seed"));
  m.def("derive_seed", &derive_seed);

  m.def("sigmoid", &sigmoid);
  m.def("hard_targets", [](const std::vector<int>& labels, int t) { return hard_targets(LabelSet(labels), t); });
  m.def("smooth_targets",
        [](const std::vector<int>& labels, double p, int t) { return smooth_targets(LabelSet(labels), p, t); });
  m.def(
      "bce_loss",
      [](const std::vector<double>& logits, const std::vector<double>& target) {
        const auto r = bce_loss(logits, target);
        return py::make_tuple(r.loss, r.gradient);
      },
      "Mean binary cross-entropy over classes and its gradient in the logits.");

  m.def("compute_class_weights", [](const std::vector<std::int64_t>& counts) { return compute_class_weights(counts); });
  m.def("top3_decision", [](const std::vector<double>& p) { return top3_decision(p).ids(); });
  m.def(
      "select_topk",
      [](const std::vector<std::pair<SampleId, double>>& scores, std::size_t k) {
        return select_topk(to_scores(scores), k);
      },
      "Ids of the k highest (id, score) pairs; ties go to the lower id.");

  py::class_<EvaluationReport>(m, "EvaluationReport")
      .def_readonly("num_classes", &EvaluationReport::num_classes)
      .def_readonly("samples", &EvaluationReport::samples)
      .def_readonly("macro_precision", &EvaluationReport::macro_precision)
      .def_readonly("macro_recall", &EvaluationReport::macro_recall)
      .def_readonly("macro_accuracy", &EvaluationReport::macro_accuracy)
      .def_readonly("macro_f1", &EvaluationReport::macro_f1)
      .def_property_readonly("per_class_f1",
                             [](const EvaluationReport& r) {
                               std::vector<double> f1;
                               for (const auto& c : r.per_class) f1.push_back(c.f1);
                               return f1;
                             })
      .def("to_json", [](const EvaluationReport& r) { return report_to_json(r); });

  m.def(
      "evaluate",
      [](const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& truths, int t) {
        const auto p = to_sets(preds), y = to_sets(truths);
        return evaluate(p, y, t);
      },
      py::arg("preds"), py::arg("truths"), py::arg("num_classes"));

  m.def("trend_slope", [](const std::vector<double>& trace) { return trend_test(trace).slope; });

  py::class_<LadderResult>(m, "LadderResult")
      .def_readonly("seed", &LadderResult::seed)
      .def_readonly("baseline_noisy", &LadderResult::baseline_noisy)
      .def_readonly("effort_trace", &LadderResult::effort_trace)
      .def("report", [](const LadderResult& l, const std::string& name) { return stage_report(l, name); });

  py::class_<BenchmarkConfig>(m, "BenchmarkConfig")
      .def(py::init<>())
      .def_readwrite("noise", &BenchmarkConfig::noise)
      .def_readwrite("feature_dim", &BenchmarkConfig::feature_dim)
      .def_readwrite("num_classes", &BenchmarkConfig::num_classes)
      .def_readwrite("member_hidden", &BenchmarkConfig::member_hidden)
      .def_property(
          "epochs", [](const BenchmarkConfig& c) { return c.schedule.phase1_epochs; },
          [](BenchmarkConfig& c, int n) {
            // One knob for every two-phase schedule; handy for quick runs.
            c.schedule.phase1_epochs = c.schedule.phase2_epochs = n;
            c.teacher_schedule = c.schedule;
            c.student.schedule = c.schedule;
          })
      .def_property(
          "k_target", [](const BenchmarkConfig& c) { return c.al.k_target; },
          [](BenchmarkConfig& c, std::size_t k) { c.al.k_target = k; })
      .def_property(
          "per_iteration", [](const BenchmarkConfig& c) { return c.al.per_iteration; },
          [](BenchmarkConfig& c, std::size_t k) { c.al.per_iteration = k; });

  m.def("benchmark_names", &benchmark_names);
  m.def("run_ladder", &run_ladder, py::arg("config"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
}
