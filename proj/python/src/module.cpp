#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "occupred/eval.hpp"
#include "occupred/judge.hpp"
#include "occupred/objectives.hpp"
#include "occupred/output_format.hpp"
#include "occupred/pipeline.hpp"
#include "occupred/taxonomy.hpp"

namespace py = pybind11;
using namespace occupred;

namespace {

py::dict scores_dict(const RationalityScores& s) {
  py::dict d;
  d["fact"] = s.fact;
  d["cohr"] = s.cohr;
  d["util"] = s.util;
  return d;
}

std::vector<PredictionRecord> records_from(const std::vector<std::pair<std::string, std::optional<std::string>>>& rows) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    PredictionRecord r;
    r.user_id = std::to_string(i);
    r.truth = {rows[i].first, ""};
    if (rows[i].second) r.predicted = OccupationEntry{*rows[i].second, ""};
    out.push_back(std::move(r));
  }
  return out;
}

py::object json_to_py(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core routines for reason-augmented next-occupation prediction";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MissingStage>(m, "MissingStage", base.ptr());
  py::register_exception<DigestMismatch>(m, "DigestMismatch", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());

  m.def("version", &tool_version);
  m.def("stage_names", &stage_names);

  py::class_<OccupationEntry>(m, "Occupation")
      .def_readonly("code", &OccupationEntry::code)
      .def_readonly("title", &OccupationEntry::title)
      .def("__repr__", [](const OccupationEntry& e) { return "Occupation(" + e.code + ", " + e.title + ")"; });

  py::class_<OccupationTaxonomy>(m, "Taxonomy")
      .def_static("load", &load_taxonomy, py::arg("occupations"), py::arg("related"))
      .def_static("fixture", &fixture_taxonomy)
      .def("__len__", &OccupationTaxonomy::size)
      .def("__contains__", &OccupationTaxonomy::contains)
      .def("normalize_title", &OccupationTaxonomy::normalize_title)
      .def("related_rank", &OccupationTaxonomy::related_rank, py::arg("truth"), py::arg("predicted"))
      .def("related", [](const OccupationTaxonomy& t, const std::string& code) { return t.related(code).ranked; })
      .def("codes", [](const OccupationTaxonomy& t) {
        std::vector<std::string> out;
        for (const auto& e : t.entries()) out.push_back(e.code);
        return out;
      });

  // rows are (truth_code, predicted_code or None)
  m.def("acc_em", [](const std::vector<std::pair<std::string, std::optional<std::string>>>& rows) {
    return acc_em(records_from(rows));
  });
  m.def("acc_rm", [](const std::vector<std::pair<std::string, std::optional<std::string>>>& rows,
                     const OccupationTaxonomy& tax) { return acc_rm(records_from(rows), tax); });

  m.def("mcnemar", [](std::size_t b, std::size_t c, std::size_t n_comparisons, double alpha) {
    return json_to_py(to_json(mcnemar(ContingencyTable{b, c, 0, 0}, n_comparisons, alpha)));
  }, py::arg("b"), py::arg("c"), py::arg("n_comparisons") = 1, py::arg("alpha") = 0.05);

  m.def("metric_tokens", &metric_tokens);
  m.def("bleu", &bleu, py::arg("candidate"), py::arg("reference"));
  m.def("rouge_n", &rouge_n, py::arg("candidate"), py::arg("reference"), py::arg("n"));
  m.def("rouge_l", &rouge_l, py::arg("candidate"), py::arg("reference"));

  m.def("dpo_loss", [](double pp, double pn, double rp, double rn, double beta) {
    return dpo_loss({pp, pn, rp, rn}, beta);
  }, py::arg("policy_pos"), py::arg("policy_neg"), py::arg("ref_pos"), py::arg("ref_neg"), py::arg("beta") = 0.1);
  m.def("dpo_margin", [](double pp, double pn, double rp, double rn) { return dpo_margin({pp, pn, rp, rn}); },
        py::arg("policy_pos"), py::arg("policy_neg"), py::arg("ref_pos"), py::arg("ref_neg"));
  m.def("dpo_loss_grad", [](double pp, double pn, double rp, double rn, double beta) {
    return dpo_loss_grad_policy_pos({pp, pn, rp, rn}, beta);
  }, py::arg("policy_pos"), py::arg("policy_neg"), py::arg("ref_pos"), py::arg("ref_neg"), py::arg("beta") = 0.1);

  m.def("parse_judge_output", [](const std::string& text) -> py::object {
    const auto s = parse_judge_output(text);
    if (!s) return py::none();
    return scores_dict(*s);
  });
  m.def("passes_threshold", [](double fact, double cohr, double util, double tau) {
    return passes_threshold(RationalityScores{fact, cohr, util, {}, {}}, tau);
  }, py::arg("fact"), py::arg("cohr"), py::arg("util"), py::arg("tau") = 4.0);

  m.def("parse_output", [](const std::string& text, const std::string& mode) {
    const auto om = mode == "joint" ? OutputMode::joint
                    : mode == "reason" ? OutputMode::reason_only
                    : mode == "prediction" ? OutputMode::prediction_only
                    : throw InvalidArgument("mode must be joint, reason or prediction");
    const auto p = parse_model_output(text, om);
    return std::make_pair(p.reason, p.raw_prediction);
  }, py::arg("text"), py::arg("mode") = "joint");

  m.def("run_stage", [](const std::string& stage, std::optional<std::filesystem::path> config,
                        std::string run_id, std::optional<std::filesystem::path> runs_dir,
                        std::optional<std::filesystem::path> mock, bool force) {
    RunConfig cfg = config ? RunConfig::load(*config) : RunConfig{};
    if (runs_dir) cfg.runs_dir = *runs_dir;
    RunOptions opt;
    opt.run_id = std::move(run_id);
    opt.force = force;
    opt.mock_playbook = std::move(mock);
    StageOutcome out;
    {
      py::gil_scoped_release release;
      out = Pipeline(cfg, opt).run(stage);
    }
    py::dict d;
    d["stage"] = out.stage;
    d["skipped"] = out.skipped;
    d["dir"] = out.dir.string();
    d["outputs"] = out.outputs;
    d["backend_calls"] = out.calls.backend_calls;
    return d;
  }, py::arg("stage"), py::arg("config") = py::none(), py::arg("run_id") = "default",
     py::arg("runs_dir") = py::none(), py::arg("mock") = py::none(), py::arg("force") = false);
}
