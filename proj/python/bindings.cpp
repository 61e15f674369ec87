#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "equacode/campaign.hpp"
#include "equacode/cli.hpp"
#include "equacode/corpus.hpp"
#include "equacode/defense.hpp"
#include "equacode/error.hpp"
#include "equacode/judge.hpp"
#include "equacode/scoring.hpp"
#include "equacode/serialize.hpp"
#include "equacode/transform.hpp"
#include "equacode/util.hpp"

namespace py = pybind11;
using namespace equacode;

namespace {

std::string prompt_json(const AttackPrompt& prompt) { return to_json(prompt).dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "EquaCode harness core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<StoreError>(m, "StoreError", base.ptr());
  py::register_exception<EndpointError>(m, "EndpointError", base.ptr());

  py::class_<MaliciousQuery>(m, "MaliciousQuery")
      .def(py::init([](std::string id, std::string text, std::optional<std::string> category) {
             return MaliciousQuery{std::move(id), std::move(text), std::move(category), ""};
           }),
           py::arg("id"), py::arg("text"), py::arg("category") = py::none())
      .def_readonly("id", &MaliciousQuery::id)
      .def_readonly("text", &MaliciousQuery::text)
      .def_readonly("category", &MaliciousQuery::category)
      .def("__repr__", [](const MaliciousQuery& q) { return "MaliciousQuery(id=" + q.id + ")"; });

  m.def("load_corpus", [](const std::filesystem::path& path) { return load_corpus(path).entries(); },
        py::arg("path"), "Loads a CSV, JSONL or plain-text corpus.");
  m.def(
      "subset",
      [](const std::vector<MaliciousQuery>& queries, std::size_t n, std::uint64_t seed) {
        return subset(QueryCorpus(queries, {}), n, seed).entries();
      },
      py::arg("queries"), py::arg("n"), py::arg("seed") = 0);

  py::class_<AttackPrompt>(m, "AttackPrompt")
      .def_readonly("rendered", &AttackPrompt::rendered)
      .def_readonly("template_version", &AttackPrompt::template_version)
      .def_readonly("query_id", &AttackPrompt::query_id)
      .def_property_readonly("variant", [](const AttackPrompt& p) { return p.variant.name(); })
      .def("to_json", &prompt_json);

  m.def(
      "render_prompt",
      [](const MaliciousQuery& query, const std::string& variant, const std::string& persona) {
        TransformOptions options;
        options.decompose.persona = persona;
        return render_prompt(query, TransformVariant::parse(variant), options);
      },
      py::arg("query"), py::arg("variant"), py::arg("persona") = "Mark");
  m.def("template_version", [] { return TemplateSet::builtin().version(); });

  py::class_<JudgeVerdict>(m, "JudgeVerdict")
      .def_readonly("score", &JudgeVerdict::score)
      .def_readonly("success", &JudgeVerdict::success)
      .def_readonly("rationale", &JudgeVerdict::rationale)
      .def_readonly("parse_failed", &JudgeVerdict::parse_failed);
  m.def("parse_verdict", &parse_verdict, py::arg("judge_output"), py::arg("judge_model") = "");

  py::class_<AsrResult>(m, "AsrResult")
      .def_readonly("successes", &AsrResult::successes)
      .def_readonly("total", &AsrResult::total)
      .def_readonly("ratio", &AsrResult::ratio)
      .def("percent", &AsrResult::percent);
  m.def("compute_asr", py::overload_cast<std::size_t, std::size_t>(&compute_asr), py::arg("successes"),
        py::arg("total"));
  m.def("format_percent", &format_percent);

  py::class_<PerplexityScore>(m, "PerplexityScore")
      .def_readonly("value", &PerplexityScore::value)
      .def_readonly("token_count", &PerplexityScore::token_count)
      .def_readonly("scorer_id", &PerplexityScore::scorer_id);
  py::class_<NgramScorer>(m, "NgramScorer")
      .def_static(
          "train",
          [](const std::string& corpus, int order, const std::string& tokenization, double k) {
            return NgramScorer::train(corpus, order, parse_tokenization(tokenization), k);
          },
          py::arg("corpus"), py::arg("order") = 3, py::arg("tokenization") = "byte", py::arg("k") = 0.01)
      .def("score", &NgramScorer::score)
      .def_property_readonly("id", &NgramScorer::id)
      .def_property_readonly("vocabulary_size", &NgramScorer::vocabulary_size);
  m.def("perplexity", [](const std::string& text) { return perplexity(default_scorer(), text); }, py::arg("text"),
        "Perplexity under the bundled order-3 byte model.");

  py::class_<FilterDecision>(m, "FilterDecision")
      .def_property_readonly("verdict", [](const FilterDecision& d) { return std::string(to_string(d.verdict)); })
      .def_readonly("filter_id", &FilterDecision::filter_id)
      .def_readonly("reason", &FilterDecision::reason);
  m.def(
      "keyword_filter",
      [](const std::string& prompt, const std::vector<std::string>& lexicon) { return keyword_filter(prompt, lexicon); },
      py::arg("prompt"), py::arg("lexicon"));
  m.def(
      "ppl_filter",
      [](const std::string& prompt, double threshold) { return ppl_filter(prompt, default_scorer(), threshold); },
      py::arg("prompt"), py::arg("threshold"));
  py::class_<BypassReport>(m, "BypassReport")
      .def_readonly("filter_id", &BypassReport::filter_id)
      .def_readonly("total", &BypassReport::total)
      .def_readonly("passed", &BypassReport::passed)
      .def_readonly("errors", &BypassReport::errors)
      .def_readonly("bypass_rate", &BypassReport::bypass_rate);
  m.def("bypass_rate", [](const std::vector<FilterDecision>& d) { return bypass_rate(d); });

  m.def(
      "report",
      [](const std::filesystem::path& store, const std::string& format) {
        const Report report = build_report(TranscriptStore(store));
        return format == "csv" ? report.to_csv() : report.to_text();
      },
      py::arg("store"), py::arg("format") = "text");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr).");
}
