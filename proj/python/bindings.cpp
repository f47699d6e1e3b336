// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "scorediff/error.hpp"
#include "scorediff/metrics.hpp"
#include "scorediff/pipeline.hpp"

namespace py = pybind11;
using namespace scorediff;

namespace {

nlohmann::json to_json(const py::object& obj) {
    const auto dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& doc) {
    return py::module_::import("json").attr("loads")(doc.dump());
}

py::dict video_to_dict(const VideoRecord& v) {
    std::vector<std::vector<double>> rows(v.features.rows);
    for (std::size_t r = 0; r < v.features.rows; ++r)
        rows[r].assign(v.features.values.begin() + static_cast<long>(r * v.features.cols),
                       v.features.values.begin() + static_cast<long>((r + 1) * v.features.cols));
    py::dict d;
    d["id"] = v.id;
    d["fps"] = v.fps;
    d["features"] = rows;
    d["annotations"] = v.annotations;
    return d;
}

FeatureMatrix to_features(const std::vector<std::vector<double>>& rows) {
    FeatureMatrix f(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != f.cols) throw DimensionError("features: ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), f.values.begin() + static_cast<long>(r * f.cols));
    }
    return f;
}

RunConfig config_from(const py::object& config, const py::object& out) {
    nlohmann::json doc = run_config_to_json(RunConfig{});
    if (!config.is_none()) doc.merge_patch(to_json(config));
    if (!out.is_none()) doc["out_dir"] = py::str(out).cast<std::string>();
    return run_config_from_json(doc);
}

template <typename Fn>
std::string run_command(Fn fn, const py::object& config, const py::object& out) {
    const RunConfig cfg = config_from(config, out);
    std::ostringstream log;
    {
        py::gil_scoped_release release;
        fn(cfg, log);
    }
    return log.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Score diffusion for video summarization: knapsack summaries, rank metrics and the training pipeline.";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_RuntimeError);

    // Knapsack
    m.def(
        "solve_kp",
        [](std::vector<double> values, std::vector<std::size_t> weights, std::size_t capacity) {
            const auto y = solve_kp(KPInstance{std::move(values), std::move(weights), capacity});
            return py::make_tuple(y.selection, y.total_value, y.total_weight);
        },
        py::arg("values"), py::arg("weights"), py::arg("capacity"),
        "Exact 0/1 knapsack. Returns (selection, total_value, total_weight).");
    m.def(
        "enumerate_optima",
        [](std::vector<double> values, std::vector<std::size_t> weights, std::size_t capacity, std::size_t limit) {
            const auto set = enumerate_optima(KPInstance{std::move(values), std::move(weights), capacity}, limit);
            std::vector<std::vector<std::uint8_t>> sel;
            for (const auto& s : set.solutions) sel.push_back(s.selection);
            return py::make_tuple(sel, set.optimal_value, set.truncated);
        },
        py::arg("values"), py::arg("weights"), py::arg("capacity"), py::arg("limit") = 1u << 20);
    m.def("budget_capacity", &budget_capacity, py::arg("rho"), py::arg("n"));
    m.def(
        "generate_summary",
        [](const ScoreVector& scores, const std::vector<std::size_t>& boundaries, double rho) {
            return generate_summary(scores, SegmentList{boundaries}, rho).frames;
        },
        py::arg("scores"), py::arg("boundaries"), py::arg("rho") = 0.15);
    m.def(
        "kts_segment",
        [](const std::vector<std::vector<double>>& features, std::size_t max_segments, double penalty) {
            return kts_segment(to_features(features), max_segments, penalty).boundaries;
        },
        py::arg("features"), py::arg("max_segments") = 20, py::arg("penalty") = 1.0, "Segment boundaries [0, ..., N].");

    // Metrics
    m.def("kendall_tau", [](const std::vector<double>& a, const std::vector<double>& b) { return kendall_tau(a, b); });
    m.def("spearman_rho", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman_rho(a, b); });
    m.def(
        "map_at_rho",
        [](const std::vector<double>& pred, const std::vector<double>& gt, double fps, double rho) {
            return map_at_rho(pred, gt, fps, rho);
        },
        py::arg("pred"), py::arg("gt"), py::arg("fps"), py::arg("rho"));
    m.def(
        "sensitivity",
        [](std::vector<double> values, std::vector<std::size_t> weights, std::size_t capacity, const std::vector<double>& predicted) {
            const auto ctx = make_sensitivity_context(KPInstance{std::move(values), std::move(weights), capacity}, predicted);
            const auto iv = inclusion_intervals(ctx);
            py::dict d;
            d["cis"] = cis(ctx);
            d["wir"] = wir(ctx, iv);
            d["wse"] = wse(ctx);
            std::vector<std::pair<double, double>> bounds;
            for (const auto& i : iv) bounds.emplace_back(i.lower, i.upper);
            d["intervals"] = bounds;
            d["optimum"] = ctx.optimum.selection;
            return d;
        },
        py::arg("values"), py::arg("weights"), py::arg("capacity"), py::arg("predicted"),
        "CIS, WIR, WSE and the safe intervals of a predicted clip-value vector.");

    // Data
    m.def(
        "synth_generate",
        [](const py::object& config) {
            py::dict doc;
            doc["synth"] = config.is_none() ? py::dict() : config;
            const RunConfig cfg = config_from(doc, py::none());
            py::list videos;
            for (const auto& v : synth_generate(cfg.synth.data).videos) videos.append(video_to_dict(v));
            return videos;
        },
        py::arg("config") = py::none(), "Synthetic multi-annotator videos; config keys as in the synth section.");
    m.def("load_dataset", [](const std::filesystem::path& p) {
        py::list videos;
        for (const auto& v : load_dataset(p)) videos.append(video_to_dict(v));
        return videos;
    });

    // Pipeline commands; each returns its log text.
    m.def("default_config", [] { return from_json(run_config_to_json(RunConfig{})); });
    m.def("cmd_synth", [](const py::object& c, const py::object& o) { return run_command(cmd_synth, c, o); },
          py::arg("config") = py::none(), py::arg("out") = py::none());
    m.def("cmd_train", [](const py::object& c, const py::object& o) { return run_command(cmd_train, c, o); },
          py::arg("config") = py::none(), py::arg("out") = py::none());
    m.def("cmd_sample", [](const py::object& c, const py::object& o) { return run_command(cmd_sample, c, o); },
          py::arg("config") = py::none(), py::arg("out") = py::none());
    m.def("cmd_evaluate", [](const py::object& c, const py::object& o) { return run_command(cmd_evaluate, c, o); },
          py::arg("config") = py::none(), py::arg("out") = py::none());
    m.def("cmd_kp_study", [](const py::object& c, const py::object& o) { return run_command(cmd_kp_study, c, o); },
          py::arg("config") = py::none(), py::arg("out") = py::none());
}
