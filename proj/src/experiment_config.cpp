// Copyright 2026 The ttepcp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>

#include "ttepcp/codesets.hpp"
#include "ttepcp/config_reader.hpp"
#include "ttepcp/experiment.hpp"

namespace ttepcp {

namespace {

constexpr std::string_view kBuiltinPrefix = "builtin:";

bool is_builtin(const std::string& path) { return path.rfind(kBuiltinPrefix, 0) == 0; }

std::string resolve(const std::string& path, const std::string& base_dir)
{
    if (path.empty() || is_builtin(path) || base_dir.empty() || std::filesystem::path(path).is_absolute())
        return path;
    return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

CodeSet load_codeset_field(const std::string& path, const std::string& field)
{
    try {
        if (is_builtin(path))
            return builtin_codeset(path.substr(kBuiltinPrefix.size()));
        return load_codeset(path);
    } catch (const UsageError& e) {
        throw ConfigError(field, e.what());
    } catch (const IoError& e) {
        throw ConfigError(field, e.what());
    } catch (const ParseError& e) {
        throw ConfigError(field, e.what());
    }
}

std::string_view to_string(TieMethod t) { return t == TieMethod::efron ? "efron" : "breslow"; }

}  // namespace

ExperimentConfig validate_config(const nlohmann::json& doc, const std::string& base_dir)
{
    ExperimentConfig c;
    ConfigReader r{doc, ""};

    if (r.has("input")) {
        auto in = r.child("input");
        std::string mode = "simulate";
        in.read("mode", mode);
        if (mode == "simulate")
            c.input = InputMode::simulate;
        else if (mode == "corpus")
            c.input = InputMode::corpus;
        else
            throw ConfigError("input.mode", "must be \"simulate\" or \"corpus\"");
        if (in.has("simulation"))
            c.simulation = gen_config_from_json(in.at("simulation"), "input.simulation");
        in.read("corpus_path", c.corpus_path);
        in.finish();
        c.corpus_path = resolve(c.corpus_path, base_dir);
        require(c.input != InputMode::corpus || !c.corpus_path.empty(), "input.corpus_path",
                "required when input.mode is \"corpus\"");
    }

    if (r.has("codesets")) {
        auto cs = r.child("codesets");
        cs.read("outcome", c.outcome_codeset_path);
        cs.read("covariates", c.covariate_codeset_paths);
        cs.finish();
    }
    c.outcome_codeset_path = resolve(c.outcome_codeset_path, base_dir);
    for (auto& p : c.covariate_codeset_paths)
        p = resolve(p, base_dir);

    if (r.has("pcp_labels")) {
        auto pl = r.child("pcp_labels");
        PcpConfig labels = PcpConfig::defaults();
        pl.read("procedure_codes", labels.procedure_codes);
        pl.read("service_lines", labels.service_lines);
        pl.read("reasons", labels.reasons);
        pl.finish();
        require(!labels.procedure_codes.empty() || !labels.service_lines.empty() || !labels.reasons.empty(),
                "pcp_labels", "at least one label set must be nonempty");
        c.pcp_labels = labels;
    }

    auto& e = c.eligibility;
    if (r.has("eligibility")) {
        auto el = r.child("eligibility");
        el.read("study_start", e.study_start);
        el.read("study_end", e.study_end);
        el.read("min_age_at_baseline", e.min_age_at_baseline);
        el.read("lookback_days", e.lookback_days);
        el.finish();
    }
    if (!c.outcome_codeset_path.empty())
        e.outcome_codeset = load_codeset_field(c.outcome_codeset_path, "codesets.outcome");
    if (!c.covariate_codeset_paths.empty()) {
        e.covariate_codesets.clear();
        for (std::size_t k = 0; k < c.covariate_codeset_paths.size(); ++k)
            e.covariate_codesets.push_back(
                load_codeset_field(c.covariate_codeset_paths[k], "codesets.covariates[" + std::to_string(k) + "]"));
    }
    if (c.pcp_labels)
        e.pcp = *c.pcp_labels;
    e.pcp.normalize();
    validate(e);

    if (r.has("strategies")) {
        std::vector<std::string> names;
        r.read("strategies", names);
        require(!names.empty(), "strategies", "at least one strategy is required");
        c.strategies.clear();
        for (const auto& n : names) {
            Strategy s;
            try {
                s = parse_strategy(n);
            } catch (const ParseError& err) {
                throw ConfigError("strategies", err.what());
            }
            require(std::find(c.strategies.begin(), c.strategies.end(), s) == c.strategies.end(), "strategies",
                    "duplicate strategy " + n);
            c.strategies.push_back(s);
        }
    }

    auto& a = c.analysis;
    if (r.has("bootstrap")) {
        auto b = r.child("bootstrap");
        std::int64_t reps = a.bootstrap_reps;
        b.read("n_reps", reps);
        require(reps == 0 || (reps >= 2 && reps <= 100000), "bootstrap.n_reps", "must be 0 (disabled) or in [2, 100000]");
        a.bootstrap_reps = static_cast<int>(reps);
        b.read("seed", a.bootstrap_seed);
        b.finish();
    }
    if (r.has("analysis")) {
        auto an = r.child("analysis");
        an.read("weighted_cox", a.weighted_cox);
        std::string ties = "efron";
        an.read("ties", ties);
        if (ties == "efron")
            a.ties = TieMethod::efron;
        else if (ties == "breslow")
            a.ties = TieMethod::breslow;
        else
            throw ConfigError("analysis.ties", "must be \"efron\" or \"breslow\"");
        if (an.has("weight_cap_percentile")) {
            double cap = 0;
            an.read("weight_cap_percentile", cap);
            require(cap > 0 && cap <= 100, "analysis.weight_cap_percentile", "must be in (0, 100]");
            a.weight_cap_percentile = cap;
        }
        an.read("histogram_bins", a.histogram_bins);
        require(a.histogram_bins >= 2, "analysis.histogram_bins", "must be at least 2");
        an.read("rd_horizon_days", a.rd_horizon_days);
        require(a.rd_horizon_days > 0, "analysis.rd_horizon_days", "must be positive");
        an.read("rd_grid_step_days", a.rd_grid_step_days);
        require(a.rd_grid_step_days > 0, "analysis.rd_grid_step_days", "must be positive");
        an.read("rd_grid_max_days", a.rd_grid_max_days);
        require(a.rd_grid_max_days >= a.rd_grid_step_days, "analysis.rd_grid_max_days",
                "must be at least rd_grid_step_days");
        an.finish();
    }
    r.read("output_dir", c.output_dir);
    require(!c.output_dir.empty(), "output_dir", "must be nonempty");
    c.output_dir = resolve(c.output_dir, base_dir);
    r.finish();
    return c;
}

nlohmann::json to_json(const ExperimentConfig& c)
{
    nlohmann::json input{{"mode", c.input == InputMode::simulate ? "simulate" : "corpus"}};
    if (c.input == InputMode::simulate)
        input["simulation"] = to_json(c.simulation);
    else
        input["corpus_path"] = c.corpus_path;

    std::vector<std::string> covariate_sets;
    for (const auto& cs : c.eligibility.covariate_codesets)
        covariate_sets.push_back(cs.name());
    nlohmann::json codesets{{"outcome", c.outcome_codeset_path.empty() ? nlohmann::json("builtin:adrd")
                                                                       : nlohmann::json(c.outcome_codeset_path)}};
    if (c.covariate_codeset_paths.empty()) {
        nlohmann::json builtins = nlohmann::json::array();
        for (const auto& n : covariate_sets)
            builtins.push_back("builtin:" + n);
        codesets["covariates"] = builtins;
    } else {
        codesets["covariates"] = c.covariate_codeset_paths;
    }

    const auto& e = c.eligibility;
    std::vector<std::string> strategies;
    for (auto s : c.strategies)
        strategies.emplace_back(to_string(s));
    const auto& a = c.analysis;
    return {{"input", input},
            {"codesets", codesets},
            {"pcp_labels",
             {{"procedure_codes", e.pcp.procedure_codes},
              {"service_lines", e.pcp.service_lines},
              {"reasons", e.pcp.reasons}}},
            {"eligibility",
             {{"study_start", e.study_start.iso()},
              {"study_end", e.study_end.iso()},
              {"min_age_at_baseline", e.min_age_at_baseline},
              {"lookback_days", e.lookback_days}}},
            {"strategies", strategies},
            {"bootstrap", {{"n_reps", a.bootstrap_reps}, {"seed", a.bootstrap_seed}}},
            {"analysis",
             {{"weighted_cox", a.weighted_cox},
              {"ties", to_string(a.ties)},
              {"weight_cap_percentile",
               a.weight_cap_percentile ? nlohmann::json(*a.weight_cap_percentile) : nlohmann::json(nullptr)},
              {"histogram_bins", a.histogram_bins},
              {"rd_horizon_days", a.rd_horizon_days},
              {"rd_grid_step_days", a.rd_grid_step_days},
              {"rd_grid_max_days", a.rd_grid_max_days}}},
            {"output_dir", c.output_dir}};
}

}  // namespace ttepcp
