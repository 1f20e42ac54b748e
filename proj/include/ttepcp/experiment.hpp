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

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttepcp/cohort.hpp"
#include "ttepcp/propensity.hpp"
#include "ttepcp/simulator.hpp"
#include "ttepcp/survival.hpp"

namespace ttepcp {

enum class InputMode : std::uint8_t { simulate, corpus };

struct AnalysisOptions {
    int bootstrap_reps = 200;
    std::uint64_t bootstrap_seed = 1;
    bool weighted_cox = false;
    TieMethod ties = TieMethod::efron;
    std::optional<double> weight_cap_percentile;
    int histogram_bins = 20;
    std::int32_t rd_horizon_days = kTenYearDays;
    std::int32_t rd_grid_step_days = 30;
    std::int32_t rd_grid_max_days = 5490;
    /// Summary, Venn and rate tables; off for estimation-only runs.
    bool tables = true;
};

struct ExperimentConfig {
    InputMode input = InputMode::simulate;
    GenConfig simulation = GenConfig::defaults();
    std::string corpus_path;
    std::string outcome_codeset_path;                // empty: built-in ADRD codeset
    std::vector<std::string> covariate_codeset_paths;  // empty: built-in comorbidity codesets
    std::optional<PcpConfig> pcp_labels;             // empty: built-in labels
    EligibilityConfig eligibility = EligibilityConfig::defaults();
    std::vector<Strategy> strategies{Strategy::B, Strategy::M, Strategy::E};
    AnalysisOptions analysis;
    std::string output_dir = "ttepcp_out";
};

/// Fills defaults and validates; unknown fields and violated constraints
/// raise ConfigError naming the field. Relative paths resolve against
/// `base_dir` when given. Codesets are loaded here.
ExperimentConfig validate_config(const nlohmann::json& document, const std::string& base_dir = "");
nlohmann::json to_json(const ExperimentConfig& config);

/// Everything one strategy produces, before any file is written.
struct StrategyAnalysis {
    Strategy strategy = Strategy::B;
    StrategyResult data;
    DesignMatrix design;
    LogisticFit propensity;
    Eigen::VectorXd treatment;
    Eigen::VectorXd weights;
    CoxResult cox;
    std::vector<ForestRow> forest;
    std::array<std::array<CifCurve, 2>, 2> cif;  // [cause][arm]; cause 0 adrd, arm 0 metformin
    std::array<RdEstimate, 2> rd;                // per cause at the horizon
    std::vector<std::int32_t> grid;
    std::array<std::vector<double>, 2> rd_grid, rd_grid_lower, rd_grid_upper;
    int bootstrap_reps = 0;
    int bootstrap_skipped = 0;
    std::vector<std::string> notes;

    std::optional<SummaryTable> by_pcp, by_arm;
    std::optional<VennCounts> venn;
    std::optional<PropensityHistogram> histogram;
};

/// Strategy selection, propensity model, weights, Cox fit, weighted CIFs,
/// risk differences and (when bootstrap_reps > 0) the full-pipeline bootstrap.
StrategyAnalysis analyze_strategy(std::span<const CohortRow> rows, const std::vector<std::string>& covariates,
                                  Strategy strategy, const AnalysisOptions& options);

struct RunManifest {
    nlohmann::json config;
    std::string input_hash;
    std::uint64_t seed = 0;
    std::string version;
    std::map<std::string, std::vector<std::string>> outputs;  // strategy (or "run") -> relative paths
    std::map<std::string, std::string> errors;                // strategy -> message
    std::map<std::string, std::string> file_hashes;           // relative path -> SHA-256
    double elapsed_seconds = 0;                               // not written to disk

    nlohmann::json to_json() const;
};

/// Runs every strategy on one corpus and writes the outputs. A failing
/// strategy has its directory removed and its error recorded; the others
/// proceed. Throws only for failures shared by all strategies.
RunManifest run_experiment(const ExperimentConfig& config);

/// Simulates the corpus and ground truth to `out_dir` (corpus.jsonl, ground_truth.jsonl, config.json).
void write_simulation(const GenConfig& config, const std::string& out_dir);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);
std::string version_string();

}  // namespace ttepcp
