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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ttepcp/cohort.hpp"
#include "ttepcp/logistic.hpp"

namespace ttepcp {

inline const std::string kInterceptName = "(intercept)";

/// Reference-coded design; column 0 is the intercept when requested.
struct DesignMatrix {
    Eigen::MatrixXd X;
    std::vector<std::string> names;
};

/// Numeric covariates become one column; categorical covariates one column
/// per non-reference level, named "covariate=level". Throws SchemaError for
/// a missing covariate or undeclared level. A constant non-intercept column
/// is a DegenerateDesignError unless `dropped` is given, in which case the
/// column is removed and its name appended there.
DesignMatrix build_design(std::span<const CohortRow> rows, const std::vector<std::string>& covariates,
                          bool intercept = true, std::vector<std::string>* dropped = nullptr);

/// 1 for metformin, 0 for sulfonylurea.
Eigen::VectorXd treatment_vector(std::span<const CohortRow> rows);

struct WeightOptions {
    /// Cap weights at this percentile (0, 100]; none by default.
    std::optional<double> cap_percentile;
};

/// Stabilized ATE weights: p̄/e for treated, (1-p̄)/(1-e) for controls.
/// Throws PositivityError if any score is 0 or 1.
Eigen::VectorXd stabilized_weights(const Eigen::VectorXd& scores, const Eigen::VectorXd& treatment,
                                   const WeightOptions& options = {});
Eigen::VectorXd stabilized_weights(const LogisticFit& fit, const Eigen::VectorXd& treatment,
                                   const WeightOptions& options = {});

struct PropensityHistogram {
    std::vector<double> edges;                        // n_bins + 1
    std::array<std::vector<std::int64_t>, 2> counts;  // indexed by Arm
};

/// Bins are [k/n, (k+1)/n) with the last closed. UsageError if n_bins < 2.
PropensityHistogram propensity_histogram(const Eigen::VectorXd& scores, const Eigen::VectorXd& treatment, int n_bins);

/// Per column, |weighted mean(treated) - weighted mean(control)|.
Eigen::VectorXd mean_differences(const Eigen::MatrixXd& X, const Eigen::VectorXd& treatment,
                                 const Eigen::VectorXd& weights);

/// Type-1 empirical quantile: the ceil(n*q)-th smallest value, q in [0, 1].
double empirical_quantile(std::vector<double> values, double q);

void write_histogram_csv(const std::string& path, const PropensityHistogram& histogram);
void write_weights_csv(const std::string& path, std::span<const CohortRow> rows, const Eigen::VectorXd& scores,
                       const Eigen::VectorXd& weights);
nlohmann::json propensity_summary_json(const DesignMatrix& design, const LogisticFit& fit,
                                       const Eigen::VectorXd& treatment, const Eigen::VectorXd& weights);

}  // namespace ttepcp
