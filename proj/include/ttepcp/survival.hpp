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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ttepcp/cohort.hpp"
#include "ttepcp/cox.hpp"
#include "ttepcp/propensity.hpp"

namespace ttepcp {

struct PiecewiseHazard;

inline constexpr std::int32_t kTenYearDays = 3652;

// ---- Cox on cohort rows

inline const std::string kTreatmentName = "treatment=metformin";

struct CoxResult {
    CoxFit fit;
    std::vector<std::string> names;  // treatment first, then design columns
};

/// Cause-specific ADRD model: deaths without dementia are censored at their
/// time. `weights`, when given, makes the fit weighted with a robust
/// sandwich covariance.
CoxResult fit_cox(std::span<const CohortRow> rows, const std::vector<std::string>& covariates,
                  const Eigen::VectorXd* weights = nullptr, TieMethod ties = TieMethod::efron);
/// Same model on a prebuilt covariate design without intercept.
CoxResult fit_cox(std::span<const CohortRow> rows, const DesignMatrix& design, const Eigen::VectorXd* weights = nullptr,
                  TieMethod ties = TieMethod::efron);

struct ForestRow {
    std::string name;
    double log_hr = 0;
    double se = 0;
    double hr = 1;
    double ci_lower = 1;
    double ci_upper = 1;
    double p_value = 1;
};

/// Treatment first, then covariates in design order. Wald 95% intervals.
std::vector<ForestRow> forest_table(const CoxResult& result);

// ---- Competing risks

enum class Cause : std::uint8_t { adrd = 1, death_without_dementia = 2 };
std::string_view to_string(Cause c);

/// Aalen-Johansen estimate for both causes on a common grid of distinct
/// event times. Right-continuous step functions.
struct CompetingRisks {
    std::vector<std::int32_t> times;
    std::vector<double> survival;
    std::array<std::vector<double>, 2> incidence;  // [0] adrd, [1] death_without_dementia
};

struct CifCurve {
    Cause cause = Cause::adrd;
    std::vector<std::int32_t> times;
    std::vector<double> incidence;
    std::vector<double> survival;
    std::optional<std::vector<double>> lower, upper;  // bootstrap band at `times`

    /// Last-value-carried-forward evaluation; 0 before the first time.
    double at(std::int32_t t) const;
    double survival_at(std::int32_t t) const;
};

/// `cause` per subject: 0 censored, 1 adrd, 2 death without dementia.
/// Weights must be nonnegative; zero-weight subjects are ignored.
CompetingRisks aalen_johansen(std::span<const std::int32_t> time, std::span<const std::uint8_t> cause,
                              std::span<const double> weight);

CifCurve aalen_johansen(std::span<const CohortRow> rows, const Eigen::VectorXd& weights, Cause cause);
CifCurve extract_cause(const CompetingRisks& cr, Cause cause);

/// Evaluates a cause's incidence from `cr` at `t` (step function).
double incidence_at(const CompetingRisks& cr, Cause cause, std::int32_t t);

struct RdEstimate {
    std::int32_t horizon_days = kTenYearDays;
    double point = 0;
    std::optional<double> ci_lower, ci_upper;
    int n_bootstrap = 0;
    int n_skipped = 0;
};

/// CIF_treat(h) - CIF_ctrl(h).
RdEstimate risk_difference(const CifCurve& treat, const CifCurve& ctrl, std::int32_t horizon_days = kTenYearDays);

// ---- Bootstrap

struct BootstrapOptions {
    int n_reps = 200;
    std::uint64_t seed = 1;
    double max_skip_fraction = 0.10;
};

/// Statistics of one replicate given per-subject multiplicities; throw
/// DegenerateCohortError to have the replicate skipped.
using BootstrapAnalysis = std::function<std::vector<double>(const Eigen::VectorXd& multiplicity)>;

struct BootstrapResult {
    int n_reps = 0;
    int n_skipped = 0;
    std::vector<std::vector<double>> replicates;  // successful replicates only
    std::vector<double> lower, upper;             // 2.5% / 97.5% per statistic
};

/// Patient-level resampling with replacement; replicate r draws from a
/// stream keyed by (seed, r). Percentile intervals use the type-1 inverse
/// empirical distribution. InferenceInstabilityError when more than
/// max_skip_fraction of replicates are skipped.
BootstrapResult bootstrap(std::size_t n_subjects, const BootstrapAnalysis& analysis, const BootstrapOptions& options);

// ---- Age-specific rates

struct AgeBin {
    double lower = 0;
    std::optional<double> upper;  // open-ended when absent
    std::string label() const;
};

/// 5-year bins from 50 to 90 plus 90+.
std::vector<AgeBin> default_age_bins();

/// One subject's follow-up on the age axis (exact fractional ages).
struct AgeInterval {
    double entry_age = 0;
    double exit_age = 0;
    std::optional<double> event_age;
};

struct RateRow {
    AgeBin bin;
    double person_years = 0;
    std::int64_t events = 0;
    double incidence = 0;
    std::optional<double> reference;
    std::optional<double> ratio;
};

struct RateTable {
    std::vector<RateRow> rows;
    std::vector<AgeBin> omitted;  // bins with zero person-years
};

/// Splits follow-up across bins; events go to the bin containing the event
/// age. `reference` rates, when given, are matched by bin label.
RateTable age_specific_rates(std::span<const AgeInterval> intervals, const std::vector<AgeBin>& bins,
                             const RateTable* reference = nullptr);

/// Average hazard over each bin (the bin's own rate when open-ended).
RateTable reference_rates(const PiecewiseHazard& hazard, const std::vector<AgeBin>& bins);

enum class RateEvent : std::uint8_t { adrd, death };

/// Follow-up intervals from cohort rows: ADRD ends at the outcome or
/// censoring; mortality runs to recorded death or last record.
std::vector<AgeInterval> rate_intervals(std::span<const CohortRow> rows, RateEvent event);

// ---- Writers

void write_forest_csv(const std::string& path, const std::vector<ForestRow>& rows);
nlohmann::json to_json(const std::vector<ForestRow>& rows, const CoxResult& result);
void write_cif_csv(const std::string& path, const CifCurve& curve);
void write_rate_csv(const std::string& path, const RateTable& table);

}  // namespace ttepcp
