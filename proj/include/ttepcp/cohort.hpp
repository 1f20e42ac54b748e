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
#include <variant>
#include <vector>

#include <json.hpp>

#include "ttepcp/ehr_model.hpp"

namespace ttepcp {

enum class Arm : std::uint8_t { metformin, sulfonylurea };
enum class EventType : std::uint8_t { adrd, death_without_dementia, censored };

std::string_view to_string(Arm v);
std::string_view to_string(EventType v);

using CovariateValue = std::variant<double, std::string>;

/// Declared levels of the categorical baseline covariates; the first level
/// is the reference. Returns nullptr for numeric covariates.
const std::vector<std::string>* categorical_levels(std::string_view covariate);

struct CohortRow {
    std::string patient_id;
    Arm arm = Arm::metformin;
    Date baseline;
    Date birth_date;
    double age_at_baseline = 0;
    std::map<std::string, CovariateValue> covariates;
    bool pcp_flag = false;
    std::uint8_t pcp_kinds = 0;            // PcpKind bitmask, strictly before baseline
    std::uint8_t pcp_kinds_after = 0;      // PcpKind bitmask, on or after baseline
    std::int32_t followup_days = 0;
    EventType event = EventType::censored;
    std::optional<std::int32_t> death_days;  // recorded death in (baseline, study_end]
    std::int32_t censor_days = 0;            // last record (any type), capped at study_end
    std::int64_t visits_pre_baseline = 0;
    std::int64_t outpatient_visits_pre_baseline = 0;
};

/// Covariate lookup; `pcp_flag` resolves to the row flag.
std::optional<CovariateValue> covariate_value(const CohortRow& row, const std::string& name);

struct EligibilityConfig {
    Date study_start = Date::from_ymd(2007, 1, 1);
    Date study_end = Date::from_ymd(2024, 4, 30);
    double min_age_at_baseline = 50.0;
    std::int32_t lookback_days = 365;
    CodeSet outcome_codeset;
    /// One binary covariate per codeset, named after it.
    std::vector<CodeSet> covariate_codesets;
    PcpConfig pcp;

    /// Built-in ADRD and comorbidity codesets with the default PCP labels.
    static EligibilityConfig defaults();
};

/// Throws ConfigError naming the first invalid field.
void validate(const EligibilityConfig& config);

/// Propensity/Cox covariates for a configuration, in design order.
std::vector<std::string> covariate_names(const EligibilityConfig& config);

/// Arm and baseline of a new user, or nullopt. A prior antidiabetic within
/// the lookback window or same-day initiation of both classes disqualifies.
std::optional<std::pair<Arm, Date>> derive_baseline(const PatientRecord& patient, const EligibilityConfig& config);

/// Consort columns: metformin, sulfonylurea, and patients whose arm could not
/// be determined (no study drug in the window or same-day dual initiation).
inline constexpr std::size_t kConsortColumns = 3;
using ConsortCounts = std::array<std::int64_t, kConsortColumns>;
std::string_view consort_column_name(std::size_t column);

struct ConsortStep {
    std::string criterion;
    ConsortCounts excluded{};
    ConsortCounts remaining{};
};

struct ConsortReport {
    ConsortCounts input{};
    std::vector<ConsortStep> steps;

    static ConsortReport empty();
    /// Component-wise sum; both reports must share the step list.
    void merge(const ConsortReport& other);
};

/// Eligibility step names in application order.
const std::vector<std::string>& eligibility_steps();

struct PatientEvaluation {
    std::size_t column = 2;                  // consort column
    std::optional<std::size_t> failed_step;  // index into eligibility_steps()
    std::optional<CohortRow> row;
};

PatientEvaluation evaluate_patient(const PatientRecord& patient, const EligibilityConfig& config);

/// Streaming accumulator: feed patients in any order, then take the rows
/// sorted by patient_id.
class CohortBuilder {
public:
    explicit CohortBuilder(EligibilityConfig config);

    void add(const PatientRecord& patient);
    const ConsortReport& report() const { return report_; }
    const EligibilityConfig& config() const { return config_; }
    /// Throws SchemaError on duplicate patient ids.
    std::vector<CohortRow> take_rows();

private:
    EligibilityConfig config_;
    ConsortReport report_;
    std::vector<CohortRow> rows_;
};

std::pair<ConsortReport, std::vector<CohortRow>> build_cohort(std::span<const PatientRecord> patients,
                                                              const EligibilityConfig& config);

enum class Strategy : std::uint8_t { B, M, E };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct StrategySpec {
    Strategy variant = Strategy::B;
};

struct StrategyResult {
    std::vector<CohortRow> rows;
    std::vector<std::string> covariates;
};

/// B keeps rows and covariates; M appends `pcp_flag` to the covariates; E
/// keeps PCP-flagged rows only (DegenerateCohortError if empty or one arm).
StrategyResult apply_strategy(std::span<const CohortRow> rows, const StrategySpec& spec,
                              const std::vector<std::string>& covariates);

struct SummaryLine {
    std::string feature;
    std::string statistic;  // "n", "percent", "mean" or "sd"
    std::vector<std::optional<double>> values;  // one per group; nullopt for an empty group
};

struct SummaryTable {
    std::string group_key;
    std::vector<std::string> groups;
    std::vector<SummaryLine> lines;
};

/// group_key is "pcp_flag" (groups pcp, no_pcp) or "arm" (metformin,
/// sulfonylurea); anything else is a UsageError.
SummaryTable summarize(std::span<const CohortRow> rows, const std::string& group_key);

/// Venn counts of PCP indication kinds before baseline over the rows.
VennCounts row_venn(std::span<const CohortRow> rows);

// Writers. Column sets are fixed; see README.
void write_consort_csv(const std::string& path, const ConsortReport& report);
void write_summary_csv(const std::string& path, const SummaryTable& table);
void write_cohort_csv(const std::string& path, std::span<const CohortRow> rows, const std::vector<std::string>& covariates);
nlohmann::json to_json(const ConsortReport& report);
nlohmann::json to_json(const VennCounts& venn);

}  // namespace ttepcp
