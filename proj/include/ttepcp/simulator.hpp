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
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ttepcp/ehr_model.hpp"
#include "ttepcp/rng.hpp"

namespace ttepcp {

/// Piecewise-constant hazard on attained age. `rates[k]` (events per
/// person-year) applies on [breaks[k], breaks[k+1]); the last rate is open-ended.
struct PiecewiseHazard {
    std::vector<double> breaks;
    std::vector<double> rates;

    double rate_at(double age) const;
    double cumulative(double from_age, double to_age) const;
    /// Years after `age0` at which the cumulative hazard scaled by
    /// `multiplier` reaches `target` (an Exp(1) draw); +inf if never.
    double inverse_cumulative(double age0, double multiplier, double target) const;
};

/// Latent comorbidities, in the order used by every per-comorbidity table.
enum class Comorbidity : std::uint8_t { hypertension, stroke, copd, overweight, obesity, cvd, cancer_broad, cancer_strict };
inline constexpr std::size_t kComorbidityCount = 8;
const std::array<std::string, kComorbidityCount>& comorbidity_names();

/// Feature names accepted by the treatment and hazard effect maps.
const std::vector<std::string>& effect_feature_names();

struct BetaMoments {
    double mean = 0.5;
    double sd = 0.2;
};

struct CovariateDistributions {
    double age_mean = 66.0;
    double age_sd = 9.6;
    double age_min = 50.0;
    double age_max = 95.0;
    double female = 0.51;
    std::array<double, 3> education{0.435, 0.465, 0.10};  // secondary, college, graduate
    std::array<double, 3> bmi{0.22, 0.33, 0.45};          // under25, 25to30, 30plus
    BetaMoments svi_socioeconomic{0.33, 0.22};
    BetaMoments svi_home_life{0.45, 0.20};
    BetaMoments svi_racial_ethnic{0.43, 0.22};
    BetaMoments svi_housing{0.51, 0.18};
    /// Prevalence of each latent comorbidity; cancer_strict is conditional on cancer_broad.
    std::array<double, kComorbidityCount> comorbidity{0.81, 0.06, 0.06, 0.22, 0.56, 0.26, 0.39, 0.40};
};

/// Probability that a latent fact reaches the record, by PCP status.
struct ByPcp {
    double pcp = 1.0;
    double no_pcp = 1.0;
    double operator()(bool has_pcp) const { return has_pcp ? pcp : no_pcp; }
};

struct RecordingSensitivity {
    double adrd_age_threshold = 75.0;
    ByPcp adrd_below{1.0, 1.0};
    ByPcp adrd_above{1.0, 0.6};
    ByPcp death{1.0 - 0.286, 1.0 - 0.463};
    std::array<ByPcp, kComorbidityCount> comorbidity{
        ByPcp{1.0, 56.0 / 81.0}, ByPcp{1.0, 4.0 / 6.0}, ByPcp{1.0, 3.0 / 6.0}, ByPcp{1.0, 4.0 / 22.0},
        ByPcp{1.0, 21.0 / 56.0}, ByPcp{1.0, 17.0 / 26.0}, ByPcp{1.0, 30.0 / 39.0}, ByPcp{1.0, 30.0 / 39.0}};
    ByPcp education{0.84, 0.75};  // share with a recorded education level
    ByPcp bmi{0.90, 0.70};
};

struct ConfounderEffects {
    std::map<std::string, double> treatment_log_odds;  // metformin vs sulfonylurea
    std::map<std::string, double> adrd_log_hazard;
    std::map<std::string, double> death_log_hazard;
};

struct VisitModel {
    ByPcp pre_baseline_mean{128.2, 34.0};
    ByPcp pre_baseline_sd{123.0, 50.0};
    ByPcp outpatient_share{116.18 / 128.2, 27.82 / 34.0};
    double history_years_min = 2.0;
    double history_years_max = 15.0;
    ByPcp post_baseline_rate{3.0, 1.5};  // visits per year
    ByPcp dropout_rate{0.03, 0.08};      // per year
    double primary_care_share = 0.3;     // share of a PCP patient's visits that are primary care
    std::array<double, 3> pcp_kind_availability{0.6, 0.9, 0.35};  // procedure code, service line, reason
    double post_baseline_pcp_no_pcp = 0.1;  // no-PCP patients who start primary care after baseline
    double refill_probability = 0.25;
};

struct GenConfig {
    std::int64_t n_patients = 20000;
    std::uint64_t seed = 1;
    double true_log_hr_adrd = -0.2231435513142097;  // ln 0.8
    double true_log_hr_death = 0.0;
    ByPcp pcp_prevalence_by_arm{0.341, 0.154};  // .pcp = metformin, .no_pcp = sulfonylurea
    double arm_prevalence = 46613.0 / 54439.0;
    CovariateDistributions covariate_distributions;
    PiecewiseHazard adrd_hazard;
    PiecewiseHazard death_hazard;
    ByPcp adrd_hazard_multiplier{1.0, 1.0};
    ByPcp death_hazard_multiplier{1.0 / (1.0 - 0.286), 2.0 / (1.0 - 0.463)};
    RecordingSensitivity recording_sensitivity;
    ConfounderEffects confounder_effects;
    VisitModel visits;
    Date study_start = Date::from_ymd(2007, 1, 1);
    Date study_end = Date::from_ymd(2024, 4, 30);
    std::int32_t enrollment_margin_days = 90;  // no initiations in the final days
    Date icd10_transition = Date::from_ymd(2015, 10, 1);
    double prevalent_user_fraction = 0.02;
    double dual_initiation_fraction = 0.005;

    /// Defaults including the reference hazards and confounder effects.
    static GenConfig defaults();
    /// Same config with every recording probability set to 1.
    GenConfig with_perfect_recording() const;
    /// Same config with every confounder effect removed.
    GenConfig without_confounding() const;
};

/// Throws ConfigError naming the first invalid field.
void validate(const GenConfig& config);

nlohmann::json to_json(const GenConfig& config);
/// Missing fields take defaults; unknown fields are rejected.
GenConfig gen_config_from_json(const nlohmann::json& j, const std::string& path = "");

/// Per-patient latent truth; day offsets are relative to the baseline date.
struct PatientTruth {
    std::string patient_id;
    bool metformin = false;
    bool pcp = false;
    bool post_baseline_pcp = false;
    Date baseline;
    double age_at_baseline = 0;
    std::optional<std::int32_t> adrd_days;  // latent ADRD onset, if before latent death
    std::int32_t death_days = 0;            // latent death
    std::int32_t end_of_followup_days = 0;  // min(death, dropout, study end)
    std::int32_t last_contact_days = 0;     // last post-baseline encounter; 0 if none
    bool adrd_recorded = false;
    bool death_recorded = false;
    bool prevalent_user = false;
    bool dual_initiation = false;
};

struct GroundTruth {
    double true_log_hr_adrd = 0;
    double true_log_hr_death = 0;
    std::vector<PatientTruth> patients;
};

nlohmann::json to_json(const PatientTruth& truth);

/// Calibration constants derived once per configuration.
struct SimulatorCalibration {
    double treatment_intercept = 0;
    double adrd_normalizer = 1;   // mean exp(linear predictor) in the population
    double death_normalizer = 1;
};

/// Generates patients one at a time. Patient i depends only on (config, i),
/// so any subset can be regenerated or generated concurrently.
class PatientSimulator {
public:
    explicit PatientSimulator(GenConfig config);

    const GenConfig& config() const { return config_; }
    const SimulatorCalibration& calibration() const { return calibration_; }

    /// `recording_override`, when set, replaces the config's recording
    /// sensitivities while keeping every random draw identical.
    std::pair<PatientRecord, PatientTruth> simulate(std::int64_t index) const;
    std::pair<PatientRecord, PatientTruth> simulate(std::int64_t index, const RecordingSensitivity& recording) const;

    static std::string patient_id(std::int64_t index);

    struct Latent;  // defined in simulator.cpp

private:
    GenConfig config_;
    SimulatorCalibration calibration_;
    std::array<double, 32> treat_coef_{}, adrd_coef_{}, death_coef_{};

    friend double oracle_true_hr(const GenConfig&, std::int64_t, std::uint64_t);
};

/// Whole corpus in index order.
std::pair<std::vector<PatientRecord>, GroundTruth> simulate_cohort(const GenConfig& config);

/// Monte-Carlo marginal ADRD hazard ratio implied by the configuration:
/// every simulated person contributes both potential outcomes (common random
/// numbers), and a treatment-only Cox model is fit to the stacked data.
double oracle_true_hr(const GenConfig& config, std::int64_t n_mc, std::uint64_t seed);

}  // namespace ttepcp
