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

#include <algorithm>
#include <cmath>

#include "ttepcp/config_reader.hpp"
#include "ttepcp/simulator.hpp"

namespace ttepcp {

namespace {

const std::vector<double> kHazardBreaks{0, 50, 55, 60, 65, 70, 75, 80, 85, 90};

nlohmann::json by_pcp_json(const ByPcp& b) { return {{"pcp", b.pcp}, {"no_pcp", b.no_pcp}}; }

void read_by_pcp(ConfigReader& r, const std::string& key, ByPcp& out)
{
    if (!r.has(key))
        return;
    auto c = r.child(key);
    c.read("pcp", out.pcp);
    c.read("no_pcp", out.no_pcp);
    c.finish();
}

nlohmann::json beta_json(const BetaMoments& b) { return {{"mean", b.mean}, {"sd", b.sd}}; }

void read_beta(ConfigReader& r, const std::string& key, BetaMoments& out)
{
    if (!r.has(key))
        return;
    auto c = r.child(key);
    c.read("mean", out.mean);
    c.read("sd", out.sd);
    c.finish();
}

nlohmann::json hazard_json(const PiecewiseHazard& h) { return {{"breaks", h.breaks}, {"rates", h.rates}}; }

void read_hazard(ConfigReader& r, const std::string& key, PiecewiseHazard& out)
{
    if (!r.has(key))
        return;
    auto c = r.child(key);
    c.read("breaks", out.breaks);
    c.read("rates", out.rates);
    c.finish();
}

template <std::size_t N>
void read_array(ConfigReader& r, const std::string& key, std::array<double, N>& out)
{
    if (!r.has(key))
        return;
    std::vector<double> v;
    r.read(key, v);
    require(v.size() == N, r.field(key), "expected " + std::to_string(N) + " entries");
    std::copy(v.begin(), v.end(), out.begin());
}

template <std::size_t N>
nlohmann::json by_name(const std::array<std::string, N>& names, const std::array<ByPcp, N>& values)
{
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t k = 0; k < N; ++k)
        j[names[k]] = by_pcp_json(values[k]);
    return j;
}

bool is_probability(double p) { return std::isfinite(p) && p >= 0 && p <= 1; }

void require_probability(double p, const std::string& field) { require(is_probability(p), field, "must be in [0, 1]"); }

void require_probability(const ByPcp& b, const std::string& field)
{
    require_probability(b.pcp, field + ".pcp");
    require_probability(b.no_pcp, field + ".no_pcp");
}

void require_nonnegative(const ByPcp& b, const std::string& field)
{
    require(std::isfinite(b.pcp) && b.pcp >= 0, field + ".pcp", "must be nonnegative");
    require(std::isfinite(b.no_pcp) && b.no_pcp >= 0, field + ".no_pcp", "must be nonnegative");
}

void validate_hazard(const PiecewiseHazard& h, const std::string& field)
{
    require(!h.breaks.empty() && h.breaks.size() == h.rates.size(), field,
            "breaks and rates must be nonempty and of equal length");
    for (std::size_t k = 0; k < h.breaks.size(); ++k) {
        require(std::isfinite(h.breaks[k]), field + ".breaks", "must be finite");
        require(k == 0 || h.breaks[k] > h.breaks[k - 1], field + ".breaks", "must be strictly increasing");
        require(std::isfinite(h.rates[k]) && h.rates[k] >= 0, field + ".rates", "hazards must be nonnegative");
    }
}

void validate_effects(const std::map<std::string, double>& effects, const std::string& field)
{
    const auto& names = effect_feature_names();
    for (const auto& [name, value] : effects) {
        require(std::find(names.begin(), names.end(), name) != names.end(), field + "." + name, "unknown feature");
        require(std::isfinite(value), field + "." + name, "must be finite");
    }
}

void validate_distribution(const std::array<double, 3>& probs, const std::string& field)
{
    double total = 0;
    for (double p : probs) {
        require_probability(p, field);
        total += p;
    }
    require(std::abs(total - 1) < 1e-6, field, "must sum to 1");
}

void validate_beta(const BetaMoments& b, const std::string& field)
{
    require(b.mean > 0 && b.mean < 1, field + ".mean", "must be in (0, 1)");
    require(b.sd >= 0 && b.sd * b.sd < b.mean * (1 - b.mean), field + ".sd",
            "must be nonnegative with sd^2 < mean * (1 - mean)");
}

}  // namespace

GenConfig GenConfig::defaults()
{
    GenConfig c;
    c.adrd_hazard = {kHazardBreaks, {0.0002, 0.0005, 0.001, 0.003, 0.008, 0.016, 0.03, 0.055, 0.085, 0.12}};
    c.death_hazard = {kHazardBreaks, {0.003, 0.0045, 0.0068, 0.0098, 0.014, 0.021, 0.033, 0.053, 0.09, 0.17}};
    c.confounder_effects.treatment_log_odds = {
        {"age", -0.06},        {"female", 0.15},  {"hypertension", 0.1}, {"copd", -0.1},
        {"overweight", 0.7},   {"obesity", 0.9},  {"cvd", 0.2},          {"cancer_broad", -0.1},
        {"education_college", 0.2}, {"education_graduate", 0.3}};
    c.confounder_effects.adrd_log_hazard = {
        {"female", 0.1},        {"hypertension", 0.15},      {"stroke", 0.3},
        {"cvd", 0.25},          {"overweight", 0.35},        {"obesity", 0.6},
        {"education_college", -0.1}, {"education_graduate", -0.2}, {"svi_socioeconomic", 0.2}};
    c.confounder_effects.death_log_hazard = {
        {"female", -0.3},       {"hypertension", 0.1}, {"stroke", 0.5},         {"copd", 0.6},
        {"cvd", 0.4},           {"obesity", 0.1},      {"cancer_broad", 0.3},   {"cancer_strict", 0.5},
        {"svi_socioeconomic", 0.2}};
    return c;
}

GenConfig GenConfig::with_perfect_recording() const
{
    GenConfig c = *this;
    auto& r = c.recording_sensitivity;
    r.adrd_below = r.adrd_above = r.death = r.education = r.bmi = ByPcp{1.0, 1.0};
    r.comorbidity.fill(ByPcp{1.0, 1.0});
    return c;
}

GenConfig GenConfig::without_confounding() const
{
    GenConfig c = *this;
    c.confounder_effects = {};
    return c;
}

void validate(const GenConfig& c)
{
    require(c.n_patients >= 1, "n_patients", "must be at least 1");
    require(std::isfinite(c.true_log_hr_adrd), "true_log_hr_adrd", "must be finite");
    require(std::isfinite(c.true_log_hr_death), "true_log_hr_death", "must be finite");
    require_probability(c.pcp_prevalence_by_arm.pcp, "pcp_prevalence_by_arm.metformin");
    require_probability(c.pcp_prevalence_by_arm.no_pcp, "pcp_prevalence_by_arm.sulfonylurea");
    require(c.arm_prevalence > 0 && c.arm_prevalence < 1, "arm_prevalence", "must be in (0, 1)");

    const auto& d = c.covariate_distributions;
    const std::string cd = "covariate_distributions.";
    require(d.age_min < d.age_max, cd + "age_min", "must be below age_max");
    require(d.age_mean >= d.age_min && d.age_mean <= d.age_max, cd + "age_mean", "must lie in [age_min, age_max]");
    require(d.age_sd >= 0, cd + "age_sd", "must be nonnegative");
    require_probability(d.female, cd + "female");
    validate_distribution(d.education, cd + "education");
    validate_distribution(d.bmi, cd + "bmi");
    validate_beta(d.svi_socioeconomic, cd + "svi_socioeconomic");
    validate_beta(d.svi_home_life, cd + "svi_home_life");
    validate_beta(d.svi_racial_ethnic, cd + "svi_racial_ethnic");
    validate_beta(d.svi_housing, cd + "svi_housing");
    for (std::size_t k = 0; k < kComorbidityCount; ++k)
        require_probability(d.comorbidity[k], cd + "comorbidity." + comorbidity_names()[k]);

    validate_hazard(c.adrd_hazard, "baseline_hazards.adrd");
    validate_hazard(c.death_hazard, "baseline_hazards.death");
    require_nonnegative(c.adrd_hazard_multiplier, "adrd_hazard_multiplier");
    require_nonnegative(c.death_hazard_multiplier, "death_hazard_multiplier");

    const auto& r = c.recording_sensitivity;
    const std::string rs = "recording_sensitivity.";
    require(std::isfinite(r.adrd_age_threshold), rs + "adrd_age_threshold", "must be finite");
    require_probability(r.adrd_below, rs + "adrd_below_threshold");
    require_probability(r.adrd_above, rs + "adrd_above_threshold");
    require_probability(r.death, rs + "death");
    require_probability(r.education, rs + "education");
    require_probability(r.bmi, rs + "bmi");
    for (std::size_t k = 0; k < kComorbidityCount; ++k)
        require_probability(r.comorbidity[k], rs + "comorbidity." + comorbidity_names()[k]);

    validate_effects(c.confounder_effects.treatment_log_odds, "confounder_effects.treatment_log_odds");
    validate_effects(c.confounder_effects.adrd_log_hazard, "confounder_effects.adrd_log_hazard");
    validate_effects(c.confounder_effects.death_log_hazard, "confounder_effects.death_log_hazard");

    const auto& v = c.visits;
    require_nonnegative(v.pre_baseline_mean, "visits.pre_baseline_mean");
    require_nonnegative(v.pre_baseline_sd, "visits.pre_baseline_sd");
    require(v.pre_baseline_mean.pcp >= 1, "visits.pre_baseline_mean.pcp", "must be at least 1");
    require_probability(v.outpatient_share, "visits.outpatient_share");
    require(v.history_years_min > 0 && v.history_years_min <= v.history_years_max, "visits.history_years_min",
            "must be positive and at most history_years_max");
    require_nonnegative(v.post_baseline_rate, "visits.post_baseline_rate");
    require_nonnegative(v.dropout_rate, "visits.dropout_rate");
    require(v.primary_care_share >= 0 && v.primary_care_share < 1, "visits.primary_care_share", "must be in [0, 1)");
    for (double p : v.pcp_kind_availability)
        require_probability(p, "visits.pcp_kind_availability");
    require_probability(v.post_baseline_pcp_no_pcp, "visits.post_baseline_pcp_no_pcp");
    require_probability(v.refill_probability, "visits.refill_probability");

    require(c.study_start < c.study_end - c.enrollment_margin_days, "study_end",
            "must leave room for enrollment after study_start");
    require(c.enrollment_margin_days >= 0, "enrollment_margin_days", "must be nonnegative");
    require_probability(c.prevalent_user_fraction, "prevalent_user_fraction");
    require_probability(c.dual_initiation_fraction, "dual_initiation_fraction");
}

nlohmann::json to_json(const GenConfig& c)
{
    const auto& d = c.covariate_distributions;
    nlohmann::json comorbidity = nlohmann::json::object();
    for (std::size_t k = 0; k < kComorbidityCount; ++k)
        comorbidity[comorbidity_names()[k]] = d.comorbidity[k];
    const auto& r = c.recording_sensitivity;
    const auto& v = c.visits;
    return {
        {"n_patients", c.n_patients},
        {"seed", c.seed},
        {"true_log_hr_adrd", c.true_log_hr_adrd},
        {"true_log_hr_death", c.true_log_hr_death},
        {"pcp_prevalence_by_arm",
         {{"metformin", c.pcp_prevalence_by_arm.pcp}, {"sulfonylurea", c.pcp_prevalence_by_arm.no_pcp}}},
        {"arm_prevalence", c.arm_prevalence},
        {"covariate_distributions",
         {{"age_mean", d.age_mean},
          {"age_sd", d.age_sd},
          {"age_min", d.age_min},
          {"age_max", d.age_max},
          {"female", d.female},
          {"education", d.education},
          {"bmi", d.bmi},
          {"svi_socioeconomic", beta_json(d.svi_socioeconomic)},
          {"svi_home_life", beta_json(d.svi_home_life)},
          {"svi_racial_ethnic", beta_json(d.svi_racial_ethnic)},
          {"svi_housing", beta_json(d.svi_housing)},
          {"comorbidity", comorbidity}}},
        {"baseline_hazards", {{"adrd", hazard_json(c.adrd_hazard)}, {"death", hazard_json(c.death_hazard)}}},
        {"adrd_hazard_multiplier", by_pcp_json(c.adrd_hazard_multiplier)},
        {"death_hazard_multiplier", by_pcp_json(c.death_hazard_multiplier)},
        {"recording_sensitivity",
         {{"adrd_age_threshold", r.adrd_age_threshold},
          {"adrd_below_threshold", by_pcp_json(r.adrd_below)},
          {"adrd_above_threshold", by_pcp_json(r.adrd_above)},
          {"death", by_pcp_json(r.death)},
          {"comorbidity", by_name(comorbidity_names(), r.comorbidity)},
          {"education", by_pcp_json(r.education)},
          {"bmi", by_pcp_json(r.bmi)}}},
        {"confounder_effects",
         {{"treatment_log_odds", c.confounder_effects.treatment_log_odds},
          {"adrd_log_hazard", c.confounder_effects.adrd_log_hazard},
          {"death_log_hazard", c.confounder_effects.death_log_hazard}}},
        {"visits",
         {{"pre_baseline_mean", by_pcp_json(v.pre_baseline_mean)},
          {"pre_baseline_sd", by_pcp_json(v.pre_baseline_sd)},
          {"outpatient_share", by_pcp_json(v.outpatient_share)},
          {"history_years_min", v.history_years_min},
          {"history_years_max", v.history_years_max},
          {"post_baseline_rate", by_pcp_json(v.post_baseline_rate)},
          {"dropout_rate", by_pcp_json(v.dropout_rate)},
          {"primary_care_share", v.primary_care_share},
          {"pcp_kind_availability", v.pcp_kind_availability},
          {"post_baseline_pcp_no_pcp", v.post_baseline_pcp_no_pcp},
          {"refill_probability", v.refill_probability}}},
        {"study_start", c.study_start.iso()},
        {"study_end", c.study_end.iso()},
        {"enrollment_margin_days", c.enrollment_margin_days},
        {"icd10_transition", c.icd10_transition.iso()},
        {"prevalent_user_fraction", c.prevalent_user_fraction},
        {"dual_initiation_fraction", c.dual_initiation_fraction},
    };
}

GenConfig gen_config_from_json(const nlohmann::json& j, const std::string& path)
{
    GenConfig c = GenConfig::defaults();
    ConfigReader r{j, path};
    r.read("n_patients", c.n_patients);
    r.read("seed", c.seed);
    r.read("true_log_hr_adrd", c.true_log_hr_adrd);
    r.read("true_log_hr_death", c.true_log_hr_death);
    if (r.has("pcp_prevalence_by_arm")) {
        auto p = r.child("pcp_prevalence_by_arm");
        p.read("metformin", c.pcp_prevalence_by_arm.pcp);
        p.read("sulfonylurea", c.pcp_prevalence_by_arm.no_pcp);
        p.finish();
    }
    r.read("arm_prevalence", c.arm_prevalence);

    if (r.has("covariate_distributions")) {
        auto d = r.child("covariate_distributions");
        auto& cd = c.covariate_distributions;
        d.read("age_mean", cd.age_mean);
        d.read("age_sd", cd.age_sd);
        d.read("age_min", cd.age_min);
        d.read("age_max", cd.age_max);
        d.read("female", cd.female);
        read_array(d, "education", cd.education);
        read_array(d, "bmi", cd.bmi);
        read_beta(d, "svi_socioeconomic", cd.svi_socioeconomic);
        read_beta(d, "svi_home_life", cd.svi_home_life);
        read_beta(d, "svi_racial_ethnic", cd.svi_racial_ethnic);
        read_beta(d, "svi_housing", cd.svi_housing);
        if (d.has("comorbidity")) {
            auto m = d.child("comorbidity");
            for (std::size_t k = 0; k < kComorbidityCount; ++k)
                m.read(comorbidity_names()[k], cd.comorbidity[k]);
            m.finish();
        }
        d.finish();
    }
    if (r.has("baseline_hazards")) {
        auto h = r.child("baseline_hazards");
        read_hazard(h, "adrd", c.adrd_hazard);
        read_hazard(h, "death", c.death_hazard);
        h.finish();
    }
    read_by_pcp(r, "adrd_hazard_multiplier", c.adrd_hazard_multiplier);
    read_by_pcp(r, "death_hazard_multiplier", c.death_hazard_multiplier);

    if (r.has("recording_sensitivity")) {
        auto s = r.child("recording_sensitivity");
        auto& rs = c.recording_sensitivity;
        s.read("adrd_age_threshold", rs.adrd_age_threshold);
        read_by_pcp(s, "adrd_below_threshold", rs.adrd_below);
        read_by_pcp(s, "adrd_above_threshold", rs.adrd_above);
        read_by_pcp(s, "death", rs.death);
        if (s.has("comorbidity")) {
            auto m = s.child("comorbidity");
            for (std::size_t k = 0; k < kComorbidityCount; ++k)
                read_by_pcp(m, comorbidity_names()[k], rs.comorbidity[k]);
            m.finish();
        }
        read_by_pcp(s, "education", rs.education);
        read_by_pcp(s, "bmi", rs.bmi);
        s.finish();
    }
    if (r.has("confounder_effects")) {
        auto e = r.child("confounder_effects");
        e.read("treatment_log_odds", c.confounder_effects.treatment_log_odds);
        e.read("adrd_log_hazard", c.confounder_effects.adrd_log_hazard);
        e.read("death_log_hazard", c.confounder_effects.death_log_hazard);
        e.finish();
    }
    if (r.has("visits")) {
        auto v = r.child("visits");
        auto& vm = c.visits;
        read_by_pcp(v, "pre_baseline_mean", vm.pre_baseline_mean);
        read_by_pcp(v, "pre_baseline_sd", vm.pre_baseline_sd);
        read_by_pcp(v, "outpatient_share", vm.outpatient_share);
        v.read("history_years_min", vm.history_years_min);
        v.read("history_years_max", vm.history_years_max);
        read_by_pcp(v, "post_baseline_rate", vm.post_baseline_rate);
        read_by_pcp(v, "dropout_rate", vm.dropout_rate);
        v.read("primary_care_share", vm.primary_care_share);
        read_array(v, "pcp_kind_availability", vm.pcp_kind_availability);
        v.read("post_baseline_pcp_no_pcp", vm.post_baseline_pcp_no_pcp);
        v.read("refill_probability", vm.refill_probability);
        v.finish();
    }
    r.read("study_start", c.study_start);
    r.read("study_end", c.study_end);
    r.read("enrollment_margin_days", c.enrollment_margin_days);
    r.read("icd10_transition", c.icd10_transition);
    r.read("prevalent_user_fraction", c.prevalent_user_fraction);
    r.read("dual_initiation_fraction", c.dual_initiation_fraction);
    r.finish();

    try {
        validate(c);
    } catch (const ConfigError& e) {
        throw ConfigError(path.empty() ? e.field() : path + "." + e.field(), e.constraint());
    }
    return c;
}

}  // namespace ttepcp
