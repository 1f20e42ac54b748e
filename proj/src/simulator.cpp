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

#include "ttepcp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ttepcp/codesets.hpp"
#include "ttepcp/cox.hpp"
#include "ttepcp/error.hpp"

namespace ttepcp {

namespace {

constexpr double kDaysPerYear = 365.25;
constexpr std::int32_t kNever = 1'000'000'000;

// Stream tags; each purpose draws from its own generator so that changing
// one mechanism (e.g. recording) never shifts the draws of another.
enum : std::uint64_t { kTagLatent = 1, kTagRecording = 2, kTagVisits = 3, kTagCalibration = 4, kTagOracle = 5 };

enum Feature : std::size_t {
    f_age,
    f_female,
    f_hypertension,
    f_stroke,
    f_copd,
    f_overweight,
    f_obesity,
    f_cvd,
    f_cancer_broad,
    f_cancer_strict,
    f_education_college,
    f_education_graduate,
    f_bmi_25to30,
    f_bmi_30plus,
    f_svi_socioeconomic,
    f_svi_home_life,
    f_svi_racial_ethnic,
    f_svi_housing,
    f_count
};

const std::vector<std::string> kFeatureNames{
    "age",          "female",      "hypertension",       "stroke",           "copd",
    "overweight",   "obesity",     "cvd",                "cancer_broad",     "cancer_strict",
    "education_college", "education_graduate", "bmi_25to30", "bmi_30plus", "svi_socioeconomic",
    "svi_home_life", "svi_racial_ethnic", "svi_housing"};

const std::vector<std::string> kOtherServiceLines{"Cardiology", "Endocrinology", "Emergency", "Surgery",
                                                  "Radiology",  "Neurology",     "Oncology"};

std::int32_t years_to_days(double years)
{
    if (!std::isfinite(years) || years * kDaysPerYear >= kNever)
        return kNever;
    return static_cast<std::int32_t>(std::floor(years * kDaysPerYear)) + 1;
}

double exp1(Rng& rng) { return -std::log1p(-uniform01(rng)); }

double beta_draw(Rng& rng, const BetaMoments& m)
{
    if (m.sd <= 0)
        return m.mean;
    const double common = m.mean * (1 - m.mean) / (m.sd * m.sd) - 1;
    std::gamma_distribution<double> ga(m.mean * common, 1.0), gb((1 - m.mean) * common, 1.0);
    const double a = ga(rng), b = gb(rng);
    return a + b > 0 ? a / (a + b) : m.mean;
}

template <std::size_t N>
std::size_t categorical(Rng& rng, const std::array<double, N>& probs)
{
    double u = uniform01(rng), acc = 0;
    for (std::size_t k = 0; k + 1 < N; ++k) {
        acc += probs[k];
        if (u < acc)
            return k;
    }
    return N - 1;
}

std::vector<std::string> as_vector(const std::set<std::string>& s) { return {s.begin(), s.end()}; }

// Codes the simulator emits, grouped by purpose and coding system.
struct CodePools {
    std::array<std::vector<std::string>, kComorbidityCount> icd9, icd10;
    std::vector<std::string> adrd_icd9, adrd_icd10;
    std::vector<std::string> pcp_procedures;

    static const CodePools& get()
    {
        static const CodePools pools = [] {
            CodePools p;
            const auto& names = comorbidity_names();
            const auto strict = builtin_codeset("cancer_strict");
            for (std::size_t c = 0; c < kComorbidityCount; ++c) {
                const auto cs = builtin_codeset(names[c]);
                for (auto sys : {CodeSystem::icd9, CodeSystem::icd10}) {
                    auto& dest = sys == CodeSystem::icd9 ? p.icd9[c] : p.icd10[c];
                    for (const auto& code : cs.codes(sys))
                        // broad-only patients get codes outside the strict list
                        if (names[c] != "cancer_broad" || !strict.contains(sys, code))
                            dest.push_back(code);
                }
            }
            const auto adrd = builtin_codeset("adrd");
            p.adrd_icd9 = as_vector(adrd.codes(CodeSystem::icd9));
            p.adrd_icd10 = as_vector(adrd.codes(CodeSystem::icd10));
            p.pcp_procedures = as_vector(PcpConfig::defaults().procedure_codes);
            return p;
        }();
        return pools;
    }
};

const std::string& pick(Rng& rng, const std::vector<std::string>& pool)
{
    return pool[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pool.size()))];
}

void fill_coefficients(const std::map<std::string, double>& effects, std::array<double, 32>& out)
{
    out.fill(0.0);
    for (const auto& [name, value] : effects) {
        auto it = std::find(kFeatureNames.begin(), kFeatureNames.end(), name);
        if (it == kFeatureNames.end())
            throw ConfigError(name, "unknown effect feature");
        out[static_cast<std::size_t>(it - kFeatureNames.begin())] = value;
    }
}

double sigmoid(double x) { return x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x)); }

}  // namespace

const std::vector<std::string>& effect_feature_names() { return kFeatureNames; }

const std::array<std::string, kComorbidityCount>& comorbidity_names()
{
    static const std::array<std::string, kComorbidityCount> names{
        "hypertension", "stroke", "copd", "overweight", "obesity", "cvd", "cancer_broad", "cancer_strict"};
    return names;
}

// PiecewiseHazard

double PiecewiseHazard::rate_at(double age) const
{
    auto it = std::upper_bound(breaks.begin(), breaks.end(), age);
    if (it == breaks.begin())
        return rates.front();
    return rates[static_cast<std::size_t>(it - breaks.begin()) - 1];
}

double PiecewiseHazard::cumulative(double from_age, double to_age) const
{
    double total = 0;
    for (std::size_t k = 0; k < rates.size(); ++k) {
        const double lo = std::max(from_age, breaks[k]);
        const double hi = k + 1 < breaks.size() ? std::min(to_age, breaks[k + 1]) : to_age;
        if (hi > lo)
            total += rates[k] * (hi - lo);
    }
    return total;
}

double PiecewiseHazard::inverse_cumulative(double age0, double multiplier, double target) const
{
    double age = age0;
    auto it = std::upper_bound(breaks.begin(), breaks.end(), age0);
    std::size_t k = it == breaks.begin() ? 0 : static_cast<std::size_t>(it - breaks.begin()) - 1;
    for (; k < rates.size(); ++k) {
        const double rate = rates[k] * multiplier;
        const double hi = k + 1 < breaks.size() ? breaks[k + 1] : std::numeric_limits<double>::infinity();
        const double span = hi - age;
        if (rate > 0) {
            if (rate * span >= target)
                return age + target / rate - age0;
            target -= rate * span;
        }
        age = hi;
    }
    return std::numeric_limits<double>::infinity();
}

// PatientSimulator

struct PatientSimulator::Latent {
    double age = 0;
    bool female = false;
    Education education = Education::secondary;
    BmiClass bmi = BmiClass::under25;
    SviScores svi;
    std::array<bool, kComorbidityCount> comorbid{};
    std::array<double, f_count> features{};

    static Latent draw(Rng& rng, const CovariateDistributions& d)
    {
        Latent l;
        if (d.age_sd <= 0) {
            l.age = std::clamp(d.age_mean, d.age_min, d.age_max);
        } else {
            std::normal_distribution<double> norm(d.age_mean, d.age_sd);
            do
                l.age = norm(rng);
            while (l.age < d.age_min || l.age > d.age_max);
        }
        l.female = uniform01(rng) < d.female;
        l.education = static_cast<Education>(categorical(rng, d.education));
        l.bmi = static_cast<BmiClass>(categorical(rng, d.bmi));
        l.svi.socioeconomic = beta_draw(rng, d.svi_socioeconomic);
        l.svi.home_life = beta_draw(rng, d.svi_home_life);
        l.svi.racial_ethnic = beta_draw(rng, d.svi_racial_ethnic);
        l.svi.housing = beta_draw(rng, d.svi_housing);
        for (std::size_t c = 0; c < kComorbidityCount; ++c)
            l.comorbid[c] = uniform01(rng) < d.comorbidity[c];
        const auto broad = static_cast<std::size_t>(Comorbidity::cancer_broad);
        const auto strict = static_cast<std::size_t>(Comorbidity::cancer_strict);
        l.comorbid[strict] = l.comorbid[strict] && l.comorbid[broad];

        auto& f = l.features;
        f[f_age] = l.age - d.age_mean;
        f[f_female] = l.female;
        f[f_hypertension] = l.comorbid[0];
        f[f_stroke] = l.comorbid[1];
        f[f_copd] = l.comorbid[2];
        f[f_overweight] = l.comorbid[3];
        f[f_obesity] = l.comorbid[4];
        f[f_cvd] = l.comorbid[5];
        f[f_cancer_broad] = l.comorbid[broad];
        f[f_cancer_strict] = l.comorbid[strict];
        f[f_education_college] = l.education == Education::college;
        f[f_education_graduate] = l.education == Education::graduate;
        f[f_bmi_25to30] = l.bmi == BmiClass::from25to30;
        f[f_bmi_30plus] = l.bmi == BmiClass::over30;
        f[f_svi_socioeconomic] = l.svi.socioeconomic;
        f[f_svi_home_life] = l.svi.home_life;
        f[f_svi_racial_ethnic] = l.svi.racial_ethnic;
        f[f_svi_housing] = l.svi.housing;
        return l;
    }

    double predictor(const std::array<double, 32>& coef) const
    {
        double lp = 0;
        for (std::size_t k = 0; k < f_count; ++k)
            lp += coef[k] * features[k];
        return lp;
    }
};

PatientSimulator::PatientSimulator(GenConfig config) : config_(std::move(config))
{
    validate(config_);
    fill_coefficients(config_.confounder_effects.treatment_log_odds, treat_coef_);
    fill_coefficients(config_.confounder_effects.adrd_log_hazard, adrd_coef_);
    fill_coefficients(config_.confounder_effects.death_log_hazard, death_coef_);

    constexpr int kCalibrationSize = 20000;
    std::vector<double> lp_treat(kCalibrationSize), lp_adrd(kCalibrationSize), lp_death(kCalibrationSize);
    for (int j = 0; j < kCalibrationSize; ++j) {
        Rng rng = make_stream(config_.seed, static_cast<std::uint64_t>(j), kTagCalibration);
        auto l = Latent::draw(rng, config_.covariate_distributions);
        lp_treat[j] = l.predictor(treat_coef_);
        lp_adrd[j] = l.predictor(adrd_coef_);
        lp_death[j] = l.predictor(death_coef_);
    }
    auto mean_prob = [&](double a) {
        double s = 0;
        for (double v : lp_treat)
            s += sigmoid(a + v);
        return s / kCalibrationSize;
    };
    double lo = -40, hi = 40;
    for (int it = 0; it < 200; ++it) {
        const double mid = (lo + hi) / 2;
        (mean_prob(mid) < config_.arm_prevalence ? lo : hi) = mid;
    }
    calibration_.treatment_intercept = (lo + hi) / 2;

    double na = 0, nd = 0;
    for (int j = 0; j < kCalibrationSize; ++j) {
        const double p = sigmoid(calibration_.treatment_intercept + lp_treat[j]);
        na += std::exp(lp_adrd[j]) * (p * std::exp(config_.true_log_hr_adrd) + (1 - p));
        nd += std::exp(lp_death[j]) * (p * std::exp(config_.true_log_hr_death) + (1 - p));
    }
    calibration_.adrd_normalizer = na / kCalibrationSize;
    calibration_.death_normalizer = nd / kCalibrationSize;
}

std::string PatientSimulator::patient_id(std::int64_t index) { return fmt::format("P{:08d}", index); }

std::pair<PatientRecord, PatientTruth> PatientSimulator::simulate(std::int64_t index) const
{
    return simulate(index, config_.recording_sensitivity);
}

std::pair<PatientRecord, PatientTruth> PatientSimulator::simulate(std::int64_t index,
                                                                  const RecordingSensitivity& rec) const
{
    const auto& cfg = config_;
    const auto& pools = CodePools::get();
    const auto idx = static_cast<std::uint64_t>(index);
    Rng rng = make_stream(cfg.seed, idx, kTagLatent);
    Rng rec_rng = make_stream(cfg.seed, idx, kTagRecording);
    Rng visit_rng = make_stream(cfg.seed, idx, kTagVisits);

    PatientRecord p;
    PatientTruth t;
    p.patient_id = t.patient_id = patient_id(index);

    // covariates -> treatment -> PCP
    const Latent l = Latent::draw(rng, cfg.covariate_distributions);
    const double p_treat = sigmoid(calibration_.treatment_intercept + l.predictor(treat_coef_));
    t.metformin = uniform01(rng) < p_treat;
    t.pcp = uniform01(rng) < (t.metformin ? cfg.pcp_prevalence_by_arm.pcp : cfg.pcp_prevalence_by_arm.no_pcp);
    t.post_baseline_pcp = !t.pcp && uniform01(rng) < cfg.visits.post_baseline_pcp_no_pcp;

    const Date last_entry = cfg.study_end - cfg.enrollment_margin_days;
    t.baseline = cfg.study_start + static_cast<std::int32_t>(uniform01(rng) * (last_entry - cfg.study_start + 1));
    p.birth_date = t.baseline - static_cast<std::int32_t>(std::floor(l.age * kDaysPerYear));
    t.age_at_baseline = age_in_years(p.birth_date, t.baseline);

    // latent event times on attained age
    const double treat_adrd = t.metformin ? cfg.true_log_hr_adrd : 0.0;
    const double treat_death = t.metformin ? cfg.true_log_hr_death : 0.0;
    const double m_adrd = cfg.adrd_hazard_multiplier(t.pcp) * std::exp(l.predictor(adrd_coef_) + treat_adrd) /
                          calibration_.adrd_normalizer;
    const double m_death = cfg.death_hazard_multiplier(t.pcp) * std::exp(l.predictor(death_coef_) + treat_death) /
                           calibration_.death_normalizer;
    const std::int32_t adrd_days = years_to_days(cfg.adrd_hazard.inverse_cumulative(t.age_at_baseline, m_adrd, exp1(rng)));
    t.death_days = years_to_days(cfg.death_hazard.inverse_cumulative(t.age_at_baseline, m_death, exp1(rng)));
    if (adrd_days <= t.death_days)  // ties resolve ADRD-first
        t.adrd_days = adrd_days;
    const double dropout_rate = cfg.visits.dropout_rate(t.pcp);
    const std::int32_t dropout_days = dropout_rate > 0 ? years_to_days(exp1(rng) / dropout_rate) : kNever;
    const std::int32_t admin_days = cfg.study_end - t.baseline;
    const std::int32_t observable = std::min(dropout_days, admin_days);
    t.end_of_followup_days = std::min(t.death_days, observable);
    t.prevalent_user = uniform01(rng) < cfg.prevalent_user_fraction;
    t.dual_initiation = uniform01(rng) < cfg.dual_initiation_fraction;

    // recording filter; every uniform is drawn whatever the sensitivity
    std::array<double, kComorbidityCount> u_comorbid;
    for (auto& u : u_comorbid)
        u = uniform01(rec_rng);
    const double u_adrd = uniform01(rec_rng), u_death = uniform01(rec_rng);
    const double u_edu = uniform01(rec_rng), u_bmi = uniform01(rec_rng);

    p.sex = l.female ? Sex::female : Sex::male;
    p.education = u_edu < rec.education(t.pcp) ? l.education : Education::missing;
    p.bmi_class = u_bmi < rec.bmi(t.pcp) ? l.bmi : BmiClass::missing;
    p.svi_scores = l.svi;

    t.death_recorded = t.death_days <= observable && u_death < rec.death(t.pcp);

    // encounters before baseline
    const auto& vm = cfg.visits;
    const double history_years = vm.history_years_min + uniform01(visit_rng) * (vm.history_years_max - vm.history_years_min);
    const auto history_days = std::max<std::int32_t>(1, static_cast<std::int32_t>(history_years * kDaysPerYear));
    auto pre_date = [&] { return t.baseline - 1 - static_cast<std::int32_t>(uniform01(visit_rng) * history_days); };

    std::uint8_t kinds = 0;
    for (int k = 0; k < 3; ++k)
        if (uniform01(visit_rng) < vm.pcp_kind_availability[static_cast<std::size_t>(k)])
            kinds |= static_cast<std::uint8_t>(1u << k);
    if (kinds == 0)
        kinds = static_cast<std::uint8_t>(1u << std::min(2, static_cast<int>(uniform01(visit_rng) * 3)));

    const double mean = vm.pre_baseline_mean(t.pcp) - (t.pcp ? 1.0 : 0.0);
    const double sd = vm.pre_baseline_sd(t.pcp);
    std::int64_t n_pre = 0;
    if (mean > 0) {
        const double var = sd * sd;
        if (var > mean) {
            const double shape = mean * mean / (var - mean);
            std::gamma_distribution<double> gamma(shape, mean / shape);
            std::poisson_distribution<std::int64_t> pois(gamma(visit_rng));
            n_pre = pois(visit_rng);
        } else {
            std::poisson_distribution<std::int64_t> pois(mean);
            n_pre = pois(visit_rng);
        }
    }
    const bool pcp_visits_pre = t.pcp;
    const std::int64_t n_total_pre = n_pre + (t.pcp ? 1 : 0);

    auto make_visit = [&](Date date, bool primary_care_patient, bool force_primary) {
        const double u_pc = uniform01(visit_rng), u_set = uniform01(visit_rng);
        const double u_reason = uniform01(visit_rng), u_proc = uniform01(visit_rng);
        const double u_line = uniform01(visit_rng);
        Encounter e;
        e.date = date;
        const bool primary = force_primary || (primary_care_patient && u_pc < vm.primary_care_share);
        if (primary) {
            e.setting = Setting::outpatient;
            e.service_line = (kinds & 2) ? "Primary Care" : "Internal Medicine";
            if ((kinds & 4) && (force_primary || u_reason < 0.5))
                e.reason_for_visit = "Annual Wellness Visit";
            if ((kinds & 1) && (force_primary || u_proc < 0.5))
                e.procedure_codes.push_back(pick(visit_rng, pools.pcp_procedures));
        } else {
            const double share = primary_care_patient
                                     ? std::max(0.0, (vm.outpatient_share(t.pcp) - vm.primary_care_share) /
                                                         (1.0 - vm.primary_care_share))
                                     : vm.outpatient_share(t.pcp);
            e.setting = u_set < share ? Setting::outpatient
                                      : (u_set < share + (1 - share) * 0.6 ? Setting::inpatient : Setting::other);
            e.service_line = kOtherServiceLines[static_cast<std::size_t>(u_line * kOtherServiceLines.size())];
        }
        return e;
    };

    std::vector<Date> pre_dates(static_cast<std::size_t>(n_total_pre));
    for (auto& d : pre_dates)
        d = pre_date();
    std::sort(pre_dates.begin(), pre_dates.end());
    p.encounters.reserve(pre_dates.size() + 16);
    for (std::size_t k = 0; k < pre_dates.size(); ++k)
        p.encounters.push_back(make_visit(pre_dates[k], pcp_visits_pre, pcp_visits_pre && k == 0));

    // initiation visit on the baseline date
    {
        Encounter e = make_visit(t.baseline, false, false);
        e.setting = Setting::outpatient;
        e.service_line = t.pcp && uniform01(visit_rng) < 0.5 ? "Primary Care" : "Endocrinology";
        p.encounters.push_back(std::move(e));
    }

    // prescriptions
    const bool pcp_post = t.pcp || t.post_baseline_pcp;
    const std::string drug = t.metformin ? std::string("metformin")
                                         : std::string(uniform01(visit_rng) < 0.5 ? "glipizide" : "glimepiride");
    const DrugClass cls = t.metformin ? DrugClass::metformin : DrugClass::sulfonylurea;
    const double u_prev_day = uniform01(visit_rng);
    if (t.prevalent_user)
        p.prescriptions.push_back({t.baseline - 1 - static_cast<std::int32_t>(u_prev_day * 364), DrugClass::other_antidiabetic,
                                   "sitagliptin"});
    p.prescriptions.push_back({t.baseline, cls, drug});
    if (t.dual_initiation)
        p.prescriptions.push_back(t.metformin ? Prescription{t.baseline, DrugClass::sulfonylurea, "glipizide"}
                                              : Prescription{t.baseline, DrugClass::metformin, "metformin"});

    // encounters after baseline until death, dropout or study end
    // routine follow-up after initiation, then a Poisson visit stream
    std::int32_t last_visit_day = 0;
    const auto followup_day = static_cast<std::int32_t>(30 + uniform01(visit_rng) * 91);
    if (followup_day <= t.end_of_followup_days && followup_day <= admin_days) {
        p.encounters.push_back(make_visit(t.baseline + followup_day, pcp_post, false));
        last_visit_day = followup_day;
    }
    const double rate = vm.post_baseline_rate(t.pcp) / kDaysPerYear;
    if (rate > 0) {
        double day = 0;
        while (true) {
            day += -std::log1p(-uniform01(visit_rng)) / rate;
            const auto d = static_cast<std::int32_t>(std::ceil(day));
            if (d > t.end_of_followup_days || d > admin_days)
                break;
            p.encounters.push_back(make_visit(t.baseline + d, pcp_post, false));
            last_visit_day = std::max(last_visit_day, d);
            if (uniform01(visit_rng) < vm.refill_probability)
                p.prescriptions.push_back({t.baseline + d, cls, drug});
        }
    }

    // diagnoses
    for (std::size_t c = 0; c < kComorbidityCount; ++c) {
        const Date d = pre_date();
        const bool icd10 = d >= cfg.icd10_transition;
        const auto& pool = icd10 ? pools.icd10[c] : pools.icd9[c];
        const std::string& code = pick(visit_rng, pool);
        // strict cancer is emitted as a strict code; broad-only as a broad-only code
        bool present = l.comorbid[c];
        if (c == static_cast<std::size_t>(Comorbidity::cancer_broad))
            present = l.comorbid[c] && !l.comorbid[static_cast<std::size_t>(Comorbidity::cancer_strict)];
        const auto sens_index = c == static_cast<std::size_t>(Comorbidity::cancer_strict)
                                    ? static_cast<std::size_t>(Comorbidity::cancer_broad)
                                    : c;
        const double u = c == static_cast<std::size_t>(Comorbidity::cancer_strict)
                             ? u_comorbid[static_cast<std::size_t>(Comorbidity::cancer_broad)]
                             : u_comorbid[c];
        if (present && u < rec.comorbidity[sens_index](t.pcp))
            p.diagnoses.push_back({d, icd10 ? CodeSystem::icd10 : CodeSystem::icd9, code});
    }
    // a diagnosis needs a later encounter to reach the record
    t.last_contact_days = last_visit_day;
    if (t.adrd_days && *t.adrd_days <= last_visit_day) {
        const double age_at = t.age_at_baseline + *t.adrd_days / kDaysPerYear;
        const auto& sens = age_at >= rec.adrd_age_threshold ? rec.adrd_above : rec.adrd_below;
        t.adrd_recorded = u_adrd < sens(t.pcp);
    }
    const double u_adrd_kind = uniform01(visit_rng);
    const double u_adrd_code = uniform01(visit_rng);
    if (t.adrd_recorded) {
        const Date d = t.baseline + *t.adrd_days;
        if (u_adrd_kind < 0.15) {
            p.prescriptions.push_back({d, DrugClass::adrd_medication, "donepezil"});
        } else {
            const bool icd10 = d >= cfg.icd10_transition;
            const auto& pool = icd10 ? pools.adrd_icd10 : pools.adrd_icd9;
            p.diagnoses.push_back({d, icd10 ? CodeSystem::icd10 : CodeSystem::icd9,
                                   pool[static_cast<std::size_t>(u_adrd_code * static_cast<double>(pool.size()))]});
        }
    }
    if (t.death_recorded)
        p.death_date = t.baseline + t.death_days;

    auto by_date = [](const auto& a, const auto& b) { return a.date < b.date; };
    std::stable_sort(p.encounters.begin(), p.encounters.end(), by_date);
    std::stable_sort(p.diagnoses.begin(), p.diagnoses.end(), by_date);
    std::stable_sort(p.prescriptions.begin(), p.prescriptions.end(), by_date);
    return {std::move(p), std::move(t)};
}

std::pair<std::vector<PatientRecord>, GroundTruth> simulate_cohort(const GenConfig& config)
{
    PatientSimulator sim{config};
    std::vector<PatientRecord> patients;
    GroundTruth truth{config.true_log_hr_adrd, config.true_log_hr_death, {}};
    patients.reserve(static_cast<std::size_t>(config.n_patients));
    truth.patients.reserve(static_cast<std::size_t>(config.n_patients));
    for (std::int64_t i = 0; i < config.n_patients; ++i) {
        auto [p, t] = sim.simulate(i);
        patients.push_back(std::move(p));
        truth.patients.push_back(std::move(t));
    }
    return {std::move(patients), std::move(truth)};
}

nlohmann::json to_json(const PatientTruth& t)
{
    return {{"patient_id", t.patient_id},
            {"arm", t.metformin ? "metformin" : "sulfonylurea"},
            {"pcp", t.pcp},
            {"post_baseline_pcp", t.post_baseline_pcp},
            {"baseline", t.baseline.iso()},
            {"age_at_baseline", t.age_at_baseline},
            {"latent_adrd_days", t.adrd_days ? nlohmann::json(*t.adrd_days) : nlohmann::json(nullptr)},
            {"latent_death_days", t.death_days >= kNever ? nlohmann::json(nullptr) : nlohmann::json(t.death_days)},
            {"end_of_followup_days", t.end_of_followup_days},
            {"last_contact_days", t.last_contact_days},
            {"adrd_recorded", t.adrd_recorded},
            {"death_recorded", t.death_recorded},
            {"prevalent_user", t.prevalent_user},
            {"dual_initiation", t.dual_initiation}};
}

double oracle_true_hr(const GenConfig& config, std::int64_t n_mc, std::uint64_t seed)
{
    if (n_mc < 10000)
        throw UsageError("oracle_true_hr: n_mc must be at least 10^4");
    const PatientSimulator sim{config};
    const auto& cfg = sim.config();
    const auto n = static_cast<Eigen::Index>(2 * n_mc);
    CoxData<double> data;
    data.X.resize(n, 1);
    data.time.resize(static_cast<std::size_t>(n));
    data.event.resize(static_cast<std::size_t>(n));
    const Date last_entry = cfg.study_end - cfg.enrollment_margin_days;

    for (std::int64_t j = 0; j < n_mc; ++j) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(j), kTagOracle);
        const auto l = PatientSimulator::Latent::draw(rng, cfg.covariate_distributions);
        const double u_pcp = uniform01(rng);
        const Date baseline =
            cfg.study_start + static_cast<std::int32_t>(uniform01(rng) * (last_entry - cfg.study_start + 1));
        const Date birth = baseline - static_cast<std::int32_t>(std::floor(l.age * kDaysPerYear));
        const double age0 = age_in_years(birth, baseline);
        const double e_adrd = exp1(rng), e_death = exp1(rng);
        const std::int32_t admin = cfg.study_end - baseline;
        for (int arm = 0; arm < 2; ++arm) {
            const bool met = arm == 1;
            const bool pcp = u_pcp < (met ? cfg.pcp_prevalence_by_arm.pcp : cfg.pcp_prevalence_by_arm.no_pcp);
            const double m_a = cfg.adrd_hazard_multiplier(pcp) *
                               std::exp(l.predictor(sim.adrd_coef_) + (met ? cfg.true_log_hr_adrd : 0.0)) /
                               sim.calibration_.adrd_normalizer;
            const double m_d = cfg.death_hazard_multiplier(pcp) *
                               std::exp(l.predictor(sim.death_coef_) + (met ? cfg.true_log_hr_death : 0.0)) /
                               sim.calibration_.death_normalizer;
            const auto ta = years_to_days(cfg.adrd_hazard.inverse_cumulative(age0, m_a, e_adrd));
            const auto td = years_to_days(cfg.death_hazard.inverse_cumulative(age0, m_d, e_death));
            const auto row = static_cast<std::size_t>(2 * j + arm);
            const bool adrd = ta <= td && ta <= admin;
            data.X(static_cast<Eigen::Index>(row), 0) = met ? 1.0 : 0.0;
            data.time[row] = std::min({ta, td, admin});
            data.event[row] = adrd ? 1 : 0;
        }
    }
    const auto fit = fit_cox(data);
    return std::exp(fit.coefficients[0]);
}

}  // namespace ttepcp
