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

#include "ttepcp/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "ttepcp/codesets.hpp"
#include "ttepcp/config_reader.hpp"
#include "ttepcp/error.hpp"

namespace ttepcp {

namespace {

const std::vector<std::string> kSexLevels{"female", "male"};
const std::vector<std::string> kEducationLevels{"secondary", "college", "graduate", "missing"};
const std::vector<std::string> kBmiLevels{"under25", "25to30", "30plus", "missing"};

const std::vector<std::string> kSviNames{"svi_socioeconomic", "svi_home_life", "svi_racial_ethnic", "svi_housing"};

bool is_antidiabetic(DrugClass c)
{
    return c == DrugClass::metformin || c == DrugClass::sulfonylurea || c == DrugClass::other_antidiabetic;
}

std::optional<Arm> study_arm(DrugClass c)
{
    if (c == DrugClass::metformin)
        return Arm::metformin;
    if (c == DrugClass::sulfonylurea)
        return Arm::sulfonylurea;
    return std::nullopt;
}

// First study-drug prescription in the window, ignoring the new-user rules.
std::optional<std::pair<Arm, Date>> first_study_drug(const PatientRecord& p, const EligibilityConfig& c)
{
    for (const auto& rx : p.prescriptions)
        if (auto arm = study_arm(rx.drug_class); arm && rx.date >= c.study_start && rx.date <= c.study_end)
            return std::pair{*arm, rx.date};
    return std::nullopt;
}

std::optional<Date> outcome_date(const PatientRecord& p, const CodeSet& outcome)
{
    auto first = first_outcome_date(p, outcome);
    for (const auto& rx : p.prescriptions)
        if (rx.drug_class == DrugClass::adrd_medication) {
            if (!first || rx.date < *first)
                first = rx.date;
            break;
        }
    return first;
}

Date last_record(const PatientRecord& p)
{
    Date last{std::numeric_limits<std::int32_t>::min()};
    if (!p.encounters.empty())
        last = std::max(last, p.encounters.back().date);
    if (!p.diagnoses.empty())
        last = std::max(last, p.diagnoses.back().date);
    if (!p.prescriptions.empty())
        last = std::max(last, p.prescriptions.back().date);
    return last;
}

}  // namespace

std::string_view to_string(Arm v) { return v == Arm::metformin ? "metformin" : "sulfonylurea"; }

std::string_view to_string(EventType v)
{
    switch (v) {
    case EventType::adrd:
        return "adrd";
    case EventType::death_without_dementia:
        return "death_without_dementia";
    case EventType::censored:
        break;
    }
    return "censored";
}

const std::vector<std::string>* categorical_levels(std::string_view covariate)
{
    if (covariate == "sex")
        return &kSexLevels;
    if (covariate == "education")
        return &kEducationLevels;
    if (covariate == "bmi_class")
        return &kBmiLevels;
    return nullptr;
}

std::optional<CovariateValue> covariate_value(const CohortRow& row, const std::string& name)
{
    if (name == "pcp_flag")
        return CovariateValue{row.pcp_flag ? 1.0 : 0.0};
    auto it = row.covariates.find(name);
    if (it == row.covariates.end())
        return std::nullopt;
    return it->second;
}

EligibilityConfig EligibilityConfig::defaults()
{
    EligibilityConfig c;
    c.outcome_codeset = builtin_codeset("adrd");
    c.covariate_codesets = builtin_covariate_codesets();
    c.pcp = PcpConfig::defaults();
    return c;
}

void validate(const EligibilityConfig& c)
{
    require(c.study_start < c.study_end, "eligibility.study_start", "must be before study_end");
    require(c.lookback_days >= 0, "eligibility.lookback_days", "must be nonnegative");
    require(std::isfinite(c.min_age_at_baseline) && c.min_age_at_baseline >= 0, "eligibility.min_age_at_baseline",
            "must be a nonnegative number");
    require(c.outcome_codeset.size() > 0, "eligibility.outcome_codeset", "must contain at least one code");
    for (const auto& cs : c.covariate_codesets) {
        require(!cs.name().empty(), "eligibility.covariate_codesets", "every codeset needs a name");
        require(cs.name() != "age" && cs.name() != "pcp_flag" && cs.name() != "education" && cs.name() != "sex" &&
                    cs.name() != "bmi_class" &&
                    std::find(kSviNames.begin(), kSviNames.end(), cs.name()) == kSviNames.end(),
                "eligibility.covariate_codesets." + cs.name(), "name clashes with a built-in covariate");
    }
    for (std::size_t a = 0; a < c.covariate_codesets.size(); ++a)
        for (std::size_t b = a + 1; b < c.covariate_codesets.size(); ++b)
            require(c.covariate_codesets[a].name() != c.covariate_codesets[b].name(),
                    "eligibility.covariate_codesets." + c.covariate_codesets[a].name(), "duplicate codeset name");
}

std::vector<std::string> covariate_names(const EligibilityConfig& c)
{
    std::vector<std::string> names{"age", "sex"};
    for (const auto& cs : c.covariate_codesets)
        names.push_back(cs.name());
    names.push_back("education");
    names.insert(names.end(), kSviNames.begin(), kSviNames.end());
    names.push_back("bmi_class");
    return names;
}

std::optional<std::pair<Arm, Date>> derive_baseline(const PatientRecord& p, const EligibilityConfig& c)
{
    const auto first = first_study_drug(p, c);
    if (!first)
        return std::nullopt;
    const auto [arm, day] = *first;
    for (const auto& rx : p.prescriptions) {
        if (rx.date > day)
            break;
        if (!is_antidiabetic(rx.drug_class))
            continue;
        if (rx.date < day && rx.date >= day - c.lookback_days)
            return std::nullopt;  // prevalent user
        if (rx.date == day && study_arm(rx.drug_class) && *study_arm(rx.drug_class) != arm)
            return std::nullopt;  // both classes on the same day
    }
    return first;
}

std::string_view consort_column_name(std::size_t column)
{
    static constexpr std::string_view names[kConsortColumns]{"metformin", "sulfonylurea", "unassigned"};
    return names[column];
}

const std::vector<std::string>& eligibility_steps()
{
    static const std::vector<std::string> steps{"new_user_in_window", "age_at_least_minimum", "no_prior_adrd",
                                                "positive_followup"};
    return steps;
}

ConsortReport ConsortReport::empty()
{
    ConsortReport r;
    for (const auto& s : eligibility_steps())
        r.steps.push_back({s, {}, {}});
    return r;
}

void ConsortReport::merge(const ConsortReport& other)
{
    if (steps.size() != other.steps.size())
        throw UsageError("cannot merge consort reports with different steps");
    for (std::size_t c = 0; c < kConsortColumns; ++c) {
        input[c] += other.input[c];
        for (std::size_t s = 0; s < steps.size(); ++s) {
            steps[s].excluded[c] += other.steps[s].excluded[c];
            steps[s].remaining[c] += other.steps[s].remaining[c];
        }
    }
}

PatientEvaluation evaluate_patient(const PatientRecord& p, const EligibilityConfig& c)
{
    PatientEvaluation ev;
    const auto first = first_study_drug(p, c);
    const auto base = derive_baseline(p, c);
    if (base)
        ev.column = static_cast<std::size_t>(base->first);
    else if (first) {
        // prevalent users keep their arm; same-day dual initiators stay unassigned
        bool dual = false;
        for (const auto& rx : p.prescriptions)
            if (rx.date == first->second && study_arm(rx.drug_class) && *study_arm(rx.drug_class) != first->first)
                dual = true;
        ev.column = dual ? 2 : static_cast<std::size_t>(first->first);
    }
    if (!base) {
        ev.failed_step = 0;
        return ev;
    }
    const auto [arm, baseline] = *base;
    const double age = age_in_years(p.birth_date, baseline);
    if (!(age >= c.min_age_at_baseline)) {
        ev.failed_step = 1;
        return ev;
    }
    const auto outcome = outcome_date(p, c.outcome_codeset);
    if (outcome && *outcome <= baseline) {
        ev.failed_step = 2;
        return ev;
    }

    CohortRow row;
    row.patient_id = p.patient_id;
    row.arm = arm;
    row.baseline = baseline;
    row.birth_date = p.birth_date;
    row.age_at_baseline = age;
    const Date censor = std::min(last_record(p), c.study_end);
    row.censor_days = std::max(0, censor - baseline);
    if (p.death_date && *p.death_date > baseline && *p.death_date <= c.study_end)
        row.death_days = *p.death_date - baseline;
    if (outcome && *outcome <= c.study_end) {
        row.event = EventType::adrd;
        row.followup_days = *outcome - baseline;
    } else if (row.death_days) {
        row.event = EventType::death_without_dementia;
        row.followup_days = *row.death_days;
    } else {
        row.event = EventType::censored;
        row.followup_days = row.censor_days;
    }
    if (row.followup_days <= 0) {
        ev.failed_step = 3;
        return ev;
    }

    row.pcp_kinds = pcp_kinds_before(p, baseline, c.pcp);
    row.pcp_kinds_after = pcp_kinds_from(p, baseline, c.pcp);
    row.pcp_flag = row.pcp_kinds != 0;
    for (const auto& e : p.encounters) {
        if (e.date >= baseline)
            break;
        ++row.visits_pre_baseline;
        if (e.setting == Setting::outpatient)
            ++row.outpatient_visits_pre_baseline;
    }

    auto& cov = row.covariates;
    cov["age"] = age;
    cov["sex"] = std::string(to_string(p.sex));
    for (const auto& cs : c.covariate_codesets)
        cov[cs.name()] = has_code_on_or_before(p, cs, baseline) ? 1.0 : 0.0;
    cov["education"] = std::string(to_string(p.education));
    cov["svi_socioeconomic"] = p.svi_scores.socioeconomic;
    cov["svi_home_life"] = p.svi_scores.home_life;
    cov["svi_racial_ethnic"] = p.svi_scores.racial_ethnic;
    cov["svi_housing"] = p.svi_scores.housing;
    cov["bmi_class"] = std::string(to_string(p.bmi_class));
    ev.row = std::move(row);
    return ev;
}

CohortBuilder::CohortBuilder(EligibilityConfig config) : config_(std::move(config)), report_(ConsortReport::empty())
{
    validate(config_);
    config_.pcp.normalize();
}

void CohortBuilder::add(const PatientRecord& patient)
{
    auto ev = evaluate_patient(patient, config_);
    const std::size_t col = ev.column;
    ++report_.input[col];
    const std::size_t passed = ev.failed_step ? *ev.failed_step : report_.steps.size();
    for (std::size_t s = 0; s < passed; ++s)
        ++report_.steps[s].remaining[col];
    if (ev.failed_step)
        ++report_.steps[*ev.failed_step].excluded[col];
    if (ev.row)
        rows_.push_back(std::move(*ev.row));
}

std::vector<CohortRow> CohortBuilder::take_rows()
{
    std::sort(rows_.begin(), rows_.end(), [](const CohortRow& a, const CohortRow& b) { return a.patient_id < b.patient_id; });
    for (std::size_t k = 1; k < rows_.size(); ++k)
        if (rows_[k].patient_id == rows_[k - 1].patient_id)
            throw SchemaError("duplicate patient_id: " + rows_[k].patient_id);
    return std::move(rows_);
}

std::pair<ConsortReport, std::vector<CohortRow>> build_cohort(std::span<const PatientRecord> patients,
                                                              const EligibilityConfig& config)
{
    CohortBuilder builder{config};
    for (const auto& p : patients)
        builder.add(p);
    auto rows = builder.take_rows();
    return {builder.report(), std::move(rows)};
}

std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::B:
        return "B";
    case Strategy::M:
        return "M";
    case Strategy::E:
        break;
    }
    return "E";
}

Strategy parse_strategy(std::string_view s)
{
    if (s == "B")
        return Strategy::B;
    if (s == "M")
        return Strategy::M;
    if (s == "E")
        return Strategy::E;
    throw ParseError("unknown strategy '" + std::string(s) + "' (expected B, M or E)");
}

StrategyResult apply_strategy(std::span<const CohortRow> rows, const StrategySpec& spec,
                              const std::vector<std::string>& covariates)
{
    StrategyResult out;
    out.covariates = covariates;
    switch (spec.variant) {
    case Strategy::B:
        out.rows.assign(rows.begin(), rows.end());
        break;
    case Strategy::M:
        out.rows.assign(rows.begin(), rows.end());
        out.covariates.push_back("pcp_flag");
        break;
    case Strategy::E: {
        std::array<std::int64_t, 2> per_arm{};
        for (const auto& r : rows)
            if (r.pcp_flag) {
                out.rows.push_back(r);
                ++per_arm[static_cast<std::size_t>(r.arm)];
            }
        if (out.rows.empty())
            throw DegenerateCohortError("strategy E: no rows with a PCP indication");
        if (per_arm[0] == 0 || per_arm[1] == 0)
            throw DegenerateCohortError("strategy E: PCP-flagged rows cover a single arm");
        break;
    }
    }
    return out;
}

namespace {

struct Moments {
    std::int64_t n = 0;
    double mean = 0, m2 = 0;  // Welford

    void add(double x)
    {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double sd() const { return n < 2 ? 0.0 : std::sqrt(m2 / static_cast<double>(n - 1)); }
};

}  // namespace

SummaryTable summarize(std::span<const CohortRow> rows, const std::string& group_key)
{
    SummaryTable t;
    t.group_key = group_key;
    std::function<std::size_t(const CohortRow&)> group_of;
    if (group_key == "pcp_flag") {
        t.groups = {"pcp", "no_pcp"};
        group_of = [](const CohortRow& r) -> std::size_t { return r.pcp_flag ? 0 : 1; };
    } else if (group_key == "arm") {
        t.groups = {"metformin", "sulfonylurea"};
        group_of = [](const CohortRow& r) { return static_cast<std::size_t>(r.arm); };
    } else {
        throw UsageError("unknown summary group key '" + group_key + "' (expected pcp_flag or arm)");
    }
    const std::size_t g = t.groups.size();
    std::vector<std::int64_t> n(g, 0);
    for (const auto& r : rows)
        ++n[group_of(r)];

    auto percent_line = [&](const std::string& feature, const std::function<bool(const CohortRow&)>& pred) {
        std::vector<std::int64_t> hits(g, 0);
        for (const auto& r : rows)
            if (pred(r))
                ++hits[group_of(r)];
        SummaryLine line{feature, "percent", {}};
        for (std::size_t k = 0; k < g; ++k)
            line.values.push_back(n[k] ? std::optional<double>(100.0 * static_cast<double>(hits[k]) /
                                                               static_cast<double>(n[k]))
                                       : std::nullopt);
        t.lines.push_back(std::move(line));
    };
    auto numeric_lines = [&](const std::string& feature, const std::function<double(const CohortRow&)>& value) {
        std::vector<Moments> m(g);
        for (const auto& r : rows)
            m[group_of(r)].add(value(r));
        SummaryLine mean{feature, "mean", {}}, sd{feature, "sd", {}};
        for (std::size_t k = 0; k < g; ++k) {
            mean.values.push_back(m[k].n ? std::optional<double>(m[k].mean) : std::nullopt);
            sd.values.push_back(m[k].n ? std::optional<double>(m[k].sd()) : std::nullopt);
        }
        t.lines.push_back(std::move(mean));
        t.lines.push_back(std::move(sd));
    };
    auto number = [](const CohortRow& r, const std::string& name) {
        auto it = r.covariates.find(name);
        return it != r.covariates.end() && std::holds_alternative<double>(it->second) ? std::get<double>(it->second)
                                                                                      : std::nan("");
    };
    auto label = [](const CohortRow& r, const std::string& name) {
        auto it = r.covariates.find(name);
        return it != r.covariates.end() && std::holds_alternative<std::string>(it->second)
                   ? std::get<std::string>(it->second)
                   : std::string();
    };

    SummaryLine count{"N", "n", {}};
    for (auto v : n)
        count.values.push_back(static_cast<double>(v));
    t.lines.push_back(std::move(count));

    if (group_key == "arm")
        percent_line("pcp_flag", [](const CohortRow& r) { return r.pcp_flag; });
    else
        percent_line("arm=metformin", [](const CohortRow& r) { return r.arm == Arm::metformin; });

    numeric_lines("age", [&](const CohortRow& r) { return r.age_at_baseline; });
    auto categorical = [&](const std::string& name) {
        for (const auto& level : *categorical_levels(name))
            percent_line(name + "=" + level, [&, level](const CohortRow& r) { return label(r, name) == level; });
    };
    categorical("sex");

    // binary codeset covariates, in name order
    std::vector<std::string> binary;
    if (!rows.empty())
        for (const auto& [name, value] : rows.front().covariates)
            if (std::holds_alternative<double>(value) && name != "age" &&
                std::find(kSviNames.begin(), kSviNames.end(), name) == kSviNames.end())
                binary.push_back(name);
    for (const auto& name : binary)
        percent_line(name, [&, name](const CohortRow& r) { return number(r, name) == 1.0; });

    categorical("education");
    for (const auto& name : kSviNames)
        numeric_lines(name, [&, name](const CohortRow& r) { return number(r, name); });
    categorical("bmi_class");
    numeric_lines("visits_pre_baseline", [](const CohortRow& r) { return static_cast<double>(r.visits_pre_baseline); });
    numeric_lines("outpatient_visits_pre_baseline",
                  [](const CohortRow& r) { return static_cast<double>(r.outpatient_visits_pre_baseline); });
    numeric_lines("followup_years", [](const CohortRow& r) { return r.followup_days / 365.25; });
    percent_line("event=adrd", [](const CohortRow& r) { return r.event == EventType::adrd; });
    percent_line("event=death_without_dementia",
                 [](const CohortRow& r) { return r.event == EventType::death_without_dementia; });
    return t;
}

VennCounts row_venn(std::span<const CohortRow> rows)
{
    VennCounts v;
    for (const auto& r : rows)
        v.add(r.pcp_kinds);
    return v;
}

}  // namespace ttepcp
