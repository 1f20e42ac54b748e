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
#include <random>

#include <doctest.h>

#include "ttepcp/cohort.hpp"
#include "ttepcp/error.hpp"
#include "ttepcp/simulator.hpp"

using namespace ttepcp;

namespace {

Date d(int y, unsigned m, unsigned day) { return Date::from_ymd(y, m, day); }

const EligibilityConfig& cfg()
{
    static const EligibilityConfig c = EligibilityConfig::defaults();
    return c;
}

// Patient initiating metformin on 2010-05-01 with an encounter on that day.
PatientRecord initiator(const std::string& id = "P1")
{
    PatientRecord p;
    p.patient_id = id;
    p.birth_date = d(1945, 1, 1);
    Encounter e;
    e.date = d(2010, 5, 1);
    p.encounters.push_back(e);
    p.prescriptions.push_back({d(2010, 5, 1), DrugClass::metformin, "metformin"});
    return p;
}

void add_encounter(PatientRecord& p, Date date)
{
    Encounter e;
    e.date = date;
    p.encounters.push_back(e);
    std::sort(p.encounters.begin(), p.encounters.end(), [](auto& a, auto& b) { return a.date < b.date; });
}

void sort_rx(PatientRecord& p)
{
    std::stable_sort(p.prescriptions.begin(), p.prescriptions.end(), [](auto& a, auto& b) { return a.date < b.date; });
}

// Independent statement of the new-user decision table.
std::optional<std::pair<Arm, Date>> baseline_oracle(std::optional<Date> met, std::optional<Date> su,
                                                    std::optional<Date> other, const EligibilityConfig& c)
{
    auto in_window = [&](std::optional<Date> x) { return x && *x >= c.study_start && *x <= c.study_end; };
    std::optional<std::pair<Arm, Date>> first;
    if (in_window(met))
        first = std::pair{Arm::metformin, *met};
    if (in_window(su) && (!first || *su < first->second))
        first = std::pair{Arm::sulfonylurea, *su};
    if (!first)
        return std::nullopt;
    const Date b = first->second;
    if (met && su && *met == *su && *met == b)
        return std::nullopt;
    for (auto x : {met, su, other})
        if (x && *x < b && *x >= b - c.lookback_days)
            return std::nullopt;
    return first;
}

}  // namespace

TEST_CASE("baseline derivation examples")
{
    auto p = initiator();
    auto b = derive_baseline(p, cfg());
    REQUIRE(b.has_value());
    CHECK(b->first == Arm::metformin);
    CHECK(b->second == d(2010, 5, 1));

    p.prescriptions.insert(p.prescriptions.begin(), {d(2010, 1, 1), DrugClass::other_antidiabetic, "sitagliptin"});
    CHECK_FALSE(derive_baseline(p, cfg()).has_value());

    p = initiator();
    p.prescriptions.push_back({d(2010, 5, 1), DrugClass::sulfonylurea, "glipizide"});
    CHECK_FALSE(derive_baseline(p, cfg()).has_value());
}

TEST_CASE("baseline derivation matches the decision table")
{
    const Date b = d(2010, 5, 1);
    const std::vector<std::optional<std::int32_t>> met_offsets{std::nullopt, 0, 10, -100, -400};
    const std::vector<std::optional<std::int32_t>> su_offsets{std::nullopt, 0, 10, -100, -4000};
    const std::vector<std::optional<std::int32_t>> other_offsets{std::nullopt, -400, -365, -364, -1, 0};
    int cases = 0;
    for (auto mo : met_offsets)
        for (auto so : su_offsets)
            for (auto oo : other_offsets) {
                PatientRecord p;
                p.patient_id = "P";
                p.birth_date = d(1940, 1, 1);
                std::optional<Date> met, su, other;
                if (mo) {
                    met = b + *mo;
                    p.prescriptions.push_back({*met, DrugClass::metformin, "metformin"});
                }
                if (so) {
                    su = b + *so;
                    p.prescriptions.push_back({*su, DrugClass::sulfonylurea, "glipizide"});
                }
                if (oo) {
                    other = b + *oo;
                    p.prescriptions.push_back({*other, DrugClass::other_antidiabetic, "sitagliptin"});
                }
                sort_rx(p);
                CHECK(derive_baseline(p, cfg()) == baseline_oracle(met, su, other, cfg()));
                ++cases;
            }
    CHECK(cases == 150);
}

TEST_CASE("event derivation")
{
    const auto& c = cfg();
    SUBCASE("death without dementia")
    {
        auto p = initiator();
        add_encounter(p, d(2010, 6, 1));
        p.death_date = d(2010, 5, 1) + 100;
        const auto ev = evaluate_patient(p, c);
        REQUIRE(ev.row.has_value());
        CHECK(ev.row->event == EventType::death_without_dementia);
        CHECK(ev.row->followup_days == 100);
    }
    SUBCASE("first event wins")
    {
        auto p = initiator();
        p.diagnoses.push_back({d(2010, 5, 1) + 200, CodeSystem::icd9, "331.0"});
        p.death_date = d(2010, 5, 1) + 300;
        const auto ev = evaluate_patient(p, c);
        REQUIRE(ev.row.has_value());
        CHECK(ev.row->event == EventType::adrd);
        CHECK(ev.row->followup_days == 200);
        CHECK(ev.row->death_days == 300);
    }
    SUBCASE("same-day ADRD and death count as ADRD")
    {
        auto p = initiator();
        p.diagnoses.push_back({d(2010, 5, 1) + 50, CodeSystem::icd10, "G30.9"});
        p.death_date = d(2010, 5, 1) + 50;
        CHECK(evaluate_patient(p, c).row->event == EventType::adrd);
    }
    SUBCASE("ADRD medication is an outcome")
    {
        auto p = initiator();
        p.prescriptions.push_back({d(2011, 1, 1), DrugClass::adrd_medication, "donepezil"});
        const auto row = evaluate_patient(p, c).row;
        REQUIRE(row.has_value());
        CHECK(row->event == EventType::adrd);
        CHECK(row->followup_days == d(2011, 1, 1) - d(2010, 5, 1));
    }
    SUBCASE("censored at the last record of any type")
    {
        auto p = initiator();
        add_encounter(p, d(2011, 1, 1));
        p.diagnoses.push_back({d(2012, 1, 1), CodeSystem::icd9, "401.9"});
        const auto row = evaluate_patient(p, c).row;
        REQUIRE(row.has_value());
        CHECK(row->event == EventType::censored);
        CHECK(row->followup_days == d(2012, 1, 1) - d(2010, 5, 1));
    }
    SUBCASE("censoring is capped at the end of the study")
    {
        auto p = initiator();
        add_encounter(p, d(2025, 1, 1));
        p.death_date = d(2025, 2, 1);
        const auto row = evaluate_patient(p, c).row;
        REQUIRE(row.has_value());
        CHECK(row->event == EventType::censored);
        CHECK(row->followup_days == c.study_end - d(2010, 5, 1));
    }
}

TEST_CASE("eligibility exclusions land on the right consort step")
{
    const auto& c = cfg();
    auto prior = initiator();
    prior.diagnoses.push_back({d(2009, 1, 1), CodeSystem::icd9, "331.0"});
    add_encounter(prior, d(2011, 1, 1));
    CHECK(evaluate_patient(prior, c).failed_step == 2u);

    auto young = initiator();
    young.birth_date = d(1970, 1, 1);
    add_encounter(young, d(2011, 1, 1));
    CHECK(evaluate_patient(young, c).failed_step == 1u);

    auto no_followup = initiator();
    CHECK(evaluate_patient(no_followup, c).failed_step == 3u);

    auto no_drug = initiator();
    no_drug.prescriptions.clear();
    const auto ev = evaluate_patient(no_drug, c);
    CHECK(ev.failed_step == 0u);
    CHECK(ev.column == 2u);

    const std::vector<PatientRecord> ps{prior, young, no_followup, no_drug};
    const auto [report, rows] = build_cohort(ps, c);
    CHECK(rows.empty());
    CHECK(report.input[0] == 3);
    CHECK(report.input[2] == 1);
    CHECK(report.steps[2].excluded[0] == 1);
    CHECK(report.steps[1].excluded[0] == 1);
    CHECK(report.steps[3].excluded[0] == 1);
    CHECK(report.steps[0].excluded[2] == 1);
}

TEST_CASE("covariates use records on or before baseline")
{
    auto p = initiator();
    p.diagnoses.push_back({d(2010, 5, 1), CodeSystem::icd9, "401.9"});
    p.diagnoses.push_back({d(2010, 6, 1), CodeSystem::icd10, "I63.9"});
    add_encounter(p, d(2011, 1, 1));
    const auto row = evaluate_patient(p, cfg()).row;
    REQUIRE(row.has_value());
    CHECK(std::get<double>(row->covariates.at("hypertension")) == 1.0);
    CHECK(std::get<double>(row->covariates.at("stroke")) == 0.0);
    CHECK(std::get<std::string>(row->covariates.at("sex")) == "female");
    CHECK(covariate_names(cfg()).size() == row->covariates.size());
}

TEST_CASE("PCP flag requires an indication strictly before baseline")
{
    auto p = initiator();
    add_encounter(p, d(2011, 1, 1));
    p.encounters.front().service_line = "Primary Care";  // on the baseline date
    auto row = evaluate_patient(p, cfg()).row;
    REQUIRE(row.has_value());
    CHECK_FALSE(row->pcp_flag);
    CHECK(row->pcp_kinds_after == 2);

    add_encounter(p, d(2009, 1, 1));
    p.encounters.front().service_line = "Primary Care";
    row = evaluate_patient(p, cfg()).row;
    CHECK(row->pcp_flag);
    CHECK(row->visits_pre_baseline == 1);
}

TEST_CASE("cohort on a simulated corpus")
{
    auto g = GenConfig::defaults();
    g.n_patients = 4000;
    const auto [patients, truth] = simulate_cohort(g);
    const auto [report, rows] = build_cohort(patients, cfg());

    SUBCASE("consort conservation per column")
    {
        for (std::size_t col = 0; col < kConsortColumns; ++col) {
            std::int64_t excluded = 0;
            for (const auto& s : report.steps)
                excluded += s.excluded[col];
            CHECK(report.input[col] == report.steps.back().remaining[col] + excluded);
            std::int64_t remaining = report.input[col];
            for (const auto& s : report.steps) {
                remaining -= s.excluded[col];
                CHECK(s.remaining[col] == remaining);
            }
        }
        std::int64_t met = 0, su = 0;
        for (const auto& r : rows)
            (r.arm == Arm::metformin ? met : su) += 1;
        CHECK(report.steps.back().remaining[0] == met);
        CHECK(report.steps.back().remaining[1] == su);
        CHECK(report.steps.back().remaining[2] == 0);
        CHECK(report.input[0] + report.input[1] + report.input[2] == g.n_patients);
    }
    SUBCASE("rows are sorted, unique and well formed")
    {
        for (std::size_t k = 1; k < rows.size(); ++k)
            CHECK(rows[k - 1].patient_id < rows[k].patient_id);
        for (const auto& r : rows) {
            CHECK(r.followup_days > 0);
            if (r.event == EventType::death_without_dementia)
                CHECK(r.death_days == r.followup_days);
        }
    }
    SUBCASE("input order does not matter")
    {
        auto shuffled = patients;
        std::mt19937_64 rng(5);
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto [report2, rows2] = build_cohort(shuffled, cfg());
        CHECK(to_json(report2) == to_json(report));
        REQUIRE(rows2.size() == rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            CHECK(rows2[k].patient_id == rows[k].patient_id);
            CHECK(rows2[k].followup_days == rows[k].followup_days);
            CHECK(rows2[k].covariates == rows[k].covariates);
        }
    }
    SUBCASE("strategies")
    {
        const auto covs = covariate_names(cfg());
        const auto b = apply_strategy(rows, {Strategy::B}, covs);
        CHECK(b.rows.size() == rows.size());
        CHECK(b.covariates == covs);
        const auto m = apply_strategy(rows, {Strategy::M}, covs);
        CHECK(m.rows.size() == rows.size());
        CHECK(m.covariates.size() == covs.size() + 1);
        CHECK(m.covariates.back() == "pcp_flag");
        const auto e = apply_strategy(rows, {Strategy::E}, covs);
        const auto flagged = std::count_if(rows.begin(), rows.end(), [](auto& r) { return r.pcp_flag; });
        CHECK(static_cast<std::ptrdiff_t>(e.rows.size()) == flagged);
        for (const auto& r : e.rows)
            CHECK(r.pcp_flag);
    }
    SUBCASE("summary tables")
    {
        const auto t = summarize(rows, "pcp_flag");
        CHECK(t.groups == std::vector<std::string>{"pcp", "no_pcp"});
        for (const auto& line : t.lines)
            if (line.feature == "obesity" && line.statistic == "percent") {
                CHECK(*line.values[0] == doctest::Approx(56.0).epsilon(0.12));
                CHECK(*line.values[1] == doctest::Approx(21.0).epsilon(0.15));
            }
        CHECK_THROWS_AS(summarize(rows, "education"), UsageError);
    }
}

TEST_CASE("strategy E on synthetic flag counts")
{
    std::vector<CohortRow> rows(54440);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].patient_id = std::to_string(i);
        rows[i].arm = i % 7 == 0 ? Arm::sulfonylurea : Arm::metformin;
        rows[i].pcp_flag = i < 17118;
    }
    CHECK(apply_strategy(rows, {Strategy::E}, {}).rows.size() == 17118);

    for (auto& r : rows)
        r.pcp_flag = false;
    CHECK_THROWS_AS(apply_strategy(rows, {Strategy::E}, {}), DegenerateCohortError);
    rows[0].pcp_flag = true;  // one arm only
    CHECK_THROWS_AS(apply_strategy(rows, {Strategy::E}, {}), DegenerateCohortError);
}

TEST_CASE("single-row summary")
{
    auto p = initiator();
    add_encounter(p, d(2011, 1, 1));
    const auto row = *evaluate_patient(p, cfg()).row;
    const std::vector<CohortRow> one{row};
    const auto t = summarize(one, "arm");
    for (const auto& line : t.lines) {
        if (line.statistic == "sd")
            CHECK(*line.values[0] == 0.0);
        if (line.feature == "age" && line.statistic == "mean")
            CHECK(*line.values[0] == doctest::Approx(row.age_at_baseline));
        if (line.statistic != "n")
            CHECK_FALSE(line.values[1].has_value());
    }
}
