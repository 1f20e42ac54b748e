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

#include "ttepcp/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ttepcp/error.hpp"
#include "ttepcp/propensity.hpp"
#include "ttepcp/rng.hpp"
#include "ttepcp/simulator.hpp"

namespace ttepcp {

namespace {

constexpr std::uint64_t kTagBootstrap = 0xB0075;

std::uint8_t cause_code(EventType e)
{
    switch (e) {
    case EventType::adrd:
        return 1;
    case EventType::death_without_dementia:
        return 2;
    case EventType::censored:
        break;
    }
    return 0;
}

double step_value(const std::vector<std::int32_t>& times, const std::vector<double>& values, std::int32_t t,
                  double before)
{
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin())
        return before;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

}  // namespace

CoxResult fit_cox(std::span<const CohortRow> rows, const std::vector<std::string>& covariates,
                  const Eigen::VectorXd* weights, TieMethod ties)
{
    return fit_cox(rows, build_design(rows, covariates, false), weights, ties);
}

CoxResult fit_cox(std::span<const CohortRow> rows, const DesignMatrix& design, const Eigen::VectorXd* weights,
                  TieMethod ties)
{
    if (design.X.rows() != static_cast<Eigen::Index>(rows.size()))
        throw UsageError("fit_cox: one design row per cohort row required");
    const auto n = static_cast<Eigen::Index>(rows.size());
    CoxData<double> data;
    data.X.resize(n, design.X.cols() + 1);
    data.X.col(0) = treatment_vector(rows);
    data.X.rightCols(design.X.cols()) = design.X;
    data.time.reserve(rows.size());
    data.event.reserve(rows.size());
    for (const auto& r : rows) {
        data.time.push_back(r.followup_days);
        data.event.push_back(r.event == EventType::adrd ? 1 : 0);
    }
    if (weights) {
        if (weights->size() != n)
            throw UsageError("fit_cox: one weight per row required");
        data.weight = *weights;
    }
    CoxOptions opt;
    opt.ties = ties;
    CoxResult out;
    out.fit = fit_cox(data, opt);
    out.names.push_back(kTreatmentName);
    out.names.insert(out.names.end(), design.names.begin(), design.names.end());
    return out;
}

std::vector<ForestRow> forest_table(const CoxResult& result)
{
    const Eigen::VectorXd se = result.fit.standard_errors();
    std::vector<ForestRow> rows;
    for (std::size_t k = 0; k < result.names.size(); ++k) {
        const auto j = static_cast<Eigen::Index>(k);
        ForestRow r;
        r.name = result.names[k];
        r.log_hr = result.fit.coefficients[j];
        r.se = se[j];
        r.hr = std::exp(r.log_hr);
        r.ci_lower = std::exp(r.log_hr - 1.96 * r.se);
        r.ci_upper = std::exp(r.log_hr + 1.96 * r.se);
        r.p_value = std::erfc(std::abs(r.log_hr / r.se) / std::sqrt(2.0));
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string_view to_string(Cause c) { return c == Cause::adrd ? "adrd" : "death_without_dementia"; }

CompetingRisks aalen_johansen(std::span<const std::int32_t> time, std::span<const std::uint8_t> cause,
                              std::span<const double> weight)
{
    if (time.size() != cause.size() || time.size() != weight.size())
        throw UsageError("aalen_johansen: inconsistent input lengths");
    std::vector<std::size_t> idx;
    idx.reserve(time.size());
    for (std::size_t i = 0; i < time.size(); ++i) {
        if (!(weight[i] >= 0) || !std::isfinite(weight[i]))
            throw UsageError("aalen_johansen: weights must be finite and nonnegative");
        if (cause[i] > 2)
            throw UsageError("aalen_johansen: cause codes are 0, 1 or 2");
        if (weight[i] > 0)
            idx.push_back(i);
    }
    // canonical order keeps sums independent of the input permutation
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (time[a] != time[b])
            return time[a] < time[b];
        if (cause[a] != cause[b])
            return cause[a] < cause[b];
        return weight[a] < weight[b];
    });

    // groups of equal time with at-risk weight from suffix sums
    struct Group {
        std::int32_t t;
        double at_risk = 0, d1 = 0, d2 = 0;
    };
    std::vector<Group> groups;
    double suffix = 0;
    for (std::size_t k = idx.size(); k-- > 0;) {
        const auto i = idx[k];
        if (groups.empty() || groups.back().t != time[i])
            groups.push_back({time[i]});
        suffix += weight[i];
        auto& g = groups.back();
        g.at_risk = suffix;
        if (cause[i] == 1)
            g.d1 += weight[i];
        else if (cause[i] == 2)
            g.d2 += weight[i];
    }
    std::reverse(groups.begin(), groups.end());

    CompetingRisks cr;
    double s = 1, c1 = 0, c2 = 0;
    for (const auto& g : groups) {
        if (g.d1 <= 0 && g.d2 <= 0)
            continue;
        const double h1 = g.d1 / g.at_risk, h2 = g.d2 / g.at_risk;
        c1 += s * h1;
        c2 += s * h2;
        s *= 1 - (g.d1 + g.d2) / g.at_risk;
        cr.times.push_back(g.t);
        cr.survival.push_back(s);
        cr.incidence[0].push_back(c1);
        cr.incidence[1].push_back(c2);
    }
    return cr;
}

CifCurve extract_cause(const CompetingRisks& cr, Cause cause)
{
    CifCurve c;
    c.cause = cause;
    c.times = cr.times;
    c.incidence = cr.incidence[cause == Cause::adrd ? 0 : 1];
    c.survival = cr.survival;
    return c;
}

CifCurve aalen_johansen(std::span<const CohortRow> rows, const Eigen::VectorXd& weights, Cause cause)
{
    if (weights.size() != static_cast<Eigen::Index>(rows.size()))
        throw UsageError("aalen_johansen: one weight per row required");
    std::vector<std::int32_t> time;
    std::vector<std::uint8_t> code;
    for (const auto& r : rows) {
        time.push_back(r.followup_days);
        code.push_back(cause_code(r.event));
    }
    for (Eigen::Index i = 0; i < weights.size(); ++i)
        if (!(weights[i] > 0))
            throw UsageError("aalen_johansen: weights must be positive");
    return extract_cause(aalen_johansen(time, code, {weights.data(), rows.size()}), cause);
}

double CifCurve::at(std::int32_t t) const { return step_value(times, incidence, t, 0.0); }
double CifCurve::survival_at(std::int32_t t) const { return step_value(times, survival, t, 1.0); }

double incidence_at(const CompetingRisks& cr, Cause cause, std::int32_t t)
{
    return step_value(cr.times, cr.incidence[cause == Cause::adrd ? 0 : 1], t, 0.0);
}

RdEstimate risk_difference(const CifCurve& treat, const CifCurve& ctrl, std::int32_t horizon_days)
{
    RdEstimate rd;
    rd.horizon_days = horizon_days;
    rd.point = treat.at(horizon_days) - ctrl.at(horizon_days);
    return rd;
}

BootstrapResult bootstrap(std::size_t n_subjects, const BootstrapAnalysis& analysis, const BootstrapOptions& options)
{
    if (options.n_reps < 2)
        throw UsageError("bootstrap: n_reps must be at least 2");
    if (n_subjects == 0)
        throw DegenerateCohortError("bootstrap: no subjects");
    BootstrapResult out;
    out.n_reps = options.n_reps;
    Eigen::VectorXd mult(static_cast<Eigen::Index>(n_subjects));
    const auto n = static_cast<double>(n_subjects);
    for (int r = 0; r < options.n_reps; ++r) {
        Rng rng = make_stream(options.seed, static_cast<std::uint64_t>(r), kTagBootstrap);
        mult.setZero();
        for (std::size_t k = 0; k < n_subjects; ++k)
            mult[static_cast<Eigen::Index>(uniform01(rng) * n)] += 1;
        try {
            out.replicates.push_back(analysis(mult));
        } catch (const DegenerateCohortError&) {
            ++out.n_skipped;
        }
    }
    if (out.n_skipped > options.max_skip_fraction * options.n_reps || out.replicates.empty())
        throw InferenceInstabilityError(fmt::format("bootstrap: {} of {} replicates skipped (limit {:.0f}%)",
                                                    out.n_skipped, options.n_reps, 100 * options.max_skip_fraction));
    const std::size_t stats = out.replicates.front().size();
    std::vector<double> column(out.replicates.size());
    for (std::size_t s = 0; s < stats; ++s) {
        for (std::size_t r = 0; r < out.replicates.size(); ++r) {
            if (out.replicates[r].size() != stats)
                throw UsageError("bootstrap: analysis returned a varying number of statistics");
            column[r] = out.replicates[r][s];
        }
        out.lower.push_back(empirical_quantile(column, 0.025));
        out.upper.push_back(empirical_quantile(column, 0.975));
    }
    return out;
}

std::string AgeBin::label() const
{
    auto num = [](double v) { return fmt::format("{:g}", v); };
    return upper ? "[" + num(lower) + "," + num(*upper) + ")" : num(lower) + "+";
}

std::vector<AgeBin> default_age_bins()
{
    std::vector<AgeBin> bins;
    for (int a = 50; a < 90; a += 5)
        bins.push_back({double(a), double(a + 5)});
    bins.push_back({90.0, std::nullopt});
    return bins;
}

RateTable age_specific_rates(std::span<const AgeInterval> intervals, const std::vector<AgeBin>& bins,
                             const RateTable* reference)
{
    for (std::size_t k = 0; k < bins.size(); ++k) {
        const auto& b = bins[k];
        if (b.upper && !(*b.upper > b.lower))
            throw UsageError("age bins must have upper > lower");
        if (k + 1 < bins.size() && (!b.upper || bins[k + 1].lower < *b.upper))
            throw UsageError("age bins must be ordered and nonoverlapping");
    }
    RateTable table;
    for (const auto& bin : bins) {
        const double hi = bin.upper ? *bin.upper : std::numeric_limits<double>::infinity();
        RateRow row;
        row.bin = bin;
        for (const auto& iv : intervals) {
            const double overlap = std::min(iv.exit_age, hi) - std::max(iv.entry_age, bin.lower);
            if (overlap > 0)
                row.person_years += overlap;
            if (iv.event_age && *iv.event_age >= bin.lower && *iv.event_age < hi)
                ++row.events;
        }
        if (!(row.person_years > 0)) {
            table.omitted.push_back(bin);
            continue;
        }
        row.incidence = static_cast<double>(row.events) / row.person_years;
        if (reference)
            for (const auto& ref : reference->rows)
                if (ref.bin.label() == bin.label()) {
                    row.reference = ref.incidence;
                    if (ref.incidence > 0)
                        row.ratio = row.incidence / ref.incidence;
                }
        table.rows.push_back(std::move(row));
    }
    return table;
}

RateTable reference_rates(const PiecewiseHazard& hazard, const std::vector<AgeBin>& bins)
{
    RateTable t;
    for (const auto& bin : bins) {
        RateRow row;
        row.bin = bin;
        row.incidence = bin.upper ? hazard.cumulative(bin.lower, *bin.upper) / (*bin.upper - bin.lower)
                                  : hazard.rate_at(bin.lower);
        t.rows.push_back(row);
    }
    return t;
}

std::vector<AgeInterval> rate_intervals(std::span<const CohortRow> rows, RateEvent event)
{
    std::vector<AgeInterval> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        AgeInterval iv;
        iv.entry_age = r.age_at_baseline;
        if (event == RateEvent::adrd) {
            iv.exit_age = age_in_years(r.birth_date, r.baseline + r.followup_days);
            if (r.event == EventType::adrd)
                iv.event_age = iv.exit_age;
        } else {
            iv.exit_age = age_in_years(r.birth_date, r.baseline + (r.death_days ? *r.death_days : r.censor_days));
            if (r.death_days)
                iv.event_age = iv.exit_age;
        }
        out.push_back(iv);
    }
    return out;
}

}  // namespace ttepcp
