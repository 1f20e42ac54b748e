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

// Logistic, Cox, Aalen-Johansen and bootstrap estimators against
// independent oracles written here.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <doctest.h>

#include "ttepcp/cox.hpp"
#include "ttepcp/logistic.hpp"
#include "ttepcp/propensity.hpp"
#include "ttepcp/simulator.hpp"
#include "ttepcp/survival.hpp"

using namespace ttepcp;

namespace {

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

CoxData<double> random_cox(std::mt19937_64& rng, int n, int p, bool ties, bool weighted)
{
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> day(1, ties ? 6 : 1000000);
    std::bernoulli_distribution ev(0.6);
    std::uniform_real_distribution<double> w(0.2, 3.0);
    CoxData<double> d;
    d.X.resize(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j)
            d.X(i, j) = z(rng);
    std::set<int> used;
    for (int i = 0; i < n; ++i) {
        int t = day(rng);
        while (!ties && !used.insert(t).second)
            t = day(rng);
        d.time.push_back(t);
        d.event.push_back(ev(rng) ? 1 : 0);
    }
    d.event[0] = 1;
    if (weighted) {
        d.weight.resize(n);
        for (int i = 0; i < n; ++i)
            d.weight[i] = w(rng);
    }
    return d;
}

// Weighted Kaplan-Meier written directly from the product-limit definition.
double km_oracle(const std::vector<std::int32_t>& time, const std::vector<std::uint8_t>& event,
                 const std::vector<double>& w, std::int32_t t)
{
    std::set<std::int32_t> times;
    for (std::size_t i = 0; i < time.size(); ++i)
        if (event[i] && time[i] <= t)
            times.insert(time[i]);
    double s = 1;
    for (auto u : times) {
        double at_risk = 0, d = 0;
        for (std::size_t i = 0; i < time.size(); ++i) {
            if (time[i] >= u)
                at_risk += w[i];
            if (time[i] == u && event[i])
                d += w[i];
        }
        s *= 1 - d / at_risk;
    }
    return s;
}

}  // namespace

TEST_CASE("logistic: intercept only on a balanced response")
{
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(10, 1);
    Eigen::VectorXd y(10);
    y << 1, 1, 1, 1, 1, 0, 0, 0, 0, 0;
    const auto fit = fit_logistic(X, y);
    CHECK(std::abs(fit.coefficients[0]) < 1e-10);
}

TEST_CASE("logistic: saturated 2x2 table matches odds arithmetic")
{
    Eigen::MatrixXd X(20, 2);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(20);
    for (int i = 0; i < 20; ++i) {
        X(i, 0) = 1;
        X(i, 1) = i < 10 ? 1 : 0;
    }
    for (int i : {0, 1, 2, 10})
        y[i] = 1;
    const auto fit = fit_logistic(X, y);
    const double slope = std::log((3.0 / 7.0) / (1.0 / 9.0));
    const double intercept = std::log(1.0 / 9.0);
    CHECK(std::abs(fit.coefficients[1] - slope) < 1e-6);
    CHECK(std::abs(fit.coefficients[0] - intercept) < 1e-6);
    CHECK(fit.coefficients[1] == doctest::Approx(1.3499).epsilon(1e-4));
}

TEST_CASE("logistic: complete separation is reported")
{
    Eigen::MatrixXd X(8, 2);
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) {
        X(i, 0) = 1;
        X(i, 1) = i;
        y[i] = i >= 4 ? 1 : 0;
    }
    CHECK_THROWS_AS(fit_logistic(X, y), SeparationError);
}

TEST_CASE("logistic: single-class response is degenerate")
{
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Ones(5);
    CHECK_THROWS_AS(fit_logistic(X, y), DegenerateCohortError);
}

TEST_CASE("logistic: score at the optimum is zero and fitted values are affine invariant")
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    const int n = 200;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1;
        X(i, 1) = z(rng);
        X(i, 2) = z(rng);
        y[i] = std::bernoulli_distribution(1 / (1 + std::exp(-(0.3 + X(i, 1) - 0.5 * X(i, 2)))))(rng) ? 1 : 0;
    }
    const auto fit = fit_logistic(X, y);
    CHECK(logistic_score<double>(X, y, fit.coefficients).norm() < 1e-6);

    Eigen::Matrix3d A;
    A << 1, 2, -1, 0, 3, 0.5, 0, -1, 2;
    const auto fit2 = fit_logistic(Eigen::MatrixXd(X * A), y);
    CHECK((fit.fitted_probabilities - fit2.fitted_probabilities).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("logistic: analytic score matches central differences")
{
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> nn(5, 30), pp(1, 4);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = nn(rng), p = pp(rng);
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd y(n), f(n), beta(p);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < p; ++j)
                X(i, j) = z(rng);
            y[i] = z(rng) > 0 ? 1 : 0;
            f[i] = 1 + (rng() % 3);
        }
        for (int j = 0; j < p; ++j)
            beta[j] = 0.5 * z(rng);
        const Eigen::VectorXd g = logistic_score(X, y, beta, f);
        const double h = 1e-6;
        for (int j = 0; j < p; ++j) {
            Eigen::VectorXd up = beta, dn = beta;
            up[j] += h;
            dn[j] -= h;
            const double fd = (logistic_log_likelihood(X, y, up, f) - logistic_log_likelihood(X, y, dn, f)) / (2 * h);
            CHECK(close_rel(g[j], fd, 1e-5));
        }
    }
}

TEST_CASE("logistic: unit frequencies equal the unweighted fit exactly")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    Eigen::MatrixXd X(50, 2);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) {
        X(i, 0) = 1;
        X(i, 1) = z(rng);
        y[i] = X(i, 1) + z(rng) > 0 ? 1 : 0;
    }
    LogisticOptions opt;
    opt.frequency = Eigen::VectorXd::Ones(50);
    const auto a = fit_logistic(X, y), b = fit_logistic(X, y, opt);
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.covariance == b.covariance);
}

TEST_CASE("cox: three-subject instance matches a grid-search oracle")
{
    CoxData<double> d;
    d.X.resize(3, 1);
    d.X << 1, 0, 1;
    d.time = {1, 2, 3};
    d.event = {1, 1, 1};

    // log partial likelihood written out by hand
    auto pl = [](double b) { return b - std::log(2 * std::exp(b) + 1) - std::log(1 + std::exp(b)); };
    double best = -5, best_val = pl(-5);
    for (int k = 0; k <= 100000; ++k) {
        const double b = -5 + k * 1e-4;
        if (pl(b) > best_val) {
            best_val = pl(b);
            best = b;
        }
    }
    const auto fit = fit_cox(d);
    CHECK(std::abs(fit.coefficients[0] - best) < 1e-3);
    CHECK(std::abs(fit.coefficients[0] + std::log(2.0) / 2) < 1e-8);
    CHECK(std::exp(fit.coefficients[0]) == doctest::Approx(0.7071).epsilon(1e-4));
}

TEST_CASE("cox: exchangeable arms give a unit hazard ratio")
{
    CoxData<double> d;
    const std::vector<std::int32_t> t{3, 5, 8, 8, 11, 15};
    const std::vector<std::uint8_t> e{1, 0, 1, 1, 0, 1};
    d.X.resize(12, 1);
    for (int arm = 0; arm < 2; ++arm)
        for (std::size_t i = 0; i < t.size(); ++i) {
            d.X(static_cast<Eigen::Index>(arm * 6 + i), 0) = arm;
            d.time.push_back(t[i]);
            d.event.push_back(e[i]);
        }
    for (auto ties : {TieMethod::efron, TieMethod::breslow}) {
        CoxOptions opt;
        opt.ties = ties;
        CHECK(std::abs(fit_cox(d, opt).coefficients[0]) < 1e-10);
    }
}

TEST_CASE("cox: analytic score matches central differences")
{
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> nn(4, 30), pp(1, 4);
    std::normal_distribution<double> z;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = nn(rng), p = pp(rng);
        const auto d = random_cox(rng, n, p, rep % 2 == 0, rep % 3 == 0);
        Eigen::VectorXd beta(p);
        for (int j = 0; j < p; ++j)
            beta[j] = 0.3 * z(rng);
        for (auto ties : {TieMethod::efron, TieMethod::breslow}) {
            const auto ev = evaluate_cox(d, beta, ties);
            const double h = 1e-6;
            for (int j = 0; j < p; ++j) {
                Eigen::VectorXd up = beta, dn = beta;
                up[j] += h;
                dn[j] -= h;
                const double fd =
                    (evaluate_cox(d, up, ties).log_likelihood - evaluate_cox(d, dn, ties).log_likelihood) / (2 * h);
                CHECK(close_rel(ev.score[j], fd, 1e-5));
            }
        }
    }
}

TEST_CASE("cox: Efron and Breslow agree without ties")
{
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const auto d = random_cox(rng, 25, 2, false, rep % 2 == 0);
        Eigen::VectorXd beta(2);
        beta << 0.2, -0.4;
        const auto a = evaluate_cox(d, beta, TieMethod::efron), b = evaluate_cox(d, beta, TieMethod::breslow);
        CHECK(std::abs(a.log_likelihood - b.log_likelihood) < 1e-10);
        CHECK((a.score - b.score).norm() < 1e-10);
        CHECK((a.information - b.information).norm() < 1e-10);
    }
}

TEST_CASE("cox: unit weights equal the unweighted fit exactly")
{
    std::mt19937_64 rng(9);
    auto d = random_cox(rng, 30, 3, true, false);
    const auto a = fit_cox(d);
    d.weight = Eigen::VectorXd::Ones(30);
    const auto b = fit_cox(d);
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.covariance == b.covariance);
    CHECK_FALSE(b.robust_covariance.has_value());
}

TEST_CASE("cox: row order does not change the fit")
{
    std::mt19937_64 rng(21);
    const auto d = random_cox(rng, 30, 2, true, true);
    std::vector<Eigen::Index> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CoxData<double> s;
    s.X.resize(30, 2);
    s.weight.resize(30);
    for (Eigen::Index i = 0; i < 30; ++i) {
        s.X.row(i) = d.X.row(perm[static_cast<std::size_t>(i)]);
        s.weight[i] = d.weight[perm[static_cast<std::size_t>(i)]];
        s.time.push_back(d.time[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
        s.event.push_back(d.event[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    }
    const auto a = fit_cox(d), b = fit_cox(s);
    CHECK((a.coefficients - b.coefficients).norm() < 1e-10);
    CHECK((*a.robust_covariance - *b.robust_covariance).norm() < 1e-10);
}

TEST_CASE("cox: errors")
{
    CoxData<double> d;
    d.X = Eigen::MatrixXd::Ones(3, 1);
    d.time = {1, 2, 3};
    d.event = {0, 0, 0};
    CHECK_THROWS_AS(fit_cox(d), NoEventsError);
    d.event = {1, 0, 1};
    CHECK_THROWS_AS(fit_cox(d), SingularInformationError);
}

TEST_CASE("Aalen-Johansen: five-subject hand recursion")
{
    const std::vector<std::int32_t> t{1, 2, 3, 4, 5};
    const std::vector<std::uint8_t> c{1, 2, 0, 1, 0};
    const std::vector<double> w(5, 1.0);
    const auto cr = aalen_johansen(t, c, w);
    CHECK(incidence_at(cr, Cause::adrd, 0) == 0.0);
    CHECK(incidence_at(cr, Cause::adrd, 1) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(incidence_at(cr, Cause::adrd, 3) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(incidence_at(cr, Cause::adrd, 4) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(incidence_at(cr, Cause::death_without_dementia, 1) == 0.0);
    CHECK(incidence_at(cr, Cause::death_without_dementia, 2) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(cr.survival.back() == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("Aalen-Johansen: no events")
{
    const std::vector<std::int32_t> t{1, 2, 3};
    const std::vector<std::uint8_t> c{0, 0, 0};
    const std::vector<double> w(3, 1.0);
    const auto cr = aalen_johansen(t, c, w);
    for (std::int32_t u : {0, 1, 5})
        CHECK(incidence_at(cr, Cause::adrd, u) == 0.0);
    for (double s : cr.survival)
        CHECK(s == 1.0);
}

TEST_CASE("Aalen-Johansen: complementarity, KM reduction and permutation invariance")
{
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> day(1, 40), cause(0, 2);
    std::uniform_real_distribution<double> weight(0.1, 4.0);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 5 + rep;
        std::vector<std::int32_t> t(static_cast<std::size_t>(n));
        std::vector<std::uint8_t> c(t.size()), single(t.size());
        std::vector<double> w(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = day(rng);
            c[i] = static_cast<std::uint8_t>(cause(rng));
            single[i] = c[i] == 2 ? 0 : c[i];
            w[i] = weight(rng);
        }
        const auto cr = aalen_johansen(t, c, w);
        for (std::size_t k = 0; k < cr.times.size(); ++k)
            CHECK(std::abs(cr.survival[k] + cr.incidence[0][k] + cr.incidence[1][k] - 1) < 1e-12);

        const auto one = aalen_johansen(t, single, w);
        for (std::int32_t u = 0; u <= 41; ++u)
            CHECK(std::abs(1 - incidence_at(one, Cause::adrd, u) - km_oracle(t, single, w, u)) < 1e-12);

        std::vector<std::size_t> perm(t.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::int32_t> tp;
        std::vector<std::uint8_t> cp;
        std::vector<double> wp;
        for (auto i : perm) {
            tp.push_back(t[i]);
            cp.push_back(c[i]);
            wp.push_back(w[i]);
        }
        const auto shuffled = aalen_johansen(tp, cp, wp);
        CHECK(shuffled.times == cr.times);
        CHECK(shuffled.incidence[0] == cr.incidence[0]);
        CHECK(shuffled.incidence[1] == cr.incidence[1]);
    }
}

TEST_CASE("risk difference at a horizon")
{
    CifCurve a, b;
    a.times = {100};
    a.incidence = {0.05};
    a.survival = {0.95};
    b.times = {200};
    b.incidence = {0.08};
    b.survival = {0.92};
    CHECK(risk_difference(a, b, 3652).point == doctest::Approx(-0.03).epsilon(1e-12));
    CHECK(risk_difference(a, a, 3652).point == 0.0);
    CHECK(risk_difference(a, b, 150).point == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("bootstrap percentile interval")
{
    // Two subjects with values 1 and 3: every replicate mean lies in [1, 3].
    const std::vector<double> v{1.0, 3.0};
    auto mean = [&](const Eigen::VectorXd& m) {
        return std::vector<double>{(m[0] * v[0] + m[1] * v[1]) / m.sum()};
    };
    BootstrapOptions opt;
    opt.n_reps = 2;
    opt.seed = 4;
    const auto r = bootstrap(2, mean, opt);
    REQUIRE(r.replicates.size() == 2);
    const double lo = std::min(r.replicates[0][0], r.replicates[1][0]);
    const double hi = std::max(r.replicates[0][0], r.replicates[1][0]);
    CHECK(r.lower[0] == lo);
    CHECK(r.upper[0] == hi);

    const auto again = bootstrap(2, mean, opt);
    CHECK(again.lower == r.lower);
    CHECK(again.upper == r.upper);

    opt.n_reps = 50;
    const auto many = bootstrap(2, mean, opt);
    for (const auto& rep : many.replicates) {
        CHECK(rep[0] >= 1.0);
        CHECK(rep[0] <= 3.0);
    }
}

TEST_CASE("bootstrap skips degenerate replicates and fails past the threshold")
{
    int calls = 0;
    auto sometimes = [&](const Eigen::VectorXd&) -> std::vector<double> {
        if (++calls % 4 == 0)
            throw DegenerateCohortError("skip");
        return {1.0};
    };
    BootstrapOptions opt;
    opt.n_reps = 20;
    CHECK_THROWS_AS(bootstrap(5, sometimes, opt), InferenceInstabilityError);

    calls = 0;
    auto rarely = [&](const Eigen::VectorXd&) -> std::vector<double> {
        if (++calls == 3)
            throw DegenerateCohortError("skip");
        return {1.0};
    };
    const auto r = bootstrap(5, rarely, opt);
    CHECK(r.n_skipped == 1);
    CHECK(r.replicates.size() == 19);
}

TEST_CASE("empirical quantile is the type-1 inverse")
{
    const std::vector<double> v{5, 1, 4, 2, 3};
    CHECK(empirical_quantile(v, 0.0) == 1);
    CHECK(empirical_quantile(v, 0.2) == 1);
    CHECK(empirical_quantile(v, 0.21) == 2);
    CHECK(empirical_quantile(v, 0.5) == 3);
    CHECK(empirical_quantile(v, 1.0) == 5);
}

TEST_CASE("stabilized weights")
{
    Eigen::VectorXd treat(5), e(5);
    treat << 1, 1, 0, 0, 0;
    e.setConstant(0.8);
    const auto w = stabilized_weights(e, treat);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(3.0).epsilon(1e-12));

    e.setConstant(0.4);
    const auto unit = stabilized_weights(e, treat);
    for (Eigen::Index i = 0; i < 5; ++i)
        CHECK(unit[i] == doctest::Approx(1.0).epsilon(1e-12));

    e[0] = 1.0;
    CHECK_THROWS_AS(stabilized_weights(e, treat), PositivityError);

    Eigen::VectorXd s(5);
    s << 0.1, 0.9, 0.5, 0.2, 0.3;
    WeightOptions cap;
    cap.cap_percentile = 60;
    const auto capped = stabilized_weights(s, treat, cap);
    const auto raw = stabilized_weights(s, treat);
    std::vector<double> rv(raw.data(), raw.data() + raw.size());
    const double limit = empirical_quantile(rv, 0.6);
    for (Eigen::Index i = 0; i < 5; ++i)
        CHECK(capped[i] == std::min(raw[i], limit));
}

TEST_CASE("propensity histogram edges")
{
    Eigen::VectorXd s(3), t(3);
    s.setConstant(0.5);
    t << 1, 1, 1;
    const auto h = propensity_histogram(s, t, 2);
    CHECK(h.edges == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(h.counts[0] == std::vector<std::int64_t>{0, 3});
    CHECK(h.counts[1] == std::vector<std::int64_t>{0, 0});
    CHECK_THROWS_AS(propensity_histogram(s, t, 1), UsageError);

    Eigen::VectorXd one(1), tr(1);
    one << 1.0;
    tr << 0;
    CHECK(propensity_histogram(one, tr, 4).counts[1].back() == 1);
}

TEST_CASE("weighting reduces covariate imbalance")
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    const int n = 4000;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1;
        X(i, 1) = z(rng);
        t[i] = std::bernoulli_distribution(1 / (1 + std::exp(-(0.5 + X(i, 1)))))(rng) ? 1 : 0;
    }
    const auto fit = fit_logistic(X, t);
    const auto w = stabilized_weights(fit, t);
    const auto before = mean_differences(X, t, Eigen::VectorXd::Ones(n));
    const auto after = mean_differences(X, t, w);
    CHECK(after[1] < 0.25 * before[1]);
}

TEST_CASE("age-specific rates split follow-up at bin boundaries")
{
    const std::vector<AgeInterval> one{{74.0, 76.0, 75.5}};
    const auto table = age_specific_rates(one, default_age_bins());
    double py70 = -1, py75 = -1;
    std::int64_t ev70 = -1, ev75 = -1;
    for (const auto& r : table.rows) {
        if (r.bin.lower == 70) {
            py70 = r.person_years;
            ev70 = r.events;
        }
        if (r.bin.lower == 75) {
            py75 = r.person_years;
            ev75 = r.events;
        }
    }
    CHECK(py70 == doctest::Approx(1.0));
    CHECK(py75 == doctest::Approx(1.0));
    CHECK(ev70 == 0);
    CHECK(ev75 == 1);
    CHECK(table.rows.size() == 2);
    CHECK(table.omitted.size() == default_age_bins().size() - 2);

    const std::vector<AgeInterval> none{{60.0, 70.0, std::nullopt}, {55.0, 58.0, std::nullopt}};
    for (const auto& r : age_specific_rates(none, default_age_bins()).rows)
        CHECK(r.incidence == 0.0);
}

TEST_CASE("reference rates average the hazard over each bin")
{
    PiecewiseHazard h{{0, 50, 52}, {0.001, 0.01, 0.02}};
    const auto ref = reference_rates(h, default_age_bins());
    CHECK(ref.rows[0].incidence == doctest::Approx((2 * 0.01 + 3 * 0.02) / 5));
    CHECK(ref.rows.back().incidence == doctest::Approx(0.02));
}
