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

// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ttepcp/cox.hpp"
#include "ttepcp/experiment.hpp"
#include "ttepcp/logistic.hpp"

using namespace ttepcp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;
};

void need(Outcome& o, bool ok, const std::string& what)
{
    if (!ok) {
        o.pass = false;
        o.detail += (o.detail.empty() ? "" : "; ") + what;
    }
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

// ---- 1. estimator oracles

Outcome estimator_oracles()
{
    Outcome o;

    // Cox: x = (1, 0, 1) at times 1, 2, 3, all events.
    CoxData<double> cd;
    cd.X.resize(3, 1);
    cd.X << 1, 0, 1;
    cd.time = {1, 2, 3};
    cd.event = {1, 1, 1};
    auto pl = [](double b) { return b - std::log(2 * std::exp(b) + 1) - std::log(1 + std::exp(b)); };
    double grid_best = -5;
    for (int k = 0; k <= 100000; ++k) {
        const double b = -5 + k * 1e-4;
        if (pl(b) > pl(grid_best))
            grid_best = b;
    }
    const double cox_beta = fit_cox(cd).coefficients[0];
    need(o, std::abs(cox_beta - grid_best) < 1e-3, fmt::format("cox beta {} vs grid {}", cox_beta, grid_best));

    // Logistic: 3/10 events at x=1, 1/10 at x=0.
    Eigen::MatrixXd X(20, 2);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(20);
    for (int i = 0; i < 20; ++i) {
        X(i, 0) = 1;
        X(i, 1) = i < 10 ? 1 : 0;
    }
    for (int i : {0, 1, 2, 10})
        y[i] = 1;
    const auto lf = fit_logistic(X, y);
    const double slope = std::log((3.0 / 7.0) / (1.0 / 9.0)), intercept = std::log(1.0 / 9.0);
    need(o, std::abs(lf.coefficients[1] - slope) < 1e-6 && std::abs(lf.coefficients[0] - intercept) < 1e-6,
         "logistic 2x2 closed form");

    // Aalen-Johansen on (1,adrd),(2,death),(3,censor),(4,adrd),(5,censor).
    const std::vector<std::int32_t> t{1, 2, 3, 4, 5};
    const std::vector<std::uint8_t> c{1, 2, 0, 1, 0};
    const std::vector<double> w(5, 1.0);
    const auto cr = aalen_johansen(t, c, w);
    double s = 1, cif_a = 0, cif_d = 0;  // hand recursion
    double a1 = 0, d2 = 0;
    const int at_risk[5] = {5, 4, 3, 2, 1};
    for (int k = 0; k < 5; ++k) {
        if (c[static_cast<std::size_t>(k)] == 0)
            continue;
        const double inc = s * (1.0 / at_risk[k]);
        (c[static_cast<std::size_t>(k)] == 1 ? cif_a : cif_d) += inc;
        s -= inc;
        if (k == 0)
            a1 = cif_a;
        if (k == 1)
            d2 = cif_d;
    }
    const double got[4] = {incidence_at(cr, Cause::adrd, 1), incidence_at(cr, Cause::adrd, 4),
                           incidence_at(cr, Cause::death_without_dementia, 2), cr.survival.back()};
    const double want[4] = {a1, cif_a, d2, s};
    const double paper_values[4] = {0.2, 0.5, 0.2, 0.3};
    for (int k = 0; k < 4; ++k) {
        need(o, got[k] == want[k], fmt::format("AJ value {} = {} vs recursion {}", k, got[k], want[k]));
        need(o, std::abs(got[k] - paper_values[k]) < 1e-15, fmt::format("AJ value {} = {}", k, got[k]));
    }
    o.detail = o.pass ? fmt::format("cox beta={:.6f} (grid {:.4f}), logistic slope={:.7f}, AJ 0.2/0.5/0.2/0.3",
                                    cox_beta, grid_best, lf.coefficients[1])
                      : o.detail;
    return o;
}

// ---- 2. invariant suite

CoxData<double> random_cox(std::mt19937_64& rng, int n, int p, bool ties, bool weighted)
{
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> day(1, ties ? 6 : 1000000);
    std::uniform_real_distribution<double> wd(0.2, 3.0);
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
        d.event.push_back(rng() % 5 < 3 ? 1 : 0);
    }
    d.event[0] = 1;
    if (weighted) {
        d.weight.resize(n);
        for (int i = 0; i < n; ++i)
            d.weight[i] = wd(rng);
    }
    return d;
}

Outcome invariant_suite()
{
    Outcome o;
    std::mt19937_64 rng(20240501);
    std::normal_distribution<double> z;

    // CIF complementarity
    double worst_comp = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 5 + static_cast<std::size_t>(rng() % 200);
        std::vector<std::int32_t> t(n);
        std::vector<std::uint8_t> c(n);
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = static_cast<std::int32_t>(1 + rng() % 50);
            c[i] = static_cast<std::uint8_t>(rng() % 3);
            w[i] = 0.1 + std::abs(z(rng));
        }
        const auto cr = aalen_johansen(t, c, w);
        for (std::size_t k = 0; k < cr.times.size(); ++k)
            worst_comp = std::max(worst_comp, std::abs(cr.survival[k] + cr.incidence[0][k] + cr.incidence[1][k] - 1));
    }
    need(o, worst_comp <= 1e-12, fmt::format("CIF complementarity error {:.3g}", worst_comp));

    // analytic gradients vs central differences
    int grad_fail = 0;
    const double h = 1e-6;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 4 + static_cast<int>(rng() % 27), p = 1 + static_cast<int>(rng() % 4);
        Eigen::VectorXd beta(p);
        for (int j = 0; j < p; ++j)
            beta[j] = 0.3 * z(rng);
        const auto d = random_cox(rng, n, p, rep % 2 == 0, rep % 3 == 0);
        const auto ev = evaluate_cox(d, beta);
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < p; ++j)
                X(i, j) = z(rng);
            y[i] = rng() % 2;
        }
        const Eigen::VectorXd g = logistic_score<double>(X, y, beta);
        for (int j = 0; j < p; ++j) {
            Eigen::VectorXd up = beta, dn = beta;
            up[j] += h;
            dn[j] -= h;
            const double fd_cox = (evaluate_cox(d, up).log_likelihood - evaluate_cox(d, dn).log_likelihood) / (2 * h);
            const double fd_log =
                (logistic_log_likelihood<double>(X, y, up) - logistic_log_likelihood<double>(X, y, dn)) / (2 * h);
            grad_fail += !close_rel(ev.score[j], fd_cox, 1e-5);
            grad_fail += !close_rel(g[j], fd_log, 1e-5);
        }
    }
    need(o, grad_fail == 0, fmt::format("{} gradient components off", grad_fail));

    // Efron = Breslow without ties
    double worst_tie = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const auto d = random_cox(rng, 30, 3, false, rep % 2 == 0);
        CoxOptions e, b;
        b.ties = TieMethod::breslow;
        worst_tie = std::max(worst_tie, (fit_cox(d, e).coefficients - fit_cox(d, b).coefficients).cwiseAbs().maxCoeff());
    }
    need(o, worst_tie <= 1e-10, fmt::format("Efron vs Breslow {:.3g}", worst_tie));

    // unit weights equal unweighted exactly
    {
        auto d = random_cox(rng, 30, 2, true, false);
        const auto a = fit_cox(d);
        d.weight = Eigen::VectorXd::Ones(30);
        const auto b = fit_cox(d);
        need(o, a.coefficients == b.coefficients && a.covariance == b.covariance, "cox unit weights");

        Eigen::MatrixXd X(40, 2);
        Eigen::VectorXd y(40);
        for (int i = 0; i < 40; ++i) {
            X(i, 0) = 1;
            X(i, 1) = z(rng);
            y[i] = X(i, 1) + z(rng) > 0;
        }
        LogisticOptions opt;
        opt.frequency = Eigen::VectorXd::Ones(40);
        need(o, fit_logistic(X, y).coefficients == fit_logistic(X, y, opt).coefficients, "logistic unit weights");
    }

    // permutation invariance
    {
        const auto d = random_cox(rng, 30, 2, true, true);
        std::vector<std::size_t> perm(30);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        CoxData<double> s;
        s.X.resize(30, 2);
        s.weight.resize(30);
        std::vector<double> w(30), ws(30);
        std::vector<std::uint8_t> cause(30), cause_s(30);
        for (std::size_t i = 0; i < 30; ++i) {
            const auto k = static_cast<Eigen::Index>(i), src = static_cast<Eigen::Index>(perm[i]);
            s.X.row(k) = d.X.row(src);
            s.weight[k] = d.weight[src];
            s.time.push_back(d.time[perm[i]]);
            s.event.push_back(d.event[perm[i]]);
            w[i] = d.weight[k];
            cause[i] = static_cast<std::uint8_t>(d.event[i] ? 1 + i % 2 : 0);
        }
        for (std::size_t i = 0; i < 30; ++i) {
            ws[i] = w[perm[i]];
            cause_s[i] = cause[perm[i]];
        }
        need(o, (fit_cox(d).coefficients - fit_cox(s).coefficients).norm() < 1e-10, "cox permutation");
        const auto a = aalen_johansen(d.time, cause, w), b = aalen_johansen(s.time, cause_s, ws);
        need(o, a.incidence == b.incidence && a.survival == b.survival, "AJ permutation");

        auto g = GenConfig::defaults();
        g.n_patients = 1500;
        auto [patients, truth] = simulate_cohort(g);
        const auto [r1, rows1] = build_cohort(patients, EligibilityConfig::defaults());
        std::shuffle(patients.begin(), patients.end(), rng);
        const auto [r2, rows2] = build_cohort(patients, EligibilityConfig::defaults());
        bool same = to_json(r1) == to_json(r2) && rows1.size() == rows2.size();
        for (std::size_t k = 0; same && k < rows1.size(); ++k)
            same = rows1[k].patient_id == rows2[k].patient_id && rows1[k].followup_days == rows2[k].followup_days &&
                   rows1[k].covariates == rows2[k].covariates;
        need(o, same, "cohort permutation");
    }
    if (o.pass)
        o.detail = fmt::format("complementarity {:.2g}, gradients ok, Efron-Breslow {:.2g}, unit weights exact, "
                               "permutation invariant",
                               worst_comp, worst_tie);
    return o;
}

// ---- helpers for the simulation criteria

std::vector<CohortRow> simulate_rows(const GenConfig& g)
{
    const PatientSimulator sim{g};
    CohortBuilder builder{EligibilityConfig::defaults()};
    for (std::int64_t i = 0; i < g.n_patients; ++i)
        builder.add(sim.simulate(i).first);
    return builder.take_rows();
}

bool covers(const std::optional<double>& lo, const std::optional<double>& hi, double v)
{
    return lo && hi && *lo <= v && v <= *hi;
}

// ---- 3. null-effect recovery

Outcome null_recovery()
{
    Outcome o;
    const auto t0 = Clock::now();
    const int reps = 50;
    int hr_cover = 0, rd_cover[2] = {0, 0};
    for (int r = 0; r < reps; ++r) {
        GenConfig g = GenConfig::defaults().with_perfect_recording();
        g.n_patients = 20000;
        g.seed = 101 + static_cast<std::uint64_t>(r);
        g.true_log_hr_adrd = 0;
        g.true_log_hr_death = 0;
        g.death_hazard_multiplier = {1.0, 1.0};
        const auto rows = simulate_rows(g);
        AnalysisOptions opt;
        opt.bootstrap_reps = 200;
        opt.bootstrap_seed = g.seed;
        opt.tables = false;
        const auto a = analyze_strategy(rows, covariate_names(EligibilityConfig::defaults()), Strategy::B, opt);
        const auto& f = a.forest.front();
        hr_cover += f.ci_lower <= 1.0 && 1.0 <= f.ci_upper;
        for (int c = 0; c < 2; ++c)
            rd_cover[c] += covers(a.rd[static_cast<std::size_t>(c)].ci_lower, a.rd[static_cast<std::size_t>(c)].ci_upper, 0.0);
    }
    const double secs = seconds_since(t0);
    const double need_cover = 0.9 * reps;
    need(o, hr_cover >= need_cover, "HR coverage below 90%");
    need(o, rd_cover[0] >= need_cover, "ADRD RD10 coverage below 90%");
    need(o, rd_cover[1] >= need_cover, "death RD10 coverage below 90%");
    need(o, secs < 600, "runtime above 10 min");
    o.detail = fmt::format("HR CI covers 1 in {}/{}, RD10 CI covers 0 in {}/{} (ADRD) and {}/{} (death), {:.0f}s{}",
                           hr_cover, reps, rd_cover[0], reps, rd_cover[1], reps, secs,
                           o.pass ? "" : " -- " + o.detail);
    return o;
}

// ---- 4. mechanism reproduction

Outcome mechanism()
{
    Outcome o;
    const auto t0 = Clock::now();
    const int reps = 50;
    const double target = std::exp(GenConfig::defaults().true_log_hr_adrd);
    double err[2] = {0, 0}, hr[2] = {0, 0}, cif[2][2] = {{0, 0}, {0, 0}};
    for (int r = 0; r < reps; ++r) {
        GenConfig g = GenConfig::defaults();
        g.n_patients = 20000;
        g.seed = 1000 + static_cast<std::uint64_t>(r);
        const auto rows = simulate_rows(g);
        AnalysisOptions opt;
        opt.bootstrap_reps = 0;
        opt.tables = false;
        const auto covs = covariate_names(EligibilityConfig::defaults());
        const StrategyAnalysis res[2] = {analyze_strategy(rows, covs, Strategy::B, opt),
                                         analyze_strategy(rows, covs, Strategy::E, opt)};
        for (int s = 0; s < 2; ++s) {
            const double v = res[s].forest.front().hr;
            hr[s] += v / reps;
            err[s] += std::abs(v - target) / reps;
            for (std::size_t arm = 0; arm < 2; ++arm)
                cif[s][arm] += res[s].cif[0][arm].at(kTenYearDays) / reps;
        }
    }
    const double secs = seconds_since(t0);
    need(o, err[1] < err[0], "mean |HR_E - 0.8| not below mean |HR_B - 0.8|");
    need(o, cif[1][0] > cif[0][0] && cif[1][1] > cif[0][1], "E ADRD CIF at 10 years not above B");
    need(o, secs < 1800, "runtime above 30 min");
    o.detail = fmt::format("mean |HR-0.8| B={:.4f} E={:.4f} (mean HR B={:.3f} E={:.3f}); ADRD CIF10 B={:.4f}/{:.4f} "
                           "E={:.4f}/{:.4f} (metformin/sulfonylurea), {:.0f}s{}",
                           err[0], err[1], hr[0], hr[1], cif[0][0], cif[0][1], cif[1][0], cif[1][1], secs,
                           o.pass ? "" : " -- " + o.detail);
    return o;
}

// ---- 5. calibration

Outcome calibration()
{
    Outcome o;
    GenConfig g = GenConfig::defaults();
    g.n_patients = 50000;
    g.seed = 2718;
    const auto rows = simulate_rows(g);
    double pcp = 0, met = 0;
    std::vector<CohortRow> no_pcp;
    for (const auto& r : rows) {
        pcp += r.pcp_flag;
        met += r.arm == Arm::metformin;
        if (!r.pcp_flag)
            no_pcp.push_back(r);
    }
    const double n = static_cast<double>(rows.size());
    const double pcp_target = 17118.0 / 54440.0, arm_target = 46613.0 / (46613.0 + 7826.0);
    need(o, std::abs(pcp / n - pcp_target) <= 0.01, "PCP fraction");
    need(o, std::abs(met / n - arm_target) <= 0.01, "arm split");

    const auto bins = default_age_bins();
    const auto ref = reference_rates(g.death_hazard, bins);
    const auto table = age_specific_rates(rate_intervals(no_pcp, RateEvent::death), bins, &ref);
    double observed = 0, expected = 0;
    std::string per_bin;
    for (const auto& row : table.rows) {
        observed += static_cast<double>(row.events);
        expected += row.person_years * *row.reference;
        per_bin += fmt::format(" {}:{:.2f}", row.bin.label(), *row.ratio);
        if (row.events >= 100)
            need(o, std::abs(*row.ratio / 2.0 - 1.0) <= 0.2, "mortality ratio in bin " + row.bin.label());
    }
    const double smr = observed / expected;
    need(o, std::abs(smr / 2.0 - 1.0) <= 0.2, "pooled no-PCP mortality ratio");
    o.detail = fmt::format("PCP fraction {:.4f} (target {:.4f}), metformin share {:.4f} (target {:.4f}), no-PCP "
                           "mortality ratio {:.2f} [{} ]{}",
                           pcp / n, pcp_target, met / n, arm_target, smr, per_bin, o.pass ? "" : " -- " + o.detail);
    return o;
}

// ---- 6. determinism

std::map<std::string, std::string> read_tree(const fs::path& root)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) {
            std::ifstream in(e.path(), std::ios::binary);
            std::stringstream buf;
            buf << in.rdbuf();
            files[fs::relative(e.path(), root).string()] = buf.str();
        }
    return files;
}

Outcome determinism()
{
    Outcome o;
    const auto base = fs::temp_directory_path() / "ttepcp_acceptance_determinism";
    fs::remove_all(base);
    std::map<std::string, std::string> trees[2];
    for (int k = 0; k < 2; ++k) {
        const auto dir = base / std::to_string(k);
        nlohmann::json doc{{"input", {{"mode", "simulate"}, {"simulation", {{"n_patients", 5000}, {"seed", 42}}}}},
                           {"bootstrap", {{"n_reps", 20}, {"seed", 42}}},
                           {"output_dir", dir.string()}};
        run_experiment(validate_config(doc));
        trees[k] = read_tree(dir);
    }
    fs::remove_all(base);
    std::size_t differing = 0;
    for (const auto& [name, bytes] : trees[0])
        differing += !trees[1].count(name) || trees[1].at(name) != bytes;
    need(o, trees[0].size() == trees[1].size() && differing == 0, "outputs differ");
    need(o, trees[0].size() > 20, "too few output files");
    o.detail = fmt::format("{} files compared, {} differ", trees[0].size(), differing);
    return o;
}

// ---- 7. consort and strategy arithmetic

Outcome arithmetic()
{
    Outcome o;
    std::vector<GenConfig> corpora;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        GenConfig g = GenConfig::defaults();
        g.n_patients = 8000;
        g.seed = seed;
        corpora.push_back(g);
    }
    corpora.push_back(corpora[0].with_perfect_recording());
    corpora.back().prevalent_user_fraction = 0.2;
    corpora.back().dual_initiation_fraction = 0.1;
    std::int64_t checked_rows = 0;
    for (const auto& g : corpora) {
        const auto [patients, truth] = simulate_cohort(g);
        const auto [report, rows] = build_cohort(patients, EligibilityConfig::defaults());
        for (std::size_t col = 0; col < kConsortColumns; ++col) {
            std::int64_t remaining = report.input[col];
            for (const auto& s : report.steps) {
                remaining -= s.excluded[col];
                need(o, s.remaining[col] == remaining, "remaining count does not reconcile");
            }
        }
        std::int64_t by_arm[2] = {0, 0}, flagged = 0;
        for (const auto& r : rows) {
            ++by_arm[static_cast<std::size_t>(r.arm)];
            flagged += r.pcp_flag;
        }
        need(o, report.steps.back().remaining[0] == by_arm[0] && report.steps.back().remaining[1] == by_arm[1],
             "final consort counts differ from rows");
        need(o, report.input[0] + report.input[1] + report.input[2] == g.n_patients, "consort input total");
        const auto covs = covariate_names(EligibilityConfig::defaults());
        const auto e = apply_strategy(rows, {Strategy::E}, covs);
        need(o, static_cast<std::int64_t>(e.rows.size()) == flagged, "rows(E) differs from flagged rows(B)");
        checked_rows += static_cast<std::int64_t>(rows.size());
    }
    o.detail = fmt::format("{} corpora, {} cohort rows reconciled", corpora.size(), checked_rows);
    return o;
}

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"estimator oracles", estimator_oracles},   {"invariant suite", invariant_suite},
        {"null-effect recovery", null_recovery},     {"mechanism reproduction", mechanism},
        {"calibration", calibration},                {"pipeline determinism", determinism},
        {"consort and strategy arithmetic", arithmetic}};
    std::set<int> only;
    for (int i = 1; i < argc; ++i)
        only.insert(std::stoi(argv[i]));

    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id))
            continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        failed += !o.pass;
        fmt::print("{} [{}] {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first, o.detail,
                   seconds_since(t0));
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
