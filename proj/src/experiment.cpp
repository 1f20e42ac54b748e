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

#include "ttepcp/experiment.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "ttepcp/csv.hpp"
#include "ttepcp/ehr_json.hpp"
#include "ttepcp/error.hpp"

#ifndef TTEPCP_VERSION
#define TTEPCP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace ttepcp {

namespace {

constexpr std::int64_t kOracleDraws = 100000;

std::uint8_t cause_code(EventType e)
{
    return e == EventType::adrd ? 1 : e == EventType::death_without_dementia ? 2 : 0;
}

// Per-arm competing-risks inputs, fixed for the lifetime of one analysis.
struct ArmData {
    std::vector<std::size_t> index;  // row index
    std::vector<std::int32_t> time;
    std::vector<std::uint8_t> cause;
};

std::array<ArmData, 2> split_arms(std::span<const CohortRow> rows)
{
    std::array<ArmData, 2> arms;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& a = arms[static_cast<std::size_t>(rows[i].arm)];
        a.index.push_back(i);
        a.time.push_back(rows[i].followup_days);
        a.cause.push_back(cause_code(rows[i].event));
    }
    return arms;
}

std::array<CompetingRisks, 2> arm_curves(const std::array<ArmData, 2>& arms, const Eigen::VectorXd& w)
{
    std::array<CompetingRisks, 2> out;
    std::vector<double> aw;
    for (std::size_t a = 0; a < 2; ++a) {
        aw.resize(arms[a].index.size());
        for (std::size_t k = 0; k < aw.size(); ++k)
            aw[k] = w[static_cast<Eigen::Index>(arms[a].index[k])];
        out[a] = aalen_johansen(arms[a].time, arms[a].cause, aw);
    }
    return out;
}

// Step-function values of `cr` at sorted `times`.
void append_at(const CompetingRisks& cr, std::size_t cause, const std::vector<std::int32_t>& times,
               std::vector<double>& out)
{
    std::size_t j = 0;
    double v = 0;
    for (auto t : times) {
        while (j < cr.times.size() && cr.times[j] <= t)
            v = cr.incidence[cause][j++];
        out.push_back(v);
    }
}

const char* cause_file_name(std::size_t c) { return c == 0 ? "adrd" : "death_without_dementia"; }

nlohmann::json rd_json(const RdEstimate& rd)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"point", rd.point}, {"ci_lower", opt(rd.ci_lower)}, {"ci_upper", opt(rd.ci_upper)}};
}

std::string family_name(ErrorFamily f)
{
    switch (f) {
    case ErrorFamily::validation:
        return "validation";
    case ErrorFamily::estimation:
        return "estimation";
    case ErrorFamily::io:
        break;
    }
    return "io";
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

}  // namespace

StrategyAnalysis analyze_strategy(std::span<const CohortRow> rows, const std::vector<std::string>& covariates,
                                  Strategy strategy, const AnalysisOptions& opt)
{
    StrategyAnalysis out;
    out.strategy = strategy;
    out.data = apply_strategy(rows, StrategySpec{strategy}, covariates);
    const auto& R = out.data.rows;
    if (R.empty())
        throw DegenerateCohortError("strategy " + std::string(to_string(strategy)) + ": no rows");
    if (strategy == Strategy::M && !R.empty()) {
        // A constant flag cannot be adjusted for; M then reduces to B.
        const bool first = R.front().pcp_flag;
        if (std::all_of(R.begin(), R.end(), [&](const CohortRow& r) { return r.pcp_flag == first; })) {
            std::erase(out.data.covariates, std::string("pcp_flag"));
            out.notes.push_back("pcp_flag is constant in this cohort and was dropped from the adjustment set");
        }
    }

    // Levels absent from this cohort (e.g. no missing education under
    // perfect recording) cannot be estimated and are dropped.
    std::vector<std::string> dropped;
    out.design = build_design(R, out.data.covariates, true, &dropped);
    for (const auto& name : dropped)
        out.notes.push_back("design column '" + name + "' is constant in this cohort and was dropped");
    out.treatment = treatment_vector(R);
    out.propensity = fit_logistic(out.design.X, out.treatment, LogisticOptions{});
    const WeightOptions wopt{opt.weight_cap_percentile};
    out.weights = stabilized_weights(out.propensity, out.treatment, wopt);
    DesignMatrix cox_design;
    cox_design.X = out.design.X.rightCols(out.design.X.cols() - 1);
    cox_design.names.assign(out.design.names.begin() + 1, out.design.names.end());
    out.cox = fit_cox(R, cox_design, opt.weighted_cox ? &out.weights : nullptr, opt.ties);
    out.forest = forest_table(out.cox);

    const auto arms = split_arms(R);
    if (arms[0].index.empty() || arms[1].index.empty())
        throw DegenerateCohortError("strategy " + std::string(to_string(strategy)) + ": single-arm cohort");
    const auto curves = arm_curves(arms, out.weights);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t a = 0; a < 2; ++a)
            out.cif[c][a] = extract_cause(curves[a], c == 0 ? Cause::adrd : Cause::death_without_dementia);

    for (std::int32_t t = 0; t <= opt.rd_grid_max_days; t += opt.rd_grid_step_days)
        out.grid.push_back(t);
    for (std::size_t c = 0; c < 2; ++c) {
        out.rd[c] = risk_difference(out.cif[c][0], out.cif[c][1], opt.rd_horizon_days);
        for (auto t : out.grid)
            out.rd_grid[c].push_back(out.cif[c][0].at(t) - out.cif[c][1].at(t));
    }

    if (opt.bootstrap_reps > 0) {
        const Eigen::VectorXd& X_t = out.treatment;
        const auto horizon = std::vector<std::int32_t>{opt.rd_horizon_days};
        auto analysis = [&](const Eigen::VectorXd& mult) {
            const double n1 = mult.dot(X_t), n_all = mult.sum();
            if (n1 <= 0 || n1 >= n_all)
                throw DegenerateCohortError("bootstrap replicate covers a single arm");
            LogisticOptions lopt;
            lopt.start = out.propensity.coefficients;
            lopt.frequency = mult;
            const auto fit = fit_logistic(out.design.X, X_t, lopt);
            const double pbar = n1 / n_all;
            Eigen::VectorXd w = Eigen::VectorXd::Zero(mult.size());
            std::vector<double> sampled;
            for (Eigen::Index i = 0; i < mult.size(); ++i) {
                if (mult[i] <= 0)
                    continue;
                const double e = fit.fitted_probabilities[i];
                if (!(e > 0 && e < 1))
                    throw PositivityError(fmt::format("bootstrap: propensity score {} outside (0, 1)", e));
                w[i] = X_t[i] > 0.5 ? pbar / e : (1 - pbar) / (1 - e);
                if (opt.weight_cap_percentile)
                    sampled.push_back(w[i]);
            }
            if (opt.weight_cap_percentile) {
                const double cap = empirical_quantile(sampled, *opt.weight_cap_percentile / 100);
                w = w.cwiseMin(cap);
            }
            w.array() *= mult.array();
            const auto cr = arm_curves(arms, w);
            std::vector<double> stats;
            for (std::size_t c = 0; c < 2; ++c) {
                std::vector<double> a0, a1;
                append_at(cr[0], c, out.grid, a0);
                append_at(cr[1], c, out.grid, a1);
                for (std::size_t k = 0; k < a0.size(); ++k)
                    stats.push_back(a0[k] - a1[k]);
            }
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t a = 0; a < 2; ++a)
                    append_at(cr[a], c, out.cif[c][a].times, stats);
            for (std::size_t c = 0; c < 2; ++c) {
                std::vector<double> a0, a1;
                append_at(cr[0], c, horizon, a0);
                append_at(cr[1], c, horizon, a1);
                stats.push_back(a0[0] - a1[0]);
            }
            return stats;
        };
        const auto boot = bootstrap(R.size(), analysis, {opt.bootstrap_reps, opt.bootstrap_seed, 0.10});
        out.bootstrap_reps = boot.n_reps;
        out.bootstrap_skipped = boot.n_skipped;
        std::size_t k = 0;
        const std::size_t g = out.grid.size();
        for (std::size_t c = 0; c < 2; ++c) {
            out.rd_grid_lower[c].assign(boot.lower.begin() + static_cast<std::ptrdiff_t>(k),
                                        boot.lower.begin() + static_cast<std::ptrdiff_t>(k + g));
            out.rd_grid_upper[c].assign(boot.upper.begin() + static_cast<std::ptrdiff_t>(k),
                                        boot.upper.begin() + static_cast<std::ptrdiff_t>(k + g));
            k += g;
        }
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t a = 0; a < 2; ++a) {
                auto& curve = out.cif[c][a];
                const auto m = curve.times.size();
                curve.lower.emplace(boot.lower.begin() + static_cast<std::ptrdiff_t>(k),
                                    boot.lower.begin() + static_cast<std::ptrdiff_t>(k + m));
                curve.upper.emplace(boot.upper.begin() + static_cast<std::ptrdiff_t>(k),
                                    boot.upper.begin() + static_cast<std::ptrdiff_t>(k + m));
                k += m;
            }
        for (std::size_t c = 0; c < 2; ++c, ++k) {
            out.rd[c].ci_lower = boot.lower[k];
            out.rd[c].ci_upper = boot.upper[k];
            out.rd[c].n_bootstrap = boot.n_reps;
            out.rd[c].n_skipped = boot.n_skipped;
        }
    }

    if (opt.tables) {
        out.by_pcp = summarize(R, "pcp_flag");
        out.by_arm = summarize(R, "arm");
        out.venn = row_venn(R);
        out.histogram = propensity_histogram(out.propensity.fitted_probabilities, out.treatment, opt.histogram_bins);
    }
    return out;
}

std::string sha256_hex(std::string_view bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("SHA-256 computation failed");
    std::string hex;
    for (unsigned int k = 0; k < len; ++k)
        hex += fmt::format("{:02x}", digest[k]);
    return hex;
}

std::string sha256_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

std::string version_string() { return TTEPCP_VERSION; }

nlohmann::json RunManifest::to_json() const
{
    return {{"version", version},
            {"seed", seed},
            {"input_hash", input_hash},
            {"config", config},
            {"outputs", outputs},
            {"errors", errors},
            {"file_hashes", file_hashes}};
}

namespace {

struct CorpusTally {
    std::int64_t patients = 0, pcp = 0;
    std::int64_t latent_adrd_in_followup = 0, recorded_adrd = 0;
    std::int64_t latent_death_in_followup = 0, recorded_death = 0;

    void add(const PatientTruth& t)
    {
        ++patients;
        pcp += t.pcp;
        latent_adrd_in_followup += t.adrd_days && *t.adrd_days <= t.end_of_followup_days;
        recorded_adrd += t.adrd_recorded;
        latent_death_in_followup += t.death_days <= t.end_of_followup_days;
        recorded_death += t.death_recorded;
    }
};

void write_strategy(const StrategyAnalysis& s, const ConsortReport& consort, const fs::path& dir,
                    const std::optional<GenConfig>& sim, std::vector<std::string>& files)
{
    auto path = [&](const std::string& name) {
        files.push_back(dir.filename().string() + "/" + name);
        return (dir / name).string();
    };
    const auto& R = s.data.rows;

    ConsortReport report = consort;
    if (s.strategy == Strategy::E) {
        ConsortStep step{"pcp_indication_before_baseline", {}, {}};
        const auto& last = report.steps.back().remaining;
        for (const auto& r : R)
            ++step.remaining[static_cast<std::size_t>(r.arm)];
        for (std::size_t c = 0; c < kConsortColumns; ++c)
            step.excluded[c] = last[c] - step.remaining[c];
        report.steps.push_back(step);
    }
    write_consort_csv(path("consort.csv"), report);
    write_cohort_csv(path("cohort.csv"), R, s.data.covariates);
    if (s.by_pcp)
        write_summary_csv(path("summary_by_pcp.csv"), *s.by_pcp);
    if (s.by_arm)
        write_summary_csv(path("summary_by_arm.csv"), *s.by_arm);
    if (s.venn)
        write_json_file(path("venn.json"), to_json(*s.venn));
    if (s.histogram)
        write_histogram_csv(path("propensity_histogram.csv"), *s.histogram);
    auto fit_json = propensity_summary_json(s.design, s.propensity, s.treatment, s.weights);
    fit_json["notes"] = s.notes;
    write_json_file(path("propensity_fit.json"), fit_json);
    write_weights_csv(path("weights.csv"), R, s.propensity.fitted_probabilities, s.weights);
    write_forest_csv(path("forest.csv"), s.forest);
    write_json_file(path("forest.json"), to_json(s.forest, s.cox));
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t a = 0; a < 2; ++a)
            write_cif_csv(path(fmt::format("cif_{}_{}.csv", cause_file_name(c), to_string(static_cast<Arm>(a)))),
                          s.cif[c][a]);

    const bool band = !s.rd_grid_lower[0].empty();
    std::vector<std::string> header{"time_days"};
    for (std::size_t c = 0; c < 2; ++c) {
        header.push_back(fmt::format("rd_{}", cause_file_name(c)));
        header.push_back(fmt::format("rd_{}_lower", cause_file_name(c)));
        header.push_back(fmt::format("rd_{}_upper", cause_file_name(c)));
    }
    CsvWriter rd{path("rd_over_time.csv"), header};
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        std::vector<std::string> fields{std::to_string(s.grid[k])};
        for (std::size_t c = 0; c < 2; ++c) {
            fields.push_back(format_number(s.rd_grid[c][k]));
            fields.push_back(band ? format_number(s.rd_grid_lower[c][k]) : "NA");
            fields.push_back(band ? format_number(s.rd_grid_upper[c][k]) : "NA");
        }
        rd.row(fields);
    }
    rd.close();
    write_json_file(path("rd10.json"), {{"horizon_days", s.rd[0].horizon_days},
                                        {"adrd", rd_json(s.rd[0])},
                                        {"death_without_dementia", rd_json(s.rd[1])},
                                        {"n_bootstrap", s.bootstrap_reps},
                                        {"n_skipped", s.bootstrap_skipped}});

    if (s.by_pcp) {
        const auto bins = default_age_bins();
        std::optional<RateTable> ref_adrd, ref_death;
        if (sim) {
            ref_adrd = reference_rates(sim->adrd_hazard, bins);
            ref_death = reference_rates(sim->death_hazard, bins);
        }
        std::vector<CohortRow> pcp_rows, no_pcp_rows;
        for (const auto& r : R)
            (r.pcp_flag ? pcp_rows : no_pcp_rows).push_back(r);
        const std::pair<const char*, std::span<const CohortRow>> strata[]{
            {"all", R}, {"pcp", pcp_rows}, {"no_pcp", no_pcp_rows}};
        for (const auto& [name, subset] : strata) {
            const auto adrd = rate_intervals(subset, RateEvent::adrd);
            const auto death = rate_intervals(subset, RateEvent::death);
            write_rate_csv(path(fmt::format("rates_adrd_{}.csv", name)),
                           age_specific_rates(adrd, bins, ref_adrd ? &*ref_adrd : nullptr));
            write_rate_csv(path(fmt::format("rates_mortality_{}.csv", name)),
                           age_specific_rates(death, bins, ref_death ? &*ref_death : nullptr));
        }
    }
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config)
{
    const auto start = std::chrono::steady_clock::now();
    RunManifest m;
    m.version = version_string();
    m.seed = config.analysis.bootstrap_seed;
    m.config = to_json(config);
    m.config.erase("output_dir");

    const fs::path out_dir = config.output_dir;
    ensure_dir(out_dir);

    std::string hash_input = m.config.dump();
    auto add_codeset = [&](const CodeSet& cs) {
        hash_input += "\n[" + cs.name() + "]";
        for (auto sys : {CodeSystem::icd9, CodeSystem::icd10, CodeSystem::internal, CodeSystem::medication})
            for (const auto& code : cs.codes(sys))
                hash_input += fmt::format(" {}:{}", to_string(sys), code);
    };
    add_codeset(config.eligibility.outcome_codeset);
    for (const auto& cs : config.eligibility.covariate_codesets)
        add_codeset(cs);

    CohortBuilder builder{config.eligibility};
    std::optional<CorpusTally> tally;
    std::vector<std::string> run_files;
    if (config.input == InputMode::simulate) {
        m.seed = config.simulation.seed;
        const PatientSimulator sim{config.simulation};
        tally.emplace();
        const auto truth_path = out_dir / "ground_truth.jsonl";
        std::ofstream truth(truth_path, std::ios::binary);
        if (!truth)
            throw IoError("cannot open " + truth_path.string() + " for writing");
        for (std::int64_t i = 0; i < config.simulation.n_patients; ++i) {
            auto [record, t] = sim.simulate(i);
            builder.add(record);
            tally->add(t);
            truth << to_json(t).dump() << '\n';
        }
        truth.close();
        if (!truth)
            throw IoError("write failed: " + truth_path.string());
        run_files.push_back("ground_truth.jsonl");
    } else {
        std::ifstream in(config.corpus_path, std::ios::binary);
        if (!in)
            throw IoError("cannot open corpus " + config.corpus_path);
        hash_input += "\ncorpus:" + sha256_file(config.corpus_path);
        for_each_patient(in, [&](PatientRecord&& p) { builder.add(p); });
    }
    m.input_hash = sha256_hex(hash_input);
    const auto rows = builder.take_rows();
    const auto covariates = covariate_names(builder.config());

    std::optional<GenConfig> sim;
    if (config.input == InputMode::simulate)
        sim = config.simulation;
    nlohmann::json comparison = nlohmann::json::object();
    for (auto strategy : config.strategies) {
        const std::string name{to_string(strategy)};
        const fs::path dir = out_dir / ("strategy_" + name);
        std::error_code ec;
        fs::remove_all(dir, ec);
        try {
            ensure_dir(dir);
            const auto analysis = analyze_strategy(rows, covariates, strategy, config.analysis);
            std::vector<std::string> files;
            write_strategy(analysis, builder.report(), dir, sim, files);
            m.outputs[name] = files;
            const auto& treat = analysis.forest.front();
            comparison[name] = {{"n_rows", analysis.data.rows.size()},
                                {"hr", treat.hr},
                                {"ci_lower", treat.ci_lower},
                                {"ci_upper", treat.ci_upper},
                                {"rd10_adrd", rd_json(analysis.rd[0])},
                                {"rd10_death_without_dementia", rd_json(analysis.rd[1])}};
        } catch (const Error& e) {
            fs::remove_all(dir, ec);
            m.errors[name] = family_name(e.family()) + ": " + e.what();
        }
    }

    if (tally) {
        const double true_hr = std::exp(config.simulation.true_log_hr_adrd);
        const double oracle = oracle_true_hr(config.simulation, kOracleDraws, config.simulation.seed);
        for (auto& [name, entry] : comparison.items()) {
            const double lo = entry["ci_lower"], hi = entry["ci_upper"], hr = entry["hr"];
            entry["abs_error_vs_true_hr"] = std::abs(hr - true_hr);
            entry["ci_covers_true_hr"] = lo <= true_hr && true_hr <= hi;
            entry["ci_covers_oracle_hr"] = lo <= oracle && oracle <= hi;
        }
        nlohmann::json truth{{"true_log_hr_adrd", config.simulation.true_log_hr_adrd},
                             {"true_hr_adrd", true_hr},
                             {"oracle_marginal_hr_adrd", oracle},
                             {"oracle_draws", kOracleDraws},
                             {"corpus",
                              {{"patients", tally->patients},
                               {"pcp_patients", tally->pcp},
                               {"latent_adrd_in_followup", tally->latent_adrd_in_followup},
                               {"recorded_adrd", tally->recorded_adrd},
                               {"latent_death_in_followup", tally->latent_death_in_followup},
                               {"recorded_death", tally->recorded_death}}},
                             {"strategies", comparison}};
        write_json_file((out_dir / "truth_comparison.json").string(), truth);
        run_files.push_back("truth_comparison.json");
    }
    m.outputs["run"] = run_files;

    for (const auto& [group, files] : m.outputs)
        for (const auto& f : files)
            m.file_hashes[f] = sha256_file((out_dir / f).string());
    write_json_file((out_dir / "manifest.json").string(), m.to_json());
    m.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
}

void write_simulation(const GenConfig& config, const std::string& out)
{
    const fs::path dir = out;
    ensure_dir(dir);
    const PatientSimulator sim{config};
    std::ofstream corpus(dir / "corpus.jsonl", std::ios::binary), truth(dir / "ground_truth.jsonl", std::ios::binary);
    if (!corpus || !truth)
        throw IoError("cannot write to " + dir.string());
    for (std::int64_t i = 0; i < config.n_patients; ++i) {
        auto [record, t] = sim.simulate(i);
        write_patient_line(corpus, record);
        truth << to_json(t).dump() << '\n';
    }
    corpus.close();
    truth.close();
    if (!corpus || !truth)
        throw IoError("write failed under " + dir.string());
    write_json_file((dir / "simulation_config.json").string(), to_json(config));
}

}  // namespace ttepcp
