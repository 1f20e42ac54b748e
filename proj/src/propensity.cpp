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

#include "ttepcp/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "ttepcp/csv.hpp"
#include "ttepcp/error.hpp"

namespace ttepcp {

DesignMatrix build_design(std::span<const CohortRow> rows, const std::vector<std::string>& covariates, bool intercept,
                          std::vector<std::string>* dropped)
{
    const auto n = static_cast<Eigen::Index>(rows.size());
    DesignMatrix d;

    // Resolve column layout from the declared levels (or observed levels in
    // sorted order for categoricals without a declaration).
    struct Column {
        std::size_t covariate;
        std::optional<std::string> level;  // categorical indicator
    };
    std::vector<Column> layout;
    if (intercept)
        d.names.push_back(kInterceptName);
    for (std::size_t c = 0; c < covariates.size(); ++c) {
        const auto& name = covariates[c];
        bool categorical = false;
        for (const auto& r : rows) {
            auto v = covariate_value(r, name);
            if (!v)
                throw SchemaError(fmt::format("row {} lacks covariate '{}'", r.patient_id, name));
            categorical = std::holds_alternative<std::string>(*v);
        }
        if (!categorical) {
            layout.push_back({c, std::nullopt});
            d.names.push_back(name);
            continue;
        }
        std::vector<std::string> levels;
        if (const auto* declared = categorical_levels(name)) {
            levels = *declared;
        } else {
            std::set<std::string> seen;
            for (const auto& r : rows)
                seen.insert(std::get<std::string>(*covariate_value(r, name)));
            levels.assign(seen.begin(), seen.end());
        }
        for (const auto& r : rows) {
            const auto v = covariate_value(r, name);
            if (!std::holds_alternative<std::string>(*v))
                throw SchemaError(fmt::format("covariate '{}' mixes numeric and categorical values", name));
            const auto& s = std::get<std::string>(*v);
            if (std::find(levels.begin(), levels.end(), s) == levels.end())
                throw SchemaError(fmt::format("row {}: '{}' is not a level of '{}'", r.patient_id, s, name));
        }
        for (std::size_t k = 1; k < levels.size(); ++k) {
            layout.push_back({c, levels[k]});
            d.names.push_back(name + "=" + levels[k]);
        }
    }

    const Eigen::Index offset = intercept ? 1 : 0;
    d.X.resize(n, offset + static_cast<Eigen::Index>(layout.size()));
    if (intercept)
        d.X.col(0).setOnes();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < layout.size(); ++k) {
            const auto v = *covariate_value(r, covariates[layout[k].covariate]);
            double x;
            if (layout[k].level)
                x = std::get<std::string>(v) == *layout[k].level ? 1.0 : 0.0;
            else if (!std::isfinite(x = std::get<double>(v)))
                throw SchemaError(fmt::format("row {}: covariate '{}' is not finite", r.patient_id,
                                              covariates[layout[k].covariate]));
            d.X(i, offset + static_cast<Eigen::Index>(k)) = x;
        }
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
        const auto& col_name = d.names[static_cast<std::size_t>(j)];
        if (j >= offset && (n == 0 || (d.X.col(j).array() == d.X(0, j)).all())) {
            if (!dropped)
                throw DegenerateDesignError(fmt::format("design column '{}' is constant", col_name));
            dropped->push_back(col_name);
            continue;
        }
        keep.push_back(j);
    }
    if (keep.size() == static_cast<std::size_t>(d.X.cols()))
        return d;
    DesignMatrix kept;
    kept.X = d.X(Eigen::all, keep);
    for (auto j : keep)
        kept.names.push_back(d.names[static_cast<std::size_t>(j)]);
    return kept;
}

Eigen::VectorXd treatment_vector(std::span<const CohortRow> rows)
{
    Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        t[static_cast<Eigen::Index>(i)] = rows[i].arm == Arm::metformin ? 1.0 : 0.0;
    return t;
}

double empirical_quantile(std::vector<double> values, double q)
{
    if (values.empty())
        throw UsageError("empirical_quantile: no values");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * q));
    k = std::clamp<std::size_t>(k, 1, n);
    return values[k - 1];
}

Eigen::VectorXd stabilized_weights(const Eigen::VectorXd& e, const Eigen::VectorXd& t, const WeightOptions& options)
{
    if (e.size() != t.size())
        throw UsageError("stabilized_weights: score and treatment lengths differ");
    const auto n = e.size();
    if (n == 0)
        return {};
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(e[i] > 0 && e[i] < 1))
            throw PositivityError(fmt::format("propensity score {} at row {} is outside (0, 1)", e[i], i));
    const double pbar = t.mean();
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i)
        w[i] = t[i] > 0.5 ? pbar / e[i] : (1 - pbar) / (1 - e[i]);
    if (options.cap_percentile) {
        const double q = *options.cap_percentile;
        if (!(q > 0 && q <= 100))
            throw UsageError("stabilized_weights: cap percentile must be in (0, 100]");
        const double cap = empirical_quantile({w.data(), w.data() + n}, q / 100);
        w = w.cwiseMin(cap);
    }
    return w;
}

Eigen::VectorXd stabilized_weights(const LogisticFit& fit, const Eigen::VectorXd& treatment, const WeightOptions& options)
{
    return stabilized_weights(fit.fitted_probabilities, treatment, options);
}

PropensityHistogram propensity_histogram(const Eigen::VectorXd& e, const Eigen::VectorXd& t, int n_bins)
{
    if (n_bins < 2)
        throw UsageError("propensity_histogram: n_bins must be at least 2");
    PropensityHistogram h;
    const auto nb = static_cast<std::size_t>(n_bins);
    for (std::size_t k = 0; k <= nb; ++k)
        h.edges.push_back(static_cast<double>(k) / static_cast<double>(n_bins));
    h.counts[0].assign(nb, 0);
    h.counts[1].assign(nb, 0);
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        const double s = std::clamp(e[i], 0.0, 1.0);
        const auto bin = std::min(nb - 1, static_cast<std::size_t>(std::floor(s * n_bins)));
        ++h.counts[t[i] > 0.5 ? 0 : 1][bin];
    }
    return h;
}

Eigen::VectorXd mean_differences(const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& w)
{
    Eigen::VectorXd sum1 = Eigen::VectorXd::Zero(X.cols()), sum0 = sum1;
    double w1 = 0, w0 = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (t[i] > 0.5) {
            sum1 += w[i] * X.row(i).transpose();
            w1 += w[i];
        } else {
            sum0 += w[i] * X.row(i).transpose();
            w0 += w[i];
        }
    }
    if (w1 <= 0 || w0 <= 0)
        throw DegenerateCohortError("mean_differences: an arm is empty");
    return (sum1 / w1 - sum0 / w0).cwiseAbs();
}

void write_histogram_csv(const std::string& path, const PropensityHistogram& h)
{
    CsvWriter out{path, {"bin_lower", "bin_upper", "metformin", "sulfonylurea"}};
    for (std::size_t k = 0; k + 1 < h.edges.size(); ++k)
        out.row({format_number(h.edges[k]), format_number(h.edges[k + 1]), std::to_string(h.counts[0][k]),
                 std::to_string(h.counts[1][k])});
    out.close();
}

void write_weights_csv(const std::string& path, std::span<const CohortRow> rows, const Eigen::VectorXd& scores,
                       const Eigen::VectorXd& weights)
{
    CsvWriter out{path, {"patient_id", "arm", "propensity", "weight"}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out.row({rows[i].patient_id, std::string(to_string(rows[i].arm)), format_number(scores[k]),
                 format_number(weights[k])});
    }
    out.close();
}

nlohmann::json propensity_summary_json(const DesignMatrix& design, const LogisticFit& fit,
                                       const Eigen::VectorXd& treatment, const Eigen::VectorXd& weights)
{
    nlohmann::json coefficients = nlohmann::json::array();
    const Eigen::VectorXd se = fit.covariance.diagonal().cwiseSqrt();
    for (std::size_t k = 0; k < design.names.size(); ++k) {
        const auto j = static_cast<Eigen::Index>(k);
        coefficients.push_back({{"name", design.names[k]}, {"estimate", fit.coefficients[j]}, {"se", se[j]}});
    }
    double sum_w[2] = {0, 0}, count[2] = {0, 0}, sum_e[2] = {0, 0};
    for (Eigen::Index i = 0; i < treatment.size(); ++i) {
        const int a = treatment[i] > 0.5 ? 0 : 1;
        sum_w[a] += weights[i];
        sum_e[a] += fit.fitted_probabilities[i];
        count[a] += 1;
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(treatment.size());
    const Eigen::VectorXd raw = mean_differences(design.X, treatment, ones);
    const Eigen::VectorXd weighted = mean_differences(design.X, treatment, weights);
    nlohmann::json balance = nlohmann::json::array();
    for (std::size_t k = 1; k < design.names.size(); ++k) {
        const auto j = static_cast<Eigen::Index>(k);
        balance.push_back({{"name", design.names[k]}, {"unweighted", raw[j]}, {"weighted", weighted[j]}});
    }
    return {{"converged", fit.converged},
            {"iterations", fit.iterations},
            {"log_likelihood", fit.log_likelihood},
            {"n", treatment.size()},
            {"coefficients", coefficients},
            {"mean_score", {{"metformin", sum_e[0] / count[0]}, {"sulfonylurea", sum_e[1] / count[1]}}},
            {"mean_weight", {{"metformin", sum_w[0] / count[0]}, {"sulfonylurea", sum_w[1] / count[1]}}},
            {"balance", balance}};
}

}  // namespace ttepcp
