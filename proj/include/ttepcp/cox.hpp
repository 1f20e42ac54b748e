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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "ttepcp/error.hpp"
#include "ttepcp/logistic.hpp"

namespace ttepcp {

enum class TieMethod { efron, breslow };

/// Right-censored data for one cause-specific Cox model.
template <typename Scalar>
struct CoxData {
    MatrixX<Scalar> X;             // n x p, no intercept
    std::vector<std::int32_t> time;
    std::vector<std::uint8_t> event;  // 1 = event of the modeled cause
    VectorX<Scalar> weight;        // empty means unit weights
};

template <typename Scalar>
struct CoxEvaluation {
    Scalar log_likelihood = 0;
    VectorX<Scalar> score;
    MatrixX<Scalar> information;
};

template <typename Scalar>
struct CoxFitT {
    VectorX<Scalar> coefficients;
    MatrixX<Scalar> covariance;                 // inverse information
    std::optional<MatrixX<Scalar>> robust_covariance;  // sandwich, for weighted fits
    VectorX<Scalar> score;                      // at the solution
    Scalar log_likelihood = 0;
    Scalar null_log_likelihood = 0;
    int iterations = 0;
    bool converged = false;
    std::int64_t n = 0;
    std::int64_t n_events = 0;

    /// Standard errors from the robust covariance when present.
    VectorX<Scalar> standard_errors() const
    {
        const auto& v = robust_covariance ? *robust_covariance : covariance;
        return v.diagonal().cwiseSqrt();
    }
};

using CoxFit = CoxFitT<double>;

struct CoxOptions {
    TieMethod ties = TieMethod::efron;
    double tol = 1e-10;  // on relative log-likelihood change
    int max_iter = 50;
    bool robust = false;  // sandwich covariance even with unit weights
};

namespace detail {

// Row order by descending time; ties keep index order so results do not
// depend on the input permutation beyond floating-point summation order
// within one tied group.
inline std::vector<std::size_t> descending_time_order(const std::vector<std::int32_t>& time)
{
    std::vector<std::size_t> idx(time.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return time[a] > time[b]; });
    return idx;
}

template <typename Scalar>
Scalar weight_of(const CoxData<Scalar>& d, std::size_t i)
{
    return d.weight.size() == 0 ? Scalar(1) : d.weight[static_cast<Eigen::Index>(i)];
}

template <typename Scalar>
CoxEvaluation<Scalar> evaluate_cox_ordered(const CoxData<Scalar>& d, const VectorX<Scalar>& beta,
                                           TieMethod ties, const std::vector<std::size_t>& order,
                                           bool need_information)
{
    using std::exp;
    using std::log;
    const Eigen::Index p = d.X.cols();
    CoxEvaluation<Scalar> out;
    out.score = VectorX<Scalar>::Zero(p);
    if (need_information)
        out.information = MatrixX<Scalar>::Zero(p, p);

    VectorX<Scalar> eta = d.X * beta;
    Scalar S0 = 0;
    VectorX<Scalar> S1 = VectorX<Scalar>::Zero(p);
    MatrixX<Scalar> S2 = MatrixX<Scalar>::Zero(p, p);
    VectorX<Scalar> D1(p), s1(p);
    MatrixX<Scalar> D2(p, p);

    const std::size_t n = order.size();
    std::size_t g = 0;
    while (g < n) {
        const auto t = d.time[order[g]];
        std::size_t end = g;
        Scalar D0 = 0, wsum = 0;
        int deaths = 0;
        D1.setZero();
        if (need_information)
            D2.setZero();
        for (; end < n && d.time[order[end]] == t; ++end) {
            const auto i = order[end];
            const Scalar w = weight_of(d, i);
            const Scalar r = w * exp(eta[static_cast<Eigen::Index>(i)]);
            auto xi = d.X.row(static_cast<Eigen::Index>(i)).transpose();
            S0 += r;
            S1.noalias() += r * xi;
            if (need_information)
                S2.template selfadjointView<Eigen::Lower>().rankUpdate(xi, r);
            if (d.event[i]) {
                ++deaths;
                wsum += w;
                D0 += r;
                D1.noalias() += r * xi;
                if (need_information)
                    D2.template selfadjointView<Eigen::Lower>().rankUpdate(xi, r);
                out.log_likelihood += w * eta[static_cast<Eigen::Index>(i)];
                out.score.noalias() += w * xi;
            }
        }
        if (deaths > 0) {
            const int steps = ties == TieMethod::efron ? deaths : 1;
            const Scalar mult = ties == TieMethod::efron ? wsum / Scalar(deaths) : wsum;
            for (int k = 0; k < steps; ++k) {
                const Scalar f = ties == TieMethod::efron ? Scalar(k) / Scalar(deaths) : Scalar(0);
                const Scalar s0 = S0 - f * D0;
                s1 = S1 - f * D1;
                out.log_likelihood -= mult * log(s0);
                out.score.noalias() -= (mult / s0) * s1;
                if (need_information) {
                    MatrixX<Scalar> s2 = S2 - f * D2;
                    out.information.noalias() += (mult / s0) * s2;
                    out.information.template selfadjointView<Eigen::Lower>().rankUpdate(s1, -mult / (s0 * s0));
                }
            }
        }
        g = end;
    }
    if (need_information)
        out.information = out.information.template selfadjointView<Eigen::Lower>();
    return out;
}

}  // namespace detail

/// Partial log-likelihood, score and observed information at `beta`.
template <typename Scalar>
CoxEvaluation<Scalar> evaluate_cox(const CoxData<Scalar>& d, const VectorX<Scalar>& beta,
                                   TieMethod ties = TieMethod::efron)
{
    return detail::evaluate_cox_ordered(d, beta, ties, detail::descending_time_order(d.time), true);
}

/// Breslow-form score residuals (one row per subject) at `beta`.
template <typename Scalar>
MatrixX<Scalar> cox_score_residuals(const CoxData<Scalar>& d, const VectorX<Scalar>& beta)
{
    using std::exp;
    const Eigen::Index n = d.X.rows(), p = d.X.cols();
    VectorX<Scalar> eta = d.X * beta;
    auto order = detail::descending_time_order(d.time);

    // Risk-set means and hazard increments per distinct event time, computed
    // in descending order then accumulated in ascending order.
    struct Step {
        std::int32_t t;
        Scalar dlambda;
        VectorX<Scalar> xbar;
    };
    std::vector<Step> steps;
    Scalar S0 = 0;
    VectorX<Scalar> S1 = VectorX<Scalar>::Zero(p);
    for (std::size_t g = 0; g < order.size();) {
        const auto t = d.time[order[g]];
        Scalar wsum = 0;
        std::size_t end = g;
        for (; end < order.size() && d.time[order[end]] == t; ++end) {
            const auto i = order[end];
            const Scalar w = detail::weight_of(d, i);
            const Scalar r = w * exp(eta[static_cast<Eigen::Index>(i)]);
            S0 += r;
            S1.noalias() += r * d.X.row(static_cast<Eigen::Index>(i)).transpose();
            if (d.event[i])
                wsum += w;
        }
        if (wsum > 0)
            steps.push_back({t, wsum / S0, S1 / S0});
        g = end;
    }
    std::reverse(steps.begin(), steps.end());

    MatrixX<Scalar> resid(n, p);
    std::vector<std::size_t> asc(order.rbegin(), order.rend());
    Scalar cum_lambda = 0;
    VectorX<Scalar> cum_xbar = VectorX<Scalar>::Zero(p);
    std::size_t s = 0;
    for (std::size_t a = 0; a < asc.size();) {
        const auto t = d.time[asc[a]];
        std::size_t end = a;
        while (end < asc.size() && d.time[asc[end]] == t)
            ++end;
        const VectorX<Scalar>* xbar_t = nullptr;
        while (s < steps.size() && steps[s].t <= t) {
            cum_lambda += steps[s].dlambda;
            cum_xbar.noalias() += steps[s].dlambda * steps[s].xbar;
            if (steps[s].t == t)
                xbar_t = &steps[s].xbar;
            ++s;
        }
        for (std::size_t k = a; k < end; ++k) {
            const auto i = static_cast<Eigen::Index>(asc[k]);
            VectorX<Scalar> xi = d.X.row(i).transpose();
            VectorX<Scalar> r = -exp(eta[i]) * (xi * cum_lambda - cum_xbar);
            if (d.event[asc[k]] && xbar_t)
                r += xi - *xbar_t;
            resid.row(i) = r.transpose();
        }
        a = end;
    }
    return resid;
}

/// Newton-Raphson maximization of the (weighted) partial likelihood with
/// step-halving. Throws NoEventsError, SingularInformationError,
/// NonConvergenceError.
template <typename Scalar>
CoxFitT<Scalar> fit_cox(const CoxData<Scalar>& d, const CoxOptions& opt = {})
{
    using std::abs;
    const Eigen::Index n = d.X.rows(), p = d.X.cols();
    if (static_cast<std::size_t>(n) != d.time.size() || d.time.size() != d.event.size() ||
        (d.weight.size() != 0 && d.weight.size() != n))
        throw UsageError("fit_cox: inconsistent input lengths");

    CoxFitT<Scalar> fit;
    fit.n = n;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (d.event[static_cast<std::size_t>(i)])
            ++fit.n_events;
        if (detail::weight_of(d, static_cast<std::size_t>(i)) <= 0)
            throw UsageError("fit_cox: weights must be positive");
    }
    if (fit.n_events == 0)
        throw NoEventsError("fit_cox: no events of the modeled cause");

    // Center columns; the partial likelihood is invariant to it and exp() stays tame.
    CoxData<Scalar> c{d.X.rowwise() - d.X.colwise().mean(), d.time, d.event, d.weight};
    if (p > 0) {
        Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(c.X);
        qr.setThreshold(Scalar(1e-10));
        if (qr.rank() < p)
            throw SingularInformationError(
                fmt::format("fit_cox: design is collinear (rank {} < {} columns)", qr.rank(), p));
    }

    const auto order = detail::descending_time_order(c.time);
    VectorX<Scalar> beta = VectorX<Scalar>::Zero(p);
    auto ev = detail::evaluate_cox_ordered(c, beta, opt.ties, order, true);
    fit.null_log_likelihood = ev.log_likelihood;

    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        Eigen::LDLT<MatrixX<Scalar>> ldlt(ev.information);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            (p > 0 && ldlt.vectorD().minCoeff() <= Scalar(1e-12) * ldlt.vectorD().maxCoeff()))
            throw SingularInformationError("fit_cox: information matrix is singular");
        VectorX<Scalar> step = ldlt.solve(ev.score);
        Scalar scale = 1;
        VectorX<Scalar> next = beta + step;
        auto ev_next = detail::evaluate_cox_ordered(c, next, opt.ties, order, true);
        for (int h = 0; h < 30 && !(ev_next.log_likelihood >= ev.log_likelihood - Scalar(1e-12) * abs(ev.log_likelihood));
             ++h) {
            scale /= 2;
            next = beta + scale * step;
            ev_next = detail::evaluate_cox_ordered(c, next, opt.ties, order, true);
        }
        const Scalar change = abs(ev_next.log_likelihood - ev.log_likelihood);
        beta = next;
        ev = std::move(ev_next);
        fit.iterations = iter;
        if (change <= Scalar(opt.tol) * (abs(ev.log_likelihood) + Scalar(1))) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged) {
        throw NonConvergenceError(fmt::format("fit_cox: no convergence in {} iterations; last partial "
                                              "log-likelihood {:.10g}, coefficient norm {:.6g}",
                                              opt.max_iter, static_cast<double>(ev.log_likelihood),
                                              static_cast<double>(beta.norm())));
    }

    fit.coefficients = beta;
    fit.score = ev.score;
    fit.log_likelihood = ev.log_likelihood;
    fit.covariance = ev.information.ldlt().solve(MatrixX<Scalar>::Identity(p, p));
    fit.covariance = (fit.covariance + fit.covariance.transpose()) / Scalar(2);

    bool weighted = false;
    for (Eigen::Index i = 0; i < d.weight.size() && !weighted; ++i)
        weighted = d.weight[i] != Scalar(1);
    if (weighted || opt.robust) {
        MatrixX<Scalar> resid = cox_score_residuals(c, beta);
        MatrixX<Scalar> meat = MatrixX<Scalar>::Zero(p, p);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar w = detail::weight_of(c, static_cast<std::size_t>(i));
            meat.noalias() += (w * w) * resid.row(i).transpose() * resid.row(i);
        }
        MatrixX<Scalar> v = fit.covariance * meat * fit.covariance;
        fit.robust_covariance = (v + v.transpose()) / Scalar(2);
    }
    return fit;
}

}  // namespace ttepcp
