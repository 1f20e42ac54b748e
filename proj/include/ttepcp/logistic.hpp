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
#include <optional>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "ttepcp/error.hpp"

namespace ttepcp {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct LogisticOptions {
    double tol = 1e-8;  // on relative log-likelihood change
    int max_iter = 100;
    double separation_norm = 1e3;
    std::optional<Eigen::VectorXd> start;
    /// Nonnegative frequency weights (e.g. bootstrap multiplicities); unit if unset.
    std::optional<Eigen::VectorXd> frequency;
};

template <typename Scalar>
struct LogisticFitT {
    VectorX<Scalar> coefficients;
    MatrixX<Scalar> covariance;  // inverse observed information
    bool converged = false;
    int iterations = 0;
    Scalar log_likelihood = 0;
    VectorX<Scalar> fitted_probabilities;
};

using LogisticFit = LogisticFitT<double>;

namespace detail {

// log(1 + exp(x)) without overflow
template <typename Scalar>
Scalar softplus(Scalar x)
{
    using std::exp;
    using std::log1p;
    return x > 0 ? x + log1p(exp(-x)) : log1p(exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x)
{
    using std::exp;
    if (x >= 0)
        return Scalar(1) / (Scalar(1) + exp(-x));
    Scalar e = exp(x);
    return e / (Scalar(1) + e);
}

}  // namespace detail

/// Binomial log-likelihood of `beta`; `freq` empty means unit weights.
template <typename Scalar>
Scalar logistic_log_likelihood(const MatrixX<Scalar>& X, const VectorX<Scalar>& y, const VectorX<Scalar>& beta,
                               const VectorX<Scalar>& freq = {})
{
    VectorX<Scalar> eta = X * beta;
    Scalar ll = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const Scalar term = y[i] * eta[i] - detail::softplus(eta[i]);
        ll += freq.size() ? freq[i] * term : term;
    }
    return ll;
}

/// Score vector X'F(y - p).
template <typename Scalar>
VectorX<Scalar> logistic_score(const MatrixX<Scalar>& X, const VectorX<Scalar>& y, const VectorX<Scalar>& beta,
                               const VectorX<Scalar>& freq = {})
{
    VectorX<Scalar> eta = X * beta;
    VectorX<Scalar> resid = y - eta.unaryExpr([](Scalar v) { return detail::sigmoid(v); });
    if (freq.size())
        resid.array() *= freq.array();
    return X.transpose() * resid;
}

/// Maximum-likelihood logistic regression by IRLS (Newton) with step-halving.
/// Throws SeparationError when coefficients diverge or the fit becomes
/// perfect, NonConvergenceError when `max_iter` is exhausted.
template <typename Scalar>
LogisticFitT<Scalar> fit_logistic(const MatrixX<Scalar>& X, const VectorX<Scalar>& y,
                                  const LogisticOptions& opt = {})
{
    using std::abs;
    const Eigen::Index n = X.rows(), p = X.cols();
    if (y.size() != n)
        throw UsageError("fit_logistic: response length does not match design rows");
    VectorX<Scalar> freq;
    if (opt.frequency) {
        if (opt.frequency->size() != n || (opt.frequency->array() < 0).any())
            throw UsageError("fit_logistic: frequency weights must be nonnegative, one per row");
        freq = opt.frequency->template cast<Scalar>();
    }
    const VectorX<Scalar> f = freq.size() ? freq : VectorX<Scalar>::Ones(n);
    const Eigen::Index support = (f.array() > Scalar(0)).count();
    if (support <= p)
        throw DegenerateDesignError(fmt::format("fit_logistic: need more rows ({}) than columns ({})", support, p));
    const Scalar ones = f.dot(y), total = f.sum();
    if (ones <= 0 || ones >= total)
        throw DegenerateCohortError("fit_logistic: response contains a single class");

    LogisticFitT<Scalar> fit;
    VectorX<Scalar> beta = VectorX<Scalar>::Zero(p);
    if (opt.start && opt.start->size() == p)
        beta = opt.start->template cast<Scalar>();
    Scalar ll = logistic_log_likelihood(X, y, beta, freq);

    VectorX<Scalar> prob(n), w(n);
    auto refresh = [&](const VectorX<Scalar>& b) {
        VectorX<Scalar> eta = X * b;
        for (Eigen::Index i = 0; i < n; ++i) {
            prob[i] = detail::sigmoid(eta[i]);
            w[i] = f[i] * prob[i] * (Scalar(1) - prob[i]);
        }
    };

    MatrixX<Scalar> info(p, p);
    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        refresh(beta);
        VectorX<Scalar> score = X.transpose() * (f.array() * (y - prob).array()).matrix();
        info.noalias() = X.transpose() * w.asDiagonal() * X;
        Eigen::LDLT<MatrixX<Scalar>> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            throw SeparationError("fit_logistic: information matrix lost positive definiteness");
        VectorX<Scalar> step = ldlt.solve(score);

        Scalar scale = 1;
        VectorX<Scalar> next = beta + step;
        Scalar ll_next = logistic_log_likelihood(X, y, next, freq);
        for (int halving = 0; halving < 30 && !(ll_next >= ll - Scalar(1e-12) * abs(ll)); ++halving) {
            scale /= 2;
            next = beta + scale * step;
            ll_next = logistic_log_likelihood(X, y, next, freq);
        }
        const Scalar change = abs(ll_next - ll);
        beta = next;
        ll = ll_next;
        fit.iterations = iter;

        if (static_cast<double>(beta.norm()) > opt.separation_norm)
            throw SeparationError(fmt::format("fit_logistic: coefficient norm {:.3g} exceeds {:.3g} (separation)",
                                              static_cast<double>(beta.norm()), opt.separation_norm));
        if (change <= Scalar(opt.tol) * (abs(ll) + Scalar(0.1))) {
            fit.converged = true;
            break;
        }
    }

    refresh(beta);
    Scalar worst = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (f[i] > 0)
            worst = std::max(worst, abs(y[i] - prob[i]));
    if (worst < Scalar(1e-6))
        throw SeparationError("fit_logistic: outcome perfectly predicted (complete separation)");
    if (!fit.converged) {
        if (prob.minCoeff() < Scalar(1e-10) || prob.maxCoeff() > Scalar(1) - Scalar(1e-10))
            throw SeparationError("fit_logistic: fitted probabilities saturate without convergence (separation)");
        throw NonConvergenceError(fmt::format("fit_logistic: no convergence in {} iterations; last log-likelihood "
                                              "{:.10g}, coefficient norm {:.6g}",
                                              opt.max_iter, static_cast<double>(ll),
                                              static_cast<double>(beta.norm())));
    }

    info.noalias() = X.transpose() * w.asDiagonal() * X;
    fit.coefficients = beta;
    fit.covariance = info.ldlt().solve(MatrixX<Scalar>::Identity(p, p));
    fit.covariance = (fit.covariance + fit.covariance.transpose()) / Scalar(2);
    fit.log_likelihood = ll;
    fit.fitted_probabilities = prob;
    return fit;
}

}  // namespace ttepcp
