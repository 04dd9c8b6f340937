#pragma once

// Exact solver for
//
//   min_s  a^T s + gamma ||s||^2   s.t.  s >= 0, sum(s) = 1
//
// via the shrinking-support threshold recursion
//
//   S^0 = {all},  c^t = (sum_{i in S^t} a_i + 2 gamma) / |S^t|,
//   S^{t+1} = { i : a_i < c^t },
//
// stopped when the support stops shrinking. The minimizer is then
// s_i = (c^t - a_i) / (2 gamma) on the support and 0 elsewhere.

#include "nglge/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace nglge {

template <typename Scalar>
struct SimplexSolution {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Vector s;
    /// Indices with s_i > 0, ascending.
    std::vector<Eigen::Index> support;
    /// Fixed-point threshold c^t; support = { i : a_i < threshold }.
    Scalar threshold{};
    /// Number of rounds in which the support shrank (index t of the final c^t).
    int iterations = 0;
    /// c^0, c^1, ..., c^t as computed.
    std::vector<Scalar> thresholds;
};

namespace detail {

template <typename Derived>
void check_simplex_problem(const Eigen::MatrixBase<Derived> &a,
                           typename Derived::Scalar gamma) {
    if (a.size() == 0)
        throw InvalidArgument("simplex: cost vector is empty");
    if (!a.allFinite())
        throw InvalidArgument("simplex: cost vector has non-finite entries");
    if (!(gamma > 0) || !std::isfinite(static_cast<double>(gamma)))
        throw InvalidArgument("simplex: gamma must be positive and finite");
}

} // namespace detail

/// Objective a^T s + gamma ||s||^2.
template <typename DerivedA, typename DerivedS>
typename DerivedA::Scalar simplex_objective(const Eigen::MatrixBase<DerivedA> &a,
                                            typename DerivedA::Scalar gamma,
                                            const Eigen::MatrixBase<DerivedS> &s) {
    return a.dot(s) + gamma * s.squaredNorm();
}

template <typename Derived>
SimplexSolution<typename Derived::Scalar>
solve_simplex(const Eigen::MatrixBase<Derived> &a, typename Derived::Scalar gamma) {
    using Scalar = typename Derived::Scalar;
    using Index = Eigen::Index;
    detail::check_simplex_problem(a, gamma);

    const Index n = a.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index i, Index j) { return a(i) < a(j); });

    std::vector<Scalar> sorted(order.size());
    std::vector<Scalar> prefix(order.size() + 1, Scalar(0));
    for (std::size_t r = 0; r < order.size(); ++r) {
        sorted[r] = a(order[r]);
        prefix[r + 1] = prefix[r] + sorted[r];
    }

    const Scalar two_gamma = Scalar(2) * gamma;
    auto threshold_for = [&](Index k) {
        return (prefix[static_cast<std::size_t>(k)] + two_gamma) / Scalar(k);
    };

    SimplexSolution<Scalar> out;
    Index k = n;
    Scalar c = threshold_for(k);
    out.thresholds.push_back(c);
    for (Index round = 0; round < n; ++round) {
        // |{ i : a_i < c }| via the sorted costs; strict inequality excludes ties.
        auto next_k = static_cast<Index>(
            std::lower_bound(sorted.begin(), sorted.end(), c) - sorted.begin());
        // c > mean(support) >= min(a) in exact arithmetic; only rounding can
        // empty the set, and then the smallest cost is the whole support.
        next_k = std::max<Index>(next_k, 1);
        if (next_k == k)
            break;
        k = next_k;
        c = threshold_for(k);
        out.thresholds.push_back(c);
        ++out.iterations;
    }

    out.threshold = c;
    out.s = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
    out.support.assign(order.begin(), order.begin() + k);
    std::sort(out.support.begin(), out.support.end());
    for (Index i : out.support)
        out.s(i) = (c - a(i)) / two_gamma;
    return out;
}

/// Largest violation of the KKT system for the simplex problem at `s`:
/// negativity, sum-to-one, complementary slackness and dual feasibility, with
/// nu fixed from the support of `s` and lambda_i = a_i + 2 gamma s_i + nu.
template <typename DerivedA, typename DerivedS>
typename DerivedA::Scalar kkt_residual(const Eigen::MatrixBase<DerivedA> &a,
                                       typename DerivedA::Scalar gamma,
                                       const Eigen::MatrixBase<DerivedS> &s) {
    using Scalar = typename DerivedA::Scalar;
    if (a.size() != s.size())
        throw InvalidArgument("kkt_residual: length mismatch (a has " +
                              std::to_string(a.size()) + ", s has " +
                              std::to_string(s.size()) + ")");
    detail::check_simplex_problem(a, gamma);

    Scalar support_sum = 0;
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > 0) {
            support_sum += a(i);
            ++k;
        }
    }

    Scalar worst = std::abs(s.sum() - Scalar(1));
    worst = std::max(worst, -std::min(s.minCoeff(), Scalar(0)));
    if (k == 0)
        return worst;

    const Scalar nu = -support_sum / Scalar(k) - Scalar(2) * gamma / Scalar(k);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const Scalar lambda = a(i) + Scalar(2) * gamma * s(i) + nu;
        worst = std::max(worst, std::abs(lambda * s(i)));
        worst = std::max(worst, -std::min(lambda, Scalar(0)));
    }
    return worst;
}

/// Brute-force reference: enumerate every nonempty support, solve the
/// equality-constrained problem on it, keep KKT-feasible candidates and return
/// the one with the smallest objective. Cost 2^n; n <= 20.
template <typename Derived>
SimplexSolution<typename Derived::Scalar>
oracle_solve(const Eigen::MatrixBase<Derived> &a, typename Derived::Scalar gamma) {
    using Scalar = typename Derived::Scalar;
    using Index = Eigen::Index;
    constexpr Index max_n = 20;
    if (a.size() > max_n)
        throw UnsupportedSize("oracle_solve: n = " + std::to_string(a.size()) +
                              " exceeds the enumeration limit of 20");
    detail::check_simplex_problem(a, gamma);

    const Index n = a.size();
    const Scalar two_gamma = Scalar(2) * gamma;
    const Scalar scale = Scalar(1) + a.cwiseAbs().maxCoeff() + gamma;
    const Scalar tol = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale;

    SimplexSolution<Scalar> best;
    Scalar best_objective = std::numeric_limits<Scalar>::infinity();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> candidate(n);

    for (std::uint32_t mask = 1; mask < (std::uint32_t{1} << n); ++mask) {
        Scalar sum = 0;
        Index k = 0;
        for (Index i = 0; i < n; ++i) {
            if (mask & (std::uint32_t{1} << i)) {
                sum += a(i);
                ++k;
            }
        }
        const Scalar c = (sum + two_gamma) / Scalar(k);
        bool feasible = true;
        for (Index i = 0; i < n && feasible; ++i) {
            if (mask & (std::uint32_t{1} << i)) {
                candidate(i) = (c - a(i)) / two_gamma;
                feasible = candidate(i) >= -tol;
                candidate(i) = std::max(candidate(i), Scalar(0));
            } else {
                candidate(i) = 0;
                feasible = a(i) - c >= -tol; // excluded multiplier lambda_i >= 0
            }
        }
        if (!feasible)
            continue;
        const Scalar objective = simplex_objective(a, gamma, candidate);
        if (objective < best_objective) {
            best_objective = objective;
            best.s = candidate;
            best.threshold = c;
            best.support.clear();
            for (Index i = 0; i < n; ++i)
                if (candidate(i) > 0)
                    best.support.push_back(i);
        }
    }
    if (best.s.size() == 0)
        throw NumericalError("oracle_solve: no feasible support found");
    return best;
}

} // namespace nglge
