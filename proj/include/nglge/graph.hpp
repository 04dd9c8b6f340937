#pragma once

#include "nglge/error.hpp"
#include "nglge/kernels.hpp"
#include "nglge/simplex.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace nglge {

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Column-stochastic affinity S restricted to a fixed candidate mask.
/// weights(i, j) is the affinity of sample i as a neighbor of sample j.
template <typename Scalar>
struct AffinityGraph {
    Mat<Scalar> weights;
    Mask candidate_mask;
    Eigen::Index neighbor_size = 0;

    Eigen::Index size() const { return weights.cols(); }

    /// Number of strictly positive weights in each column.
    std::vector<Eigen::Index> support_sizes() const {
        std::vector<Eigen::Index> out(static_cast<std::size_t>(weights.cols()));
        for (Eigen::Index j = 0; j < weights.cols(); ++j)
            out[static_cast<std::size_t>(j)] = (weights.col(j).array() > Scalar(0)).count();
        return out;
    }
};

template <typename Scalar>
struct DegreePair {
    Vec<Scalar> d1; ///< row sums
    Vec<Scalar> d2; ///< column sums
};

/// Column j marks the k samples closest to sample j (Euclidean, self
/// excluded, ties to the smaller index).
template <typename Derived>
Mask knn_mask(const Eigen::MatrixBase<Derived> &x, Eigen::Index k) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = x.cols();
    if (k < 1 || k >= n)
        throw InvalidArgument("knn_mask: need 1 <= k < n, got k=" + std::to_string(k) +
                              " with n=" + std::to_string(n));
    Mask mask = Mask::Constant(n, n, false);
    std::vector<std::pair<Scalar, Eigen::Index>> ranked;
    ranked.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index j = 0; j < n; ++j) {
        ranked.clear();
        for (Eigen::Index i = 0; i < n; ++i)
            if (i != j)
                ranked.emplace_back((x.col(i) - x.col(j)).squaredNorm(), i);
        std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end());
        for (Eigen::Index r = 0; r < k; ++r)
            mask(ranked[static_cast<std::size_t>(r)].second, j) = true;
    }
    return mask;
}

/// Uniform 1/k weights on the mask.
template <typename Scalar = double>
AffinityGraph<Scalar> init_affinity(const Mask &mask, Eigen::Index k) {
    if (mask.rows() != mask.cols())
        throw InvalidArgument("init_affinity: mask is not square");
    if (k < 1)
        throw InvalidArgument("init_affinity: k must be positive");
    AffinityGraph<Scalar> g;
    g.candidate_mask = mask;
    g.neighbor_size = k;
    g.weights = Mat<Scalar>::Zero(mask.rows(), mask.cols());
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        const auto count = mask.col(j).count();
        if (count != k)
            throw InvalidArgument("init_affinity: column " + std::to_string(j) + " has " +
                                  std::to_string(count) + " candidates, expected " +
                                  std::to_string(k));
        if (mask(j, j))
            throw InvalidArgument("init_affinity: column " + std::to_string(j) +
                                  " lists the sample as its own neighbor");
        for (Eigen::Index i = 0; i < mask.rows(); ++i)
            if (mask(i, j))
                g.weights(i, j) = Scalar(1) / Scalar(k);
    }
    return g;
}

/// Column-wise adaptive update: each column solves the simplex problem over
/// its candidate rows with gamma = lambda3. The realized support is any
/// nonempty subset of the candidates.
template <typename Derived>
AffinityGraph<typename Derived::Scalar> update_affinity(const Eigen::MatrixBase<Derived> &cost,
                                                        const Mask &mask,
                                                        typename Derived::Scalar lambda3,
                                                        Eigen::Index neighbor_size = 0) {
    using Scalar = typename Derived::Scalar;
    if (cost.rows() != mask.rows() || cost.cols() != mask.cols())
        throw InvalidArgument("update_affinity: cost and mask shapes differ");
    if (!cost.allFinite())
        throw InvalidArgument("update_affinity: cost has non-finite entries");
    if (!(lambda3 > 0))
        throw InvalidArgument("update_affinity: lambda3 must be positive");

    AffinityGraph<Scalar> g;
    g.candidate_mask = mask;
    g.neighbor_size = neighbor_size;
    g.weights = Mat<Scalar>::Zero(cost.rows(), cost.cols());

    std::vector<Eigen::Index> rows;
    Vec<Scalar> local;
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
        rows.clear();
        for (Eigen::Index i = 0; i < cost.rows(); ++i)
            if (mask(i, j))
                rows.push_back(i);
        if (rows.empty())
            throw InvalidArgument("update_affinity: column " + std::to_string(j) +
                                  " has no candidates");
        local.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r)
            local(static_cast<Eigen::Index>(r)) = cost(rows[r], j);
        const auto sol = solve_simplex(local, lambda3);
        for (std::size_t r = 0; r < rows.size(); ++r)
            g.weights(rows[r], j) = sol.s(static_cast<Eigen::Index>(r));
    }
    return g;
}

template <typename Scalar>
DegreePair<Scalar> degrees(const AffinityGraph<Scalar> &g) {
    return {g.weights.rowwise().sum(), g.weights.colwise().sum().transpose()};
}

/// Largest violation of: nonnegativity, unit column sums, zero off-mask.
template <typename Scalar>
Scalar affinity_violation(const AffinityGraph<Scalar> &g) {
    Scalar worst = 0;
    if (g.weights.size() == 0)
        return worst;
    worst = std::max(worst, -std::min(g.weights.minCoeff(), Scalar(0)));
    worst = std::max(worst,
                     (g.weights.colwise().sum().array() - Scalar(1)).abs().maxCoeff());
    for (Eigen::Index j = 0; j < g.weights.cols(); ++j)
        for (Eigen::Index i = 0; i < g.weights.rows(); ++i)
            if (!g.candidate_mask(i, j))
                worst = std::max(worst, std::abs(g.weights(i, j)));
    return worst;
}

} // namespace nglge
