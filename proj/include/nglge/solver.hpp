#pragma once

// ADMM solver for the neighborhood-adaptive graph embedding model
//
//   min_{P,Q,Z,S}  sum_ij ||x_i - P Q X z_j||^2 s_ij + lambda1 ||Q||_F^2
//                  + lambda2 ||Z||_* + lambda3 ||S||_F^2
//   s.t. P^T P = I,  S >= 0,  S^T 1 = 1,  ||Q||_{2,0} = alpha
//
// with the splitting Z = B, multiplier C and penalty mu. One iteration runs
// the block updates in the order Z, B, Q, P, S, then (C, mu).

#include "nglge/error.hpp"
#include "nglge/graph.hpp"
#include "nglge/kernels.hpp"
#include "nglge/log.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

namespace nglge {

template <typename Scalar = double>
struct Hyperparams {
    Scalar lambda1 = Scalar(1e-4);
    Scalar lambda2 = Scalar(1e-4);
    Scalar lambda3 = Scalar(10);
    Eigen::Index m = 0;     ///< target dimension
    Eigen::Index alpha = 0; ///< number of selected features
    Eigen::Index k = 0;     ///< neighbor candidates per sample
    Scalar mu0 = Scalar(0.1);
    Scalar rho = Scalar(1.1);
    Scalar mu_max = Scalar(1e8);
    Scalar epsilon = Scalar(1e-6);
    int max_iter = 60;

    /// Throws InvalidArgument unless the settings fit data with d features and
    /// n samples.
    void validate(Eigen::Index d, Eigen::Index n) const {
        auto fail = [](const std::string &what) { throw InvalidArgument(what); };
        if (m < 1)
            fail("m must be at least 1");
        if (m >= d)
            fail("constraint m < d violated (m=" + std::to_string(m) +
                 ", d=" + std::to_string(d) + ")");
        if (alpha < m)
            fail("constraint m <= alpha violated (m=" + std::to_string(m) +
                 ", alpha=" + std::to_string(alpha) + ")");
        if (alpha > d)
            fail("constraint alpha <= d violated (alpha=" + std::to_string(alpha) +
                 ", d=" + std::to_string(d) + ")");
        if (k < 1 || k >= n)
            fail("constraint 1 <= k < n violated (k=" + std::to_string(k) +
                 ", n=" + std::to_string(n) + ")");
        if (!(lambda1 >= 0) || !(lambda2 >= 0))
            fail("lambda1 and lambda2 must be nonnegative");
        if (!(lambda3 > 0))
            fail("lambda3 must be positive");
        if (!(mu0 > 0))
            fail("mu0 must be positive");
        if (!(rho > 1))
            fail("rho must exceed 1");
        if (!(mu_max >= mu0))
            fail("mu_max must be at least mu0");
        if (!(epsilon > 0))
            fail("epsilon must be positive");
        if (max_iter < 0)
            fail("max_iter must be nonnegative");
    }
};

/// Q = V U where U selects the rows `selected` of the identity; only the
/// selected feature columns of Q are non-zero.
template <typename Scalar = double>
struct SparseProjection {
    Mat<Scalar> v;                       ///< m x alpha
    std::vector<Eigen::Index> selected;  ///< alpha distinct feature indices
    Eigen::Index d = 0;

    Eigen::Index rows() const { return v.rows(); }
    Eigen::Index alpha() const { return static_cast<Eigen::Index>(selected.size()); }

    Mat<Scalar> dense() const {
        Mat<Scalar> q = Mat<Scalar>::Zero(v.rows(), d);
        for (std::size_t c = 0; c < selected.size(); ++c)
            q.col(selected[c]) = v.col(static_cast<Eigen::Index>(c));
        return q;
    }

    Eigen::Index nonzero_columns() const {
        const Mat<Scalar> q = dense();
        return (q.colwise().squaredNorm().array() > Scalar(0)).count();
    }

    /// Dense Q given as a full-support projection (every feature selected).
    static SparseProjection from_dense(const Mat<Scalar> &q) {
        SparseProjection out;
        out.v = q;
        out.d = q.cols();
        out.selected.resize(static_cast<std::size_t>(q.cols()));
        std::iota(out.selected.begin(), out.selected.end(), Eigen::Index{0});
        return out;
    }
};

/// Q X computed through the factored form, touching only selected rows of X.
template <typename Scalar, typename Derived>
Mat<Scalar> transform(const SparseProjection<Scalar> &q, const Eigen::MatrixBase<Derived> &x) {
    if (x.rows() != q.d)
        throw InvalidArgument("transform: data has " + std::to_string(x.rows()) +
                              " features, projection expects " + std::to_string(q.d));
    if (q.selected.empty())
        return Mat<Scalar>::Zero(q.rows(), x.cols());
    return q.v * x(q.selected, Eigen::all);
}

template <typename Scalar = double>
struct SolverState {
    Mat<Scalar> P; ///< d x m, orthonormal columns
    SparseProjection<Scalar> Q;
    Mat<Scalar> Z; ///< n x n
    Mat<Scalar> B; ///< n x n, nuclear-norm split of Z
    Mat<Scalar> C; ///< n x n multiplier for Z = B
    Scalar mu{};
    AffinityGraph<Scalar> S;
    int iteration = 0;
};

template <typename Scalar = double>
struct IterationLog {
    int iteration = 0;
    Scalar objective{};
    Scalar residual{}; ///< ||Z - B||_inf (max-abs entry)
    Scalar mu{};
    std::vector<Eigen::Index> support_sizes;

    Eigen::Index support_min() const {
        return support_sizes.empty() ? 0
                                     : *std::min_element(support_sizes.begin(), support_sizes.end());
    }
    Eigen::Index support_max() const {
        return support_sizes.empty() ? 0
                                     : *std::max_element(support_sizes.begin(), support_sizes.end());
    }
    Scalar support_median() const {
        if (support_sizes.empty())
            return Scalar(0);
        auto sorted = support_sizes;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t h = sorted.size() / 2;
        if (sorted.size() % 2 == 1)
            return Scalar(sorted[h]);
        return (Scalar(sorted[h - 1]) + Scalar(sorted[h])) / Scalar(2);
    }
};

/// Top-m eigenvectors of the centered covariance, descending eigenvalue,
/// sign-normalized.
template <typename Scalar>
Mat<Scalar> principal_basis(const Mat<Scalar> &x, Eigen::Index m) {
    const Vec<Scalar> mean = x.rowwise().mean();
    const Mat<Scalar> centered = x.colwise() - mean;
    const Mat<Scalar> cov =
        centered * centered.transpose() / Scalar(std::max<Eigen::Index>(x.cols(), 1));
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(cov);
    if (eig.info() != Eigen::Success)
        throw NumericalError("principal_basis: eigendecomposition failed");
    Mat<Scalar> basis = eig.eigenvectors().rightCols(m).rowwise().reverse();
    Mat<Scalar> unused = Mat<Scalar>::Zero(m, m);
    normalize_signs(basis, unused);
    return basis;
}

template <typename Scalar>
SolverState<Scalar> initialize(const Mat<Scalar> &x, const Hyperparams<Scalar> &h) {
    if (!x.allFinite())
        throw InvalidArgument("initialize: data has non-finite entries");
    if (h.m > x.rows())
        throw InvalidArgument("initialize: m exceeds the feature count");
    h.validate(x.rows(), x.cols());

    const Eigen::Index n = x.cols();
    SolverState<Scalar> st;
    st.P = principal_basis(x, h.m);
    st.Q = SparseProjection<Scalar>::from_dense(st.P.transpose());
    st.Z = Mat<Scalar>::Zero(n, n);
    st.B = Mat<Scalar>::Zero(n, n);
    st.C = Mat<Scalar>::Zero(n, n);
    st.mu = h.mu0;
    st.S = init_affinity<Scalar>(knn_mask(x, h.k), h.k);
    return st;
}

/// Z = (2 X^T Q^T Q X + mu I)^{-1} (2 X^T Q^T P^T X S + mu B - C).
template <typename Scalar>
Mat<Scalar> update_z(const SolverState<Scalar> &st, const Mat<Scalar> &x,
                     const Hyperparams<Scalar> & /*h*/) {
    const Mat<Scalar> qx = transform(st.Q, x);
    const Mat<Scalar> px = st.P.transpose() * x;
    Mat<Scalar> system = Scalar(2) * qx.transpose() * qx;
    system.diagonal().array() += st.mu;
    const Mat<Scalar> rhs =
        Scalar(2) * qx.transpose() * (px * st.S.weights) + st.mu * st.B - st.C;
    return spd_solve(system, rhs);
}

/// B = SVT_{lambda2/mu}(Z + C/mu).
template <typename Scalar>
Mat<Scalar> update_b(const SolverState<Scalar> &st, const Hyperparams<Scalar> &h) {
    return svt(st.Z + st.C / st.mu, h.lambda2 / st.mu);
}

/// Scores diag(G^{-1} F^T F) used to rank features in the Q update.
template <typename Scalar>
struct FeatureScores {
    Mat<Scalar> F; ///< P^T X S Z^T X^T (m x d)
    Mat<Scalar> G; ///< X Z Z^T X^T + lambda1 I (d x d), ridged when lambda1 = 0
    Vec<Scalar> score;
};

template <typename Scalar>
FeatureScores<Scalar> feature_scores(const SolverState<Scalar> &st, const Mat<Scalar> &x,
                                     const Hyperparams<Scalar> &h) {
    const Eigen::Index d = x.rows();
    const Mat<Scalar> xz = x * st.Z;
    FeatureScores<Scalar> out;
    out.F = (st.P.transpose() * x * st.S.weights) * xz.transpose();
    out.G = xz * xz.transpose();
    Scalar ridge = h.lambda1;
    if (!(ridge > 0)) {
        const Scalar tr = out.G.trace();
        ridge = Scalar(1e-10) * (tr > 0 ? tr / Scalar(d) : Scalar(1));
        warn("lambda1 = 0: adding ridge " + std::to_string(static_cast<double>(ridge)) +
             " to the feature Gram matrix");
    }
    out.G.diagonal().array() += ridge;
    const Mat<Scalar> w = spd_solve(out.G, out.F.transpose()); // G^{-1} F^T
    out.score.resize(d);
    for (Eigen::Index i = 0; i < d; ++i)
        out.score(i) = w.row(i).dot(out.F.col(i).transpose());
    return out;
}

/// Indices of the alpha largest scores, in decreasing score order (ties to
/// the smaller index).
template <typename Scalar>
std::vector<Eigen::Index> top_indices(const Vec<Scalar> &score, Eigen::Index alpha) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(score.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return score(a) > score(b); });
    order.resize(static_cast<std::size_t>(alpha));
    return order;
}

/// V for a fixed selection: V = F_sel (G_sel)^{-1}.
template <typename Scalar>
Mat<Scalar> projection_factor(const Mat<Scalar> &f, const Mat<Scalar> &g,
                              const std::vector<Eigen::Index> &selected) {
    const Mat<Scalar> g_sel = g(selected, selected);
    const Mat<Scalar> f_sel = f(Eigen::all, selected);
    return spd_solve(g_sel, f_sel.transpose()).transpose();
}

/// Tr[(U G U^T)^{-1} U F^T F U^T] for a selection U.
template <typename Scalar>
Scalar selection_objective(const Mat<Scalar> &f, const Mat<Scalar> &g,
                           const std::vector<Eigen::Index> &selected) {
    const Mat<Scalar> f_sel = f(Eigen::all, selected);
    const Mat<Scalar> g_sel = g(selected, selected);
    return (spd_solve(g_sel, f_sel.transpose()) * f_sel).trace();
}

template <typename Scalar>
SparseProjection<Scalar> update_q(const SolverState<Scalar> &st, const Mat<Scalar> &x,
                                  const Hyperparams<Scalar> &h) {
    if (h.alpha < h.m)
        throw InvalidArgument("update_q: constraint m <= alpha violated");
    if (h.alpha > x.rows())
        throw InvalidArgument("update_q: alpha exceeds the feature count");
    const auto fs = feature_scores(st, x, h);
    SparseProjection<Scalar> q;
    q.d = x.rows();
    q.selected = top_indices(fs.score, h.alpha);
    q.v = projection_factor(fs.F, fs.G, q.selected);
    return q;
}

/// P = procrustes(X S Z^T X^T Q^T).
template <typename Scalar>
Mat<Scalar> update_p(const SolverState<Scalar> &st, const Mat<Scalar> &x) {
    const Mat<Scalar> qx = transform(st.Q, x);
    const Mat<Scalar> m = x * (st.S.weights * (st.Z.transpose() * qx.transpose()));
    return procrustes(m);
}

/// a_ij = ||x_i - P Q X z_j||^2.
template <typename Scalar>
Mat<Scalar> affinity_cost(const SolverState<Scalar> &st, const Mat<Scalar> &x) {
    const Mat<Scalar> y = st.P * (transform(st.Q, x) * st.Z);
    Mat<Scalar> cost = Scalar(-2) * (x.transpose() * y);
    cost.colwise() += x.colwise().squaredNorm().transpose();
    cost.rowwise() += y.colwise().squaredNorm();
    return cost;
}

template <typename Scalar>
AffinityGraph<Scalar> update_s(const SolverState<Scalar> &st, const Mat<Scalar> &x,
                               const Hyperparams<Scalar> &h) {
    return update_affinity(affinity_cost(st, x), st.S.candidate_mask, h.lambda3,
                           st.S.neighbor_size);
}

/// C += mu (Z - B); mu = min(rho mu, mu_max).
template <typename Scalar>
std::pair<Mat<Scalar>, Scalar> update_dual(const SolverState<Scalar> &st,
                                           const Hyperparams<Scalar> &h) {
    return {st.C + st.mu * (st.Z - st.B), std::min(h.rho * st.mu, h.mu_max)};
}

/// Model objective evaluated at the current P, Q, Z, S.
template <typename Scalar>
Scalar objective(const SolverState<Scalar> &st, const Mat<Scalar> &x,
                 const Hyperparams<Scalar> &h) {
    const Scalar fit = affinity_cost(st, x).cwiseProduct(st.S.weights).sum();
    return fit + h.lambda1 * st.Q.v.squaredNorm() + h.lambda2 * nuclear_norm(st.Z) +
           h.lambda3 * st.S.weights.squaredNorm();
}

template <typename Scalar>
Scalar constraint_residual(const SolverState<Scalar> &st) {
    if (st.Z.size() == 0)
        return Scalar(0);
    return (st.Z - st.B).cwiseAbs().maxCoeff();
}

template <typename Scalar>
using IterationSink = std::function<void(const IterationLog<Scalar> &, const SolverState<Scalar> &)>;

template <typename Scalar = double>
struct FitResult {
    SparseProjection<Scalar> projection;
    std::vector<IterationLog<Scalar>> history;
    SolverState<Scalar> state;
    bool converged = false;
};

namespace detail {

[[noreturn]] inline void rethrow_at_iteration(const Error &e, int iteration) {
    const std::string msg = "iteration " + std::to_string(iteration) + ": " + e.what();
    if (auto *ne = dynamic_cast<const NumericalError *>(&e))
        throw NumericalError(msg, ne->pivot());
    throw Error(e.kind(), msg);
}

} // namespace detail

/// One full ADMM cycle; returns the residual ||Z - B||_inf of this iteration.
template <typename Scalar>
Scalar step(SolverState<Scalar> &st, const Mat<Scalar> &x, const Hyperparams<Scalar> &h) {
    st.Z = update_z(st, x, h);
    st.B = update_b(st, h);
    st.Q = update_q(st, x, h);
    st.P = update_p(st, x);
    st.S = update_s(st, x, h);
    const Scalar residual = constraint_residual(st);
    std::tie(st.C, st.mu) = update_dual(st, h);
    ++st.iteration;

    // Column sums of S are what lets the solver drop D2; make sure they hold.
    if (affinity_violation(st.S) > Scalar(1e-8))
        throw NumericalError("affinity graph lost column-stochasticity");
    return residual;
}

template <typename Scalar>
FitResult<Scalar> fit(const Mat<Scalar> &x, const Hyperparams<Scalar> &h,
                      const std::type_identity_t<IterationSink<Scalar>> &sink = {}) {
    FitResult<Scalar> out;
    out.state = initialize(x, h);
    for (int it = 1; it <= h.max_iter; ++it) {
        IterationLog<Scalar> log;
        try {
            log.residual = step(out.state, x, h);
            log.objective = objective(out.state, x, h);
        } catch (const Error &e) {
            detail::rethrow_at_iteration(e, it);
        }
        log.iteration = it;
        log.mu = out.state.mu;
        log.support_sizes = out.state.S.support_sizes();
        out.history.push_back(log);
        if (sink)
            sink(out.history.back(), out.state);
        if (log.residual <= h.epsilon) {
            out.converged = true;
            break;
        }
    }
    out.projection = out.state.Q;
    return out;
}

} // namespace nglge
