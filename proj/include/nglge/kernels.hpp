#pragma once

#include "nglge/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace nglge {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Relative cutoff below which a singular value counts as zero.
inline constexpr double rank_tolerance = 1e-12;

template <typename Scalar>
struct ThinSVD {
    Mat<Scalar> left;     ///< rows x r, orthonormal columns
    Vec<Scalar> singulars; ///< r values, descending, >= 0
    Mat<Scalar> right;    ///< cols x r, orthonormal columns

    Mat<Scalar> reconstruct() const {
        return left * singulars.asDiagonal() * right.transpose();
    }

    Eigen::Index rank() const {
        if (singulars.size() == 0 || singulars(0) <= 0)
            return 0;
        const Scalar cutoff = Scalar(rank_tolerance) * singulars(0);
        return (singulars.array() > cutoff).count();
    }
};

/// Flip each singular pair so the largest-magnitude entry of the left vector
/// is nonnegative (first such entry on ties).
template <typename Scalar>
void normalize_signs(Mat<Scalar> &left, Mat<Scalar> &right) {
    for (Eigen::Index j = 0; j < left.cols(); ++j) {
        Eigen::Index at = 0;
        left.col(j).cwiseAbs().maxCoeff(&at);
        if (left(at, j) < 0) {
            left.col(j) = -left.col(j);
            right.col(j) = -right.col(j);
        }
    }
}

template <typename Derived>
ThinSVD<typename Derived::Scalar> thin_svd(const Eigen::MatrixBase<Derived> &m) {
    using Scalar = typename Derived::Scalar;
    if (!m.allFinite())
        throw InvalidArgument("thin_svd: matrix has non-finite entries");
    ThinSVD<Scalar> out;
    if (m.size() == 0) {
        out.left.resize(m.rows(), 0);
        out.right.resize(m.cols(), 0);
        return out;
    }
    Eigen::BDCSVD<Mat<Scalar>> svd(m.eval(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left = svd.matrixU();
    out.singulars = svd.singularValues();
    out.right = svd.matrixV();
    normalize_signs(out.left, out.right);
    return out;
}

template <typename Derived>
typename Derived::Scalar nuclear_norm(const Eigen::MatrixBase<Derived> &m) {
    using Scalar = typename Derived::Scalar;
    if (m.size() == 0)
        return Scalar(0);
    return Eigen::BDCSVD<Mat<Scalar>>(m.eval()).singularValues().sum();
}

/// Singular value thresholding: the proximal map of tau * ||.||_*.
template <typename Derived>
Mat<typename Derived::Scalar> svt(const Eigen::MatrixBase<Derived> &m,
                                  typename Derived::Scalar tau) {
    using Scalar = typename Derived::Scalar;
    if (!(tau >= 0))
        throw InvalidArgument("svt: tau must be nonnegative");
    auto svd = thin_svd(m);
    const Vec<Scalar> shrunk = (svd.singulars.array() - tau).cwiseMax(Scalar(0));
    return svd.left * shrunk.asDiagonal() * svd.right.transpose();
}

/// argmax_{P^T P = I} Tr(P^T M) for a d x m matrix M, d >= m.
/// For rank-deficient M the maximizer is not unique; the returned U V^T is one
/// of them, made deterministic by the SVD sign convention.
template <typename Derived>
Mat<typename Derived::Scalar> procrustes(const Eigen::MatrixBase<Derived> &m) {
    if (m.rows() < m.cols())
        throw InvalidArgument("procrustes: need rows >= cols, got " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    auto svd = thin_svd(m);
    return svd.left * svd.right.transpose();
}

/// Solve A X = RHS for symmetric positive definite A by Cholesky plus one step
/// of iterative refinement.
template <typename DerivedA, typename DerivedB>
Mat<typename DerivedA::Scalar> spd_solve(const Eigen::MatrixBase<DerivedA> &a,
                                         const Eigen::MatrixBase<DerivedB> &rhs) {
    using Scalar = typename DerivedA::Scalar;
    if (a.rows() != a.cols())
        throw InvalidArgument("spd_solve: matrix is not square");
    if (a.rows() != rhs.rows())
        throw InvalidArgument("spd_solve: right-hand side has " + std::to_string(rhs.rows()) +
                              " rows, expected " + std::to_string(a.rows()));
    if (!a.allFinite() || !rhs.allFinite())
        throw InvalidArgument("spd_solve: non-finite input");
    const Mat<Scalar> am = a;
    if (am.size() == 0)
        return Mat<Scalar>(0, rhs.cols());
    const Scalar scale = std::max(Scalar(1), am.cwiseAbs().maxCoeff());
    if ((am - am.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-8) * scale)
        throw InvalidArgument("spd_solve: matrix is not symmetric");

    Eigen::LLT<Mat<Scalar>> llt(am);
    if (llt.info() != Eigen::Success) {
        // Replay the factorization to locate the failing pivot.
        Mat<Scalar> l = am.template triangularView<Eigen::Lower>();
        Eigen::Index pivot = 0;
        for (; pivot < l.rows(); ++pivot) {
            const Scalar diag = l(pivot, pivot) -
                                l.row(pivot).head(pivot).squaredNorm();
            if (!(diag > 0))
                break;
            l(pivot, pivot) = std::sqrt(diag);
            const Eigen::Index rest = l.rows() - pivot - 1;
            l.col(pivot).tail(rest) =
                (l.col(pivot).tail(rest) -
                 l.block(pivot + 1, 0, rest, pivot) * l.row(pivot).head(pivot).transpose()) /
                l(pivot, pivot);
        }
        throw NumericalError("spd_solve: matrix is not positive definite (pivot " +
                                 std::to_string(pivot) + ")",
                             pivot);
    }
    Mat<Scalar> x = llt.solve(rhs);
    x += llt.solve(rhs - am * x);
    return x;
}

} // namespace nglge
