#pragma once

// Dense complex linear algebra shared by every module.
//
// Inner-product convention (used everywhere in the library):
//
//     <A, X> = tr(A^* X) = sum_ij conj(A_ij) X_ij      (matrices)
//     <u, v> = u^* v     = sum_i  conj(u_i)  v_i       (vectors)
//
// i.e. the FIRST argument is conjugated. With measurement maps
// A(X)_i = <A_i, X> the adjoint is A^*(y) = sum_i y_i A_i, and
// <A(X), y> = <X, A^*(y)> holds exactly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "lowrank/rng.hpp"

namespace lowrank {

using Scalar = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class ScalarField { real, complex };

inline Scalar inner(const Matrix& a, const Matrix& x)
{
    return (a.conjugate().cwiseProduct(x)).sum();
}

inline Scalar inner(const Vector& u, const Vector& v) { return u.dot(v); }

inline void require(bool cond, const std::string& what)
{
    if (!cond)
        throw std::invalid_argument(what);
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* where)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(where) + ": shape mismatch ("
                                    + std::to_string(a.rows()) + "x" + std::to_string(a.cols())
                                    + " vs " + std::to_string(b.rows()) + "x"
                                    + std::to_string(b.cols()) + ")");
}

/// Column-major vectorization, matching Eigen storage.
inline Vector vec(const Matrix& x)
{
    return Eigen::Map<const Vector>(x.data(), x.size());
}

inline Matrix unvec(const Vector& v, Index rows, Index cols)
{
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline bool is_real(const Matrix& x, double tol = 0.0)
{
    return x.size() == 0 || x.imag().cwiseAbs().maxCoeff() <= tol;
}

inline Matrix hermitian_part(const Matrix& x) { return 0.5 * (x + x.adjoint()); }

inline Matrix gaussian_matrix(Index rows, Index cols, Philox& rng, ScalarField field)
{
    Matrix g(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            g(i, j) = field == ScalarField::real ? Scalar(rng.normal(), 0.0) : rng.complex_normal();
    return g;
}

inline Vector gaussian_vector(Index n, Philox& rng, ScalarField field)
{
    return gaussian_matrix(n, 1, rng, field).col(0);
}

/// Thin SVD with singular values sorted descending.
struct Svd
{
    Matrix u;
    RealVector sigma;
    Matrix v;
};

inline Svd thin_svd(const Matrix& x)
{
    if (x.size() == 0)
        return {Matrix(x.rows(), 0), RealVector(0), Matrix(x.cols(), 0)};
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

inline RealVector singular_values(const Matrix& x)
{
    if (x.size() == 0)
        return RealVector(0);
    return Eigen::BDCSVD<Matrix>(x).singularValues();
}

inline double nuclear_norm(const Matrix& x) { return singular_values(x).sum(); }

inline double spectral_norm(const Matrix& x)
{
    const RealVector s = singular_values(x);
    return s.size() ? s(0) : 0.0;
}

/// Numerical rank under the relative cut sigma > rel_cut * sigma_max.
inline Index numerical_rank(const Matrix& x, double rel_cut = 1e-12)
{
    const RealVector s = singular_values(x);
    if (s.size() == 0 || s(0) == 0.0)
        return 0;
    return (s.array() > rel_cut * s(0)).count();
}

/// Singular value soft-thresholding: the proximal map of threshold * ||.||_*.
inline Matrix svt(const Matrix& x, double threshold)
{
    require(threshold >= 0.0, "svt: threshold must be nonnegative");
    if (threshold == 0.0 || x.size() == 0)
        return x;
    const Svd s = thin_svd(x);
    Index keep = 0;
    while (keep < s.sigma.size() && s.sigma(keep) > threshold)
        ++keep;
    if (keep == 0)
        return Matrix::Zero(x.rows(), x.cols());
    const RealVector shrunk = (s.sigma.head(keep).array() - threshold).matrix();
    return s.u.leftCols(keep) * shrunk.asDiagonal() * s.v.leftCols(keep).adjoint();
}

/// Projection of the Hermitian part of x onto the PSD cone.
inline Matrix project_psd(const Matrix& x)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hermitian_part(x));
    const RealVector clipped = eig.eigenvalues().cwiseMax(0.0);
    return eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().adjoint();
}

inline double min_hermitian_eigenvalue(const Matrix& x)
{
    return Eigen::SelfAdjointEigenSolver<Matrix>(hermitian_part(x), Eigen::EigenvaluesOnly)
        .eigenvalues()(0);
}

/// Orthonormal basis of the orthogonal complement of range(w), w an isometry.
inline Matrix orthogonal_complement(const Matrix& w)
{
    const Index n = w.rows();
    const Index r = w.cols();
    if (r == 0)
        return Matrix::Identity(n, n);
    Eigen::HouseholderQR<Matrix> qr(w);
    const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    return q.rightCols(n - r);
}

/// Haar-random n x r isometry.
inline Matrix random_isometry(Index n, Index r, Philox& rng, ScalarField field)
{
    const Matrix g = gaussian_matrix(n, r, rng, field);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, r);
    // Fix column phases so the distribution is exactly Haar.
    const Matrix rfac = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    for (Index j = 0; j < r; ++j) {
        const Scalar d = rfac(j, j);
        if (std::abs(d) > 0.0)
            q.col(j) *= d / std::abs(d);
    }
    return q;
}

/// Unitary DFT matrix F_{jk} = exp(-2 pi i jk / n) / sqrt(n).
inline Matrix unitary_dft(Index n)
{
    Matrix f(n, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k) {
            const double angle = -2.0 * M_PI * static_cast<double>((j * k) % n) / static_cast<double>(n);
            f(j, k) = std::polar(scale, angle);
        }
    return f;
}

}  // namespace lowrank
