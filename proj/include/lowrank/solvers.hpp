#pragma once

// Convex recovery programs:
//   nucnorm_min           min ||X||_*           s.t. ||A(X) - y||_2 <= tau
//   demixing_nucnorm_min  min sum_i ||X_i||_*   s.t. ||sum_i A_i(X_i) - y||_2 <= tau
//   psd_l1_fit            min sum_i |<A_i, X> - y_i|  s.t. X PSD
//
// The first two run Douglas-Rachford splitting between block-wise singular
// value thresholding and the exact projection onto the residual ball. The
// third runs ADMM between an l1 prox, a PSD projection and a linear solve.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "lowrank/linalg.hpp"
#include "lowrank/operators.hpp"

namespace lowrank {

struct SolverOptions
{
    Index max_iters = 5000;
    double abs_tol = 1e-8;
    double rel_tol = 1e-6;
    double penalty = 1.0;
    bool adaptive_penalty = true;  // residual balancing; rescales the DR state on every change
    int verbosity = 0;             // > 0: progress line to std::clog every `verbosity` iterations
    std::ostream* trace = nullptr;

    void validate() const
    {
        require(max_iters >= 1, "SolverOptions: max_iters must be >= 1");
        require(abs_tol > 0.0 && rel_tol > 0.0, "SolverOptions: tolerances must be positive");
        require(penalty > 0.0, "SolverOptions: penalty must be positive");
    }
};

enum class SolverStatus { converged, max_iters, infeasible };

inline std::string to_string(SolverStatus s)
{
    switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::max_iters: return "max_iters";
    case SolverStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

struct RecoveryResult
{
    Matrix x_hat;
    std::vector<Matrix> blocks;  // diagonal blocks (one unless demixing)
    double objective = 0.0;
    double residual = 0.0;
    Index iterations = 0;
    SolverStatus status = SolverStatus::max_iters;
    double min_residual = 0.0;  // smallest achievable ||A(X) - y||_2
};

// ---------------------------------------------------------------------------
// Projection onto {x : ||M x - y||_2 <= tau}

/// M = U S V^* restricted to its range. The projection of v is
/// x(lambda) = (I + lambda M^*M)^{-1} (v + lambda M^* y), with lambda >= 0
/// chosen so that the residual equals tau, or lambda = infinity (affine
/// least-squares projection) when tau is below the smallest residual.
class ResidualBall
{
public:
    ResidualBall(const MeasurementOperator& op, const Vector& y, double tau) : tau_(tau), d_(op.design_dim())
    {
        require(tau >= 0.0, "residual ball: tau must be nonnegative");
        require(y.size() == op.m(), "residual ball: y has the wrong length");
        if (const auto* p = std::get_if<EntrySamplePayload>(&op.payload()))
            init_sampling(op, *p, y);
        else
            init_dense(op.materialize(), y);
    }

    double tau() const { return tau_; }
    double min_residual() const { return std::sqrt(perp2_); }
    bool feasible(double slack = 0.0) const { return std::sqrt(perp2_) <= tau_ + slack; }

    Vector project(const Vector& v) const
    {
        const Vector a = coeffs(v).cwiseProduct(s_.cast<Scalar>()) - yp_;
        const double inside = a.squaredNorm() + perp2_;
        if (inside <= tau_ * tau_)
            return v;
        RealVector shrink(s_.size());
        if (tau_ * tau_ <= perp2_) {
            shrink = s_.cwiseInverse();
        } else {
            const double lambda = solve_multiplier(a);
            shrink = (lambda * s_.array() / (1.0 + lambda * s_.array().square())).matrix();
        }
        Vector out = v;
        add_back(out, -a.cwiseProduct(shrink.cast<Scalar>()));
        return out;
    }

private:
    Vector coeffs(const Vector& v) const
    {
        if (!diagonal_)
            return v_.adjoint() * v;
        Vector c(static_cast<Index>(coords_.size()));
        for (std::size_t j = 0; j < coords_.size(); ++j)
            c(static_cast<Index>(j)) = v(coords_[j]);
        return c;
    }

    void add_back(Vector& out, const Vector& c) const
    {
        if (!diagonal_) {
            out += v_ * c;
            return;
        }
        for (std::size_t j = 0; j < coords_.size(); ++j)
            out(coords_[j]) += c(static_cast<Index>(j));
    }

    // phi(lambda) = sum |a_j|^2 / (1 + lambda s_j^2)^2 + perp2, decreasing in lambda
    double solve_multiplier(const Vector& a) const
    {
        const RealVector a2 = a.cwiseAbs2();
        const RealVector s2 = s_.cwiseAbs2();
        auto phi = [&](double lambda) {
            return (a2.array() / (1.0 + lambda * s2.array()).square()).sum() + perp2_;
        };
        const double target = tau_ * tau_;
        double lo = 0.0;
        double hi = 1.0 / s2.maxCoeff();
        while (phi(hi) > target && hi < 1e300)
            hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (phi(mid) > target ? lo : hi) = mid;
        }
        return hi;
    }

    void init_dense(const Matrix& m, const Vector& y)
    {
        diagonal_ = false;
        const Svd svd = thin_svd(m);
        Index k = 0;
        if (svd.sigma.size() && svd.sigma(0) > 0.0)
            k = (svd.sigma.array() > 1e-12 * svd.sigma(0)).count();
        s_ = svd.sigma.head(k);
        v_ = svd.v.leftCols(k);
        yp_ = svd.u.leftCols(k).adjoint() * y;
        perp2_ = (y - svd.u.leftCols(k) * yp_).squaredNorm();
    }

    // M^*M is diagonal: coordinate j seen c_j times with scale s has singular
    // value s sqrt(c_j); the projected data is sqrt(c_j) * mean of its samples.
    void init_sampling(const MeasurementOperator& op, const EntrySamplePayload& p, const Vector& y)
    {
        diagonal_ = true;
        const double scale = p.scale * op.scale();
        std::vector<Index> count(static_cast<std::size_t>(d_), 0);
        Vector sum = Vector::Zero(d_);
        for (std::size_t i = 0; i < p.indices.size(); ++i) {
            const Index j = p.indices[i].first + p.indices[i].second * op.n1();
            ++count[static_cast<std::size_t>(j)];
            sum(j) += y(static_cast<Index>(i));
        }
        for (Index j = 0; j < d_; ++j)
            if (count[static_cast<std::size_t>(j)] > 0)
                coords_.push_back(j);
        const Index k = static_cast<Index>(coords_.size());
        s_.resize(k);
        yp_.resize(k);
        Vector mean = Vector::Zero(d_);
        for (Index c = 0; c < k; ++c) {
            const Index j = coords_[static_cast<std::size_t>(c)];
            const double cnt = static_cast<double>(count[static_cast<std::size_t>(j)]);
            mean(j) = sum(j) / cnt;
            s_(c) = std::abs(scale) * std::sqrt(cnt);
            yp_(c) = (scale < 0 ? -1.0 : 1.0) * std::sqrt(cnt) * mean(j);
        }
        perp2_ = 0.0;
        for (std::size_t i = 0; i < p.indices.size(); ++i) {
            const Index j = p.indices[i].first + p.indices[i].second * op.n1();
            perp2_ += std::norm(y(static_cast<Index>(i)) - mean(j));
        }
    }

    double tau_;
    Index d_;
    bool diagonal_ = false;
    std::vector<Index> coords_;
    Matrix v_;
    RealVector s_;
    Vector yp_;
    double perp2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Nuclear-norm minimization over a residual ball

namespace detail {

inline Vector block_svt(const MeasurementOperator& op, const Vector& z, double threshold)
{
    std::vector<Matrix> parts = op.blocks(z);
    for (auto& b : parts)
        b = svt(b, threshold);
    return op.from_blocks(parts);
}

inline double block_nuclear_norm(const MeasurementOperator& op, const Vector& x)
{
    double total = 0.0;
    for (const auto& b : op.blocks(x))
        total += nuclear_norm(b);
    return total;
}

inline void trace_header(std::ostream* out)
{
    if (out)
        *out << "iteration,objective,residual,primal_residual,dual_residual,penalty\n";
}

inline void trace_row(std::ostream* out, Index it, double obj, double res, double pr, double dr, double pen)
{
    if (out)
        *out << it << ',' << obj << ',' << res << ',' << pr << ',' << dr << ',' << pen << '\n';
}

}  // namespace detail

/// Douglas-Rachford on f = sum of block nuclear norms, g = indicator of the
/// residual ball. Data is normalized to ||y|| = 1 internally; the returned
/// point is the ball-feasible iterate.
inline RecoveryResult nucnorm_min(const MeasurementOperator& op, const Vector& y, double tau,
                                  const SolverOptions& opts = {})
{
    opts.validate();
    require(tau >= 0.0, "nucnorm_min: tau must be nonnegative");
    require(y.size() == op.m(), "nucnorm_min: y has the wrong length");

    RecoveryResult result;
    const double ynorm = y.norm();
    const Index d = op.design_dim();
    if (ynorm == 0.0) {
        result.x_hat = Matrix::Zero(op.n1(), op.n2());
        result.blocks = op.blocks(Vector::Zero(d));
        result.status = SolverStatus::converged;
        return result;
    }
    if (tau >= ynorm) {  // X = 0 is feasible and minimal
        result.x_hat = Matrix::Zero(op.n1(), op.n2());
        result.blocks = op.blocks(Vector::Zero(d));
        result.residual = ynorm;
        result.status = SolverStatus::converged;
        return result;
    }

    const ResidualBall ball(op, y / ynorm, tau / ynorm);
    const double feas_slack = ball.tau() * opts.rel_tol + opts.abs_tol;
    const bool infeasible = !ball.feasible(feas_slack);

    Index min_dim = op.n1();
    for (const auto& [r, c] : op.block_shapes())
        min_dim = std::min(min_dim, std::min(r, c));
    const Vector anchor = ball.project(Vector::Zero(d));
    double gamma = opts.penalty * std::max(anchor.norm(), 1e-12) / std::sqrt(static_cast<double>(min_dim));

    detail::trace_header(opts.trace);
    Vector z = anchor;
    Vector x = z;
    Vector w = z;
    const double sqrt_d = std::sqrt(static_cast<double>(d));
    Index it = 0;
    bool done = false;
    for (it = 1; it <= opts.max_iters; ++it) {
        const Vector x_prev = x;
        x = detail::block_svt(op, z, gamma);
        w = ball.project(2.0 * x - z);
        const Vector step = w - x;
        z += step;
        const double primal = step.norm();
        const double dual = (x - x_prev).norm();
        const double scale = std::max({x.norm(), w.norm(), 1e-300});
        if (opts.verbosity > 0 && it % opts.verbosity == 0)
            std::clog << "nucnorm_min it " << it << " primal " << primal << " dual " << dual << " gamma " << gamma
                      << '\n';
        if (opts.trace) {
            const double res = (op.apply_design(w) - y / ynorm).norm() * ynorm;
            detail::trace_row(opts.trace, it, detail::block_nuclear_norm(op, w) * ynorm, res, primal * ynorm,
                              dual * ynorm, gamma);
        }
        if (primal <= opts.abs_tol * sqrt_d + opts.rel_tol * scale
            && dual <= opts.abs_tol * sqrt_d + opts.rel_tol * scale) {
            done = true;
            break;
        }
        if (opts.adaptive_penalty && it % 10 == 0 && primal > 0.0 && dual > 0.0) {
            const double ratio = primal / dual;
            double factor = 1.0;
            if (ratio > 10.0)
                factor = 0.5;
            else if (ratio < 0.1)
                factor = 2.0;
            if (factor != 1.0) {
                z = x + factor * (z - x);
                gamma *= factor;
            }
        }
    }
    result.iterations = std::min(it, opts.max_iters);
    const Vector xh = w * ynorm;
    result.blocks = op.blocks(xh);
    result.x_hat = op.from_design(xh);
    result.objective = detail::block_nuclear_norm(op, xh);
    result.residual = (op.apply_design(xh) - y).norm();
    result.min_residual = ball.min_residual() * ynorm;
    if (infeasible)
        result.status = SolverStatus::infeasible;
    else if (done && result.residual <= (ball.tau() + feas_slack) * ynorm)
        result.status = SolverStatus::converged;
    else
        result.status = SolverStatus::max_iters;
    return result;
}

inline RecoveryResult demixing_nucnorm_min(const MeasurementOperator& op, const Vector& y, double tau,
                                           const SolverOptions& opts = {})
{
    require(op.kind() == EnsembleKind::demixing || op.kind() == EnsembleKind::blind_deconv,
            "demixing_nucnorm_min: needs a demixing (or blind-deconvolution) operator");
    return nucnorm_min(op, y, tau, opts);
}

// ---------------------------------------------------------------------------
// PSD l1 fit

/// ADMM for min ||A(X) - y||_1 over Hermitian PSD X, split as
/// u = A(X) - y and Z = X. A is rescaled to unit operator norm and y to unit
/// mean magnitude internally.
inline RecoveryResult psd_l1_fit(const MeasurementOperator& op, const RealVector& y, const SolverOptions& opts = {})
{
    opts.validate();
    require(op.n1() == op.n2(), "psd_l1_fit: operator must act on square matrices");
    require(y.size() == op.m(), "psd_l1_fit: y has the wrong length");
    const Index n = op.n1();
    const Index m = op.m();
    RecoveryResult result;
    result.x_hat = Matrix::Zero(n, n);
    result.blocks = {result.x_hat};

    const double ymean = y.cwiseAbs().mean();
    if (ymean == 0.0) {
        result.status = SolverStatus::converged;
        return result;
    }
    const Matrix mat = op.materialize();
    const double opnorm = spectral_norm(mat);
    require(opnorm > 0.0, "psd_l1_fit: zero operator");
    const Matrix a = mat / opnorm;  // unit operator norm
    const Vector yt = (y / (ymean * opnorm)).cast<Scalar>();
    const double rho = opts.penalty;

    // (A^*A + I) x = rhs, solved once by Cholesky
    const Matrix gram = a.adjoint() * a + Matrix::Identity(n * n, n * n);
    const Eigen::LLT<Matrix> llt(gram);

    auto apply = [&](const Matrix& x) { return Vector((a * vec(x)).real().cast<Scalar>()); };
    auto soft = [](const Vector& v, double t) {
        Vector out(v.size());
        for (Index i = 0; i < v.size(); ++i) {
            const double r = v(i).real();
            out(i) = std::copysign(std::max(std::abs(r) - t, 0.0), r);
        }
        return out;
    };

    Matrix x = Matrix::Zero(n, n);
    Matrix zm = Matrix::Zero(n, n);
    Vector u = -yt;
    Vector w1 = Vector::Zero(m);
    Matrix w2 = Matrix::Zero(n, n);
    detail::trace_header(opts.trace);
    const double sqrt_mn = std::sqrt(static_cast<double>(m + n * n));
    Index it = 0;
    bool done = false;
    for (it = 1; it <= opts.max_iters; ++it) {
        const Vector rhs = a.adjoint() * (yt + u - w1) + vec(zm - w2);
        x = hermitian_part(unvec(llt.solve(rhs), n, n));
        const Vector ax = apply(x);
        const Vector u_prev = u;
        u = soft(ax - yt + w1, 1.0 / rho);
        const Matrix z_prev = zm;
        zm = project_psd(x + w2);
        const Vector r1 = ax - yt - u;
        const Matrix r2 = x - zm;
        w1 += r1;
        w2 += r2;
        const double primal = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
        const Vector du = a.adjoint() * (u - u_prev);
        const double dual = rho * std::sqrt(du.squaredNorm() + (zm - z_prev).squaredNorm());
        const double pscale = std::max({ax.norm(), u.norm() + yt.norm(), x.norm(), zm.norm()});
        const double dscale = rho * std::sqrt(w1.squaredNorm() + w2.squaredNorm());
        if (opts.trace)
            detail::trace_row(opts.trace, it, (apply(zm) - yt).cwiseAbs().sum() * ymean * opnorm,
                              (apply(zm) - yt).norm() * ymean * opnorm, primal, dual, rho);
        if (primal <= opts.abs_tol * sqrt_mn + opts.rel_tol * pscale
            && dual <= opts.abs_tol * sqrt_mn + opts.rel_tol * dscale) {
            done = true;
            break;
        }
    }
    result.iterations = std::min(it, opts.max_iters);
    result.x_hat = zm * ymean;
    result.blocks = {result.x_hat};
    const Vector fit = op.apply(result.x_hat).real().cast<Scalar>() - y.cast<Scalar>();
    result.objective = fit.cwiseAbs().sum();
    result.residual = fit.norm();
    result.status = done ? SolverStatus::converged : SolverStatus::max_iters;
    return result;
}

// ---------------------------------------------------------------------------
// Signal extraction and ambiguity-aware errors

/// Top singular pair of X scaled by sqrt(sigma_1) on each side; the global
/// phase makes the largest-magnitude entry of the left factor real positive.
struct RankOneFactors
{
    Vector left;
    Vector right;
};

inline RankOneFactors extract_rank_one(const Matrix& x)
{
    const Svd s = thin_svd(x);
    if (s.sigma.size() == 0 || s.sigma(0) == 0.0)
        return {Vector::Zero(x.rows()), Vector::Zero(x.cols())};
    Vector left = std::sqrt(s.sigma(0)) * s.u.col(0);
    Vector right = std::sqrt(s.sigma(0)) * s.v.col(0);
    Index k = 0;
    left.cwiseAbs().maxCoeff(&k);
    const Scalar phase = std::conj(left(k)) / std::abs(left(k));
    left *= phase;
    right *= phase;  // keeps left * right^* unchanged
    return {left, right};
}

/// Leading eigenvector of the Hermitian part scaled by sqrt(max(lambda, 0)).
inline Vector extract_signal(const Matrix& x)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hermitian_part(x));
    const Index n = x.rows();
    const double lambda = std::max(eig.eigenvalues()(n - 1), 0.0);
    Vector v = std::sqrt(lambda) * eig.eigenvectors().col(n - 1);
    Index k = 0;
    v.cwiseAbs().maxCoeff(&k);
    if (std::abs(v(k)) > 0.0)
        v *= std::conj(v(k)) / std::abs(v(k));
    return v;
}

/// min over unit-modulus phi of ||xhat - phi x0||_2.
inline double phase_aligned_error(const Vector& xhat, const Vector& x0)
{
    require(xhat.size() == x0.size(), "phase_aligned_error: size mismatch");
    const double sq = xhat.squaredNorm() + x0.squaredNorm() - 2.0 * std::abs(x0.dot(xhat));
    return std::sqrt(std::max(sq, 0.0));
}

inline double relative_error(const Matrix& xhat, const Matrix& x0)
{
    require_same_shape(xhat, x0, "relative_error");
    const double n0 = x0.norm();
    return n0 > 0.0 ? (xhat - x0).norm() / n0 : xhat.norm();
}

/// sqrt(sum_i ||Xhat_i - X0_i||_F^2), optionally divided by the truth's norm.
inline double block_error(const std::vector<Matrix>& xhat, const std::vector<Matrix>& x0, bool relative = false)
{
    require(xhat.size() == x0.size(), "block_error: block count mismatch");
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < xhat.size(); ++i) {
        require_same_shape(xhat[i], x0[i], "block_error");
        err += (xhat[i] - x0[i]).squaredNorm();
        ref += x0[i].squaredNorm();
    }
    return relative && ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err);
}

}  // namespace lowrank
