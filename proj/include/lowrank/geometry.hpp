#pragma once

// Geometry of the nuclear norm around a low-rank anchor X = U Sigma V^*:
// tangent spaces, coherence, descent cones, Monte Carlo width and
// small-ball estimators, and the dilation / pinching / sign-matrix toolkit.
//
// Estimators of population quantities are one-sided and say so:
//   - min_conic_singular_value_estimate is an UPPER bound on lambda_min(A, D)
//     (a minimum over sampled directions, not over the whole cone);
//   - gaussian_width_estimate is a LOWER bound on the Gaussian width
//     (each supremum is replaced by a maximum over candidates).

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lowrank/linalg.hpp"
#include "lowrank/operators.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

inline constexpr double kSingularCut = 1e-12;
inline constexpr double kMembershipTol = 1e-8;

struct SvdFactors
{
    Matrix u;
    RealVector sigma;
    Matrix v;

    Index rank() const { return u.cols(); }
    Index rows() const { return u.rows(); }
    Index cols() const { return v.rows(); }

    /// U V^*, the sign matrix of the anchor.
    Matrix sign() const { return u * v.adjoint(); }

    Matrix reconstruct() const { return u * sigma.asDiagonal() * v.adjoint(); }

    /// Compact SVD, truncated at sigma > 1e-12 * sigma_max.
    static SvdFactors from_matrix(const Matrix& x)
    {
        const Svd s = thin_svd(x);
        Index r = 0;
        if (s.sigma.size() && s.sigma(0) > 0.0)
            r = (s.sigma.array() > kSingularCut * s.sigma(0)).count();
        return {s.u.leftCols(r), s.sigma.head(r), s.v.leftCols(r)};
    }

    /// Anchor from isometries alone (unit singular values).
    static SvdFactors from_isometries(Matrix u, Matrix v)
    {
        require(u.cols() == v.cols(), "SvdFactors: U and V need the same number of columns");
        const Index r = u.cols();
        return {std::move(u), RealVector::Ones(r), std::move(v)};
    }
};

class TangentSpace
{
public:
    explicit TangentSpace(const SvdFactors& f)
        : u_(f.u), v_(f.v), p_(f.u * f.u.adjoint()), q_(f.v * f.v.adjoint())
    {
    }

    const Matrix& u() const { return u_; }
    const Matrix& v() const { return v_; }
    const Matrix& p() const { return p_; }
    const Matrix& q() const { return q_; }
    Index rank() const { return u_.cols(); }
    Index rows() const { return u_.rows(); }
    Index cols() const { return v_.rows(); }
    Index dimension() const { return rank() * (rows() + cols() - rank()); }

    /// P Z + Z Q - P Z Q
    Matrix project(const Matrix& z) const
    {
        check(z);
        const Matrix pz = p_ * z;
        return pz + z * q_ - pz * q_;
    }

    /// P^perp Z Q^perp
    Matrix complement(const Matrix& z) const
    {
        check(z);
        const Matrix left = z - p_ * z;
        return left - left * q_;
    }

    /// Orthonormal basis of T: {u_a e_k^T} and {w_b v_j^*} with w_b spanning range(U)^perp.
    std::vector<Matrix> basis() const
    {
        std::vector<Matrix> out;
        const Index n1 = rows();
        const Index n2 = cols();
        for (Index a = 0; a < rank(); ++a)
            for (Index k = 0; k < n2; ++k) {
                Matrix e = Matrix::Zero(n1, n2);
                e.col(k) = u_.col(a);
                out.push_back(std::move(e));
            }
        const Matrix uperp = orthogonal_complement(u_);
        for (Index b = 0; b < uperp.cols(); ++b)
            for (Index j = 0; j < rank(); ++j)
                out.push_back(uperp.col(b) * v_.col(j).adjoint());
        return out;
    }

private:
    void check(const Matrix& z) const
    {
        if (z.rows() != rows() || z.cols() != cols())
            throw std::invalid_argument("tangent space: shape mismatch");
    }

    Matrix u_;
    Matrix v_;
    Matrix p_;
    Matrix q_;
};

// ---------------------------------------------------------------------------
// Coherence and incoherence

/// mu(W) = sqrt(n / r) max_i ||W^* e_i||_2 for an n x r isometry W.
inline double coherence(const Matrix& w)
{
    const Index n = w.rows();
    const Index r = w.cols();
    require(r >= 1 && n >= r, "coherence: need an n x r isometry with 1 <= r <= n");
    require((w.adjoint() * w - Matrix::Identity(r, r)).cwiseAbs().maxCoeff() <= 1e-8,
            "coherence: input is not an isometry");
    const double max_row = w.rowwise().norm().maxCoeff();
    return std::sqrt(static_cast<double>(n) / static_cast<double>(r)) * max_row;
}

/// Smallest mu with h in H_mu: sqrt(L) max_l |<b_l, h>| / ||h||_2.
/// Row l of `b_rows` is b_l^T.
inline double blind_deconv_incoherence(const Vector& h, const Matrix& b_rows)
{
    const double hn = h.norm();
    require(hn > 0.0, "blind_deconv_incoherence: h must be nonzero");
    require(b_rows.cols() == h.size(), "blind_deconv_incoherence: dimension mismatch");
    const double max_inner = (b_rows.conjugate() * h).cwiseAbs().maxCoeff();
    return std::sqrt(static_cast<double>(b_rows.rows())) * max_inner / hn;
}

/// ||x||_inf / ||x||_2
inline double signal_incoherence(const Vector& x)
{
    const double n2 = x.norm();
    require(n2 > 0.0, "signal_incoherence: zero vector");
    return x.cwiseAbs().maxCoeff() / n2;
}

// ---------------------------------------------------------------------------
// Descent cone of the nuclear norm

struct DescentTest
{
    bool is_member = false;
    double derivative = 0.0;
};

/// One-sided directional derivative of ||.||_* at the anchor along Z:
/// Re<UV^*, Z> + ||P_T^perp Z||_*. Members satisfy derivative <= tol.
inline DescentTest descent_direction_test(const SvdFactors& anchor, const Matrix& z, double tol = kMembershipTol)
{
    const TangentSpace t(anchor);
    const double d = inner(anchor.sign(), z).real() + nuclear_norm(t.complement(z));
    return {d <= tol, d};
}

struct ConeSample
{
    Matrix direction;
    SvdFactors anchor;
    double directional_derivative = 0.0;
};

namespace detail {

inline ScalarField anchor_field(const SvdFactors& anchor)
{
    return is_real(anchor.u) && is_real(anchor.v) ? ScalarField::real : ScalarField::complex;
}

}  // namespace detail

/// Draw G Gaussian, split G = G_T + G_perp, resample until s = -Re<UV^*, G_T> > 0,
/// then shrink G_perp so that ||G_perp||_* <= s. The result has nonpositive
/// directional derivative, i.e. lies in the closed descent cone.
inline ConeSample sample_descent_direction(const SvdFactors& anchor, Philox& rng, Index max_retries = 1000)
{
    const TangentSpace t(anchor);
    const Matrix sign = anchor.sign();
    const ScalarField field = detail::anchor_field(anchor);
    for (Index attempt = 0; attempt < max_retries; ++attempt) {
        const Matrix g = gaussian_matrix(anchor.rows(), anchor.cols(), rng, field);
        const Matrix gt = t.project(g);
        Matrix gperp = g - gt;
        const double s = -inner(sign, gt).real();
        if (!(s > 0.0))
            continue;
        const double perp_nuc = nuclear_norm(gperp);
        if (perp_nuc > s)
            gperp *= s / perp_nuc;
        Matrix z = gt + gperp;
        const double zn = z.norm();
        if (zn == 0.0)
            continue;
        z /= zn;
        const DescentTest test = descent_direction_test(anchor, z);
        if (!test.is_member)
            continue;
        return {std::move(z), anchor, test.derivative};
    }
    throw std::runtime_error("sample_descent_direction: no admissible draw within retry budget");
}

/// min over sampled unit cone directions of ||A(Z)||_2. An UPPER bound on the
/// minimum conic singular value.
inline double min_conic_singular_value_estimate(const MeasurementOperator& op, const SvdFactors& anchor,
                                                Index n_samples, Philox& rng)
{
    require(n_samples >= 1, "min_conic_singular_value_estimate: need n_samples >= 1");
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n_samples; ++i) {
        const ConeSample s = sample_descent_direction(anchor, rng);
        best = std::min(best, op.apply(s.direction).norm());
    }
    return best;
}

/// Lower bound on sup_{Z in E} Re<G, Z> for a fixed Gaussian G. The callable
/// receives G, the number of inner candidates to try, and an RNG.
using WidthSupremum = std::function<double(const Matrix& g, Index n_inner, Philox& rng)>;

/// The whole Frobenius unit sphere: sup = ||G||_F.
inline WidthSupremum frobenius_sphere_set()
{
    return [](const Matrix& g, Index, Philox&) { return g.norm(); };
}

/// A single unit matrix Z0.
inline WidthSupremum singleton_set(Matrix z0)
{
    return [z0 = std::move(z0)](const Matrix& g, Index, Philox&) { return inner(z0, g).real(); };
}

/// Closed-form feasible candidate built from G itself: push G along -UV^*
/// until the directional derivative is nonpositive.
inline Matrix descent_candidate_from(const SvdFactors& anchor, const Matrix& g)
{
    const TangentSpace t(anchor);
    const Matrix sign = anchor.sign();
    const Matrix gt = t.project(g);
    const Matrix gperp = g - gt;
    const double r = static_cast<double>(anchor.rank());
    const double excess = inner(sign, gt).real() + nuclear_norm(gperp);
    const double shift = std::max(0.0, excess) / r;
    return gt - shift * sign + gperp;
}

/// Unit-norm descent directions at the given anchors (the union of their cones).
/// Candidates: the closed-form candidate at each anchor plus n_inner sampled
/// directions spread over the anchors.
inline WidthSupremum descent_cone_set(std::vector<SvdFactors> anchors)
{
    require(!anchors.empty(), "descent_cone_set: need at least one anchor");
    return [anchors = std::move(anchors)](const Matrix& g, Index n_inner, Philox& rng) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& a : anchors) {
            Matrix c = descent_candidate_from(a, g);
            const double cn = c.norm();
            if (cn > 0.0 && descent_direction_test(a, c / cn).is_member)
                best = std::max(best, inner(c / cn, g).real());
        }
        for (Index i = 0; i < n_inner; ++i) {
            const auto& a = anchors[static_cast<std::size_t>(i) % anchors.size()];
            const ConeSample s = sample_descent_direction(a, rng);
            best = std::max(best, inner(s.direction, g).real());
        }
        return best;
    };
}

/// Monte Carlo mean of sup_{Z in E} <G, Z> with G having i.i.d. standard
/// normal entries. A LOWER bound on the Gaussian width of E.
inline double gaussian_width_estimate(const WidthSupremum& set, Index n1, Index n2, Index n_outer, Index n_inner,
                                      Philox& rng, ScalarField field = ScalarField::real)
{
    require(n1 >= 1 && n2 >= 1 && n_outer >= 1 && n_inner >= 0, "gaussian_width_estimate: bad counts");
    std::vector<double> sups;
    sups.reserve(static_cast<std::size_t>(n_outer));
    for (Index i = 0; i < n_outer; ++i) {
        Philox draw = rng.split(static_cast<std::uint64_t>(i));
        const Matrix g = gaussian_matrix(n1, n2, draw, field);
        sups.push_back(set(g, n_inner, draw));
    }
    std::function<double(std::size_t, std::size_t)> pairwise = [&](std::size_t lo, std::size_t hi) -> double {
        if (hi - lo <= 8) {
            double s = 0.0;
            for (std::size_t k = lo; k < hi; ++k)
                s += sups[k];
            return s;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        return pairwise(lo, mid) + pairwise(mid, hi);
    };
    return pairwise(0, sups.size()) / static_cast<double>(sups.size());
}

// ---------------------------------------------------------------------------
// Mendelson small-ball quantities

struct SmallBallEstimates
{
    double q_xi = 0.0;  // min over sampled Y of the empirical Pr[|<A, Y>| >= xi]
    double w_m = 0.0;   // Monte Carlo mean of max over sampled Y of Re<Y, H>
    double xi = 0.0;
    Index n_samples = 0;
};

struct SmallBallConfig
{
    double xi = 0.5;
    Index n_directions = 16;  // sampled elements Y of E
    Index n_samples = 1000;   // measurement draws per Y (tail probability)
    Index m = 100;            // number of measurements in H
    Index n_width = 100;      // draws of the Rademacher sum H
};

using MatrixSampler = std::function<Matrix(Philox&)>;

/// Sampled surrogates of Q_xi(E; A) and W_m(E; A), with
/// H = m^{-1/2} sum_i eps_i A_i for a Rademacher sequence eps.
inline SmallBallEstimates small_ball_estimates(const MatrixSampler& measurement, const MatrixSampler& element,
                                               const SmallBallConfig& cfg, Philox& rng)
{
    require(cfg.xi > 0.0, "small_ball_estimates: xi must be positive");
    require(cfg.n_directions >= 1 && cfg.n_samples >= 1 && cfg.m >= 1 && cfg.n_width >= 1,
            "small_ball_estimates: counts must be positive");
    std::vector<Matrix> ys;
    for (Index j = 0; j < cfg.n_directions; ++j)
        ys.push_back(element(rng));

    SmallBallEstimates out;
    out.xi = cfg.xi;
    out.n_samples = cfg.n_samples;
    out.q_xi = 1.0;
    for (const auto& y : ys) {
        Index hits = 0;
        for (Index i = 0; i < cfg.n_samples; ++i)
            if (std::abs(inner(measurement(rng), y)) >= cfg.xi)
                ++hits;
        out.q_xi = std::min(out.q_xi, static_cast<double>(hits) / static_cast<double>(cfg.n_samples));
    }

    double total = 0.0;
    const double norm = 1.0 / std::sqrt(static_cast<double>(cfg.m));
    for (Index w = 0; w < cfg.n_width; ++w) {
        Matrix h = Matrix::Zero(ys.front().rows(), ys.front().cols());
        for (Index i = 0; i < cfg.m; ++i)
            h += rng.rademacher() * measurement(rng);
        h *= norm;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& y : ys)
            best = std::max(best, inner(y, h).real());
        total += best;
    }
    out.w_m = total / static_cast<double>(cfg.n_width);
    return out;
}

// ---------------------------------------------------------------------------
// Dilation, pinching, sign matrix, effective rank

/// [[0, Z], [Z^*, 0]]
inline Matrix dilation(const Matrix& z)
{
    const Index n1 = z.rows();
    const Index n2 = z.cols();
    Matrix out = Matrix::Zero(n1 + n2, n1 + n2);
    out.topRightCorner(n1, n2) = z;
    out.bottomLeftCorner(n2, n1) = z.adjoint();
    return out;
}

struct PinchSides
{
    double lhs = 0.0;  // ||X||_*
    double rhs = 0.0;  // ||P X Q||_* + ||P^perp X Q^perp||_*
};

namespace detail {

inline void require_resolution(const Matrix& p, const Matrix& pperp, const char* name)
{
    const Index n = p.rows();
    const double tol = 1e-8;
    require(p.cols() == n && pperp.rows() == n && pperp.cols() == n,
            std::string("pinch_check: ") + name + " projectors must be square and compatible");
    require((p + pperp - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() <= tol,
            std::string("pinch_check: ") + name + " is not a resolution of the identity");
    require((p * p - p).cwiseAbs().maxCoeff() <= tol && (p - p.adjoint()).cwiseAbs().maxCoeff() <= tol,
            std::string("pinch_check: ") + name + " is not an orthogonal projector");
}

}  // namespace detail

inline PinchSides pinch_check(const Matrix& x, const Matrix& p, const Matrix& q, const Matrix& pperp,
                              const Matrix& qperp)
{
    require(p.rows() == x.rows() && q.rows() == x.cols(), "pinch_check: projector dimensions do not match X");
    detail::require_resolution(p, pperp, "row");
    detail::require_resolution(q, qperp, "column");
    return {nuclear_norm(x), nuclear_norm(p * x * q) + nuclear_norm(pperp * x * qperp)};
}

/// U V^* from the compact SVD of X.
inline Matrix sign_matrix(const Matrix& x)
{
    const SvdFactors f = SvdFactors::from_matrix(x);
    require(f.rank() > 0, "sign_matrix: zero matrix has no sign");
    return f.sign();
}

struct EffectiveRank
{
    double ratio = 0.0;  // ||Z||_* / ||Z||_F
    double bound = 0.0;  // (1 + sqrt 2) sqrt r
};

inline EffectiveRank effective_rank_check(const SvdFactors& anchor, const Matrix& z)
{
    require(z.norm() > 0.0, "effective_rank_check: zero direction");
    require(descent_direction_test(anchor, z).is_member, "effective_rank_check: Z is not in the descent cone");
    return {nuclear_norm(z) / z.norm(),
            (1.0 + std::numbers::sqrt2) * std::sqrt(static_cast<double>(anchor.rank()))};
}

// ---------------------------------------------------------------------------
// CSV rows for estimator output

enum class BoundSide { estimate, upper, lower };

inline std::string to_string(BoundSide s)
{
    switch (s) {
    case BoundSide::estimate: return "estimate";
    case BoundSide::upper: return "upper_bound";
    case BoundSide::lower: return "lower_bound";
    }
    return "estimate";
}

struct EstimateRow
{
    std::string estimator;
    std::string parameters;  // "key=value;key=value"
    double value = 0.0;
    Index n_samples = 0;
    std::uint64_t seed = 0;
    BoundSide side = BoundSide::estimate;
};

inline std::string csv_escape(const std::string& field)
{
    if (field.find_first_of(",\"\r\n") == std::string::npos)
        return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

inline void write_estimates_csv(const std::vector<EstimateRow>& rows, std::ostream& out)
{
    out << "estimator,parameters,value,n_samples,seed,bound\n";
    const auto old = out.precision(17);
    for (const auto& r : rows)
        out << csv_escape(r.estimator) << ',' << csv_escape(r.parameters) << ',' << r.value << ',' << r.n_samples
            << ',' << r.seed << ',' << to_string(r.side) << '\n';
    out.precision(old);
}

}  // namespace lowrank
