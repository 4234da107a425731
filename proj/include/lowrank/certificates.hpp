#pragma once

// Dual certificates for nuclear-norm minimization at an anchor X0 = U S V^*:
// restricted isometry on the tangent space, the golfing construction of an
// approximate certificate, and its upgrade to an exact one by a single
// least-squares correction on T.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lowrank/geometry.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/operators.hpp"

namespace lowrank {

// ---------------------------------------------------------------------------
// Restricted isometry on T

enum class RipMethod { dense, lanczos };

struct RipOptions
{
    RipMethod method = RipMethod::dense;
    Index dense_cap = 4096;  // largest dim(T) handled densely
    Index max_iters = 300;   // Lanczos steps
    double tol = 1e-10;
};

struct RipReport
{
    double delta = 0.0;
    double lambda_min_T = 0.0;
    double lambda_max_T = 0.0;
    Index dimension = 0;
    RipMethod method = RipMethod::dense;
    Index iterations = 0;
    bool converged = true;
};

namespace detail {

// Orthonormal basis of T_1 x ... x T_b embedded as design vectors.
inline std::vector<Vector> tangent_design_basis(const MeasurementOperator& op, const std::vector<TangentSpace>& ts)
{
    const auto shapes = op.block_shapes();
    require(ts.size() == shapes.size(), "rip_on_tangent: one tangent space per diagonal block required");
    std::vector<Vector> out;
    for (std::size_t b = 0; b < ts.size(); ++b) {
        require(ts[b].rows() == shapes[b].first && ts[b].cols() == shapes[b].second,
                "rip_on_tangent: tangent space shape does not match the operator");
        std::vector<Matrix> parts;
        for (const auto& [r, c] : shapes)
            parts.push_back(Matrix::Zero(r, c));
        for (const Matrix& e : ts[b].basis()) {
            parts[b] = e;
            out.push_back(op.from_blocks(parts));
        }
    }
    return out;
}

inline Vector tangent_project_design(const MeasurementOperator& op, const std::vector<TangentSpace>& ts,
                                     const Vector& v)
{
    std::vector<Matrix> parts = op.blocks(v);
    for (std::size_t b = 0; b < parts.size(); ++b)
        parts[b] = ts[b].project(parts[b]);
    return op.from_blocks(parts);
}

inline RipReport finish_rip(RipReport rep)
{
    rep.lambda_min_T = std::max(rep.lambda_min_T, 0.0);
    rep.lambda_max_T = std::max(rep.lambda_max_T, rep.lambda_min_T);
    rep.delta = std::max(1.0 - rep.lambda_min_T, rep.lambda_max_T - 1.0);
    return rep;
}

}  // namespace detail

/// Extreme eigenvalues of P_T A^*A P_T restricted to T (a product of block
/// tangent spaces for demixing operators) and delta = max(1 - lmin, lmax - 1).
inline RipReport rip_on_tangent(const MeasurementOperator& op, const std::vector<TangentSpace>& ts,
                                const RipOptions& opts = {})
{
    RipReport rep;
    Index dim = 0;
    for (const auto& t : ts)
        dim += t.dimension();
    rep.dimension = dim;
    require(dim > 0, "rip_on_tangent: empty tangent space");

    if (opts.method == RipMethod::dense) {
        require(dim <= opts.dense_cap, "rip_on_tangent: dim(T) exceeds the dense cap, use Lanczos");
        const std::vector<Vector> basis = detail::tangent_design_basis(op, ts);
        Matrix phi(op.m(), static_cast<Index>(basis.size()));
        for (std::size_t j = 0; j < basis.size(); ++j)
            phi.col(static_cast<Index>(j)) = op.apply_design(basis[j]);
        const Matrix gram = phi.adjoint() * phi;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
        rep.method = RipMethod::dense;
        rep.lambda_min_T = eig.eigenvalues()(0);
        rep.lambda_max_T = eig.eigenvalues()(dim - 1);
        return detail::finish_rip(rep);
    }

    // Lanczos with full reorthogonalization on vectors living in T
    rep.method = RipMethod::lanczos;
    Philox rng(Philox::derive_seed(op.seed(), 0x1a2c05));
    Vector q = detail::tangent_project_design(op, ts, gaussian_vector(op.design_dim(), rng, ScalarField::complex));
    q.normalize();
    std::vector<Vector> qs{q};
    std::vector<double> alpha, beta;
    const Index steps = std::min(opts.max_iters, dim);
    double prev_min = 0.0, prev_max = 0.0;
    rep.converged = false;
    for (Index k = 0; k < steps; ++k) {
        Vector w = detail::tangent_project_design(op, ts, op.adjoint_design(op.apply_design(qs.back())));
        alpha.push_back(qs.back().dot(w).real());
        for (const auto& v : qs)
            w -= v.dot(w) * v;
        for (const auto& v : qs)
            w -= v.dot(w) * v;
        const double b = w.norm();
        const Index kk = static_cast<Index>(alpha.size());
        RealMatrix tri = RealMatrix::Zero(kk, kk);
        for (Index i = 0; i < kk; ++i) {
            tri(i, i) = alpha[static_cast<std::size_t>(i)];
            if (i + 1 < kk)
                tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<RealMatrix> eig(tri, Eigen::EigenvaluesOnly);
        rep.lambda_min_T = eig.eigenvalues()(0);
        rep.lambda_max_T = eig.eigenvalues()(kk - 1);
        rep.iterations = kk;
        const bool stable = k > 0 && std::abs(rep.lambda_min_T - prev_min) <= opts.tol * rep.lambda_max_T
                            && std::abs(rep.lambda_max_T - prev_max) <= opts.tol * rep.lambda_max_T;
        if (b <= opts.tol * std::max(rep.lambda_max_T, 1e-300) || kk == dim || stable) {
            rep.converged = true;
            break;
        }
        prev_min = rep.lambda_min_T;
        prev_max = rep.lambda_max_T;
        beta.push_back(b);
        qs.push_back(w / b);
    }
    return detail::finish_rip(rep);
}

inline RipReport rip_on_tangent(const MeasurementOperator& op, const TangentSpace& t, const RipOptions& opts = {})
{
    return rip_on_tangent(op, std::vector<TangentSpace>{t}, opts);
}

// ---------------------------------------------------------------------------
// Golfing

struct GolfingTrace
{
    std::vector<std::pair<Index, Index>> partition;  // [begin, end) per leg
    std::vector<Matrix> iterates;                    // Y_0 = 0, ..., Y_Q
    std::vector<double> alpha;                       // alpha_0, ..., alpha_Q
    Vector z;

    Index legs() const { return static_cast<Index>(partition.size()); }

    void write_csv(std::ostream& out) const
    {
        out << "leg,begin,end,alpha\n";
        out << "0,,," << alpha.front() << '\n';
        for (std::size_t q = 0; q < partition.size(); ++q)
            out << q + 1 << ',' << partition[q].first << ',' << partition[q].second << ',' << alpha[q + 1] << '\n';
    }
};

/// ceil(log2(max(n1, n2))) + 2
inline Index default_golfing_legs(Index n1, Index n2)
{
    const double n = static_cast<double>(std::max(n1, n2));
    return static_cast<Index>(std::ceil(std::log2(n))) + 2;
}

/// Contiguous, nearly equal chunks of [0, m).
inline std::vector<std::pair<Index, Index>> contiguous_partition(Index m, Index legs)
{
    require(legs >= 1, "golfing: need at least one leg");
    require(m >= legs, "golfing: every leg needs at least one measurement");
    std::vector<std::pair<Index, Index>> out;
    const Index base = m / legs;
    const Index extra = m % legs;
    Index begin = 0;
    for (Index q = 0; q < legs; ++q) {
        const Index len = base + (q < extra ? 1 : 0);
        out.emplace_back(begin, begin + len);
        begin += len;
    }
    return out;
}

/// Leg q applies A^q = sqrt(Q) * (restriction of A to the q-th chunk):
///   Y_q = Y_{q-1} + (A^q)^* A^q (UV^* - P_T Y_{q-1}),
///   z   = Q * sum_q mask_q A(UV^* - P_T Y_{q-1}),  so that A^*(z) = Y_Q.
/// The partition is deterministic; `seed` is recorded for provenance only.
inline GolfingTrace golfing_construct(const MeasurementOperator& op, const SvdFactors& anchor, Index legs,
                                      std::uint64_t seed = 0)
{
    (void)seed;
    require(anchor.rows() == op.n1() && anchor.cols() == op.n2(), "golfing: anchor shape does not match operator");
    require(op.kind() != EnsembleKind::demixing, "golfing: single-block operators only");
    GolfingTrace trace;
    trace.partition = contiguous_partition(op.m(), legs);
    const TangentSpace t(anchor);
    const Matrix sign = anchor.sign();
    const double q_scale = static_cast<double>(legs);

    Matrix y = Matrix::Zero(op.n1(), op.n2());
    trace.iterates.push_back(y);
    trace.alpha.push_back(sign.norm());
    trace.z = Vector::Zero(op.m());
    for (const auto& [begin, end] : trace.partition) {
        require(end > begin, "golfing: empty leg");
        const Matrix w = sign - t.project(y);
        const Vector full = op.apply(w);
        Vector leg = Vector::Zero(op.m());
        leg.segment(begin, end - begin) = q_scale * full.segment(begin, end - begin);
        trace.z += leg;
        y += op.adjoint(leg);
        trace.iterates.push_back(y);
        trace.alpha.push_back((sign - t.project(y)).norm());
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Approximate certificate

struct CertificateReport
{
    double z_norm = 0.0;
    double alpha = 0.0;            // ||UV^* - P_T A^*(z)||_F
    double offtangent_norm = 0.0;  // ||P_T^perp A^*(z)|| (spectral)
    double op_norm = 0.0;
    bool pass_z = false;           // z_norm <= 2
    bool pass_alpha = false;       // alpha <= 1 / (8 op_norm)
    bool pass_offtangent = false;  // offtangent_norm < 1/2

    bool passes() const { return pass_z && pass_alpha && pass_offtangent; }
};

inline CertificateReport validate_approx_certificate(const Vector& z, const MeasurementOperator& op,
                                                     const SvdFactors& anchor, double op_norm)
{
    require(z.size() == op.m(), "validate_approx_certificate: z has the wrong length");
    const TangentSpace t(anchor);
    const Matrix y = op.adjoint(z);
    CertificateReport rep;
    rep.z_norm = z.norm();
    rep.alpha = (anchor.sign() - t.project(y)).norm();
    rep.offtangent_norm = spectral_norm(t.complement(y));
    rep.op_norm = op_norm;
    rep.pass_z = rep.z_norm <= 2.0;
    rep.pass_alpha = rep.alpha <= 1.0 / (8.0 * op_norm);
    rep.pass_offtangent = rep.offtangent_norm < 0.5;
    return rep;
}

inline CertificateReport validate_approx_certificate(const Vector& z, const MeasurementOperator& op,
                                                     const SvdFactors& anchor)
{
    return validate_approx_certificate(z, op, anchor, operator_norm(op).value);
}

// ---------------------------------------------------------------------------
// Putting: approximate -> exact

struct ExactCertificate
{
    Vector z_prime;
    Matrix y_prime;
    double tangent_residual = 0.0;  // ||P_T Y' - UV^*||_F
    double offtangent_norm = 0.0;   // ||P_T^perp Y'||
    double correction_norm = 0.0;   // ||x||_2 with z' = z + x
    double correction_bound = 0.0;  // 1 / (8 sqrt(1 - delta) ||A||)
    bool bound_holds = false;
    Index cg_iterations = 0;
    bool cg_converged = false;
};

/// Solves P_T A^*A P_T w = UV^* - P_T A^*(z) on T by conjugate gradients and
/// sets z' = z + A(w), so that P_T A^*(z') = UV^*.
inline ExactCertificate putting(const Vector& z, const MeasurementOperator& op, const SvdFactors& anchor,
                                const RipReport& rip, double op_norm, double tol = 1e-13, Index max_iters = 1000)
{
    require(z.size() == op.m(), "putting: z has the wrong length");
    require(rip.delta < 0.75, "putting: requires delta < 3/4 on the tangent space");
    const TangentSpace t(anchor);
    const Matrix sign = anchor.sign();
    const Matrix rhs = sign - t.project(op.adjoint(z));
    auto normal = [&](const Matrix& w) { return t.project(op.adjoint(op.apply(w))); };

    ExactCertificate cert;
    Matrix w = Matrix::Zero(op.n1(), op.n2());
    Matrix r = rhs;
    Matrix p = r;
    double rr = r.squaredNorm();
    const double stop = tol * std::max(sign.norm(), 1e-300);
    cert.cg_converged = std::sqrt(rr) <= stop;
    for (Index it = 1; it <= max_iters && !cert.cg_converged; ++it) {
        const Matrix ap = normal(p);
        const double step = rr / inner(p, ap).real();
        w += step * p;
        r -= step * ap;
        const double rr_next = r.squaredNorm();
        cert.cg_iterations = it;
        if (std::sqrt(rr_next) <= stop) {
            cert.cg_converged = true;
            break;
        }
        p = r + (rr_next / rr) * p;
        rr = rr_next;
    }
    const Vector x = op.apply(w);
    cert.z_prime = z + x;
    cert.y_prime = op.adjoint(cert.z_prime);
    cert.tangent_residual = (t.project(cert.y_prime) - sign).norm();
    cert.offtangent_norm = spectral_norm(t.complement(cert.y_prime));
    cert.correction_norm = x.norm();
    cert.correction_bound = 1.0 / (8.0 * std::sqrt(1.0 - rip.delta) * op_norm);
    cert.bound_holds = cert.correction_norm <= cert.correction_bound * (1.0 + 1e-9);
    return cert;
}

/// P_T Y' = UV^* (to 1e-8 ||UV^*||_F), ||P_T^perp Y'|| < 1 and A injective on T.
inline bool validate_exact_certificate(const ExactCertificate& cert, const MeasurementOperator& op,
                                       const SvdFactors& anchor, const RipReport& rip)
{
    if (!(rip.lambda_min_T > 1e-12))
        return false;
    if (cert.z_prime.size() != op.m())
        return false;
    const TangentSpace t(anchor);
    const Matrix sign = anchor.sign();
    const Matrix y = op.adjoint(cert.z_prime);
    const double tangent = (t.project(y) - sign).norm();
    const double off = spectral_norm(t.complement(y));
    return tangent <= 1e-8 * sign.norm() && off < 1.0;
}

/// The same checks for an arbitrary dual matrix Y.
inline bool validate_dual_matrix(const Matrix& y, const SvdFactors& anchor, const RipReport& rip)
{
    if (!(rip.lambda_min_T > 1e-12))
        return false;
    const TangentSpace t(anchor);
    const Matrix sign = anchor.sign();
    return (t.project(y) - sign).norm() <= 1e-8 * sign.norm() && spectral_norm(t.complement(y)) < 1.0;
}

}  // namespace lowrank
