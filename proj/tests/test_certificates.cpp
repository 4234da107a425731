#include <gtest/gtest.h>

#include <sstream>

#include "lowrank/certificates.hpp"
#include "lowrank/solvers.hpp"

using namespace lowrank;

namespace {

SvdFactors flat_anchor(Index n, Philox& rng)
{
    Matrix u(n, 1), v(n, 1);
    for (Index i = 0; i < n; ++i) {
        u(i, 0) = rng.rademacher() / std::sqrt(static_cast<double>(n));
        v(i, 0) = rng.rademacher() / std::sqrt(static_cast<double>(n));
    }
    return SvdFactors::from_isometries(u, v);
}

SvdFactors spike_anchor(Index n)
{
    Matrix e = Matrix::Zero(n, 1);
    e(0, 0) = 1.0;
    return SvdFactors::from_isometries(e, e);
}

SvdFactors random_anchor(Index n1, Index n2, Index r, Philox& rng)
{
    return SvdFactors::from_isometries(random_isometry(n1, r, rng, ScalarField::real),
                                       random_isometry(n2, r, rng, ScalarField::real));
}

Index completion_samples(Index n)
{
    const double ln = std::log(static_cast<double>(n));
    return static_cast<Index>(std::lround(8.0 * static_cast<double>(n) * ln * ln));
}

}  // namespace

TEST(Rip, CompleteSamplingIsIsometry)
{
    Philox rng(1);
    const MeasurementOperator op = make_complete_sampling(5, 4);
    const TangentSpace t(random_anchor(5, 4, 2, rng));
    const RipReport rep = rip_on_tangent(op, t);
    EXPECT_NEAR(rep.delta, 0.0, 1e-12);
    EXPECT_EQ(rep.dimension, 2 * (5 + 4 - 2));
    RipOptions lanczos;
    lanczos.method = RipMethod::lanczos;
    EXPECT_NEAR(rip_on_tangent(op, t, lanczos).delta, 0.0, 1e-10);
}

TEST(Rip, ScalingByC)
{
    Philox rng(2);
    const MeasurementOperator op = make_gaussian_ensemble(6, 5, 40, 2);
    const TangentSpace t(random_anchor(6, 5, 1, rng));
    const RipReport a = rip_on_tangent(op, t);
    const RipReport b = rip_on_tangent(op.scaled(0.5), t);
    EXPECT_NEAR(b.lambda_min_T, 0.25 * a.lambda_min_T, 1e-10 * a.lambda_max_T);
    EXPECT_NEAR(b.lambda_max_T, 0.25 * a.lambda_max_T, 1e-10 * a.lambda_max_T);
    EXPECT_NEAR(b.delta, std::max(1.0 - b.lambda_min_T, b.lambda_max_T - 1.0), 1e-14);
}

TEST(Rip, LanczosMatchesDense)
{
    Philox rng(3);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MeasurementOperator op = make_gaussian_ensemble(7, 6, 60, seed).scaled(1.0 / std::sqrt(60.0));
        const TangentSpace t(random_anchor(7, 6, 2, rng));
        const RipReport dense = rip_on_tangent(op, t);
        RipOptions lo;
        lo.method = RipMethod::lanczos;
        const RipReport lz = rip_on_tangent(op, t, lo);
        EXPECT_TRUE(lz.converged);
        EXPECT_NEAR(lz.lambda_min_T, dense.lambda_min_T, 1e-8);
        EXPECT_NEAR(lz.lambda_max_T, dense.lambda_max_T, 1e-8);
    }
}

TEST(Rip, DenseCapEnforced)
{
    Philox rng(4);
    const MeasurementOperator op = make_complete_sampling(4, 4);
    RipOptions o;
    o.dense_cap = 3;
    EXPECT_THROW(rip_on_tangent(op, TangentSpace(random_anchor(4, 4, 1, rng)), o), std::invalid_argument);
}

// Normalized so that E[A^*A] = Id. With dim(T) = 15 the extreme eigenvalues
// follow the Marchenko-Pastur edges (1 +- sqrt(15 / m))^2.
TEST(Rip, GaussianEightByEight)
{
    auto pass_count = [](Index m, double& mean_delta) {
        int ok = 0;
        mean_delta = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Philox rng(Philox::derive_seed(5, seed));
            const MeasurementOperator op =
                make_gaussian_ensemble(8, 8, m, seed).scaled(1.0 / std::sqrt(static_cast<double>(m)));
            const RipReport rep = rip_on_tangent(op, TangentSpace(random_anchor(8, 8, 1, rng)));
            ok += rep.delta < 0.75 ? 1 : 0;
            mean_delta += rep.delta / 100.0;
        }
        return ok;
    };
    double d400 = 0.0, d100 = 0.0;
    EXPECT_GE(pass_count(400, d400), 95);
    const double edge400 = std::pow(1.0 + std::sqrt(15.0 / 400.0), 2) - 1.0;
    EXPECT_LT(d400, edge400 + 0.1);
    pass_count(100, d100);
    const double edge100 = std::pow(1.0 + std::sqrt(15.0 / 100.0), 2) - 1.0;
    EXPECT_LT(d100, edge100 + 0.1);
    EXPECT_GT(d100, d400);
}

TEST(Golfing, PartitionCoversAndIsDisjoint)
{
    const auto part = contiguous_partition(10, 3);
    ASSERT_EQ(part.size(), 3u);
    EXPECT_EQ(part[0], std::make_pair(Index{0}, Index{4}));
    EXPECT_EQ(part[1], std::make_pair(Index{4}, Index{7}));
    EXPECT_EQ(part[2], std::make_pair(Index{7}, Index{10}));
    EXPECT_THROW(contiguous_partition(2, 3), std::invalid_argument);
    EXPECT_THROW(contiguous_partition(5, 0), std::invalid_argument);
    EXPECT_EQ(default_golfing_legs(32, 32), 7);
    EXPECT_EQ(default_golfing_legs(5, 3), 5);
}

TEST(Golfing, SingleLegCompleteSampling)
{
    Philox rng(6);
    const MeasurementOperator op = make_complete_sampling(4, 5);
    const SvdFactors a = random_anchor(4, 5, 2, rng);
    const GolfingTrace g = golfing_construct(op, a, 1);
    EXPECT_LT((g.iterates.back() - a.sign()).norm(), 1e-12);
    EXPECT_LT(g.alpha.back(), 1e-12);
    EXPECT_EQ(g.iterates.front().norm(), 0.0);
    EXPECT_NEAR(g.alpha.front(), std::sqrt(2.0), 1e-12);
}

TEST(Golfing, TelescopingAndAdjointIdentity)
{
    Philox rng(7);
    const Index n = 12;
    const MeasurementOperator op = make_completion_ensemble(n, n, 400, 7);
    const SvdFactors a = flat_anchor(n, rng);
    const TangentSpace t(a);
    const Index legs = 4;
    const GolfingTrace g = golfing_construct(op, a, legs);
    ASSERT_EQ(static_cast<Index>(g.iterates.size()), legs + 1);
    ASSERT_EQ(static_cast<Index>(g.alpha.size()), legs + 1);
    for (Index q = 1; q <= legs; ++q) {
        const auto [b, e] = g.partition[static_cast<std::size_t>(q - 1)];
        const Matrix w = a.sign() - t.project(g.iterates[static_cast<std::size_t>(q - 1)]);
        Vector leg = Vector::Zero(op.m());
        leg.segment(b, e - b) = op.apply(w).segment(b, e - b);
        const Matrix step = static_cast<double>(legs) * t.project(op.adjoint(leg));
        const Matrix diff = t.project(g.iterates[static_cast<std::size_t>(q)])
                            - t.project(g.iterates[static_cast<std::size_t>(q - 1)]);
        EXPECT_LT((diff - step).norm(), 1e-12);
        EXPECT_NEAR(g.alpha[static_cast<std::size_t>(q)],
                    (a.sign() - t.project(g.iterates[static_cast<std::size_t>(q)])).norm(), 1e-12);
    }
    EXPECT_LT((op.adjoint(g.z) - g.iterates.back()).norm(), 1e-10);
    std::ostringstream csv;
    g.write_csv(csv);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "leg,begin,end,alpha");
}

TEST(Golfing, FlatAnchorCertifiesAtThreeLegs)
{
    const Index n = 32;
    const Index m = completion_samples(n);
    int ok = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Philox rng(Philox::derive_seed(8, static_cast<std::uint64_t>(s)));
        const MeasurementOperator op = make_completion_ensemble(n, n, m, static_cast<std::uint64_t>(s));
        const SvdFactors a = flat_anchor(n, rng);
        const GolfingTrace g = golfing_construct(op, a, 3);
        const CertificateReport rep = validate_approx_certificate(g.z, op, a);
        const RipReport rip = rip_on_tangent(op, TangentSpace(a));
        bool good = rep.passes() && rip.delta < 0.75;
        if (good) {
            const ExactCertificate cert = putting(g.z, op, a, rip, rep.op_norm);
            good = validate_exact_certificate(cert, op, a, rip) && cert.bound_holds
                   && cert.tangent_residual < 1e-8
                   && cert.offtangent_norm <= 0.5 + 1.0 / (8.0 * std::sqrt(1.0 - rip.delta));
        }
        ok += good ? 1 : 0;
    }
    EXPECT_GE(ok, 18);
}

// With the default logarithmic leg count the residual still contracts
// geometrically, though ||z|| grows like sqrt(Q).
TEST(Golfing, LogarithmicLegsContractAlpha)
{
    const Index n = 32;
    const Index m = completion_samples(n);
    const Index legs = static_cast<Index>(std::ceil(std::log(static_cast<double>(n)))) + 2;
    int ok = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Philox rng(Philox::derive_seed(9, static_cast<std::uint64_t>(s)));
        const MeasurementOperator op = make_completion_ensemble(n, n, m, 100 + static_cast<std::uint64_t>(s));
        const SvdFactors a = flat_anchor(n, rng);
        const GolfingTrace g = golfing_construct(op, a, legs);
        ok += g.alpha.back() <= g.alpha.front() / std::pow(2.0, static_cast<double>(legs)) ? 1 : 0;
    }
    EXPECT_GE(ok, 18);
}

TEST(Golfing, SpikeAnchorFails)
{
    const Index n = 16;
    int failed = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const MeasurementOperator op = make_completion_ensemble(n, n, 60, s);
        const SvdFactors a = spike_anchor(n);
        const GolfingTrace g = golfing_construct(op, a, 3);
        failed += validate_approx_certificate(g.z, op, a).passes() ? 0 : 1;
    }
    EXPECT_GT(failed, 10);
}

TEST(ApproxCertificate, Flags)
{
    Philox rng(10);
    const MeasurementOperator op = make_complete_sampling(3, 3);
    const SvdFactors a = random_anchor(3, 3, 1, rng);
    const Vector exact = op.apply(a.sign());
    const CertificateReport ok = validate_approx_certificate(exact, op, a);
    EXPECT_NEAR(ok.alpha, 0.0, 1e-12);
    EXPECT_NEAR(ok.offtangent_norm, 0.0, 1e-12);
    EXPECT_NEAR(ok.op_norm, 1.0, 1e-6);
    EXPECT_TRUE(ok.passes());

    Vector big = Vector::Zero(op.m());
    big(0) = 3.0;
    const CertificateReport bad = validate_approx_certificate(big, op, a);
    EXPECT_NEAR(bad.z_norm, 3.0, 1e-15);
    EXPECT_FALSE(bad.pass_z);
    EXPECT_EQ(bad.pass_alpha, bad.alpha <= 1.0 / (8.0 * bad.op_norm));
    EXPECT_EQ(bad.pass_offtangent, bad.offtangent_norm < 0.5);
    EXPECT_THROW(validate_approx_certificate(Vector::Zero(2), op, a), std::invalid_argument);
}

TEST(Putting, NothingToPutt)
{
    Philox rng(11);
    const MeasurementOperator op = make_complete_sampling(4, 4);
    const SvdFactors a = random_anchor(4, 4, 1, rng);
    const RipReport rip = rip_on_tangent(op, TangentSpace(a));
    const Vector z = op.apply(a.sign());
    const ExactCertificate cert = putting(z, op, a, rip, 1.0);
    EXPECT_EQ(cert.correction_norm, 0.0);
    EXPECT_LT((cert.z_prime - z).norm(), 1e-15);
    EXPECT_TRUE(validate_exact_certificate(cert, op, a, rip));
}

TEST(Putting, RejectsLargeDelta)
{
    Philox rng(12);
    const MeasurementOperator op = make_complete_sampling(3, 3);
    const SvdFactors a = random_anchor(3, 3, 1, rng);
    RipReport rip = rip_on_tangent(op, TangentSpace(a));
    rip.delta = 0.8;
    EXPECT_THROW(putting(Vector::Zero(op.m()), op, a, rip, 1.0), std::invalid_argument);
}

TEST(Putting, ExactTangentTargetFromPoorStart)
{
    // z violates the alpha condition by far; the correction still lands exactly on UV^* in T
    Philox rng(13);
    const Index n = 10;
    const MeasurementOperator op = make_gaussian_ensemble(n, n, 300, 13).scaled(1.0 / std::sqrt(300.0));
    const SvdFactors a = random_anchor(n, n, 1, rng);
    const RipReport rip = rip_on_tangent(op, TangentSpace(a));
    ASSERT_LT(rip.delta, 0.75);
    const double opn = operator_norm(op).value;
    const Vector z = Vector::Zero(op.m());
    const CertificateReport rep = validate_approx_certificate(z, op, a, opn);
    EXPECT_GT(rep.alpha, 10.0 / (8.0 * opn));
    const ExactCertificate cert = putting(z, op, a, rip, opn);
    EXPECT_TRUE(cert.cg_converged);
    EXPECT_LT(cert.tangent_residual, 1e-8);
    EXPECT_FALSE(cert.bound_holds);
    EXPECT_EQ(validate_exact_certificate(cert, op, a, rip), cert.offtangent_norm < 1.0);
}

TEST(ExactCertificate, RejectsZeroAndNonInjective)
{
    Philox rng(14);
    const MeasurementOperator op = make_complete_sampling(3, 3);
    const SvdFactors a = random_anchor(3, 3, 2, rng);
    const RipReport rip = rip_on_tangent(op, TangentSpace(a));
    ExactCertificate zero;
    zero.z_prime = Vector::Zero(op.m());
    EXPECT_FALSE(validate_exact_certificate(zero, op, a, rip));
    EXPECT_FALSE(validate_dual_matrix(Matrix::Zero(3, 3), a, rip));
    EXPECT_TRUE(validate_dual_matrix(a.sign(), a, rip));
    RipReport singular = rip;
    singular.lambda_min_T = 0.0;
    ExactCertificate good;
    good.z_prime = op.apply(a.sign());
    EXPECT_TRUE(validate_exact_certificate(good, op, a, rip));
    EXPECT_FALSE(validate_exact_certificate(good, op, a, singular));
}

TEST(ExactCertificate, ImpliesRecovery)
{
    const Index n = 12;
    int certified = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Philox rng(Philox::derive_seed(15, s));
        const MeasurementOperator op = make_completion_ensemble(n, n, 110, s);
        const SvdFactors a = flat_anchor(n, rng);
        const GolfingTrace g = golfing_construct(op, a, 2);
        const RipReport rip = rip_on_tangent(op, TangentSpace(a));
        if (rip.delta >= 0.75)
            continue;
        const ExactCertificate cert = putting(g.z, op, a, rip, operator_norm(op).value);
        if (!validate_exact_certificate(cert, op, a, rip))
            continue;
        ++certified;
        const Matrix x0 = a.reconstruct();
        SolverOptions o;
        o.abs_tol = 1e-12;
        o.rel_tol = 1e-10;
        o.max_iters = 20000;
        const RecoveryResult r = nucnorm_min(op, op.apply(x0), 0.0, o);
        EXPECT_LT(relative_error(r.x_hat, x0), 1e-6) << "seed " << s;
    }
    EXPECT_GT(certified, 0);
}
