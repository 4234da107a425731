#include <gtest/gtest.h>

#include <sstream>

#include "lowrank/operators.hpp"

using namespace lowrank;

namespace {

std::vector<MeasurementOperator> small_ensembles(std::uint64_t seed)
{
    return {
        make_gaussian_ensemble(4, 3, 10, seed),
        make_gaussian_ensemble(3, 5, 9, seed, ScalarField::complex),
        make_completion_ensemble(5, 4, 12, seed),
        make_blind_deconv_ensemble(3, 2, 8, seed),
        make_phase_retrieval_ensemble(4, 11, PhaseModel::gaussian, seed),
        make_phase_retrieval_ensemble(4, 9, PhaseModel::rademacher, seed),
        make_phase_retrieval_ensemble(4, 9, PhaseModel::unimodular, seed),
        make_phase_retrieval_ensemble(4, 10, PhaseModel::masked_fourier, seed),
        make_demixing_ensemble(2, 3, 12, 2, seed),
    };
}

Matrix random_input(const MeasurementOperator& op, Philox& rng)
{
    return op.from_design(gaussian_vector(op.design_dim(), rng, ScalarField::complex));
}

// Direct O(L^2) circular convolution followed by the unitary DFT.
Vector convolution_oracle(const BlindDeconvPayload& p, const Vector& h, const Vector& m)
{
    const Index L = p.L;
    const Vector u = p.basis * h;
    const Vector v = p.coding * m.conjugate();
    Vector conv = Vector::Zero(L);
    for (Index k = 0; k < L; ++k)
        for (Index j = 0; j < L; ++j)
            conv(k) += u(j) * v(((k - j) % L + L) % L);
    Vector out(L);
    for (Index l = 0; l < L; ++l) {
        Scalar s = 0.0;
        for (Index k = 0; k < L; ++k)
            s += conv(k) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(l * k) / L);
        out(l) = s / std::sqrt(static_cast<double>(L));
    }
    return out;
}

}  // namespace

TEST(Philox, KnownAnswer)
{
    const auto out = Philox::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, StreamsDifferAndRepeat)
{
    EXPECT_NE(Philox::derive_seed(1, 0), Philox::derive_seed(1, 1));
    EXPECT_NE(Philox::derive_seed(1, 0), Philox::derive_seed(2, 0));
    Philox a(7), b(7);
    for (int i = 0; i < 100; ++i)
        EXPECT_EQ(a.normal(), b.normal());
}

TEST(Philox, ComplexNormalHasUnitVariance)
{
    Philox rng(3);
    double acc = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i)
        acc += std::norm(rng.complex_normal());
    EXPECT_NEAR(acc / n, 1.0, 0.01);
}

TEST(Operators, AdjointConsistency)
{
    Philox rng(11);
    for (const auto& op : small_ensembles(5)) {
        for (int t = 0; t < 100; ++t) {
            const Matrix x = random_input(op, rng);
            const Vector y = gaussian_vector(op.m(), rng, ScalarField::complex);
            // <A(X), y> = <X, A^*(y)>, both conjugating the first argument
            const Scalar lhs = inner(op.apply(x), y);
            const Scalar rhs = inner(x, op.adjoint(y));
            EXPECT_LE(std::abs(lhs - rhs), 1e-10 * op.apply(x).norm() * y.norm() + 1e-14)
                << to_string(op.kind());
        }
    }
}

TEST(Operators, MaterializationEquivalence)
{
    Philox rng(12);
    for (const auto& op : small_ensembles(9)) {
        for (int t = 0; t < 5; ++t) {
            const Matrix x = random_input(op, rng);
            const Vector y = op.apply(x);
            for (Index i = 0; i < op.m(); ++i)
                EXPECT_NEAR(std::abs(y(i) - inner(op.measurement_matrix(i), x)), 0.0, 1e-10);
            const Vector w = gaussian_vector(op.m(), rng, ScalarField::complex);
            Matrix direct = Matrix::Zero(op.n1(), op.n2());
            for (Index i = 0; i < op.m(); ++i)
                direct += w(i) * op.measurement_matrix(i);
            EXPECT_LE((direct - op.adjoint(w)).norm(), 1e-10);
        }
    }
}

TEST(Operators, Linearity)
{
    Philox rng(13);
    for (const auto& op : small_ensembles(2)) {
        EXPECT_EQ(op.apply(Matrix::Zero(op.n1(), op.n2())).norm(), 0.0);
        const Matrix x = random_input(op, rng);
        const Matrix z = random_input(op, rng);
        EXPECT_LE((op.apply(x + z) - op.apply(x) - op.apply(z)).norm(), 1e-12 * (x.norm() + z.norm()) * 10);
    }
}

TEST(Operators, Determinism)
{
    const auto a = small_ensembles(42);
    const auto b = small_ensembles(42);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const Matrix ma = a[k].materialize();
        const Matrix mb = b[k].materialize();
        EXPECT_EQ(0, std::memcmp(ma.data(), mb.data(), sizeof(Scalar) * static_cast<std::size_t>(ma.size())));
    }
}

TEST(Operators, ShapeErrors)
{
    const auto op = make_gaussian_ensemble(3, 3, 4, 1);
    EXPECT_THROW(op.apply(Matrix::Zero(3, 2)), std::invalid_argument);
    EXPECT_THROW(op.adjoint(Vector::Zero(3)), std::invalid_argument);
    EXPECT_THROW(make_gaussian_ensemble(0, 3, 4, 1), std::invalid_argument);
    EXPECT_THROW(make_blind_deconv_ensemble(5, 2, 4, 1), std::invalid_argument);
    EXPECT_THROW(parse_phase_model("fourier"), std::invalid_argument);
}

TEST(Gaussian, OneByOne)
{
    const auto op = make_gaussian_ensemble(1, 1, 1, 77);
    Matrix x(1, 1);
    x(0, 0) = 2.5;
    const Scalar a = op.measurement_matrix(0)(0, 0);
    EXPECT_EQ(a.imag(), 0.0);
    EXPECT_NEAR(std::abs(op.apply(x)(0) - 2.5 * a), 0.0, 1e-15);
    Vector one = Vector::Ones(1);
    EXPECT_NEAR(std::abs(op.adjoint(one)(0, 0) - a), 0.0, 1e-15);
}

TEST(Gaussian, MonteCarloIsotropy)
{
    Philox rng(1);
    const Matrix x = gaussian_matrix(4, 3, rng, ScalarField::real);
    double acc = 0.0;
    const int trials = 10000;
    for (int s = 0; s < trials; ++s)
        acc += make_gaussian_ensemble(4, 3, 10, static_cast<std::uint64_t>(s)).apply(x).squaredNorm();
    EXPECT_NEAR(acc / trials / (10.0 * x.squaredNorm()), 1.0, 0.05);
}

TEST(Completion, CompleteSamplingIsIdentity)
{
    const auto op = make_complete_sampling(3, 4);
    Philox rng(4);
    const Matrix x = gaussian_matrix(3, 4, rng, ScalarField::complex);
    EXPECT_LE((op.adjoint(op.apply(x)) - x).norm(), 1e-14);
    EXPECT_NEAR(operator_norm(op).value, 1.0, 1e-10);
}

TEST(Completion, DistinctIndicesNorm)
{
    std::vector<std::pair<Index, Index>> idx = {{0, 0}, {1, 2}, {2, 1}, {3, 3}, {0, 3}};
    const auto op = make_completion_from_indices(4, 4, idx);
    const double expected = std::sqrt(16.0 / 5.0);
    EXPECT_NEAR(op.scale(), 1.0, 0.0);
    EXPECT_NEAR(operator_norm(op).value, expected, 1e-8);
    // Gram oracle: A^*A is a scaled coordinate projector
    const Matrix m = op.materialize();
    const Matrix gram = m.adjoint() * m;
    EXPECT_NEAR(spectral_norm(gram), expected * expected, 1e-12);
}

TEST(Completion, AdjointOfBasisVector)
{
    const auto op = make_completion_ensemble(5, 6, 7, 3);
    const auto& p = op.payload_as<EntrySamplePayload>();
    EXPECT_NEAR(p.scale, std::sqrt(30.0 / 7.0), 1e-15);
    Vector e = Vector::Zero(7);
    e(2) = 1.0;
    const Matrix a = op.adjoint(e);
    const auto [r, c] = p.indices[2];
    EXPECT_NEAR(std::abs(a(r, c) - p.scale), 0.0, 1e-15);
    EXPECT_NEAR(a.norm(), p.scale, 1e-15);
}

TEST(Completion, UnseenEntryGivesZero)
{
    std::vector<std::pair<Index, Index>> idx = {{1, 0}, {2, 2}, {0, 1}};
    const auto op = make_completion_from_indices(3, 3, idx);
    Matrix x = Matrix::Zero(3, 3);
    x(0, 0) = 1.0;
    EXPECT_EQ(op.apply(x).norm(), 0.0);
}

TEST(BlindDeconv, ConvolutionOracle)
{
    Philox rng(21);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto op = make_blind_deconv_ensemble(2, 2, 8, seed);
        const auto& p = op.payload_as<BlindDeconvPayload>();
        const Vector h = gaussian_vector(2, rng, ScalarField::complex);
        const Vector m = gaussian_vector(2, rng, ScalarField::complex);
        const Vector got = op.apply(h * m.adjoint());
        EXPECT_LE((got - convolution_oracle(p, h, m)).cwiseAbs().maxCoeff(), 1e-10);
    }
    const auto op = make_blind_deconv_ensemble(2, 2, 8, 0);
    EXPECT_EQ(op.apply(Matrix::Zero(2, 2)).norm(), 0.0);
}

TEST(BlindDeconv, RowsResolveIdentity)
{
    const auto op = make_blind_deconv_ensemble(5, 3, 16, 8);
    const auto& p = op.payload_as<BlindDeconvPayload>();
    const Matrix sum = p.b.transpose() * p.b.conjugate();  // sum_l b_l b_l^*
    EXPECT_LE((sum - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BlindDeconv, CodingRowsHaveUnitVariance)
{
    const auto op = make_blind_deconv_ensemble(2, 50, 400, 5);
    const auto& p = op.payload_as<BlindDeconvPayload>();
    EXPECT_NEAR(p.c.squaredNorm() / static_cast<double>(p.c.size()), 1.0, 0.02);
}

TEST(BlindDeconv, CustomIsometry)
{
    Philox rng(2);
    const Matrix b = random_isometry(9, 3, rng, ScalarField::complex);
    const auto op = make_blind_deconv_ensemble(3, 2, 9, 4, b);
    const auto& p = op.payload_as<BlindDeconvPayload>();
    const Vector h = gaussian_vector(3, rng, ScalarField::complex);
    const Vector m = gaussian_vector(2, rng, ScalarField::complex);
    EXPECT_LE((op.apply(h * m.adjoint()) - convolution_oracle(p, h, m)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_THROW(make_blind_deconv_ensemble(3, 2, 9, 4, Matrix(Matrix::Ones(9, 3))), std::invalid_argument);
}

TEST(PhaseRetrieval, Orthogonality)
{
    Matrix vectors = Matrix::Zero(2, 3);
    vectors(0, 0) = 1.0;
    vectors(1, 1) = 1.0;
    const auto op = make_phase_retrieval_from_vectors(vectors);
    Matrix x = Matrix::Zero(3, 3);
    x(0, 0) = 1.0;
    const Vector y = op.apply(x);
    EXPECT_NEAR(std::abs(y(0) - 1.0), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(y(1)), 0.0, 1e-15);
}

TEST(PhaseRetrieval, UnimodularAmbiguity)
{
    const auto op = make_phase_retrieval_ensemble(5, 40, PhaseModel::unimodular, 3);
    Matrix e1 = Matrix::Zero(5, 5), e2 = Matrix::Zero(5, 5);
    e1(0, 0) = 1.0;
    e2(1, 1) = 1.0;
    const Vector y1 = op.apply(e1);
    const Vector y2 = op.apply(e2);
    EXPECT_LE((y1 - y2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PhaseRetrieval, LiftedMeasurementsAreIntensities)
{
    Philox rng(8);
    for (auto model : {PhaseModel::gaussian, PhaseModel::rademacher, PhaseModel::masked_fourier}) {
        const auto op = make_phase_retrieval_ensemble(6, 20, model, 1);
        const auto& a = op.payload_as<PhaseRetrievalPayload>().vectors;
        const Vector x = gaussian_vector(6, rng, ScalarField::complex);
        const Vector y = op.apply(x * x.adjoint());
        for (Index i = 0; i < op.m(); ++i) {
            const Scalar ip = a.row(i).transpose().dot(x);  // a_i^* x
            EXPECT_NEAR(y(i).real(), std::norm(ip), 1e-10);
            EXPECT_NEAR(y(i).imag(), 0.0, 1e-10);
        }
        const Matrix h = hermitian_part(gaussian_matrix(6, 6, rng, ScalarField::complex));
        EXPECT_LE(op.apply(h).imag().cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(PhaseRetrieval, GaussianIsotropy)
{
    // single draw: Wishart edge (1 + sqrt(n/m))^2 - 1 ~ 0.44; pooled over 10 draws: < 0.2
    Matrix pooled = Matrix::Zero(8, 8);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto op = make_phase_retrieval_ensemble(8, 200, PhaseModel::gaussian, seed);
        const auto& a = op.payload_as<PhaseRetrievalPayload>().vectors;
        const Matrix frame = a.transpose() * a.conjugate() / 200.0;
        EXPECT_LT(spectral_norm(frame - Matrix::Identity(8, 8)), 2.0 * std::sqrt(0.04) + 0.04 + 0.1);
        pooled += frame / 10.0;
    }
    EXPECT_LT(spectral_norm(pooled - Matrix::Identity(8, 8)), 0.2);
}

TEST(PhaseRetrieval, MaskedFourierLayout)
{
    const auto op = make_phase_retrieval_ensemble(4, 10, PhaseModel::masked_fourier, 2);
    const auto& p = op.payload_as<PhaseRetrievalPayload>();
    EXPECT_EQ(p.masks.rows(), 3);
    const Matrix f = unitary_dft(4);
    for (Index i = 0; i < 10; ++i)
        for (Index k = 0; k < 4; ++k)
            EXPECT_EQ(p.vectors(i, k), p.masks(i / 4, k) * f(k, i % 4));
}

TEST(Demixing, SingleComponentMatchesBlindDeconv)
{
    const auto a = make_demixing_ensemble(3, 4, 10, 1, 99);
    const auto b = make_blind_deconv_ensemble(3, 4, 10, 99);
    const Matrix ma = a.materialize();
    const Matrix mb = b.materialize();
    EXPECT_EQ(0, std::memcmp(ma.data(), mb.data(), sizeof(Scalar) * static_cast<std::size_t>(ma.size())));
}

TEST(Demixing, SumOfComponents)
{
    Philox rng(5);
    const auto op = make_demixing_ensemble(2, 2, 12, 2, 17);
    const auto& p = op.payload_as<DemixingPayload>();
    const Vector h1 = gaussian_vector(2, rng, ScalarField::complex), m1 = gaussian_vector(2, rng, ScalarField::complex);
    const Vector h2 = gaussian_vector(2, rng, ScalarField::complex), m2 = gaussian_vector(2, rng, ScalarField::complex);
    const Vector y = op.apply(op.from_design(op.from_blocks({h1 * m1.adjoint(), h2 * m2.adjoint()})));
    const Vector oracle = convolution_oracle(p.components[0], h1, m1) + convolution_oracle(p.components[1], h2, m2);
    EXPECT_LE((y - oracle).cwiseAbs().maxCoeff(), 1e-10);

    const Vector y1 = op.apply(op.from_design(op.from_blocks({h1 * m1.adjoint(), Matrix::Zero(2, 2)})));
    EXPECT_LE((y1 - convolution_oracle(p.components[0], h1, m1)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_THROW(op.from_blocks({Matrix::Zero(2, 2)}), std::invalid_argument);
    EXPECT_THROW(op.from_blocks({Matrix::Zero(2, 2), Matrix::Zero(3, 2)}), std::invalid_argument);
}

TEST(OperatorNorm, MatchesDenseSvd)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto op = make_gaussian_ensemble(3, 4, 15, seed);
        const auto est = operator_norm(op);
        EXPECT_TRUE(est.converged);
        EXPECT_NEAR(est.value, spectral_norm(op.materialize()), 1e-6 * est.value);
    }
}

TEST(OperatorNorm, ScaledOperator)
{
    const auto op = make_gaussian_ensemble(3, 3, 12, 4);
    EXPECT_NEAR(operator_norm(op.scaled(3.0)).value, 3.0 * operator_norm(op).value, 1e-7);
}

TEST(Descriptor, RoundTrip)
{
    std::vector<EnsembleDescriptor> descs;
    for (const auto& op : small_ensembles(1234567890123ull))
        if (op.descriptor())
            descs.push_back(*op.descriptor());
    ASSERT_GE(descs.size(), 8u);
    for (const auto& d : descs) {
        const EnsembleDescriptor back = parse_descriptor(to_config(d));
        EXPECT_EQ(back, d);
        const Matrix a = build(back).materialize();
        const Matrix b = build(d).materialize();
        EXPECT_EQ(a, b);
    }
}

TEST(Descriptor, CsvExport)
{
    const auto op = make_gaussian_ensemble(2, 2, 3, 1);
    std::ostringstream out;
    export_csv(op, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "measurement,row,col,re,im");
    int rows = 0;
    while (std::getline(in, line))
        ++rows;
    EXPECT_EQ(rows, 12);
}
