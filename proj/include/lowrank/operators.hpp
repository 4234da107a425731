#pragma once

// Linear measurement ensembles A : C^{n1 x n2} -> C^m with A(X)_i = <A_i, X>.
//
// Every operator works on a flat "design" vector x in C^d. For single-matrix
// ensembles x = vec(X) (column-major, d = n1 n2); for demixing the design
// vector is the concatenation vec(X_1), ..., vec(X_r) of the r diagonal
// blocks (d = r K N) and the matrix view is the block-diagonal X_1 (+) ... (+) X_r.
// Off-diagonal blocks of a demixing input lie in the kernel.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lowrank/config.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

enum class EnsembleKind { gaussian, entry_sampling, blind_deconv, phase_retrieval, demixing };
enum class PhaseModel { gaussian, rademacher, unimodular, masked_fourier };

inline std::string to_string(EnsembleKind kind)
{
    switch (kind) {
    case EnsembleKind::gaussian: return "gaussian";
    case EnsembleKind::entry_sampling: return "completion";
    case EnsembleKind::blind_deconv: return "blind_deconv";
    case EnsembleKind::phase_retrieval: return "phase_retrieval";
    case EnsembleKind::demixing: return "demixing";
    }
    return "unknown";
}

inline EnsembleKind parse_ensemble_kind(const std::string& s)
{
    if (s == "gaussian") return EnsembleKind::gaussian;
    if (s == "completion" || s == "entry_sampling") return EnsembleKind::entry_sampling;
    if (s == "blind_deconv") return EnsembleKind::blind_deconv;
    if (s == "phase_retrieval") return EnsembleKind::phase_retrieval;
    if (s == "demixing") return EnsembleKind::demixing;
    throw std::invalid_argument("unknown ensemble kind '" + s + "'");
}

inline std::string to_string(PhaseModel model)
{
    switch (model) {
    case PhaseModel::gaussian: return "gaussian";
    case PhaseModel::rademacher: return "rademacher";
    case PhaseModel::unimodular: return "unimodular";
    case PhaseModel::masked_fourier: return "masked_fourier";
    }
    return "unknown";
}

inline PhaseModel parse_phase_model(const std::string& s)
{
    if (s == "gaussian") return PhaseModel::gaussian;
    if (s == "rademacher") return PhaseModel::rademacher;
    if (s == "unimodular") return PhaseModel::unimodular;
    if (s == "masked_fourier") return PhaseModel::masked_fourier;
    throw std::invalid_argument("unknown phase retrieval model '" + s + "'");
}

inline std::string to_string(ScalarField f) { return f == ScalarField::real ? "real" : "complex"; }

inline ScalarField parse_scalar_field(const std::string& s)
{
    if (s == "real") return ScalarField::real;
    if (s == "complex") return ScalarField::complex;
    throw std::invalid_argument("unknown scalar field '" + s + "'");
}

/// Row i holds conj(vec(A_i))^T, so A(x) = rows * x.
struct DenseRowsPayload
{
    Matrix rows;
};

struct EntrySamplePayload
{
    std::vector<std::pair<Index, Index>> indices;
    double scale = 1.0;  // sqrt(n1 n2 / m)
};

/// Row l of `b` is b_l^T (the l-th row of conj(F B)); row l of `c` is
/// c_l^T (the l-th row of sqrt(L) F C). `basis` is B and `coding` is C.
struct BlindDeconvPayload
{
    Index L = 0;
    Index K = 0;
    Index N = 0;
    Matrix b;
    Matrix c;
    Matrix basis;
    Matrix coding;
};

/// Row i of `vectors` is a_i^T. For masked Fourier, `masks` holds the
/// Rademacher diagonals (one row per mask).
struct PhaseRetrievalPayload
{
    Matrix vectors;
    PhaseModel model = PhaseModel::gaussian;
    RealMatrix masks;
};

struct DemixingPayload
{
    std::vector<BlindDeconvPayload> components;
};

using Payload = std::variant<DenseRowsPayload, EntrySamplePayload, BlindDeconvPayload,
                             PhaseRetrievalPayload, DemixingPayload>;

/// Plain description from which an ensemble can be rebuilt bit-exactly.
struct EnsembleDescriptor
{
    EnsembleKind kind = EnsembleKind::gaussian;
    Index n1 = 0;
    Index n2 = 0;
    Index m = 0;
    Index K = 0;
    Index N = 0;
    Index L = 0;
    Index r = 1;
    PhaseModel model = PhaseModel::gaussian;
    ScalarField field = ScalarField::real;
    std::uint64_t seed = 0;

    bool operator==(const EnsembleDescriptor&) const = default;
};

struct NormEstimate
{
    double value = 0.0;
    Index iterations = 0;
    bool converged = false;
};

class MeasurementOperator
{
public:
    MeasurementOperator(EnsembleKind kind, Index n1, Index n2, Index m, std::uint64_t seed,
                        ScalarField field, Payload payload)
        : kind_(kind), n1_(n1), n2_(n2), m_(m), seed_(seed), field_(field),
          payload_(std::move(payload))
    {
    }

    EnsembleKind kind() const { return kind_; }
    Index n1() const { return n1_; }
    Index n2() const { return n2_; }
    Index m() const { return m_; }
    std::uint64_t seed() const { return seed_; }
    ScalarField field() const { return field_; }
    double scale() const { return scale_; }
    const Payload& payload() const { return payload_; }
    const std::optional<EnsembleDescriptor>& descriptor() const { return descriptor_; }

    template <typename T>
    const T& payload_as() const
    {
        return std::get<T>(payload_);
    }

    /// Diagonal block shapes (a single block unless demixing).
    std::vector<std::pair<Index, Index>> block_shapes() const
    {
        if (const auto* d = std::get_if<DemixingPayload>(&payload_)) {
            std::vector<std::pair<Index, Index>> shapes;
            for (const auto& c : d->components)
                shapes.emplace_back(c.K, c.N);
            return shapes;
        }
        return {{n1_, n2_}};
    }

    Index design_dim() const
    {
        Index d = 0;
        for (const auto& [r, c] : block_shapes())
            d += r * c;
        return d;
    }

    Vector to_design(const Matrix& x) const
    {
        if (x.rows() != n1_ || x.cols() != n2_)
            throw std::invalid_argument("measurement operator: expected " + std::to_string(n1_) + "x"
                                        + std::to_string(n2_) + " input, got "
                                        + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
        if (kind_ != EnsembleKind::demixing)
            return vec(x);
        Vector out(design_dim());
        Index offset = 0;
        Index row = 0;
        Index col = 0;
        for (const auto& [r, c] : block_shapes()) {
            out.segment(offset, r * c) = vec(x.block(row, col, r, c));
            offset += r * c;
            row += r;
            col += c;
        }
        return out;
    }

    Matrix from_design(const Vector& v) const
    {
        require(v.size() == design_dim(), "measurement operator: design vector length mismatch");
        if (kind_ != EnsembleKind::demixing)
            return unvec(v, n1_, n2_);
        Matrix out = Matrix::Zero(n1_, n2_);
        Index offset = 0;
        Index row = 0;
        Index col = 0;
        for (const auto& [r, c] : block_shapes()) {
            out.block(row, col, r, c) = unvec(v.segment(offset, r * c), r, c);
            offset += r * c;
            row += r;
            col += c;
        }
        return out;
    }

    /// Split a design vector into its diagonal blocks.
    std::vector<Matrix> blocks(const Vector& v) const
    {
        require(v.size() == design_dim(), "measurement operator: design vector length mismatch");
        std::vector<Matrix> out;
        Index offset = 0;
        for (const auto& [r, c] : block_shapes()) {
            out.push_back(unvec(v.segment(offset, r * c), r, c));
            offset += r * c;
        }
        return out;
    }

    Vector from_blocks(const std::vector<Matrix>& parts) const
    {
        const auto shapes = block_shapes();
        if (parts.size() != shapes.size())
            throw std::invalid_argument("measurement operator: expected " + std::to_string(shapes.size())
                                        + " blocks, got " + std::to_string(parts.size()));
        Vector out(design_dim());
        Index offset = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const auto [r, c] = shapes[i];
            if (parts[i].rows() != r || parts[i].cols() != c)
                throw std::invalid_argument("measurement operator: block " + std::to_string(i)
                                            + " shape mismatch");
            out.segment(offset, r * c) = vec(parts[i]);
            offset += r * c;
        }
        return out;
    }

    Vector apply(const Matrix& x) const { return apply_design(to_design(x)); }

    Matrix adjoint(const Vector& y) const { return from_design(adjoint_design(y)); }

    Vector apply_design(const Vector& x) const
    {
        require(x.size() == design_dim(), "apply: design vector length mismatch");
        Vector y = std::visit([&](const auto& p) { return apply_payload(p, x); }, payload_);
        if (scale_ != 1.0)
            y *= scale_;
        return y;
    }

    Vector adjoint_design(const Vector& y) const
    {
        if (y.size() != m_)
            throw std::invalid_argument("adjoint: expected " + std::to_string(m_)
                                        + " measurements, got " + std::to_string(y.size()));
        Vector x = std::visit([&](const auto& p) { return adjoint_payload(p, y); }, payload_);
        if (scale_ != 1.0)
            x *= scale_;
        return x;
    }

    /// The i-th measurement matrix A_i (block-diagonal for demixing).
    Matrix measurement_matrix(Index i) const
    {
        require(i >= 0 && i < m_, "measurement_matrix: index out of range");
        Vector e = Vector::Zero(m_);
        e(i) = 1.0;
        return adjoint(e);
    }

    /// Dense m x d matrix M with apply_design(x) = M x.
    Matrix materialize() const
    {
        const Index d = design_dim();
        Matrix out(m_, d);
        Vector e = Vector::Zero(d);
        for (Index j = 0; j < d; ++j) {
            e(j) = 1.0;
            out.col(j) = apply_design(e);
            e(j) = 0.0;
        }
        return out;
    }

    /// Same ensemble with every A_i multiplied by c.
    MeasurementOperator scaled(double c) const
    {
        MeasurementOperator out = *this;
        out.scale_ *= c;
        out.descriptor_.reset();
        return out;
    }

    void set_descriptor(EnsembleDescriptor d) { descriptor_ = d; }

private:
    static Vector apply_payload(const DenseRowsPayload& p, const Vector& x) { return p.rows * x; }

    static Vector adjoint_payload(const DenseRowsPayload& p, const Vector& y)
    {
        return p.rows.adjoint() * y;
    }

    Vector apply_payload(const EntrySamplePayload& p, const Vector& x) const
    {
        Vector y(m_);
        for (Index i = 0; i < m_; ++i) {
            const auto [row, col] = p.indices[static_cast<std::size_t>(i)];
            y(i) = p.scale * x(row + col * n1_);
        }
        return y;
    }

    Vector adjoint_payload(const EntrySamplePayload& p, const Vector& y) const
    {
        Vector x = Vector::Zero(n1_ * n2_);
        for (Index i = 0; i < m_; ++i) {
            const auto [row, col] = p.indices[static_cast<std::size_t>(i)];
            x(row + col * n1_) += p.scale * y(i);
        }
        return x;
    }

    // y_l = b_l^* X c_l
    static Vector apply_payload(const BlindDeconvPayload& p, const Vector& x)
    {
        const Matrix xm = unvec(x, p.K, p.N);
        const Matrix xc = xm * p.c.transpose();  // K x L, column l = X c_l
        return (p.b.conjugate().cwiseProduct(xc.transpose())).rowwise().sum();
    }

    // sum_l y_l b_l c_l^*
    static Vector adjoint_payload(const BlindDeconvPayload& p, const Vector& y)
    {
        const Matrix xm = p.b.transpose() * y.asDiagonal() * p.c.conjugate();
        return vec(xm);
    }

    // y_i = a_i^* X a_i
    Vector apply_payload(const PhaseRetrievalPayload& p, const Vector& x) const
    {
        const Matrix xm = unvec(x, n1_, n2_);
        const Matrix xa = xm * p.vectors.transpose();  // n x m
        return (p.vectors.conjugate().cwiseProduct(xa.transpose())).rowwise().sum();
    }

    // sum_i y_i a_i a_i^*
    static Vector adjoint_payload(const PhaseRetrievalPayload& p, const Vector& y)
    {
        return vec(Matrix(p.vectors.transpose() * y.asDiagonal() * p.vectors.conjugate()));
    }

    Vector apply_payload(const DemixingPayload& p, const Vector& x) const
    {
        Vector y = Vector::Zero(m_);
        Index offset = 0;
        for (const auto& comp : p.components) {
            const Index size = comp.K * comp.N;
            y += apply_payload(comp, x.segment(offset, size));
            offset += size;
        }
        return y;
    }

    Vector adjoint_payload(const DemixingPayload& p, const Vector& y) const
    {
        Vector x(design_dim());
        Index offset = 0;
        for (const auto& comp : p.components) {
            const Index size = comp.K * comp.N;
            x.segment(offset, size) = adjoint_payload(comp, y);
            offset += size;
        }
        return x;
    }

    EnsembleKind kind_;
    Index n1_;
    Index n2_;
    Index m_;
    std::uint64_t seed_;
    ScalarField field_;
    Payload payload_;
    double scale_ = 1.0;
    std::optional<EnsembleDescriptor> descriptor_;
};

// ---------------------------------------------------------------------------
// Ensemble constructors

inline MeasurementOperator make_gaussian_ensemble(Index n1, Index n2, Index m, std::uint64_t seed,
                                                  ScalarField field = ScalarField::real)
{
    require(n1 >= 1 && n2 >= 1 && m >= 1, "make_gaussian_ensemble: dimensions must be positive");
    Philox rng(seed);
    DenseRowsPayload p;
    p.rows.resize(m, n1 * n2);
    for (Index i = 0; i < m; ++i)
        for (Index k = 0; k < n1 * n2; ++k)
            p.rows(i, k) = field == ScalarField::real ? Scalar(rng.normal(), 0.0)
                                                      : std::conj(rng.complex_normal());
    MeasurementOperator op(EnsembleKind::gaussian, n1, n2, m, seed, field, std::move(p));
    EnsembleDescriptor d;
    d.kind = EnsembleKind::gaussian;
    d.n1 = n1;
    d.n2 = n2;
    d.m = m;
    d.field = field;
    d.seed = seed;
    op.set_descriptor(d);
    return op;
}

/// Entry sampling with an explicit index list; scale = sqrt(n1 n2 / m).
inline MeasurementOperator make_completion_from_indices(Index n1, Index n2,
                                                        std::vector<std::pair<Index, Index>> indices,
                                                        std::uint64_t seed = 0)
{
    require(n1 >= 1 && n2 >= 1, "make_completion: dimensions must be positive");
    require(!indices.empty(), "make_completion: need at least one sample");
    for (const auto& [r, c] : indices)
        require(r >= 0 && r < n1 && c >= 0 && c < n2, "make_completion: index out of range");
    const auto m = static_cast<Index>(indices.size());
    EntrySamplePayload p;
    p.scale = std::sqrt(static_cast<double>(n1 * n2) / static_cast<double>(m));
    p.indices = std::move(indices);
    return MeasurementOperator(EnsembleKind::entry_sampling, n1, n2, m, seed, ScalarField::real,
                               std::move(p));
}

/// Every entry observed exactly once: A^*A = Id.
inline MeasurementOperator make_complete_sampling(Index n1, Index n2)
{
    std::vector<std::pair<Index, Index>> idx;
    for (Index c = 0; c < n2; ++c)
        for (Index r = 0; r < n1; ++r)
            idx.emplace_back(r, c);
    return make_completion_from_indices(n1, n2, std::move(idx));
}

inline MeasurementOperator make_completion_ensemble(Index n1, Index n2, Index m, std::uint64_t seed)
{
    require(n1 >= 1 && n2 >= 1 && m >= 1, "make_completion_ensemble: dimensions must be positive");
    Philox rng(seed);
    std::vector<std::pair<Index, Index>> idx;
    idx.reserve(static_cast<std::size_t>(m));
    const auto total = static_cast<std::uint64_t>(n1 * n2);
    for (Index i = 0; i < m; ++i) {
        const auto k = static_cast<Index>(rng.uniform_index(total));
        idx.emplace_back(k % n1, k / n1);
    }
    MeasurementOperator op = make_completion_from_indices(n1, n2, std::move(idx), seed);
    EnsembleDescriptor d;
    d.kind = EnsembleKind::entry_sampling;
    d.n1 = n1;
    d.n2 = n2;
    d.m = m;
    d.seed = seed;
    op.set_descriptor(d);
    return op;
}

/// The isometry that extends h in C^K by zeros to C^L.
inline Matrix zero_padding_isometry(Index L, Index K)
{
    require(L >= K, "zero_padding_isometry: need L >= K");
    return Matrix::Identity(L, K);
}

namespace detail {

inline BlindDeconvPayload blind_deconv_component(Index K, Index N, Index L, const Matrix& basis,
                                                 std::uint64_t component_seed)
{
    Philox rng(component_seed);
    BlindDeconvPayload p;
    p.L = L;
    p.K = K;
    p.N = N;
    p.basis = basis;
    p.coding.resize(L, N);
    const double sd = 1.0 / std::sqrt(static_cast<double>(L));
    for (Index j = 0; j < N; ++j)
        for (Index l = 0; l < L; ++l)
            p.coding(l, j) = sd * rng.complex_normal();
    const Matrix f = unitary_dft(L);
    p.b = (f * basis).conjugate();
    p.c = std::sqrt(static_cast<double>(L)) * f * p.coding;
    return p;
}

inline void check_isometry(const Matrix& basis, Index L, Index K)
{
    require(basis.rows() == L && basis.cols() == K, "blind deconvolution: basis must be L x K");
    require((basis.adjoint() * basis - Matrix::Identity(K, K)).norm() <= 1e-10,
            "blind deconvolution: basis must satisfy B^*B = Id");
}

}  // namespace detail

/// A(X)_l = <b_l c_l^*, X>; A(h m^*) is the unitary DFT of (B h) circularly
/// convolved with C conj(m). `basis` overrides the zero-padding isometry.
inline MeasurementOperator make_blind_deconv_ensemble(Index K, Index N, Index L, std::uint64_t seed,
                                                      std::optional<Matrix> basis = std::nullopt)
{
    require(K >= 1 && N >= 1 && L >= 1, "make_blind_deconv_ensemble: dimensions must be positive");
    require(L >= K, "make_blind_deconv_ensemble: need L >= K");
    const Matrix b = basis ? *basis : zero_padding_isometry(L, K);
    detail::check_isometry(b, L, K);
    BlindDeconvPayload p = detail::blind_deconv_component(K, N, L, b, Philox::derive_seed(seed, 0));
    MeasurementOperator op(EnsembleKind::blind_deconv, K, N, L, seed, ScalarField::complex, std::move(p));
    if (!basis) {
        EnsembleDescriptor d;
        d.kind = EnsembleKind::blind_deconv;
        d.K = K;
        d.N = N;
        d.L = L;
        d.field = ScalarField::complex;
        d.seed = seed;
        op.set_descriptor(d);
    }
    return op;
}

/// Sum of r blind-deconvolution operators sharing B; component i uses the
/// seed stream derive_seed(seed, i), so r = 1 coincides with
/// make_blind_deconv_ensemble(seed).
inline MeasurementOperator make_demixing_ensemble(Index K, Index N, Index L, Index r, std::uint64_t seed,
                                                  std::optional<Matrix> basis = std::nullopt)
{
    require(K >= 1 && N >= 1 && L >= 1, "make_demixing_ensemble: dimensions must be positive");
    require(r >= 1, "make_demixing_ensemble: need r >= 1");
    require(L >= K, "make_demixing_ensemble: need L >= K");
    const Matrix b = basis ? *basis : zero_padding_isometry(L, K);
    detail::check_isometry(b, L, K);
    DemixingPayload p;
    for (Index i = 0; i < r; ++i)
        p.components.push_back(
            detail::blind_deconv_component(K, N, L, b, Philox::derive_seed(seed, static_cast<std::uint64_t>(i))));
    MeasurementOperator op(EnsembleKind::demixing, r * K, r * N, L, seed, ScalarField::complex, std::move(p));
    if (!basis) {
        EnsembleDescriptor d;
        d.kind = EnsembleKind::demixing;
        d.K = K;
        d.N = N;
        d.L = L;
        d.r = r;
        d.field = ScalarField::complex;
        d.seed = seed;
        op.set_descriptor(d);
    }
    return op;
}

/// Phase retrieval from vectors given explicitly (row i = a_i^T).
inline MeasurementOperator make_phase_retrieval_from_vectors(Matrix vectors, std::uint64_t seed = 0,
                                                             PhaseModel model = PhaseModel::gaussian)
{
    require(vectors.rows() >= 1 && vectors.cols() >= 1, "phase retrieval: need at least one vector");
    const Index n = vectors.cols();
    const Index m = vectors.rows();
    PhaseRetrievalPayload p;
    p.vectors = std::move(vectors);
    p.model = model;
    return MeasurementOperator(EnsembleKind::phase_retrieval, n, n, m, seed, ScalarField::complex, std::move(p));
}

/// Masked Fourier: measurement k uses mask k / n and DFT column k mod n,
/// with ceil(m / n) Rademacher masks in total.
inline MeasurementOperator make_phase_retrieval_ensemble(Index n, Index m, PhaseModel model, std::uint64_t seed)
{
    require(n >= 1 && m >= 1, "make_phase_retrieval_ensemble: dimensions must be positive");
    Philox rng(seed);
    Matrix vectors(m, n);
    RealMatrix masks;
    switch (model) {
    case PhaseModel::gaussian:
        for (Index i = 0; i < m; ++i)
            for (Index k = 0; k < n; ++k)
                vectors(i, k) = rng.complex_normal();
        break;
    case PhaseModel::rademacher:
        for (Index i = 0; i < m; ++i)
            for (Index k = 0; k < n; ++k)
                vectors(i, k) = rng.rademacher();
        break;
    case PhaseModel::unimodular:
        for (Index i = 0; i < m; ++i)
            for (Index k = 0; k < n; ++k)
                vectors(i, k) = rng.unimodular();
        break;
    case PhaseModel::masked_fourier: {
        const Index n_masks = (m + n - 1) / n;
        masks.resize(n_masks, n);
        for (Index j = 0; j < n_masks; ++j)
            for (Index k = 0; k < n; ++k)
                masks(j, k) = rng.rademacher();
        const Matrix f = unitary_dft(n);
        for (Index i = 0; i < m; ++i) {
            const Index mask = i / n;
            const Index freq = i % n;
            for (Index k = 0; k < n; ++k)
                vectors(i, k) = masks(mask, k) * f(k, freq);
        }
        break;
    }
    }
    MeasurementOperator op = make_phase_retrieval_from_vectors(std::move(vectors), seed, model);
    if (model == PhaseModel::masked_fourier) {
        auto p = op.payload_as<PhaseRetrievalPayload>();
        p.masks = masks;
        op = MeasurementOperator(EnsembleKind::phase_retrieval, n, n, m, seed, ScalarField::complex, std::move(p));
    }
    EnsembleDescriptor d;
    d.kind = EnsembleKind::phase_retrieval;
    d.n1 = n;
    d.n2 = n;
    d.m = m;
    d.model = model;
    d.field = ScalarField::complex;
    d.seed = seed;
    op.set_descriptor(d);
    return op;
}

// ---------------------------------------------------------------------------
// Norm estimation

/// Power iteration on A^*A from two independent random starts; the larger
/// estimate is reported. Non-convergence is flagged, never thrown.
inline NormEstimate operator_norm(const MeasurementOperator& op, double tol = 1e-10, Index max_iters = 5000)
{
    require(tol > 0.0, "operator_norm: tol must be positive");
    NormEstimate best;
    for (std::uint64_t start = 0; start < 2; ++start) {
        Philox rng(Philox::derive_seed(op.seed(), 0x0b5e55ed + start));
        Vector v = gaussian_vector(op.design_dim(), rng, ScalarField::complex);
        v.normalize();
        double lambda = 0.0;
        NormEstimate est;
        for (Index it = 1; it <= max_iters; ++it) {
            Vector w = op.adjoint_design(op.apply_design(v));
            const double next = std::abs(v.dot(w));
            const double wn = w.norm();
            est.iterations = it;
            if (wn == 0.0) {
                lambda = 0.0;
                est.converged = true;
                break;
            }
            v = w / wn;
            if (std::abs(next - lambda) <= tol * next) {
                lambda = next;
                est.converged = true;
                break;
            }
            lambda = next;
        }
        est.value = std::sqrt(lambda);
        if (start == 0 || est.value > best.value) {
            const Index total = best.iterations + est.iterations;
            best = est;
            best.iterations = total;
        } else {
            best.iterations += est.iterations;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Descriptors: plain-text key-value round trip

inline std::string to_config(const EnsembleDescriptor& d)
{
    std::ostringstream out;
    out << "kind = \"" << to_string(d.kind) << "\"\n";
    switch (d.kind) {
    case EnsembleKind::gaussian:
        out << "n1 = " << d.n1 << "\nn2 = " << d.n2 << "\nm = " << d.m << "\nfield = \"" << to_string(d.field)
            << "\"\n";
        break;
    case EnsembleKind::entry_sampling:
        out << "n1 = " << d.n1 << "\nn2 = " << d.n2 << "\nm = " << d.m << "\n";
        break;
    case EnsembleKind::blind_deconv:
        out << "K = " << d.K << "\nN = " << d.N << "\nL = " << d.L << "\n";
        break;
    case EnsembleKind::phase_retrieval:
        out << "n = " << d.n1 << "\nm = " << d.m << "\nmodel = \"" << to_string(d.model) << "\"\n";
        break;
    case EnsembleKind::demixing:
        out << "K = " << d.K << "\nN = " << d.N << "\nL = " << d.L << "\nr = " << d.r << "\n";
        break;
    }
    out << "seed = " << d.seed << "\n";
    return out.str();
}

inline EnsembleDescriptor descriptor_from_config(const KeyValueConfig& cfg)
{
    EnsembleDescriptor d;
    d.kind = parse_ensemble_kind(cfg.get_string("kind"));
    d.seed = cfg.get_u64("seed", 0);
    switch (d.kind) {
    case EnsembleKind::gaussian:
        d.n1 = cfg.get_int("n1");
        d.n2 = cfg.get_int("n2");
        d.m = cfg.get_int("m");
        d.field = parse_scalar_field(cfg.get_string("field", "real"));
        break;
    case EnsembleKind::entry_sampling:
        d.n1 = cfg.get_int("n1");
        d.n2 = cfg.get_int("n2");
        d.m = cfg.get_int("m");
        break;
    case EnsembleKind::blind_deconv:
        d.K = cfg.get_int("K");
        d.N = cfg.get_int("N");
        d.L = cfg.get_int("L");
        d.field = ScalarField::complex;
        break;
    case EnsembleKind::phase_retrieval:
        d.n1 = d.n2 = cfg.get_int("n");
        d.m = cfg.get_int("m");
        d.model = parse_phase_model(cfg.get_string("model", "gaussian"));
        d.field = ScalarField::complex;
        break;
    case EnsembleKind::demixing:
        d.K = cfg.get_int("K");
        d.N = cfg.get_int("N");
        d.L = cfg.get_int("L");
        d.r = cfg.get_int("r");
        d.field = ScalarField::complex;
        break;
    }
    return d;
}

inline EnsembleDescriptor parse_descriptor(const std::string& text)
{
    return descriptor_from_config(KeyValueConfig::parse(text));
}

inline MeasurementOperator build(const EnsembleDescriptor& d)
{
    switch (d.kind) {
    case EnsembleKind::gaussian: return make_gaussian_ensemble(d.n1, d.n2, d.m, d.seed, d.field);
    case EnsembleKind::entry_sampling: return make_completion_ensemble(d.n1, d.n2, d.m, d.seed);
    case EnsembleKind::blind_deconv: return make_blind_deconv_ensemble(d.K, d.N, d.L, d.seed);
    case EnsembleKind::phase_retrieval: return make_phase_retrieval_ensemble(d.n1, d.m, d.model, d.seed);
    case EnsembleKind::demixing: return make_demixing_ensemble(d.K, d.N, d.L, d.r, d.seed);
    }
    throw std::invalid_argument("build: unknown ensemble kind");
}

/// One CSV line per entry of each measurement matrix:
/// measurement,row,col,re,im (full precision).
inline void export_csv(const MeasurementOperator& op, std::ostream& out)
{
    out << "measurement,row,col,re,im\n";
    out << std::setprecision(17);
    for (Index i = 0; i < op.m(); ++i) {
        const Matrix a = op.measurement_matrix(i);
        for (Index c = 0; c < a.cols(); ++c)
            for (Index r = 0; r < a.rows(); ++r)
                out << i << ',' << r << ',' << c << ',' << a(r, c).real() << ',' << a(r, c).imag() << '\n';
    }
}

}  // namespace lowrank
