#pragma once

// Experiment runner: single trials, phase-transition grids, noise sweeps and
// certification studies, all driven by a flat key-value config and written
// as CSV with a '#' provenance header.
//
// Seeds: master -> cell (derive_seed(master, cell)) -> trial
// (derive_seed(cell, trial)). The signal stream does not depend on m, so
// refreshing the ensemble along the m axis keeps the same anchor.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lowrank/certificates.hpp"
#include "lowrank/config.hpp"
#include "lowrank/geometry.hpp"
#include "lowrank/operators.hpp"
#include "lowrank/solvers.hpp"

namespace lowrank {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr double kInclusionTol = 1e-4;  // noiseless failure for certificate inclusion

enum class SignalModel { haar, flat, spike };

inline std::string to_string(SignalModel s)
{
    switch (s) {
    case SignalModel::haar: return "haar";
    case SignalModel::flat: return "flat";
    case SignalModel::spike: return "spike";
    }
    return "haar";
}

inline SignalModel parse_signal_model(const std::string& s)
{
    if (s == "haar")
        return SignalModel::haar;
    if (s == "flat")
        return SignalModel::flat;
    if (s == "spike")
        return SignalModel::spike;
    throw std::invalid_argument("unknown signal model '" + s + "'");
}

struct ExperimentConfig
{
    EnsembleKind kind = EnsembleKind::gaussian;
    PhaseModel model = PhaseModel::gaussian;
    ScalarField field = ScalarField::real;

    // axes; for blind deconvolution and demixing m is L and rank is the
    // number of components, n sets K = N unless K / N are given
    std::vector<Index> m_axis{100};
    std::vector<Index> rank_axis{1};
    std::vector<double> tau_axis{0.0};  // noise level relative to ||A(X0)||
    std::vector<Index> n_axis{10};
    Index K = 0;
    Index N = 0;

    SignalModel signal = SignalModel::haar;
    double mu = std::numeric_limits<double>::infinity();    // coherence filter
    double mu_h = std::numeric_limits<double>::infinity();  // blind-deconvolution incoherence filter

    SolverOptions solver;
    Index trials = 1;
    std::uint64_t seed = 0;
    double success_threshold = 1e-3;
    double noisy_factor = 3.0;  // noisy success: error <= factor * (2 tau / lambda_hat)
    Index conic_samples = 200;
    Index legs = 3;
    bool certify = false;
    Index threads = 1;

    std::string canonical;  // sorted config text the run was built from, minus `threads`

    std::uint64_t hash() const { return fnv1a(canonical); }

    void validate() const
    {
        require(!m_axis.empty() && !rank_axis.empty() && !tau_axis.empty() && !n_axis.empty(),
                "config: every sweep axis needs at least one value");
        require(trials >= 1, "config: trials must be >= 1");
        for (auto v : m_axis)
            require(v >= 1, "config: m values must be positive");
        for (auto v : rank_axis)
            require(v >= 1, "config: rank values must be positive");
        for (auto v : n_axis)
            require(v >= 1, "config: n values must be positive");
        for (auto v : tau_axis)
            require(v >= 0.0, "config: tau values must be nonnegative");
        require(legs >= 1, "config: legs must be >= 1");
        require(threads >= 1, "config: threads must be >= 1");
        solver.validate();
    }

    static ExperimentConfig from_config(const KeyValueConfig& cfg)
    {
        ExperimentConfig c;
        for (const auto& [k, v] : cfg.entries())
            if (k != "threads")
                c.canonical += k + " = " + v + "\n";
        c.kind = parse_ensemble_kind(cfg.get_string("kind", "gaussian"));
        c.model = parse_phase_model(cfg.get_string("model", "gaussian"));
        const bool complex_kind = c.kind == EnsembleKind::blind_deconv || c.kind == EnsembleKind::demixing
                                  || c.kind == EnsembleKind::phase_retrieval;
        c.field = parse_scalar_field(cfg.get_string("field", complex_kind ? "complex" : "real"));
        auto ints = [&](const char* key, std::vector<Index> fallback) {
            if (!cfg.has(key))
                return fallback;
            std::vector<Index> out;
            for (auto v : cfg.get_int_list(key))
                out.push_back(static_cast<Index>(v));
            return out;
        };
        const char* m_key = cfg.has("L") && !cfg.has("m") ? "L" : "m";
        c.m_axis = ints(m_key, c.m_axis);
        c.rank_axis = ints(cfg.has("rank") ? "rank" : "r", c.rank_axis);
        c.n_axis = ints("n", c.n_axis);
        if (cfg.has("tau"))
            c.tau_axis = cfg.get_double_list("tau");
        c.K = cfg.get_int("K", 0);
        c.N = cfg.get_int("N", 0);
        c.signal = parse_signal_model(cfg.get_string("signal", "haar"));
        c.mu = cfg.get_double("mu", c.mu);
        c.mu_h = cfg.get_double("mu_h", c.mu_h);
        c.solver.max_iters = cfg.get_int("max_iters", c.solver.max_iters);
        c.solver.abs_tol = cfg.get_double("abs_tol", c.solver.abs_tol);
        c.solver.rel_tol = cfg.get_double("rel_tol", c.solver.rel_tol);
        c.solver.penalty = cfg.get_double("penalty", c.solver.penalty);
        c.solver.adaptive_penalty = cfg.get_bool("adaptive_penalty", c.solver.adaptive_penalty);
        c.solver.verbosity = cfg.get_int("verbosity", c.solver.verbosity);
        c.trials = cfg.get_int("trials", c.trials);
        c.seed = cfg.get_u64("seed", c.seed);
        c.success_threshold = cfg.get_double("success_threshold", c.success_threshold);
        c.noisy_factor = cfg.get_double("noisy_factor", c.noisy_factor);
        c.conic_samples = cfg.get_int("conic_samples", c.conic_samples);
        c.legs = cfg.get_int("legs", c.legs);
        c.certify = cfg.get_bool("certify", c.certify);
        c.threads = cfg.get_int("threads", c.threads);
        c.validate();
        return c;
    }

    static ExperimentConfig parse(const std::string& text) { return from_config(KeyValueConfig::parse(text)); }
};

struct Cell
{
    Index index = 0;
    Index m = 0;
    Index rank = 1;
    double tau = 0.0;
    Index n = 0;
};

struct TrialRecord
{
    Cell cell;
    Index trial = 0;
    std::uint64_t seed = 0;
    double rel_error = std::numeric_limits<double>::quiet_NaN();
    double signal_error = std::numeric_limits<double>::quiet_NaN();
    double threshold = 0.0;
    bool success = false;
    Index iterations = 0;
    SolverStatus status = SolverStatus::max_iters;
    double residual = 0.0;
    double objective = 0.0;
    double truth_objective = 0.0;
    double conic_estimate = std::numeric_limits<double>::quiet_NaN();
    bool noise_bound_ok = true;
    double wall_time = 0.0;
    std::string error;

    // certification (filled when requested)
    bool certified = false;
    double coherence = std::numeric_limits<double>::quiet_NaN();
    CertificateReport approx;
    double delta = std::numeric_limits<double>::quiet_NaN();
    bool alpha_decay_ok = false;
    bool putting_ok = false;
    bool exact_valid = false;
};

// ---------------------------------------------------------------------------
// Statistics

struct Interval
{
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval (z = 1.96 for 95%).
inline Interval wilson_interval(Index successes, Index trials, double z = 1.959963984540054)
{
    if (trials <= 0)
        return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

inline double median(std::vector<double> v)
{
    require(!v.empty(), "median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

struct LinearFit
{
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    require(x.size() == y.size() && x.size() >= 2, "linear_fit: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0.0, "linear_fit: x values must not all coincide");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

/// First crossing of `level` by linear interpolation of rate(x); NaN if none.
inline double crossing_point(const std::vector<double>& x, const std::vector<double>& rate, double level = 0.5)
{
    require(x.size() == rate.size(), "crossing_point: size mismatch");
    if (!x.empty() && rate[0] >= level)
        return x[0];
    for (std::size_t i = 1; i < x.size(); ++i)
        if (rate[i - 1] < level && rate[i] >= level)
            return x[i - 1] + (level - rate[i - 1]) * (x[i] - x[i - 1]) / (rate[i] - rate[i - 1]);
    return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Deterministic parallel map

/// Runs fn(i) for i in [0, n) on `threads` workers; results land at index i.
template <typename T>
std::vector<T> parallel_map(Index n, Index threads, const std::function<T(Index)>& fn)
{
    std::vector<T> out(static_cast<std::size_t>(n));
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index i = next++; i < n; i = next++)
            out[static_cast<std::size_t>(i)] = fn(i);
    };
    const Index k = std::max<Index>(1, std::min(threads, n));
    if (k == 1) {
        worker();
        return out;
    }
    std::vector<std::thread> pool;
    for (Index t = 0; t < k; ++t)
        pool.emplace_back(worker);
    for (auto& th : pool)
        th.join();
    return out;
}

// ---------------------------------------------------------------------------
// Instances

inline std::uint64_t cell_seed(std::uint64_t master, Index cell)
{
    return Philox::derive_seed(master, static_cast<std::uint64_t>(cell));
}

inline std::uint64_t trial_seed(std::uint64_t master, Index cell, Index trial)
{
    return Philox::derive_seed(cell_seed(master, cell), static_cast<std::uint64_t>(trial));
}

/// Independent of m and tau.
inline std::uint64_t signal_seed(std::uint64_t master, Index n, Index rank, Index trial)
{
    const std::uint64_t base = Philox::derive_seed(master ^ 0x5167a1ull, static_cast<std::uint64_t>(n * 4096 + rank));
    return Philox::derive_seed(base, static_cast<std::uint64_t>(trial));
}

namespace detail {

inline Matrix flat_isometry(Index n, Index r, Philox& rng, ScalarField field)
{
    // random row signs times the leading DFT columns
    require(r <= n, "flat signal: rank exceeds dimension");
    Matrix out(n, r);
    if (field == ScalarField::real && r == 1) {
        for (Index i = 0; i < n; ++i)
            out(i, 0) = rng.rademacher() / std::sqrt(static_cast<double>(n));
        return out;
    }
    Matrix f = unitary_dft(n);
    if (field == ScalarField::real) {
        // real Fourier basis: constant, then sqrt 2 Re / Im pairs; entries at most sqrt(2 / n)
        require(r <= (n + 1) / 2, "flat signal: real rank must be at most (n + 1) / 2");
        const Matrix dft = f;
        for (Index j = 1; j < r; ++j) {
            const Index k = (j + 1) / 2;
            const RealVector part = j % 2 ? RealVector(dft.col(k).real()) : RealVector(dft.col(k).imag());
            f.col(j) = std::sqrt(2.0) * part.cast<Scalar>();
        }
    }
    for (Index i = 0; i < n; ++i) {
        const Scalar s = field == ScalarField::real ? Scalar(rng.rademacher()) : rng.unimodular();
        for (Index j = 0; j < r; ++j)
            out(i, j) = s * f(i, j);
    }
    return out;
}

inline Matrix signal_isometry(SignalModel model, Index n, Index r, double mu, Philox& rng, ScalarField field)
{
    switch (model) {
    case SignalModel::spike: {
        Matrix out = Matrix::Zero(n, r);
        for (Index j = 0; j < r; ++j)
            out(j, j) = 1.0;
        return out;
    }
    case SignalModel::flat: return flat_isometry(n, r, rng, field);
    case SignalModel::haar:
        for (int attempt = 0; attempt < 10000; ++attempt) {
            Matrix w = random_isometry(n, r, rng, field);
            if (coherence(w) <= mu)
                return w;
        }
        throw std::runtime_error("signal: no Haar isometry met the coherence target");
    }
    throw std::invalid_argument("signal: unknown model");
}

inline Vector incoherent_vector(Index k, double mu_h, const Matrix& b_rows, Philox& rng)
{
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vector h = gaussian_vector(k, rng, ScalarField::complex);
        if (!std::isfinite(mu_h) || blind_deconv_incoherence(h, b_rows) <= mu_h)
            return h / h.norm();
    }
    throw std::runtime_error("signal: no vector met the incoherence target");
}

}  // namespace detail

/// Ground truth and measurement operator of one trial.
struct Instance
{
    MeasurementOperator op;
    std::vector<Matrix> truth;  // diagonal blocks
    Matrix x0;
    Vector signal;              // phase retrieval only
    SvdFactors anchor;          // single-block kinds
    Vector y;
    double tau = 0.0;
};

inline Index dim_k(const ExperimentConfig& cfg, const Cell& c) { return cfg.K > 0 ? cfg.K : c.n; }
inline Index dim_n(const ExperimentConfig& cfg, const Cell& c) { return cfg.N > 0 ? cfg.N : c.n; }

inline Instance make_instance(const ExperimentConfig& cfg, const Cell& cell, Index trial)
{
    const std::uint64_t ts = trial_seed(cfg.seed, cell.index, trial);
    const std::uint64_t op_seed = Philox::derive_seed(ts, 0);
    Philox sig(signal_seed(cfg.seed, cell.n, cell.rank, trial));
    Philox noise(Philox::derive_seed(ts, 2));
    const Index n = cell.n;
    const Index r = cell.rank;

    auto build_op = [&]() -> MeasurementOperator {
        switch (cfg.kind) {
        case EnsembleKind::gaussian: return make_gaussian_ensemble(n, n, cell.m, op_seed, cfg.field);
        case EnsembleKind::entry_sampling: return make_completion_ensemble(n, n, cell.m, op_seed);
        case EnsembleKind::blind_deconv:
            return make_blind_deconv_ensemble(dim_k(cfg, cell), dim_n(cfg, cell), cell.m, op_seed);
        case EnsembleKind::demixing:
            return make_demixing_ensemble(dim_k(cfg, cell), dim_n(cfg, cell), cell.m, r, op_seed);
        case EnsembleKind::phase_retrieval: return make_phase_retrieval_ensemble(n, cell.m, cfg.model, op_seed);
        }
        throw std::invalid_argument("unknown ensemble kind");
    };
    Instance inst{build_op(), {}, {}, {}, {}, {}, 0.0};
    const MeasurementOperator& op = inst.op;

    switch (cfg.kind) {
    case EnsembleKind::gaussian:
    case EnsembleKind::entry_sampling: {
        const Matrix u = detail::signal_isometry(cfg.signal, n, r, cfg.mu, sig, cfg.field);
        const Matrix v = detail::signal_isometry(cfg.signal, n, r, cfg.mu, sig, cfg.field);
        inst.anchor = SvdFactors::from_isometries(u, v);
        inst.x0 = inst.anchor.reconstruct();
        inst.truth = {inst.x0};
        break;
    }
    case EnsembleKind::blind_deconv:
    case EnsembleKind::demixing: {
        std::vector<const BlindDeconvPayload*> comps;
        if (const auto* p = std::get_if<BlindDeconvPayload>(&op.payload()))
            comps.push_back(p);
        else
            for (const auto& c : std::get<DemixingPayload>(op.payload()).components)
                comps.push_back(&c);
        for (const auto* c : comps) {
            const Vector h = detail::incoherent_vector(c->K, cfg.mu_h, c->b, sig);
            Vector mv = gaussian_vector(c->N, sig, ScalarField::complex);
            mv /= mv.norm();
            inst.truth.push_back(h * mv.adjoint());
        }
        inst.x0 = op.from_design(op.from_blocks(inst.truth));
        if (inst.truth.size() == 1)
            inst.anchor = SvdFactors::from_matrix(inst.x0);
        break;
    }
    case EnsembleKind::phase_retrieval: {
        inst.signal = gaussian_vector(n, sig, ScalarField::complex);
        inst.signal /= inst.signal.norm();
        inst.x0 = inst.signal * inst.signal.adjoint();
        inst.truth = {inst.x0};
        inst.anchor = SvdFactors::from_matrix(inst.x0);
        break;
    }
    }

    inst.y = op.apply(inst.x0);
    if (cfg.kind == EnsembleKind::phase_retrieval)
        inst.y = inst.y.real().cast<Scalar>();
    if (cell.tau > 0.0) {
        inst.tau = cell.tau * inst.y.norm();
        const bool real_noise = cfg.kind == EnsembleKind::phase_retrieval
                                || (cfg.field == ScalarField::real && cfg.kind != EnsembleKind::blind_deconv
                                    && cfg.kind != EnsembleKind::demixing);
        Vector e = gaussian_vector(op.m(), noise, real_noise ? ScalarField::real : ScalarField::complex);
        inst.y += (inst.tau / e.norm()) * e;
    }
    return inst;
}

// ---------------------------------------------------------------------------
// Trials

inline void certify_instance(const ExperimentConfig& cfg, const Instance& inst, TrialRecord& rec)
{
    const MeasurementOperator& op = inst.op;
    rec.certified = true;
    rec.coherence = std::max(coherence(inst.anchor.u), coherence(inst.anchor.v));
    const double opn = operator_norm(op).value;
    const GolfingTrace golf = golfing_construct(op, inst.anchor, cfg.legs);
    rec.approx = validate_approx_certificate(golf.z, op, inst.anchor, opn);
    rec.alpha_decay_ok = true;
    for (std::size_t q = 1; q < golf.alpha.size(); ++q)
        rec.alpha_decay_ok = rec.alpha_decay_ok && golf.alpha[q] * 1.5 <= golf.alpha[q - 1];
    const TangentSpace t(inst.anchor);
    RipOptions ro;
    ro.method = t.dimension() <= ro.dense_cap ? RipMethod::dense : RipMethod::lanczos;
    const RipReport rip = rip_on_tangent(op, t, ro);
    rec.delta = rip.delta;
    if (rip.delta < 0.75) {
        const ExactCertificate cert = putting(golf.z, op, inst.anchor, rip, opn);
        rec.putting_ok = cert.cg_converged && cert.bound_holds;
        rec.exact_valid = validate_exact_certificate(cert, op, inst.anchor, rip);
    }
}

/// Deterministic given (master seed, cell, trial); failures are recorded.
inline TrialRecord run_trial(const ExperimentConfig& cfg, const Cell& cell, Index trial,
                             std::ostream* trace = nullptr)
{
    TrialRecord rec;
    rec.cell = cell;
    rec.trial = trial;
    rec.seed = trial_seed(cfg.seed, cell.index, trial);
    const auto start = std::chrono::steady_clock::now();
    try {
        const Instance inst = make_instance(cfg, cell, trial);
        const MeasurementOperator& op = inst.op;
        SolverOptions so = cfg.solver;
        so.trace = trace;
        RecoveryResult res;
        if (cfg.kind == EnsembleKind::phase_retrieval) {
            res = psd_l1_fit(op, inst.y.real(), so);
            rec.signal_error = phase_aligned_error(extract_signal(res.x_hat), inst.signal) / inst.signal.norm();
        } else {
            res = nucnorm_min(op, inst.y, inst.tau, so);
        }
        rec.iterations = res.iterations;
        rec.status = res.status;
        rec.residual = res.residual;
        rec.objective = res.objective;
        double truth_obj = 0.0;
        for (const auto& b : inst.truth)
            truth_obj += nuclear_norm(b);
        rec.truth_objective = truth_obj;
        rec.rel_error = block_error(res.blocks, inst.truth, true);

        rec.threshold = cfg.success_threshold;
        if (cell.tau > 0.0 && cfg.kind != EnsembleKind::phase_retrieval) {
            const double x0n = inst.x0.norm();
            if (inst.truth.size() == 1) {
                Philox crng(Philox::derive_seed(rec.seed, 3));
                rec.conic_estimate = min_conic_singular_value_estimate(op, inst.anchor, cfg.conic_samples, crng);
                if (rec.conic_estimate > 0.0)
                    rec.threshold = std::max(rec.threshold,
                                             cfg.noisy_factor * 2.0 * inst.tau / (rec.conic_estimate * x0n));
            }
            // error direction Z = Xhat - X0 lies in the descent cone whenever
            // the objective did not exceed the truth's; then ||A(Z)|| <= 2 tau
            const Matrix z = res.x_hat - inst.x0;
            const bool in_cone = res.objective <= truth_obj * (1.0 + 1e-6);
            rec.noise_bound_ok = !in_cone || op.apply(z).norm() <= 2.0 * inst.tau * (1.0 + 1e-6) + 1e-9 * inst.y.norm();
        }
        rec.success = rec.rel_error <= rec.threshold;

        if (cfg.certify && cfg.kind != EnsembleKind::demixing && cfg.kind != EnsembleKind::phase_retrieval)
            certify_instance(cfg, inst, rec);
    } catch (const std::exception& e) {
        rec.error = e.what();
        rec.success = false;
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

// ---------------------------------------------------------------------------
// Sweeps

struct CellSummary
{
    Cell cell;
    Index trials = 0;
    Index successes = 0;
    double rate = 0.0;
    Interval wilson;
    double median_error = std::numeric_limits<double>::quiet_NaN();
    Index approx_passes = 0;
    Index exact_valid = 0;
    Index inclusion_violations = 0;  // valid exact certificate but the noiseless solve failed
    Index noise_bound_violations = 0;
};

struct SweepResult
{
    std::string kind;  // trial | transition | noise | certify
    std::vector<Cell> cells;
    std::vector<TrialRecord> records;
    std::vector<CellSummary> summaries;
    double slope = std::numeric_limits<double>::quiet_NaN();  // noise sweeps
    double slope_r2 = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<Cell> grid_cells(const ExperimentConfig& cfg, bool all_tau)
{
    std::vector<Cell> cells;
    const std::vector<double> taus = all_tau ? cfg.tau_axis : std::vector<double>{cfg.tau_axis.front()};
    for (Index n : cfg.n_axis)
        for (Index r : cfg.rank_axis)
            for (double tau : taus)
                for (Index m : cfg.m_axis) {
                    Cell c;
                    c.index = static_cast<Index>(cells.size());
                    c.m = m;
                    c.rank = r;
                    c.tau = tau;
                    c.n = n;
                    cells.push_back(c);
                }
    return cells;
}

inline CellSummary summarize(const Cell& cell, const std::vector<TrialRecord>& recs)
{
    CellSummary s;
    s.cell = cell;
    std::vector<double> errors;
    for (const auto& r : recs) {
        if (r.cell.index != cell.index)
            continue;
        ++s.trials;
        s.successes += r.success ? 1 : 0;
        if (std::isfinite(r.rel_error))
            errors.push_back(r.rel_error);
        if (r.certified) {
            s.approx_passes += r.approx.passes() ? 1 : 0;
            s.exact_valid += r.exact_valid ? 1 : 0;
            if (r.exact_valid && !(r.rel_error <= kInclusionTol))
                ++s.inclusion_violations;
        }
        s.noise_bound_violations += r.noise_bound_ok ? 0 : 1;
    }
    s.rate = s.trials ? static_cast<double>(s.successes) / static_cast<double>(s.trials) : 0.0;
    s.wilson = wilson_interval(s.successes, s.trials);
    if (!errors.empty())
        s.median_error = median(errors);
    return s;
}

inline SweepResult run_sweep(const ExperimentConfig& cfg, std::vector<Cell> cells, std::string kind)
{
    cfg.validate();
    SweepResult out;
    out.kind = std::move(kind);
    out.cells = std::move(cells);
    const Index per = cfg.trials;
    const Index total = static_cast<Index>(out.cells.size()) * per;
    std::function<TrialRecord(Index)> job = [&](Index k) {
        return run_trial(cfg, out.cells[static_cast<std::size_t>(k / per)], k % per);
    };
    out.records = parallel_map<TrialRecord>(total, cfg.threads, job);
    for (const auto& c : out.cells)
        out.summaries.push_back(summarize(c, out.records));
    return out;
}

inline SweepResult phase_transition_sweep(const ExperimentConfig& cfg)
{
    return run_sweep(cfg, grid_cells(cfg, false), "transition");
}

/// Requires at least three tau values spanning two decades among the
/// positive ones; fits log(median error) against log(tau).
inline SweepResult noise_sweep(const ExperimentConfig& cfg)
{
    std::vector<double> pos;
    for (double t : cfg.tau_axis)
        if (t > 0.0)
            pos.push_back(t);
    require(cfg.tau_axis.size() >= 3 && pos.size() >= 2, "noise sweep: need >= 3 tau values, >= 2 positive");
    const auto [lo, hi] = std::minmax_element(pos.begin(), pos.end());
    require(*hi / *lo >= 100.0 * (1.0 - 1e-12), "noise sweep: tau axis must span at least two decades");
    SweepResult out = run_sweep(cfg, grid_cells(cfg, true), "noise");
    std::vector<double> lx, ly;
    for (const auto& s : out.summaries)
        if (s.cell.tau > 0.0 && std::isfinite(s.median_error) && s.median_error > 0.0) {
            lx.push_back(std::log(s.cell.tau));
            ly.push_back(std::log(s.median_error));
        }
    if (lx.size() >= 2) {
        const LinearFit f = linear_fit(lx, ly);
        out.slope = f.slope;
        out.slope_r2 = f.r2;
    }
    return out;
}

inline SweepResult certification_sweep(ExperimentConfig cfg)
{
    require(cfg.kind == EnsembleKind::entry_sampling || cfg.kind == EnsembleKind::gaussian,
            "certification sweep: needs an ensemble with i.i.d. rows (completion or gaussian)");
    cfg.certify = true;
    for (auto& t : cfg.tau_axis)
        t = 0.0;
    return run_sweep(cfg, grid_cells(cfg, false), "certify");
}

// ---------------------------------------------------------------------------
// CSV

inline void write_csv_header(std::ostream& out, const ExperimentConfig& cfg, const std::string& command)
{
    std::ostringstream hash;
    hash << "0x" << std::hex << std::setw(16) << std::setfill('0') << cfg.hash();
    out << "# lowrank " << kVersion << '\n';
    out << "# command = " << command << '\n';
    out << "# config_hash = " << hash.str() << '\n';
    out << "# seed = " << cfg.seed << '\n';
    out << "# threads = " << cfg.threads << '\n';
    out << "# kind = " << to_string(cfg.kind) << '\n';
    out << "# success_threshold = " << cfg.success_threshold << " (noiseless); noisy cells use max(threshold, "
        << cfg.noisy_factor << " * 2 tau / lambda_hat / ||X0||)\n";
}

inline std::string fmt(double v)
{
    if (std::isnan(v))
        return "";
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& res)
{
    out << "record,cell,m,rank,n,tau,trial,seed,rel_error,signal_error,threshold,success,iterations,status,"
           "residual,objective,truth_objective,conic_estimate,noise_bound_ok,coherence,z_norm,alpha,offtangent,op_norm,"
           "pass_z,pass_alpha,pass_offtangent,delta,alpha_decay_ok,putting_ok,exact_valid,trials,successes,rate,"
           "wilson_lo,wilson_hi,median_error,wall_time,error\n";
    auto b = [](bool v) { return v ? "1" : "0"; };
    for (const auto& r : res.records) {
        const Cell& c = r.cell;
        out << "trial," << c.index << ',' << c.m << ',' << c.rank << ',' << c.n << ',' << fmt(c.tau) << ','
            << r.trial << ',' << r.seed << ',' << fmt(r.rel_error) << ',' << fmt(r.signal_error) << ','
            << fmt(r.threshold) << ',' << b(r.success) << ',' << r.iterations << ',' << to_string(r.status) << ','
            << fmt(r.residual) << ',' << fmt(r.objective) << ',' << fmt(r.truth_objective) << ','
            << fmt(r.conic_estimate) << ',' << b(r.noise_bound_ok) << ',';
        if (r.certified)
            out << fmt(r.coherence) << ',' << fmt(r.approx.z_norm) << ',' << fmt(r.approx.alpha) << ','
                << fmt(r.approx.offtangent_norm) << ',' << fmt(r.approx.op_norm) << ',' << b(r.approx.pass_z) << ','
                << b(r.approx.pass_alpha) << ',' << b(r.approx.pass_offtangent) << ',' << fmt(r.delta) << ','
                << b(r.alpha_decay_ok) << ',' << b(r.putting_ok) << ',' << b(r.exact_valid) << ',';
        else
            out << ",,,,,,,,,,,,";
        out << ",,,,,," << fmt(r.wall_time) << ',' << csv_escape(r.error) << '\n';
    }
    for (const auto& s : res.summaries) {
        const Cell& c = s.cell;
        out << "summary," << c.index << ',' << c.m << ',' << c.rank << ',' << c.n << ',' << fmt(c.tau)
            << ",,,,,,,,,,,,,,,,,,,,,,,,,," << s.trials << ',' << s.successes << ',' << fmt(s.rate) << ','
            << fmt(s.wilson.lo) << ',' << fmt(s.wilson.hi) << ',' << fmt(s.median_error) << ",,\n";
    }
    if (std::isfinite(res.slope))
        out << "# loglog_slope = " << res.slope << " (r2 = " << res.slope_r2 << ")\n";
}

}  // namespace lowrank
