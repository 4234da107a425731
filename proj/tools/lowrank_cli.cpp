#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "lowrank/harness.hpp"

using namespace lowrank;

namespace {

struct CommonArgs
{
    std::string config;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    Index threads = 0;
    std::string trace;
};

KeyValueConfig load_config(const CommonArgs& a)
{
    KeyValueConfig cfg;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in)
            throw std::runtime_error("cannot open config '" + a.config + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        cfg = KeyValueConfig::parse(buf.str());
    }
    if (a.seed_given)
        cfg.set("seed", std::to_string(a.seed));
    if (a.threads > 0)
        cfg.set("threads", std::to_string(a.threads));
    return cfg;
}

class Output
{
public:
    explicit Output(const std::string& path)
    {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_)
                throw std::runtime_error("cannot open output '" + path + "'");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

Cell first_cell(const ExperimentConfig& cfg) { return grid_cells(cfg, false).front(); }

int run_trial_cmd(const CommonArgs& a)
{
    const KeyValueConfig kv = load_config(a);
    const ExperimentConfig cfg = ExperimentConfig::from_config(kv);
    Cell cell = first_cell(cfg);
    cell.tau = cfg.tau_axis.front();
    const Index t = kv.get_int("trial", 0);

    std::unique_ptr<std::ofstream> trace;
    if (!a.trace.empty()) {
        trace = std::make_unique<std::ofstream>(a.trace);
        if (!*trace)
            throw std::runtime_error("cannot open trace '" + a.trace + "'");
    }
    SweepResult res;
    res.kind = "trial";
    res.cells = {cell};
    res.records = {run_trial(cfg, cell, t, trace.get())};
    res.summaries = {summarize(cell, res.records)};
    Output out(a.out);
    write_csv_header(out.stream(), cfg, "trial");
    write_sweep_csv(out.stream(), res);
    if (!res.records.front().error.empty())
        std::cerr << "trial failed: " << res.records.front().error << '\n';
    return 0;
}

int run_sweep_cmd(const CommonArgs& a, const std::string& which)
{
    const ExperimentConfig cfg = ExperimentConfig::from_config(load_config(a));
    SweepResult res;
    if (which == "sweep-transition")
        res = phase_transition_sweep(cfg);
    else if (which == "sweep-noise")
        res = noise_sweep(cfg);
    else
        res = certification_sweep(cfg);
    Output out(a.out);
    write_csv_header(out.stream(), cfg, which);
    write_sweep_csv(out.stream(), res);
    for (const auto& s : res.summaries)
        std::cerr << "cell " << s.cell.index << " (m=" << s.cell.m << ", rank=" << s.cell.rank
                  << ", tau=" << s.cell.tau << "): " << s.successes << '/' << s.trials << '\n';
    if (std::isfinite(res.slope))
        std::cerr << "log-log slope " << res.slope << '\n';
    return 0;
}

int run_certify_cmd(const CommonArgs& a)
{
    const KeyValueConfig kv = load_config(a);
    ExperimentConfig cfg = ExperimentConfig::from_config(kv);
    require(cfg.kind == EnsembleKind::entry_sampling || cfg.kind == EnsembleKind::gaussian,
            "certify: needs a completion or gaussian ensemble");
    const Cell cell = first_cell(cfg);
    const Instance inst = make_instance(cfg, cell, kv.get_int("trial", 0));
    const Index legs = kv.has("legs") ? cfg.legs : default_golfing_legs(inst.op.n1(), inst.op.n2());
    const double opn = operator_norm(inst.op).value;
    const GolfingTrace golf = golfing_construct(inst.op, inst.anchor, legs, cfg.seed);
    const CertificateReport rep = validate_approx_certificate(golf.z, inst.op, inst.anchor, opn);
    const RipReport rip = rip_on_tangent(inst.op, TangentSpace(inst.anchor));

    Output out(a.out);
    std::ostream& os = out.stream();
    write_csv_header(os, cfg, "certify");
    os << "# legs = " << legs << '\n';
    os << "# z_norm = " << rep.z_norm << " pass = " << rep.pass_z << '\n';
    os << "# alpha = " << rep.alpha << " pass = " << rep.pass_alpha << '\n';
    os << "# offtangent_norm = " << rep.offtangent_norm << " pass = " << rep.pass_offtangent << '\n';
    os << "# op_norm = " << rep.op_norm << '\n';
    os << "# delta = " << rip.delta << '\n';
    if (rip.delta < 0.75) {
        const ExactCertificate cert = putting(golf.z, inst.op, inst.anchor, rip, opn);
        os << "# exact_correction_norm = " << cert.correction_norm << " bound = " << cert.correction_bound << '\n';
        os << "# exact_valid = " << validate_exact_certificate(cert, inst.op, inst.anchor, rip) << '\n';
    } else {
        os << "# exact_valid = 0 (delta >= 3/4)\n";
    }
    golf.write_csv(os);
    std::cerr << "approximate certificate " << (rep.passes() ? "passes" : "fails") << '\n';
    return 0;
}

int run_estimate_cmd(const CommonArgs& a)
{
    const KeyValueConfig kv = load_config(a);
    const ExperimentConfig cfg = ExperimentConfig::from_config(kv);
    const Cell cell = first_cell(cfg);
    const Instance inst = make_instance(cfg, cell, kv.get_int("trial", 0));
    require(inst.anchor.rank() > 0, "estimate: needs a single-block anchor");
    const std::string which = kv.get_string("estimator", "all");
    const Index n_samples = kv.get_int("n_samples", 200);
    const Index n_outer = kv.get_int("n_outer", 200);
    const Index n_inner = kv.get_int("n_inner", 20);
    const Index n1 = inst.op.n1();
    const Index n2 = inst.op.n2();
    const ScalarField field = detail::anchor_field(inst.anchor);

    std::ostringstream params;
    params << "kind=" << to_string(cfg.kind) << ";n1=" << n1 << ";n2=" << n2 << ";m=" << inst.op.m()
           << ";rank=" << inst.anchor.rank();
    const std::string p = params.str();
    std::vector<EstimateRow> rows;
    auto want = [&](const char* name) { return which == "all" || which == name; };

    if (want("conic")) {
        Philox rng(Philox::derive_seed(cfg.seed, 11));
        const double v = min_conic_singular_value_estimate(inst.op, inst.anchor, n_samples, rng);
        rows.push_back({"min_conic_singular_value", p, v, n_samples, cfg.seed, BoundSide::upper});
    }
    if (want("width")) {
        Philox rng(Philox::derive_seed(cfg.seed, 12));
        const double v = gaussian_width_estimate(descent_cone_set({inst.anchor}), n1, n2, n_outer, n_inner, rng, field);
        rows.push_back({"gaussian_width", p + ";n_inner=" + std::to_string(n_inner), v, n_outer, cfg.seed,
                        BoundSide::lower});
    }
    if (want("small_ball")) {
        Philox rng(Philox::derive_seed(cfg.seed, 13));
        SmallBallConfig sb;
        sb.xi = kv.get_double("xi", sb.xi);
        sb.n_samples = n_samples;
        sb.m = inst.op.m();
        const SvdFactors anchor = inst.anchor;
        const MatrixSampler meas = [n1, n2, field](Philox& r) { return gaussian_matrix(n1, n2, r, field); };
        const MatrixSampler elem = [anchor](Philox& r) { return sample_descent_direction(anchor, r).direction; };
        const SmallBallEstimates e = small_ball_estimates(meas, elem, sb, rng);
        std::ostringstream xi;
        xi << ";xi=" << e.xi;
        rows.push_back({"small_ball_q_xi", p + xi.str(), e.q_xi, e.n_samples, cfg.seed, BoundSide::estimate});
        rows.push_back({"small_ball_w_m", p + xi.str(), e.w_m, sb.n_width, cfg.seed, BoundSide::estimate});
    }
    if (want("operator_norm")) {
        const NormEstimate e = operator_norm(inst.op);
        rows.push_back({"operator_norm", p, e.value, e.iterations, cfg.seed, BoundSide::estimate});
    }
    require(!rows.empty(), "estimate: unknown estimator '" + which + "'");

    Output out(a.out);
    write_csv_header(out.stream(), cfg, "estimate");
    write_estimates_csv(rows, out.stream());
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Low-rank recovery experiments"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    CommonArgs args;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config, "key = value config file");
        sub->add_option("--seed", args.seed, "master seed (overrides config)")->each([&](const std::string&) {
            args.seed_given = true;
        });
        sub->add_option("--out", args.out, "CSV output path (default stdout)");
        sub->add_option("--threads", args.threads, "worker threads")->check(CLI::PositiveNumber);
    };

    auto* trial = app.add_subcommand("trial", "single recovery trial");
    add_common(trial);
    trial->add_option("--trace", args.trace, "per-iteration solver trace CSV");
    auto* transition = app.add_subcommand("sweep-transition", "success rate over the (m, rank) grid");
    add_common(transition);
    auto* noise = app.add_subcommand("sweep-noise", "error against noise level");
    add_common(noise);
    auto* certsweep = app.add_subcommand("sweep-certify", "golfing and putting across seeds");
    add_common(certsweep);
    auto* certify = app.add_subcommand("certify", "dual certificate for one instance");
    add_common(certify);
    auto* estimate = app.add_subcommand("estimate", "geometry estimators");
    add_common(estimate);

    CLI11_PARSE(app, argc, argv);

    try {
        if (trial->parsed())
            return run_trial_cmd(args);
        if (transition->parsed())
            return run_sweep_cmd(args, "sweep-transition");
        if (noise->parsed())
            return run_sweep_cmd(args, "sweep-noise");
        if (certsweep->parsed())
            return run_sweep_cmd(args, "sweep-certify");
        if (certify->parsed())
            return run_certify_cmd(args);
        if (estimate->parsed())
            return run_estimate_cmd(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
