#include "bsnsch/common.hpp"
#include "bsnsch/io.hpp"
#include "bsnsch/runner.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace bsnsch;

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    int steps = -1;
    double dt = 0.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int stride = -1;
    bool experimental = false;
    int eig_count = 8;
};

RunConfig load_config(const CliOptions& cli)
{
    RunConfig cfg = cli.config_path.empty() ? RunConfig{} : parse_config(cli.config_path);
    if (cli.steps >= 0) cfg.time.n_steps = cli.steps;
    if (cli.dt > 0.0) cfg.time.dt = cli.dt;
    if (cli.seed_set) cfg.seed = cli.seed;
    if (cli.stride >= 0) cfg.time.output_stride = cli.stride;
    if (cli.experimental) cfg.experimental = true;
    if (!cli.out_dir.empty()) cfg.out_dir = cli.out_dir;
    if (cfg.out_dir.empty()) {
        const char* root = std::getenv("BSNSCH_OUT_ROOT");
        if (root && *root) cfg.out_dir = (std::filesystem::path(root) / "run").string();
    }
    return cfg;
}

int do_run(const RunConfig& cfg, RunMode mode)
{
    const RunOutputs out = run_simulation(cfg, mode, cfg.out_dir, &std::cerr);
    const DiagnosticsRecord& last = out.state.records.back();
    std::cout << "steps: " << last.step << "  t = " << fmt17(last.t) << "\n"
              << "E_total = " << fmt17(last.e_total) << "  combined mass = " << fmt17(last.mass_combined) << "\n"
              << "min separation margin = " << fmt17(out.min_separation) << "\n"
              << "wall seconds = " << fmt17(out.wall_seconds) << "\n";
    if (!cfg.out_dir.empty()) std::cout << "outputs in " << cfg.out_dir << "\n";
    return 0;
}

int do_stokes(const RunConfig& cfg)
{
    const DiskMesh mesh = build_disk_mesh(cfg.mesh.n_rings, cfg.mesh.radius);
    const SpaceOperators ops = build_space_operators(mesh);
    const ValidationReport rep = validate_assumptions(cfg.params, ops, cfg.experimental);
    if (!rep.ok()) throw config_error("configuration rejected; run `verify` for details");
    StokesSolver solver(mesh, ops, cfg.params);

    BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
    BulkVectorField f(mesh.n_vertices());
    Eigen::VectorXd g = Eigen::VectorXd::Ones(mesh.n_boundary());
    const StokesSolution sol = solver.solve_stokes(phase, f, g);

    std::cout << "omega = " << fmt17(sol.state.omega) << "\n"
              << "weak residual = " << fmt17(sol.stats.weak_residual) << "\n"
              << "energy identity defect = " << fmt17(sol.stats.energy_identity) << "\n"
              << "divergence residual = " << fmt17(solver.divergence_residual(sol.state)) << "\n"
              << "kinematics residual = " << fmt17(solver.kinematics_residual(sol.state)) << "\n";
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        VtkPointData data;
        data.scalars.emplace_back("p", sol.state.p);
        const BulkVectorField v = solver.vertex_velocity(sol.state);
        data.vectors = &v;
        write_vtk_fields((std::filesystem::path(cfg.out_dir) / "stokes.vtk").string(), mesh, data);
        std::cout << "fields written to " << cfg.out_dir << "/stokes.vtk\n";
    }
    return 0;
}

int do_eigs(const RunConfig& cfg, int k)
{
    const DiskMesh mesh = build_disk_mesh(cfg.mesh.n_rings, cfg.mesh.radius);
    const SpaceOperators ops = build_space_operators(mesh);
    StokesSolver solver(mesh, ops, cfg.params);
    const EigenPairs pairs = solver.eigenpairs(k);
    const double defect = eigen_orthonormality_defect(solver, pairs);
    std::cout << "index,eigenvalue\n";
    for (int i = 0; i < k; ++i) std::cout << i << "," << fmt17(pairs.values[i]) << "\n";
    std::cout << "orthonormality defect = " << fmt17(defect) << "\n";
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream os(std::filesystem::path(cfg.out_dir) / "eigenvalues.csv");
        os << "index,eigenvalue\n";
        for (int i = 0; i < k; ++i) os << i << "," << fmt17(pairs.values[i]) << "\n";
    }
    if (defect > 1e-8) throw property_error("eigenfield Gram matrix deviates from identity by " + fmt17(defect));
    for (double l : pairs.values)
        if (!(l > 0.0)) throw property_error("nonpositive Stokes eigenvalue " + fmt17(l));
    return 0;
}

int do_convergence(const RunConfig& cfg)
{
    const auto rows = elliptic_convergence_study({8, 16, 32});
    std::cout << "n_rings,h,l2_error,rate,residual\n";
    for (const auto& r : rows)
        std::cout << r.n_rings << "," << fmt17(r.h) << "," << fmt17(r.l2_error) << "," << fmt17(r.rate) << ","
                  << fmt17(r.residual) << "\n";
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream os(std::filesystem::path(cfg.out_dir) / "convergence.csv");
        os << "n_rings,h,l2_error,rate,residual\n";
        for (const auto& r : rows)
            os << r.n_rings << "," << fmt17(r.h) << "," << fmt17(r.l2_error) << "," << fmt17(r.rate) << ","
               << fmt17(r.residual) << "\n";
    }
    const double rate = rows.back().rate;
    if (rate < 1.7 || rate > 2.3)
        throw property_error("elliptic convergence rate " + fmt17(rate) + " outside 2.0 +- 0.3");
    return 0;
}

int do_verify(const RunConfig& cfg)
{
    const auto results = run_verify(cfg);
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        ok = ok && r.pass;
    }
    std::cout << (ok ? "verify: all checks passed\n" : "verify: FAILURES present\n");
    if (!ok) throw property_error("verification suite reported failures");
    return 0;
}

int do_continuous_dependence(const RunConfig& cfg)
{
    const DiskMesh mesh = build_disk_mesh(cfg.mesh.n_rings, cfg.mesh.radius);
    const SpaceOperators ops = build_space_operators(mesh);
    const ValidationReport rep = validate_assumptions(cfg.params, ops, cfg.experimental);
    if (!rep.ok()) throw config_error("configuration rejected; run `verify` for details");

    CoupledOptions options;
    options.ch.dt = cfg.time.dt;
    options.ch.scheme = cfg.scheme.scheme;
    options.ch.newton_tol = cfg.scheme.newton_tol;
    options.ch.max_newton = cfg.scheme.max_newton;
    options.picard_sweeps = cfg.scheme.picard_sweeps;
    options.max_dt_halvings = cfg.scheme.max_dt_halvings;

    const BulkSurfaceField phase0 = make_initial_phase(cfg, mesh);
    const ContinuousDependenceReport rep_cd = continuous_dependence_experiment(
        mesh, ops, cfg.params, options, phase0, cfg.time.dt, cfg.cd.time, cfg.cd.epsilons);

    std::cout << "epsilon,ratio\n";
    for (std::size_t i = 0; i < rep_cd.epsilons.size(); ++i)
        std::cout << fmt17(rep_cd.epsilons[i]) << "," << fmt17(rep_cd.ratios[i]) << "\n";
    std::cout << "max ratio = " << fmt17(rep_cd.max_ratio) << ", spread = " << fmt17(rep_cd.ratio_spread) << "\n";
    if (rep_cd.max_ratio > 100.0) throw property_error("continuous dependence ratio exceeds 100");
    if (rep_cd.ratio_spread > 2.0)
        throw property_error("continuous dependence ratio varies by more than a factor 2 across epsilons");
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"bsnsch: bulk-surface Navier-Stokes-Cahn-Hilliard simulator on the disk"};
    app.require_subcommand(1);
    app.fallthrough();

    CliOptions cli;
    app.add_option("--config", cli.config_path, "configuration file (.json or .toml)");
    app.add_option("--out", cli.out_dir, "output directory");
    app.add_option("--steps", cli.steps, "override time.n_steps");
    app.add_option("--dt", cli.dt, "override time.dt");
    auto* seed_opt = app.add_option("--seed", cli.seed, "override random seed");
    app.add_option("--stride", cli.stride, "override field output stride");
    app.add_flag("--experimental", cli.experimental, "lift the K-range well-posedness gate");

    auto* run_cmd = app.add_subcommand("run", "coupled NSCH time integration");
    auto* ch_cmd = app.add_subcommand("ch-only", "Cahn-Hilliard with prescribed velocity");
    auto* stokes_cmd = app.add_subcommand("stokes-solve", "stationary Stokes benchmark solve (f = 0, g = tau)");
    auto* eigs_cmd = app.add_subcommand("eigs", "bulk-surface Stokes eigenpairs");
    eigs_cmd->add_option("-k,--count", cli.eig_count, "number of eigenpairs");
    auto* conv_cmd = app.add_subcommand("convergence", "elliptic manufactured-solution study");
    auto* verify_cmd = app.add_subcommand("verify", "run the property suite");
    auto* cd_cmd = app.add_subcommand("continuous-dependence", "continuous-dependence experiment");

    CLI11_PARSE(app, argc, argv);
    cli.seed_set = seed_opt->count() > 0;

    try {
        const RunConfig cfg = load_config(cli);
        if (run_cmd->parsed()) return do_run(cfg, RunMode::Coupled);
        if (ch_cmd->parsed()) return do_run(cfg, RunMode::ChOnly);
        if (stokes_cmd->parsed()) return do_stokes(cfg);
        if (eigs_cmd->parsed()) return do_eigs(cfg, cli.eig_count);
        if (conv_cmd->parsed()) return do_convergence(cfg);
        if (verify_cmd->parsed()) return do_verify(cfg);
        if (cd_cmd->parsed()) return do_continuous_dependence(cfg);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const input_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const property_error& e) {
        std::cerr << "property failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
