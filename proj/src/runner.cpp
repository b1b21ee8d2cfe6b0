#include "bsnsch/runner.hpp"

#include "bsnsch/common.hpp"
#include "bsnsch/io.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace bsnsch {

namespace {

namespace fs = std::filesystem;

std::string step_filename(int step)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fields_%06d.vtk", step);
    return buf;
}

Eigen::VectorXd pad_boundary(const DiskMesh& mesh, const Eigen::VectorXd& psi)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.n_vertices());
    for (int b = 0; b < mesh.n_boundary(); ++b) out[mesh.boundary_loop[b]] = psi[b];
    return out;
}

} // namespace

BulkSurfaceField make_initial_phase(const RunConfig& config, const DiskMesh& mesh)
{
    const auto& ic = config.initial;
    BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
    if (ic.kind == "constant") {
        phase.phi.setConstant(ic.offset);
        phase.psi.setConstant(ic.offset);
    } else if (ic.kind == "cosine") {
        for (int i = 0; i < mesh.n_vertices(); ++i) {
            const double x = mesh.vertices[i].x() / mesh.radius;
            const double y = mesh.vertices[i].y() / mesh.radius;
            phase.phi[i] = ic.offset + ic.amplitude * std::cos(ic.mode_x * std::numbers::pi * x) *
                                           std::cos(ic.mode_y * std::numbers::pi * y);
        }
        for (int b = 0; b < mesh.n_boundary(); ++b) phase.psi[b] = phase.phi[mesh.boundary_loop[b]];
    } else if (ic.kind == "random_smooth") {
        phase = random_smooth_field(mesh, ic.amplitude, config.seed);
        phase.phi.array() += ic.offset;
        phase.psi.array() += ic.offset;
    } else {
        throw config_error("initial.kind: unknown kind '" + ic.kind + "'");
    }
    const bool log_pot = config.params.F.is_logarithmic() || config.params.G.is_logarithmic();
    const double maxabs = std::max(phase.phi.cwiseAbs().maxCoeff(), phase.psi.cwiseAbs().maxCoeff());
    if (log_pot && maxabs >= 1.0 - 1e-6)
        throw config_error("initial data: |phi| must stay below 1 for logarithmic potentials (max = " +
                           fmt17(maxabs) + ")");
    return phase;
}

RunOutputs run_simulation(const RunConfig& config, RunMode mode, const std::string& out_dir, std::ostream* log)
{
    const auto t_start = std::chrono::steady_clock::now();

    const DiskMesh mesh = build_disk_mesh(config.mesh.n_rings, config.mesh.radius);
    const SpaceOperators ops = build_space_operators(mesh);

    const ValidationReport report = validate_assumptions(config.params, ops, config.experimental);
    for (const auto& item : report.items)
        if (!item.pass && !item.hard && log) *log << "[warn] " << item.id << ": " << item.message << "\n";
    if (!report.ok()) {
        std::string msg = "configuration rejected:";
        for (const auto& item : report.items)
            if (item.hard && !item.pass) msg += " [" + item.id + "] " + item.message + ";";
        throw config_error(msg);
    }

    CoupledOptions options;
    options.ch.dt = config.time.dt;
    options.ch.scheme = config.scheme.scheme;
    options.ch.newton_tol = config.scheme.newton_tol;
    options.ch.max_newton = config.scheme.max_newton;
    options.ch.line_search_shrink = config.scheme.line_search_shrink;
    options.picard_sweeps = config.scheme.picard_sweeps;
    options.max_dt_halvings = config.scheme.max_dt_halvings;

    CoupledSimulator sim(mesh, ops, config.params, options);
    const BulkSurfaceField phase0 = make_initial_phase(config, mesh);

    SimulationState state;
    bool projected = false;
    if (mode == RunMode::ChOnly) {
        FlowState flow = config.initial.velocity == "rigid" ? sim.stokes().rigid_flow(config.initial.omega0)
                                                            : sim.stokes().zero_flow();
        state = sim.initial_state_flow(phase0, std::move(flow));
    } else if (config.initial.velocity == "rigid") {
        const double scale = config.initial.omega0 / mesh.radius;
        state = sim.initial_state(
            phase0, [scale](const Eigen::Vector2d& p) { return Eigen::Vector2d(-scale * p.y(), scale * p.x()); },
            config.initial.omega0, &projected);
    } else {
        state = sim.initial_state_rest(phase0);
    }
    if (projected && log) *log << "[warn] initial potentials projected onto the L = 0 identified space\n";

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream echo(fs::path(out_dir) / "config_echo.json");
        echo << config_to_json(config);
        std::ofstream val(fs::path(out_dir) / "validation.json");
        val << report.to_json();
    }

    const VelocitySample prescribed = config.initial.velocity == "rigid"
                                          ? VelocitySample::rigid(mesh, config.initial.omega0)
                                          : VelocitySample::zero(mesh);

    double min_sep = sim.ch_system().separation_margin(state.ch);
    bool courant_warned = false;
    std::exception_ptr abort_error;
    for (int s = 0; s < config.time.n_steps; ++s) {
        try {
            if (mode == RunMode::ChOnly)
                sim.advance_ch_only(state, prescribed, config.time.dt);
            else
                sim.advance(state, config.time.dt);
        } catch (const solver_error&) {
            // Run abort: flush the diagnostics gathered so far, then rethrow.
            abort_error = std::current_exception();
            break;
        }
        min_sep = std::min(min_sep, state.records.back().separation_margin);
        if (!courant_warned && sim.last_courant() > 1.0 && log) {
            *log << "[warn] explicit-convection Courant number " << fmt17(sim.last_courant()) << " exceeds 1\n";
            courant_warned = true;
        }
        if (!out_dir.empty() && config.time.output_stride > 0 &&
            (state.step % config.time.output_stride == 0 || s + 1 == config.time.n_steps)) {
            VtkPointData data;
            data.scalars.emplace_back("phi", state.ch.phase.phi);
            data.scalars.emplace_back("mu", state.ch.potential.phi);
            data.scalars.emplace_back("p", state.flow.p);
            data.scalars.emplace_back("psi", pad_boundary(mesh, state.ch.phase.psi));
            data.scalars.emplace_back("theta", pad_boundary(mesh, state.ch.potential.psi));
            data.scalars.emplace_back("q", pad_boundary(mesh, state.flow.q));
            const BulkVectorField v = sim.stokes().vertex_velocity(state.flow);
            data.vectors = &v;
            write_vtk_fields((fs::path(out_dir) / step_filename(state.step)).string(), mesh, data);
        }
    }

    RunOutputs out;
    out.csv = diagnostics_to_csv(state.records);
    out.min_separation = min_sep;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    if (!out_dir.empty()) {
        std::ofstream csv(fs::path(out_dir) / "diagnostics.csv");
        csv << out.csv;
        const DiagnosticsRecord& last = state.records.back();
        double max_increase = 0.0;
        for (std::size_t i = 1; i < state.records.size(); ++i) {
            const double prev = state.records[i - 1].e_total;
            const double inc = (state.records[i].e_total - prev) / std::max(1e-300, std::abs(prev));
            max_increase = std::max(max_increase, inc);
        }
        nlohmann::json summary;
        summary["steps"] = last.step;
        summary["final_time"] = last.t;
        summary["mass_bulk"] = last.mass_bulk;
        summary["mass_surf"] = last.mass_surf;
        summary["mass_combined"] = last.mass_combined;
        summary["e_total"] = last.e_total;
        summary["min_separation"] = min_sep;
        summary["max_energy_increase_rel"] = max_increase;
        summary["wall_seconds"] = out.wall_seconds;
        std::ofstream sj(fs::path(out_dir) / "summary.json");
        sj << summary.dump(2) << "\n";
    }
    if (abort_error) std::rethrow_exception(abort_error);
    out.state = std::move(state);
    return out;
}

std::vector<ConvergenceRow> elliptic_convergence_study(const std::vector<int>& rings)
{
    auto exact_u = [](const Eigen::Vector2d& p) {
        const double r2 = p.squaredNorm();
        return (2.0 - r2) * (p.x() * p.x() - p.y() * p.y());
    };
    auto rhs_f = [](const Eigen::Vector2d& p) { return 12.0 * (p.x() * p.x() - p.y() * p.y()); };

    std::vector<ConvergenceRow> rows;
    for (int n : rings) {
        const DiskMesh mesh = build_disk_mesh(n, 1.0);
        const SpaceOperators ops = build_space_operators(mesh);
        EllipticProblem prob(ops, infinite, 1.0);

        BulkSurfaceField rhs(mesh.n_vertices(), mesh.n_boundary());
        for (int i = 0; i < mesh.n_vertices(); ++i) rhs.phi[i] = rhs_f(mesh.vertices[i]);
        for (int b = 0; b < mesh.n_boundary(); ++b) {
            const Eigen::Vector2d p = mesh.vertices[mesh.boundary_loop[b]];
            const double th = std::atan2(p.y(), p.x());
            rhs.psi[b] = 4.0 * std::cos(2.0 * th);
        }
        const auto res = prob.solve(rhs, true);

        Eigen::VectorXd err_b(mesh.n_vertices());
        for (int i = 0; i < mesh.n_vertices(); ++i) err_b[i] = res.solution.phi[i] - exact_u(mesh.vertices[i]);
        Eigen::VectorXd err_s(mesh.n_boundary());
        for (int b = 0; b < mesh.n_boundary(); ++b) {
            const Eigen::Vector2d p = mesh.vertices[mesh.boundary_loop[b]];
            const double th = std::atan2(p.y(), p.x());
            err_s[b] = res.solution.psi[b] - std::cos(2.0 * th);
        }
        ConvergenceRow row;
        row.n_rings = n;
        row.h = 1.0 / n;
        row.l2_error = std::sqrt(err_b.dot(ops.M_bulk * err_b) + err_s.dot(ops.M_surf * err_s));
        row.residual = res.weak_residual;
        if (!rows.empty()) row.rate = std::log2(rows.back().l2_error / row.l2_error) /
                                      std::log2(static_cast<double>(n) / rows.back().n_rings);
        rows.push_back(row);
    }
    return rows;
}

double eigen_orthonormality_defect(const StokesSolver& solver, const EigenPairs& pairs)
{
    const int k = static_cast<int>(pairs.values.size());
    double worst = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double g = solver.l2_inner(pairs.fields[i], pairs.omegas[i], pairs.fields[j], pairs.omegas[j]);
            worst = std::max(worst, std::abs(g - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

namespace {

struct VerifyContext {
    std::vector<VerifyResult> results;
    void check(const std::string& name, bool pass, const std::string& detail)
    {
        results.push_back({name, pass, detail});
    }
};

ModelParameters default_params()
{
    return ModelParameters{};
}

void verify_geometry(VerifyContext& vc)
{
    {
        const DiskMesh hex = build_disk_mesh(1, 1.0);
        const BoundaryFrame frame = compute_boundary_frame(hex);
        const double area = mesh_area(hex);
        const double exact = 1.5 * std::sqrt(3.0);
        const bool pass = hex.n_vertices() == 7 && hex.n_triangles() == 6 &&
                          std::abs(area - exact) <= 1e-12 && std::abs(frame.perimeter() - 6.0) <= 1e-12;
        vc.check("geometry.hexagon", pass,
                 "area = " + fmt17(area) + " (exact " + fmt17(exact) + "), perimeter = " + fmt17(frame.perimeter()));
    }
    {
        const DiskMesh mesh = build_disk_mesh(6, 2.0);
        const BoundaryFrame frame = compute_boundary_frame(mesh);
        double worst_radial = 0.0, worst_orth = 0.0, wsum = 0.0;
        for (int b = 0; b < mesh.n_boundary(); ++b) {
            const Eigen::Vector2d pos = mesh.vertices[mesh.boundary_loop[b]].normalized();
            worst_radial = std::max(worst_radial, (frame.normal[b] - pos).norm());
            worst_orth = std::max(worst_orth, std::abs(frame.normal[b].dot(frame.tangent[b])));
            wsum += frame.weight[b];
        }
        const bool pass = worst_radial <= 1e-12 && worst_orth <= 1e-12 &&
                          std::abs(wsum - frame.perimeter()) <= 1e-12 * frame.perimeter();
        vc.check("geometry.frame", pass,
                 "max |n - radial| = " + fmt17(worst_radial) + ", max |n.tau| = " + fmt17(worst_orth));
    }
    {
        double err[3], kerr[3];
        int idx = 0;
        bool oriented = true;
        for (int n : {4, 8, 16}) {
            const DiskMesh mesh = build_disk_mesh(n, 1.0);
            const BoundaryFrame frame = compute_boundary_frame(mesh);
            err[idx] = std::abs(mesh_area(mesh) - std::numbers::pi);
            double kmax = 0.0;
            for (double k : frame.curvature) kmax = std::max(kmax, std::abs(k - 1.0));
            kerr[idx] = kmax;
            for (int t = 0; t < mesh.n_triangles(); ++t) oriented = oriented && triangle_signed_area(mesh, t) > 0.0;
            ++idx;
        }
        const double r1 = std::log2(err[0] / err[1]);
        const double r2 = std::log2(err[1] / err[2]);
        const double rk = std::log2(kerr[1] / kerr[2]);
        const bool pass = oriented && r1 > 1.7 && r1 < 2.3 && r2 > 1.7 && r2 < 2.3 && rk > 1.5;
        vc.check("geometry.refinement", pass,
                 "area rates = " + fmt17(r1) + ", " + fmt17(r2) + "; curvature rate = " + fmt17(rk));
    }
}

void verify_fields(VerifyContext& vc)
{
    const DiskMesh mesh = build_disk_mesh(16, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    {
        BulkSurfaceField f(mesh.n_vertices(), mesh.n_boundary());
        f.phi.setOnes();
        const double mean = generalized_mean(ops, f, 2.0);
        const double expected = 2.0 * ops.area / (4.0 * ops.area + ops.perimeter);
        const bool pass = std::abs(mean - expected) <= 1e-14 && std::abs(mean - 1.0 / 3.0) <= 1e-2;
        vc.check("fields.generalized_mean", pass, "mean = " + fmt17(mean) + ", exact-measure value 1/3");
    }
    {
        std::mt19937_64 eng(3);
        BulkSurfaceField a(mesh.n_vertices(), mesh.n_boundary()), b = a;
        for (int i = 0; i < mesh.n_vertices(); ++i) a.phi[i] = uniform(eng, -1.0, 1.0);
        for (int i = 0; i < mesh.n_boundary(); ++i) a.psi[i] = uniform(eng, -1.0, 1.0);
        for (int i = 0; i < mesh.n_vertices(); ++i) b.phi[i] = uniform(eng, -1.0, 1.0);
        for (int i = 0; i < mesh.n_boundary(); ++i) b.psi[i] = uniform(eng, -1.0, 1.0);
        const double s1 = inner_lb(ops, a, b, 2.0, 1.5);
        const double s2 = inner_lb(ops, b, a, 2.0, 1.5);
        const double qa = inner_lb(ops, a, a, 2.0, 1.5);
        BulkSurfaceField c(mesh.n_vertices(), mesh.n_boundary());
        c.phi.setConstant(1.5 * 0.7);
        c.psi.setConstant(0.7);
        const double kernel = inner_lb(ops, c, c, 2.0, 1.5);
        const double chi_inf = inner_lb(ops, a, a, infinite, 1.5) -
                               (a.phi.dot(ops.A_bulk * a.phi) + a.psi.dot(ops.A_surf * a.psi));
        const bool pass = std::abs(s1 - s2) <= 1e-12 * std::max(1.0, std::abs(s1)) && qa >= -1e-12 &&
                          std::abs(kernel) <= 1e-12 && std::abs(chi_inf) == 0.0;
        vc.check("fields.inner_lb", pass,
                 "symmetry gap = " + fmt17(std::abs(s1 - s2)) + ", kernel value = " + fmt17(kernel));
    }
    {
        const DiskMesh m8 = build_disk_mesh(8, 1.0);
        const SpaceOperators o8 = build_space_operators(m8);
        const double c8 = poincare_check(o8, 1.0, 1.0, 1.0);
        const double c16 = poincare_check(ops, 1.0, 1.0, 1.0);
        const bool pass = c8 > 0.0 && c16 > 0.0 && std::abs(c16 / c8 - 1.0) <= 0.1;
        vc.check("fields.poincare", pass, "C_P(8) = " + fmt17(c8) + ", C_P(16) = " + fmt17(c16));
    }
    {
        const DiskMesh m8 = build_disk_mesh(8, 1.0);
        const SpaceOperators o8 = build_space_operators(m8);
        const double q8 = trace_interpolation_quotient(o8, 100, 11);
        const double q16 = trace_interpolation_quotient(ops, 100, 11);
        const bool pass = std::isfinite(q8) && std::isfinite(q16) && q16 / q8 < 1.5 && q8 / q16 < 1.5;
        vc.check("fields.trace_interpolation", pass, "quotients " + fmt17(q8) + " -> " + fmt17(q16));
    }
}

void verify_materials(VerifyContext& vc)
{
    {
        const bool pass = chi(4.0) == 0.25 && chi(0.0) == 0.0 && chi(infinite) == 0.0 && chi(2.0) > chi(3.0);
        vc.check("materials.chi", pass, "chi(4) = " + fmt17(chi(4.0)));
    }
    {
        const PotentialSpec w = make_log_potential(1.0, 2.0);
        const double w0 = w.eval(0.0, 0);
        const double w1 = w.eval(0.0, 1);
        const double w2 = w.eval(0.0, 2);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            const double s = -0.9 + 1.8 * i / 49.0;
            const double h = 1e-5;
            const double fd1 = (w.eval(s + h, 0) - w.eval(s - h, 0)) / (2.0 * h);
            const double fd2 = (w.eval(s + h, 1) - w.eval(s - h, 1)) / (2.0 * h);
            worst = std::max(worst, std::abs(fd1 - w.eval(s, 1)) / std::max(1.0, std::abs(w.eval(s, 1))));
            worst = std::max(worst, std::abs(fd2 - w.eval(s, 2)) / std::max(1.0, std::abs(w.eval(s, 2))));
        }
        const bool pass = w0 == 0.0 && w1 == 0.0 && std::abs(w2 + 1.0) <= 1e-14 && worst <= 1e-6;
        vc.check("materials.potential", pass, "W''(0) = " + fmt17(w2) + ", max FD gap = " + fmt17(worst));
    }
    {
        const DiskMesh mesh = build_disk_mesh(4, 1.0);
        const SpaceOperators ops = build_space_operators(mesh);
        ModelParameters bad = default_params();
        bad.K = 0.0;
        const bool k0_rejected = !validate_assumptions(bad, ops).ok();
        ModelParameters l0 = default_params();
        l0.L = 0.0;
        l0.rho2 = 3.0; // violates beta(sigma2 - sigma1) = rho2 - rho1
        const bool l0_rejected = !validate_assumptions(l0, ops).ok();
        const bool def_ok = validate_assumptions(default_params(), ops).ok();
        vc.check("materials.validation", k0_rejected && l0_rejected && def_ok,
                 std::string("K=0 rejected, incompatible L=0 rejected, defaults pass"));
    }
}

void verify_elliptic(VerifyContext& vc)
{
    {
        const auto rows = elliptic_convergence_study({8, 16, 32});
        const double rate = rows.back().rate;
        double max_resid = 0.0;
        for (const auto& r : rows) max_resid = std::max(max_resid, r.residual);
        const bool pass = rate >= 1.7 && rate <= 2.3 && max_resid <= 1e-10;
        vc.check("elliptic.manufactured", pass,
                 "final rate = " + fmt17(rate) + ", max residual = " + fmt17(max_resid));
    }
    const DiskMesh mesh = build_disk_mesh(8, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    std::mt19937_64 eng(5);
    auto random_compatible = [&](double beta) {
        BulkSurfaceField f(mesh.n_vertices(), mesh.n_boundary());
        for (int i = 0; i < mesh.n_vertices(); ++i) f.phi[i] = uniform(eng, -1.0, 1.0);
        for (int b = 0; b < mesh.n_boundary(); ++b) f.psi[b] = uniform(eng, -1.0, 1.0);
        const double gm = generalized_mean(ops, f, beta);
        f.phi.array() -= beta * gm;
        f.psi.array() -= gm;
        return f;
    };
    {
        CoefficientSet coeffs;
        coeffs.m_bulk = ScalarCoefficient::affine(0.5, 2.0);
        coeffs.m_surf = ScalarCoefficient::affine(0.8, 1.4);
        BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
        for (int i = 0; i < mesh.n_vertices(); ++i) phase.phi[i] = std::sin(3.0 * mesh.vertices[i].x());
        for (int b = 0; b < mesh.n_boundary(); ++b) phase.psi[b] = phase.phi[mesh.boundary_loop[b]];
        EllipticProblem prob(ops, 1.0, 1.3, phase, coeffs);
        const BulkSurfaceField f = random_compatible(1.3);
        const BulkSurfaceField g = random_compatible(1.3);
        const auto sf = prob.solve(f);
        const auto sg = prob.solve(g);
        const double d1 = sf.solution.phi.dot(ops.M_bulk * g.phi) + sf.solution.psi.dot(ops.M_surf * g.psi);
        const double d2 = f.phi.dot(ops.M_bulk * sg.solution.phi) + f.psi.dot(ops.M_surf * sg.solution.psi);
        const double gap = std::abs(d1 - d2) / std::max(1.0, std::abs(d1));
        BulkSurfaceField f2 = f;
        f2.phi *= 2.0;
        f2.psi *= 2.0;
        const double n1 = prob.dual_norm(f);
        const double n2 = prob.dual_norm(f2);
        const bool pass = gap <= 1e-10 && std::abs(n2 - 2.0 * n1) <= 1e-10 * std::max(1.0, n2);
        vc.check("elliptic.solution_operator", pass,
                 "self-adjointness gap = " + fmt17(gap) + ", homogeneity gap = " + fmt17(std::abs(n2 - 2.0 * n1)));
    }
    {
        // Two-sided norm equivalence with m in [0.5, 2].
        CoefficientSet coeffs;
        coeffs.m_bulk = ScalarCoefficient::affine(0.5, 2.0);
        coeffs.m_surf = ScalarCoefficient::affine(0.5, 2.0);
        BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
        for (int i = 0; i < mesh.n_vertices(); ++i) phase.phi[i] = std::cos(2.0 * mesh.vertices[i].y());
        for (int b = 0; b < mesh.n_boundary(); ++b) phase.psi[b] = phase.phi[mesh.boundary_loop[b]];
        EllipticProblem weighted(ops, 1.0, 1.0, phase, coeffs);
        const double lo = std::min(1.0, std::sqrt(0.5));
        const double hi = std::max(1.0, std::sqrt(2.0));
        int violations = 0;
        for (int s = 0; s < 100; ++s) {
            BulkSurfaceField a(mesh.n_vertices(), mesh.n_boundary());
            for (int i = 0; i < mesh.n_vertices(); ++i) a.phi[i] = uniform(eng, -1.0, 1.0);
            for (int b = 0; b < mesh.n_boundary(); ++b) a.psi[b] = uniform(eng, -1.0, 1.0);
            const double nw = std::sqrt(std::max(0.0, weighted.inner_weighted(a, a)));
            const double n1 = std::sqrt(std::max(0.0, inner_lb(ops, a, a, 1.0, 1.0)));
            if (!(lo * nw <= n1 * (1.0 + 1e-12) && n1 <= hi * nw * (1.0 + 1e-12))) ++violations;
        }
        vc.check("elliptic.norm_equivalence", violations == 0, "violations = " + std::to_string(violations) + "/100");
    }
    {
        // L = 0 identification and constant-coefficient consistency.
        EllipticProblem p0(ops, 0.0, 1.2);
        const BulkSurfaceField f = random_compatible(1.2);
        const auto r0 = p0.solve(f, true);
        double worst = 0.0;
        for (int b = 0; b < mesh.n_boundary(); ++b)
            worst = std::max(worst,
                             std::abs(r0.solution.phi[mesh.boundary_loop[b]] - 1.2 * r0.solution.psi[b]));
        EllipticProblem unit_direct(ops, 1.0, 1.0);
        EllipticProblem unit_via_fields(ops, 1.0, 1.0, Eigen::VectorXd::Ones(mesh.n_vertices()),
                                        Eigen::VectorXd::Ones(mesh.n_boundary()));
        const BulkSurfaceField f1 = random_compatible(1.0);
        const auto a1 = unit_direct.solve(f1);
        const auto a2 = unit_via_fields.solve(f1);
        const double gap = (a1.solution.phi - a2.solution.phi).cwiseAbs().maxCoeff();
        const bool pass = worst <= 1e-12 && gap <= 1e-12;
        vc.check("elliptic.l0_identification", pass,
                 "max |u - beta v| on boundary = " + fmt17(worst) + ", unit-mobility gap = " + fmt17(gap));
    }
}

void verify_cahn_hilliard(VerifyContext& vc)
{
    const DiskMesh mesh = build_disk_mesh(6, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    {
        ModelParameters params = default_params();
        CHSystem sys(mesh, ops, params);
        CHState state;
        state.phase = BulkSurfaceField(mesh.n_vertices(), mesh.n_boundary());
        state.potential = BulkSurfaceField(mesh.n_vertices(), mesh.n_boundary());
        CHStepConfig cfg;
        const auto res = sys.step(state, VelocitySample::zero(mesh), cfg);
        const double drift = std::max(res.state.phase.phi.cwiseAbs().maxCoeff(),
                                      res.state.potential.phi.cwiseAbs().maxCoeff());
        vc.check("ch.stationary_zero", drift <= 1e-12, "max drift = " + fmt17(drift));
    }
    {
        // Mass conservation under transport, both regimes.
        ModelParameters params = default_params();
        params.beta = 1.0;
        CHSystem sys(mesh, ops, params);
        CHState state;
        state.phase = random_smooth_field(mesh, 0.5, 7);
        state.potential = sys.initial_potentials(state.phase);
        const double m0 = sys.mass_functionals(state).combined;
        const VelocitySample vel = VelocitySample::rigid(mesh, 0.8);
        CHStepConfig cfg;
        double worst = 0.0;
        for (int s = 0; s < 50; ++s) {
            state = sys.step(state, vel, cfg).state;
            worst = std::max(worst, std::abs(sys.mass_functionals(state).combined - m0));
        }
        ModelParameters pinf = default_params();
        pinf.L = infinite;
        CHSystem sys_inf(mesh, ops, pinf);
        CHState st2;
        st2.phase = random_smooth_field(mesh, 0.5, 9);
        st2.potential = sys_inf.initial_potentials(st2.phase);
        const MassValues mv0 = sys_inf.mass_functionals(st2);
        double worst_inf = 0.0;
        for (int s = 0; s < 50; ++s) {
            st2 = sys_inf.step(st2, vel, cfg).state;
            const MassValues mv = sys_inf.mass_functionals(st2);
            worst_inf = std::max({worst_inf, std::abs(mv.bulk - mv0.bulk), std::abs(mv.surface - mv0.surface)});
        }
        const bool pass = worst <= 1e-10 && worst_inf <= 1e-10;
        vc.check("ch.mass_conservation", pass,
                 "combined drift (L=1) = " + fmt17(worst) + ", separate drift (L=inf) = " + fmt17(worst_inf));
    }
    {
        // Energy decay: convex splitting strictly monotone at dt = 1e-2.
        ModelParameters params = default_params();
        CHSystem sys(mesh, ops, params);
        CHState state;
        state.phase = random_smooth_field(mesh, 0.85, 21);
        state.potential = sys.initial_potentials(state.phase);
        CHStepConfig cfg;
        cfg.dt = 1e-2;
        cfg.scheme = CHScheme::ConvexSplitting;
        double e_prev = sys.free_energy(state).total();
        bool strict = true;
        for (int s = 0; s < 50; ++s) {
            state = sys.step(state, VelocitySample::zero(mesh), cfg).state;
            const double e = sys.free_energy(state).total();
            strict = strict && e < e_prev;
            e_prev = e;
        }
        vc.check("ch.energy_convex_splitting", strict, "strict decay over 50 steps at dt = 1e-2");
    }
    {
        // chi(L) limit: L = 1e6 versus L = inf.
        ModelParameters pa = default_params();
        pa.L = 1e6;
        ModelParameters pb = default_params();
        pb.L = infinite;
        CHSystem sa(mesh, ops, pa), sb(mesh, ops, pb);
        CHState a, b;
        a.phase = random_smooth_field(mesh, 0.6, 33);
        a.potential = sa.initial_potentials(a.phase);
        b.phase = a.phase;
        b.potential = sb.initial_potentials(b.phase);
        CHStepConfig cfg;
        for (int s = 0; s < 10; ++s) {
            a = sa.step(a, VelocitySample::zero(mesh), cfg).state;
            b = sb.step(b, VelocitySample::zero(mesh), cfg).state;
        }
        const Eigen::VectorXd dphi = a.phase.phi - b.phase.phi;
        const Eigen::VectorXd dpsi = a.phase.psi - b.phase.psi;
        const double dist = std::sqrt(dphi.dot(ops.M_bulk * dphi) + dpsi.dot(ops.M_surf * dpsi));
        vc.check("ch.chi_limit", dist <= 1e-3, "L2 distance after 10 steps = " + fmt17(dist));
    }
}

void verify_stokes(VerifyContext& vc)
{
    const DiskMesh mesh = build_disk_mesh(8, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params = default_params();
    StokesSolver solver(mesh, ops, params);
    {
        BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
        BulkVectorField f(mesh.n_vertices());
        Eigen::VectorXd g = Eigen::VectorXd::Ones(mesh.n_boundary());
        const auto sol = solver.solve_stokes(phase, f, g);
        double verr = 0.0;
        for (int i = 0; i < solver.space().n_nodes; ++i) {
            const Eigen::Vector2d exact(-solver.space().node_pos[i].y(), solver.space().node_pos[i].x());
            verr = std::max(verr, (Eigen::Vector2d(sol.state.v_p2[2 * i], sol.state.v_p2[2 * i + 1]) - exact).norm());
        }
        const double perr = std::sqrt(sol.state.p.dot(ops.M_bulk * sol.state.p));
        const double qerr = std::sqrt(sol.state.q.dot(ops.M_surf * sol.state.q));
        const bool pass = verr <= 1e-6 && std::abs(sol.state.omega - 1.0) <= 1e-8 && perr <= 1e-8 && qerr <= 1e-8;
        vc.check("stokes.rigid_rotation", pass,
                 "max velocity error = " + fmt17(verr) + ", omega error = " + fmt17(std::abs(sol.state.omega - 1.0)));
    }
    {
        // Reduction equivalence with nonconstant coefficients and loads.
        ModelParameters pv = default_params();
        pv.coeffs.nu_bulk = ScalarCoefficient::affine(0.7, 1.6);
        pv.coeffs.gamma = FrictionCoefficient{1.0, 0.4};
        StokesSolver sv(mesh, ops, pv);
        BulkSurfaceField phase = random_smooth_field(mesh, 0.7, 17);
        BulkVectorField f(mesh.n_vertices());
        std::mt19937_64 eng(23);
        for (int i = 0; i < mesh.n_vertices(); ++i)
            f.set(i, {uniform(eng, -1.0, 1.0), uniform(eng, -1.0, 1.0)});
        Eigen::VectorXd g(mesh.n_boundary());
        for (int b = 0; b < mesh.n_boundary(); ++b) g[b] = uniform(eng, -1.0, 1.0);
        const auto red = sv.solve_stokes(phase, f, g, false);
        const auto full = sv.solve_stokes(phase, f, g, true);
        const double dv = (red.state.v_p2 - full.state.v_p2).cwiseAbs().maxCoeff();
        const double dp = (red.state.p - full.state.p).cwiseAbs().maxCoeff();
        const double dw = std::abs(red.state.omega - full.state.omega);
        const bool pass = dv <= 1e-10 && dp <= 1e-10 && dw <= 1e-10;
        vc.check("stokes.reduction_equivalence", pass,
                 "dv = " + fmt17(dv) + ", dp = " + fmt17(dp) + ", domega = " + fmt17(dw));
    }
    {
        const EigenPairs pairs = solver.eigenpairs(6);
        bool positive = true;
        for (double l : pairs.values) positive = positive && l > 0.0;
        const double defect = eigen_orthonormality_defect(solver, pairs);
        const bool pass = positive && defect <= 1e-8 && pairs.values[0] <= 0.8 + 1e-6;
        vc.check("stokes.eigenpairs", pass,
                 "lambda_1 = " + fmt17(pairs.values[0]) + ", Gram defect = " + fmt17(defect));
    }
    {
        const DiskMesh m6 = build_disk_mesh(6, 1.0);
        const SpaceOperators o6 = build_space_operators(m6);
        StokesSolver s6(m6, o6, params);
        const DiskMesh m10 = build_disk_mesh(10, 1.0);
        const SpaceOperators o10 = build_space_operators(m10);
        StokesSolver s10(m10, o10, params);
        const double c6 = s6.korn_constant();
        const double c10 = s10.korn_constant();
        const bool pass = c6 > 0.0 && std::isfinite(c6) && std::abs(c10 / c6 - 1.0) <= 0.1;
        vc.check("stokes.korn", pass, "C_K(6) = " + fmt17(c6) + ", C_K(10) = " + fmt17(c10));
    }
}

void verify_coupled(VerifyContext& vc)
{
    const DiskMesh mesh = build_disk_mesh(6, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params = default_params();
    CoupledOptions options;
    {
        CoupledSimulator sim(mesh, ops, params, options);
        BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
        phase.phi.setConstant(0.3);
        phase.psi.setConstant(0.3); // alpha = 1, F = G, beta = 1: stationary family
        SimulationState st = sim.initial_state_rest(phase);
        sim.advance(st, 1e-3);
        const double drift = (st.ch.phase.phi.array() - 0.3).abs().maxCoeff() +
                             st.flow.v_p2.cwiseAbs().maxCoeff();
        vc.check("coupled.fixed_point", drift <= 1e-9, "stationary drift = " + fmt17(drift));
    }
    {
        // Kinetic energy decays under viscosity and friction with constant phase.
        ModelParameters matched = default_params();
        CoupledSimulator sim(mesh, ops, matched, options);
        BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
        phase.phi.setConstant(0.2);
        phase.psi.setConstant(0.2);
        SimulationState st = sim.initial_state_flow(phase, sim.stokes().rigid_flow(0.5));
        double ke_prev = sim.stokes().kinetic_energy_bulk(st.flow, st.ch.phase) +
                         sim.stokes().kinetic_energy_surface(st.flow, st.ch.phase);
        bool decay = true;
        for (int s = 0; s < 10; ++s) {
            sim.advance(st, 1e-3);
            const double ke = sim.stokes().kinetic_energy_bulk(st.flow, st.ch.phase) +
                              sim.stokes().kinetic_energy_surface(st.flow, st.ch.phase);
            decay = decay && ke < ke_prev;
            ke_prev = ke;
        }
        vc.check("coupled.kinetic_decay", decay, "monotone over 10 steps from rigid rotation");
    }
    {
        RunConfig cfg;
        cfg.mesh.n_rings = 6;
        cfg.time.n_steps = 10;
        const RunOutputs a = run_simulation(cfg, RunMode::Coupled, "");
        const RunOutputs b = run_simulation(cfg, RunMode::Coupled, "");
        vc.check("coupled.determinism", a.csv == b.csv, "two runs produce identical diagnostics");
    }
    {
        const std::string expected = diagnostics_csv_header;
        const bool pass = expected.rfind("step,t,", 0) == 0 && expected.find("newton_iters") != std::string::npos;
        vc.check("coupled.csv_schema", pass, "header: " + expected.substr(0, 40) + "...");
    }
}

} // namespace

std::vector<VerifyResult> run_verify(const RunConfig&)
{
    VerifyContext vc;
    verify_geometry(vc);
    verify_fields(vc);
    verify_materials(vc);
    verify_elliptic(vc);
    verify_cahn_hilliard(vc);
    verify_stokes(vc);
    verify_coupled(vc);
    return vc.results;
}

} // namespace bsnsch
