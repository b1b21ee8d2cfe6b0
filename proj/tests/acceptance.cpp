// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned in code; the shared runs use the full
// variable-coefficient model on the unit disk (n_rings = 16, dt = 1e-3,
// logarithmic potentials Theta = 1, Theta_c = 2, smooth initial data bounded
// by 0.9, unmatched densities, affine coefficients).

#include "bsnsch/common.hpp"
#include "bsnsch/coupled.hpp"
#include "bsnsch/io.hpp"
#include "bsnsch/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using namespace bsnsch;

namespace {

int failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail)
{
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << criterion << " (" << name << "): " << detail
              << std::endl;
    if (!pass) ++failures;
}

RunConfig default_config()
{
    // Acceptance setup: unit disk, n_rings = 16, dt = 1e-3, logarithmic
    // potentials Theta = 1, Theta_c = 2, smooth data bounded by 0.9, and the
    // full variable-coefficient model so that the mass fluxes, the chi(L)
    // momentum coupling and the phase-dependent viscosity and friction are
    // all active.
    RunConfig cfg;
    cfg.params.rho1 = 1.0;
    cfg.params.rho2 = 1.3;
    cfg.params.sigma1 = 1.0;
    cfg.params.sigma2 = 1.2;
    cfg.params.coeffs.m_bulk = ScalarCoefficient::affine(0.6, 1.5);
    cfg.params.coeffs.m_surf = ScalarCoefficient::affine(0.7, 1.3);
    cfg.params.coeffs.nu_bulk = ScalarCoefficient::affine(0.8, 1.4);
    cfg.params.coeffs.nu_surf = ScalarCoefficient::affine(0.9, 1.1);
    cfg.params.coeffs.gamma = FrictionCoefficient{1.0, 0.2};
    return cfg;
}

} // namespace

int main(int argc, char** argv)
{
    std::cout << "acceptance suite: bulk-surface NSCH structural laws" << std::endl;

    // Shared 200-step coupled run with L = 1, beta = 1 (criteria 1, 2, 7).
    RunConfig cfg_l1 = default_config();
    const auto t0 = std::chrono::steady_clock::now();
    RunOutputs run_l1;
    try {
        run_l1 = run_simulation(cfg_l1, RunMode::Coupled, "");
    } catch (const std::exception& e) {
        std::cout << "[FAIL] criteria 1/2/7: coupled run aborted: " << e.what() << std::endl;
        return 1;
    }
    const double wall_l1 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Criterion 1: mass conservation.
    {
        const auto& rec = run_l1.state.records;
        double worst = 0.0;
        for (const auto& r : rec) worst = std::max(worst, std::abs(r.mass_combined - rec[0].mass_combined));
        bool pass = worst <= 1e-9 && wall_l1 <= 180.0;
        std::string detail = "L=1 combined-mass drift = " + fmt17(worst) + " (<= 1e-9), wall = " +
                             fmt17(wall_l1) + " s (<= 180)";

        RunConfig cfg_inf = default_config();
        cfg_inf.params.L = infinite;
        const RunOutputs run_inf = run_simulation(cfg_inf, RunMode::Coupled, "");
        double worst_b = 0.0, worst_s = 0.0;
        for (const auto& r : run_inf.state.records) {
            worst_b = std::max(worst_b, std::abs(r.mass_bulk - run_inf.state.records[0].mass_bulk));
            worst_s = std::max(worst_s, std::abs(r.mass_surf - run_inf.state.records[0].mass_surf));
        }
        pass = pass && worst_b <= 1e-9 && worst_s <= 1e-9;
        detail += "; L=inf separate drifts = " + fmt17(worst_b) + ", " + fmt17(worst_s);
        report(1, "mass conservation", pass, detail);
    }

    // Criterion 2: energy dissipation.
    {
        const auto& rec = run_l1.state.records;
        double worst_inc = -infinite;
        for (std::size_t i = 1; i < rec.size(); ++i)
            worst_inc = std::max(worst_inc,
                                 (rec[i].e_total - rec[i - 1].e_total) / std::abs(rec[i - 1].e_total));
        bool pass = worst_inc <= 1e-8;

        RunConfig cfg_cs = default_config();
        cfg_cs.scheme.scheme = CHScheme::ConvexSplitting;
        cfg_cs.time.dt = 1e-2;
        const RunOutputs run_cs = run_simulation(cfg_cs, RunMode::ChOnly, "");
        bool strict = true;
        const auto& rc = run_cs.state.records;
        for (std::size_t i = 1; i < rc.size(); ++i) strict = strict && rc[i].e_total < rc[i - 1].e_total;
        pass = pass && strict;
        report(2, "energy dissipation", pass,
               "coupled max relative increase = " + fmt17(worst_inc) + " (<= 1e-8); convex splitting at dt = 1e-2 " +
                   (strict ? "strictly monotone" : "NOT monotone"));
    }

    // Criterion 3: elliptic manufactured solution.
    {
        const auto t3 = std::chrono::steady_clock::now();
        const auto rows = elliptic_convergence_study({8, 16, 32});
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t3).count();
        double max_resid = 0.0;
        for (const auto& r : rows) max_resid = std::max(max_resid, r.residual);
        const bool rates_ok = rows[1].rate >= 1.7 && rows[1].rate <= 2.3 && rows[2].rate >= 1.7 && rows[2].rate <= 2.3;
        const bool pass = rates_ok && max_resid <= 1e-10 && wall <= 30.0;
        report(3, "elliptic manufactured solution", pass,
               "rates = " + fmt17(rows[1].rate) + ", " + fmt17(rows[2].rate) + " (2.0 +- 0.3); residual = " +
                   fmt17(max_resid) + " (<= 1e-10); wall = " + fmt17(wall) + " s");
    }

    // Criterion 4: Stokes rigid-rotation closed form.
    {
        const DiskMesh mesh = build_disk_mesh(16, 1.0);
        const SpaceOperators ops = build_space_operators(mesh);
        ModelParameters params; // nu = gamma = 1 by default
        StokesSolver solver(mesh, ops, params);
        const auto sol = solver.solve_stokes(BulkSurfaceField(mesh.n_vertices(), mesh.n_boundary()),
                                             BulkVectorField(mesh.n_vertices()),
                                             Eigen::VectorXd::Ones(mesh.n_boundary()));
        double verr = 0.0;
        for (int i = 0; i < solver.space().n_nodes; ++i) {
            const Eigen::Vector2d exact(-solver.space().node_pos[i].y(), solver.space().node_pos[i].x());
            verr = std::max(verr,
                            (Eigen::Vector2d(sol.state.v_p2[2 * i], sol.state.v_p2[2 * i + 1]) - exact).norm());
        }
        const double werr = std::abs(sol.state.omega - 1.0);
        const double pnorm = std::sqrt(sol.state.p.dot(ops.M_bulk * sol.state.p));
        const double qnorm = std::sqrt(sol.state.q.dot(ops.M_surf * sol.state.q));
        const bool pass = verr <= 1e-6 && werr <= 1e-8 && pnorm <= 1e-8 && qnorm <= 1e-8;
        report(4, "Stokes rigid rotation", pass,
               "max velocity error = " + fmt17(verr) + " (<= 1e-6), omega error = " + fmt17(werr) +
                   " (<= 1e-8), ||p|| = " + fmt17(pnorm) + ", ||q|| = " + fmt17(qnorm) + " (<= 1e-8)");
    }

    // Criterion 5: Stokes eigenpairs.
    {
        ModelParameters params;
        const DiskMesh m16 = build_disk_mesh(16, 1.0);
        const SpaceOperators o16 = build_space_operators(m16);
        StokesSolver s16(m16, o16, params);
        const EigenPairs p16 = s16.eigenpairs(8);
        bool positive = true;
        for (double l : p16.values) positive = positive && l > 0.0;
        const double gram = eigen_orthonormality_defect(s16, p16);

        const DiskMesh m32 = build_disk_mesh(32, 1.0);
        const SpaceOperators o32 = build_space_operators(m32);
        StokesSolver s32(m32, o32, params);
        const EigenPairs p32 = s32.eigenpairs(1);
        const double drift = std::abs(p32.values[0] / p16.values[0] - 1.0);
        const bool pass = positive && gram <= 1e-8 && drift <= 0.05;
        report(5, "Stokes eigenpairs", pass,
               "k = 8 all positive: " + std::string(positive ? "yes" : "no") + "; Gram defect = " + fmt17(gram) +
                   " (<= 1e-8); lambda_1 drift 16->32 = " + fmt17(drift) + " (<= 0.05)");
    }

    // Criterion 6: norm equivalence with affine mobilities in [0.5, 2].
    {
        const DiskMesh mesh = build_disk_mesh(8, 1.0);
        const SpaceOperators ops = build_space_operators(mesh);
        CoefficientSet coeffs;
        coeffs.m_bulk = ScalarCoefficient::affine(0.5, 2.0);
        coeffs.m_surf = ScalarCoefficient::affine(0.5, 2.0);
        const BulkSurfaceField phase = random_smooth_field(mesh, 0.95, 2025);
        EllipticProblem weighted(ops, 1.0, 1.0, phase, coeffs);
        const double lo = std::min(1.0, std::sqrt(0.5));
        const double hi = std::max(1.0, std::sqrt(2.0));
        std::mt19937_64 eng(606);
        int violations = 0;
        for (int s = 0; s < 100; ++s) {
            BulkSurfaceField a(mesh.n_vertices(), mesh.n_boundary());
            for (int i = 0; i < mesh.n_vertices(); ++i) a.phi[i] = uniform(eng, -1.0, 1.0);
            for (int b = 0; b < mesh.n_boundary(); ++b) a.psi[b] = uniform(eng, -1.0, 1.0);
            const double nw = std::sqrt(std::max(0.0, weighted.inner_weighted(a, a)));
            const double n1 = std::sqrt(std::max(0.0, inner_lb(ops, a, a, 1.0, 1.0)));
            if (!(lo * nw <= n1 * (1.0 + 1e-12) && n1 <= hi * nw * (1.0 + 1e-12))) ++violations;
        }
        report(6, "norm equivalence", violations == 0,
               "two-sided inequality with factors min{1,sqrt(0.5)}, max{1,sqrt(2)}: " + std::to_string(violations) +
                   "/100 violations");
    }

    // Criterion 7: separation.
    {
        const auto& rec = run_l1.state.records;
        double min_margin = infinite;
        int max_newton = 0;
        for (const auto& r : rec) {
            min_margin = std::min(min_margin, r.separation_margin);
            max_newton = std::max(max_newton, r.newton_iters);
        }
        const bool pass = min_margin > 1e-4 && max_newton <= 20;
        report(7, "separation", pass,
               "min margin over 200 steps = " + fmt17(min_margin) + " (> 1e-4); max Newton iterations = " +
                   std::to_string(max_newton) + " (no rejected-step cascade)");
    }

    // Criterion 8: continuous dependence (L = 1).
    {
        RunConfig cfg = default_config();
        const DiskMesh mesh = build_disk_mesh(cfg.mesh.n_rings, cfg.mesh.radius);
        const SpaceOperators ops = build_space_operators(mesh);
        CoupledOptions options;
        options.ch.scheme = cfg.scheme.scheme;
        const BulkSurfaceField base = make_initial_phase(cfg, mesh);
        const auto rep = continuous_dependence_experiment(mesh, ops, cfg.params, options, base, cfg.time.dt, 0.1,
                                                          {1e-3, 1e-4, 1e-5});
        const bool pass = rep.max_ratio <= 100.0 && rep.ratio_spread <= 2.0;
        std::ostringstream os;
        os << "ratios =";
        for (double r : rep.ratios) os << " " << fmt17(r);
        os << "; max = " << fmt17(rep.max_ratio) << " (<= 100), spread = " << fmt17(rep.ratio_spread) << " (< 2)";
        report(8, "continuous dependence", pass, os.str());
    }

    // Criterion 9: chi(L) limit consistency, L = 1e6 versus L = inf.
    {
        RunConfig ca = default_config();
        ca.params.L = 1e6;
        ca.time.n_steps = 10;
        RunConfig cb = ca;
        cb.params.L = infinite;
        const RunOutputs ra = run_simulation(ca, RunMode::Coupled, "");
        const RunOutputs rb = run_simulation(cb, RunMode::Coupled, "");
        const DiskMesh mesh = build_disk_mesh(ca.mesh.n_rings, ca.mesh.radius);
        const SpaceOperators ops = build_space_operators(mesh);
        const Eigen::VectorXd dphi = ra.state.ch.phase.phi - rb.state.ch.phase.phi;
        const Eigen::VectorXd dpsi = ra.state.ch.phase.psi - rb.state.ch.phase.psi;
        const double dist = std::sqrt(dphi.dot(ops.M_bulk * dphi) + dpsi.dot(ops.M_surf * dpsi));
        report(9, "chi(L) limit consistency", dist <= 1e-3,
               "L2 distance after 10 steps = " + fmt17(dist) + " (<= 1e-3)");
    }

    // Criterion 10: determinism across two executions of the CLI.
    {
        namespace fs = std::filesystem;
        const fs::path self(argv[0]);
        const fs::path cli = self.parent_path().parent_path() / "tools" / "bsnsch";
        bool pass = false;
        std::string detail;
        if (!fs::exists(cli)) {
            detail = "CLI binary not found at " + cli.string();
        } else {
            const fs::path dir_a = fs::temp_directory_path() / "bsnsch_acc_det_a";
            const fs::path dir_b = fs::temp_directory_path() / "bsnsch_acc_det_b";
            fs::remove_all(dir_a);
            fs::remove_all(dir_b);
            const std::string base_cmd = cli.string() +
                                         " run --steps 50 --seed 2026 > /dev/null 2>&1";
            const int rc_a = std::system((base_cmd + " --out " + dir_a.string()).c_str());
            const int rc_b = std::system((base_cmd + " --out " + dir_b.string()).c_str());
            if (rc_a == 0 && rc_b == 0) {
                std::ifstream fa(dir_a / "diagnostics.csv", std::ios::binary);
                std::ifstream fb(dir_b / "diagnostics.csv", std::ios::binary);
                std::stringstream sa, sb;
                sa << fa.rdbuf();
                sb << fb.rdbuf();
                pass = !sa.str().empty() && sa.str() == sb.str();
                detail = pass ? "two executions produced byte-identical diagnostics.csv (50 steps)"
                              : "diagnostics.csv files differ";
            } else {
                detail = "CLI executions failed";
            }
            fs::remove_all(dir_a);
            fs::remove_all(dir_b);
        }
        report(10, "determinism", pass, detail);
    }

    (void)argc;
    std::cout << (failures == 0 ? "acceptance: ALL CRITERIA PASSED" : "acceptance: FAILURES PRESENT") << std::endl;
    return failures == 0 ? 0 : 1;
}
