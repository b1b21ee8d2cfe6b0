#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsnsch/common.hpp"
#include "bsnsch/coupled.hpp"
#include "bsnsch/io.hpp"
#include "bsnsch/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace bsnsch;

TEST_CASE("stationary data is a fixed point of the coupled step")
{
    const DiskMesh mesh = build_disk_mesh(5, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params;
    CoupledSimulator sim(mesh, ops, params, CoupledOptions{});

    BulkSurfaceField phase(mesh.n_vertices(), mesh.n_boundary());
    phase.phi.setConstant(0.3);
    phase.psi.setConstant(0.3);
    SimulationState st = sim.initial_state_rest(phase);
    sim.advance(st, 1e-3);
    CHECK((st.ch.phase.phi.array() - 0.3).abs().maxCoeff() <= 1e-9);
    CHECK(st.flow.v_p2.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(std::abs(energy_budget(st.records[0], st.records[1], 1e-3)) <= 1e-9);
}

TEST_CASE("mass laws per regime over a coupled run")
{
    const DiskMesh mesh = build_disk_mesh(6, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    CoupledOptions options;

    SUBCASE("combined mass for L = 1")
    {
        ModelParameters params;
        params.rho2 = 1.3;
        params.sigma2 = 1.2; // unmatched densities exercise the flux terms
        CoupledSimulator sim(mesh, ops, params, options);
        SimulationState st = sim.initial_state_rest(random_smooth_field(mesh, 0.7, 5));
        const double m0 = st.records[0].mass_combined;
        for (int s = 0; s < 50; ++s) sim.advance(st, 1e-3);
        for (const auto& r : st.records) CHECK(std::abs(r.mass_combined - m0) <= 1e-9);
    }
    SUBCASE("separate masses for L = inf")
    {
        ModelParameters params;
        params.L = infinite;
        CoupledSimulator sim(mesh, ops, params, options);
        SimulationState st = sim.initial_state_rest(random_smooth_field(mesh, 0.7, 6));
        const double mb0 = st.records[0].mass_bulk;
        const double ms0 = st.records[0].mass_surf;
        for (int s = 0; s < 50; ++s) sim.advance(st, 1e-3);
        for (const auto& r : st.records) {
            CHECK(std::abs(r.mass_bulk - mb0) <= 1e-9);
            CHECK(std::abs(r.mass_surf - ms0) <= 1e-9);
        }
    }
}

TEST_CASE("energy budget: dissipative, first order in dt, monotone total energy")
{
    const DiskMesh mesh = build_disk_mesh(6, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params;
    params.rho2 = 1.2;
    CoupledOptions options;
    CoupledSimulator sim(mesh, ops, params, options);
    const BulkSurfaceField phase0 = random_smooth_field(mesh, 0.8, 11);

    auto run_budget = [&](double dt, int steps) {
        SimulationState st = sim.initial_state_rest(phase0);
        double max_resid = 0.0, last_resid = 0.0, max_inc = 0.0;
        for (int s = 0; s < steps; ++s) {
            sim.advance(st, dt);
            const auto& a = st.records[st.records.size() - 2];
            const auto& b = st.records.back();
            last_resid = energy_budget(a, b, dt);
            max_resid = std::max(max_resid, last_resid);
            max_inc = std::max(max_inc, (b.e_total - a.e_total) / std::abs(a.e_total));
        }
        return std::array<double, 3>{max_resid, last_resid, max_inc};
    };

    const auto coarse = run_budget(2e-3, 20); // to T = 0.04
    const auto fine = run_budget(1e-3, 40);
    // The scheme only adds numerical dissipation: the residual never goes
    // appreciably positive, and E_total is nonincreasing per step.
    CHECK(coarse[0] <= 1e-8);
    CHECK(fine[0] <= 1e-8);
    CHECK(coarse[2] <= 1e-8);
    // Backward-Euler consistency: the (negative) budget residual at the
    // common final time shrinks at first order under dt halving.
    CHECK(coarse[1] < 0.0);
    CHECK(fine[1] < 0.0);
    const double ratio = std::abs(coarse[1]) / std::max(1e-300, std::abs(fine[1]));
    CHECK(ratio > 1.4);
    CHECK(ratio < 3.2);
}

TEST_CASE("determinism: identical runs produce identical diagnostics")
{
    RunConfig cfg;
    cfg.mesh.n_rings = 6;
    cfg.time.n_steps = 20;
    cfg.initial.kind = "random_smooth";
    cfg.seed = 777;
    const RunOutputs a = run_simulation(cfg, RunMode::Coupled, "");
    const RunOutputs b = run_simulation(cfg, RunMode::Coupled, "");
    CHECK(a.csv == b.csv);
    CHECK(!a.csv.empty());
}

TEST_CASE("diagnostics CSV schema is stable (golden header)")
{
    const std::string golden =
        "step,t,e_kin_bulk,e_kin_surf,e_free_bulk,e_free_surf,e_penalty,e_total,"
        "mass_bulk,mass_surf,mass_combined,diss_visc_bulk,diss_visc_surf,diss_friction,"
        "diss_mob_bulk,diss_mob_surf,diss_chi_l,separation_margin,newton_iters";
    CHECK(std::string(diagnostics_csv_header) == golden);

    DiagnosticsRecord r;
    r.step = 3;
    r.t = 0.25;
    const std::string row = diagnostics_csv_row(r);
    CHECK(row.rfind("3,0.25,", 0) == 0);
    CHECK(std::count(row.begin(), row.end(), ',') == 18);
}

TEST_CASE("record total energy is the sum of its components")
{
    const DiskMesh mesh = build_disk_mesh(5, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params;
    CoupledSimulator sim(mesh, ops, params, CoupledOptions{});
    SimulationState st = sim.initial_state_rest(random_smooth_field(mesh, 0.8, 31));
    for (int s = 0; s < 3; ++s) sim.advance(st, 1e-3);
    for (const auto& r : st.records) {
        CHECK(r.e_total ==
              doctest::Approx(r.e_kin_bulk + r.e_kin_surf + r.e_free_bulk + r.e_free_surf + r.e_penalty)
                  .epsilon(1e-14));
        CHECK(r.e_kin_bulk >= 0.0);
        CHECK(r.e_kin_surf >= 0.0);
        CHECK(r.e_penalty >= 0.0);
        CHECK(r.separation_margin > 0.0);
    }
}

TEST_CASE("exhausted dt halvings abort the run")
{
    const DiskMesh mesh = build_disk_mesh(4, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params;
    CoupledOptions options;
    options.ch.max_newton = 1; // Newton cannot converge in one iteration
    options.max_dt_halvings = 2;
    CoupledSimulator sim(mesh, ops, params, options);
    SimulationState st = sim.initial_state_rest(random_smooth_field(mesh, 0.7, 3));
    CHECK_THROWS_AS(sim.advance(st, 1e-3), solver_error);
}

TEST_CASE("picard sweeps tighten the splitting without changing conservation")
{
    const DiskMesh mesh = build_disk_mesh(5, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params;
    params.rho2 = 1.4;
    CoupledOptions o1, o3;
    o3.picard_sweeps = 3;
    CoupledSimulator s1(mesh, ops, params, o1), s3(mesh, ops, params, o3);
    const BulkSurfaceField phase0 = random_smooth_field(mesh, 0.7, 13);
    SimulationState a = s1.initial_state_rest(phase0);
    SimulationState b = s3.initial_state_rest(phase0);
    const double m0 = a.records[0].mass_combined;
    for (int s = 0; s < 10; ++s) {
        s1.advance(a, 1e-3);
        s3.advance(b, 1e-3);
    }
    CHECK(std::abs(a.records.back().mass_combined - m0) <= 1e-10);
    CHECK(std::abs(b.records.back().mass_combined - m0) <= 1e-10);
    // Both integrate the same dynamics; the trajectories stay close.
    CHECK((a.ch.phase.phi - b.ch.phase.phi).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("coupled run in the L = 0 regime")
{
    const DiskMesh mesh = build_disk_mesh(5, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params;
    params.L = 0.0;
    params.beta = 2.0;
    params.rho1 = 1.0;
    params.rho2 = 1.8;
    params.sigma1 = 1.0;
    params.sigma2 = 1.4;
    CoupledSimulator sim(mesh, ops, params, CoupledOptions{});
    SimulationState st = sim.initial_state_rest(random_smooth_field(mesh, 0.6, 44));
    const double m0 = st.records[0].mass_combined;
    for (int s = 0; s < 10; ++s) sim.advance(st, 1e-3);
    for (const auto& r : st.records) {
        CHECK(std::abs(r.mass_combined - m0) <= 1e-9);
        CHECK(r.diss_chi_l == 0.0); // chi(0) = 0: no potential penalty channel
    }
    for (std::size_t i = 1; i < st.records.size(); ++i)
        CHECK(st.records[i].e_total <= st.records[i - 1].e_total + 1e-8 * std::abs(st.records[i - 1].e_total));
}

TEST_CASE("continuous dependence experiment")
{
    const DiskMesh mesh = build_disk_mesh(6, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    ModelParameters params;
    CoupledOptions options;
    const BulkSurfaceField base = random_smooth_field(mesh, 0.6, 8);

    SUBCASE("bounded, nearly epsilon-independent ratios")
    {
        const auto rep = continuous_dependence_experiment(mesh, ops, params, options, base, 1e-3, 0.02,
                                                          {1e-3, 1e-4});
        CHECK(rep.max_ratio <= 100.0);
        CHECK(rep.ratio_spread <= 2.0);
        for (double r : rep.ratios) CHECK(r >= 0.0);
    }
    SUBCASE("L = 0 is refused (uniqueness theorem scope)")
    {
        ModelParameters l0 = params;
        l0.L = 0.0;
        CHECK_THROWS_AS(
            continuous_dependence_experiment(mesh, ops, l0, options, base, 1e-3, 0.02, {1e-3}),
            input_error);
    }
    SUBCASE("epsilon out of range is refused")
    {
        CHECK_THROWS_AS(
            continuous_dependence_experiment(mesh, ops, params, options, base, 1e-3, 0.02, {0.5}),
            input_error);
    }
}

TEST_CASE("run_simulation writes the run directory artifacts")
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "bsnsch_run_test";
    fs::remove_all(dir);

    RunConfig cfg;
    cfg.mesh.n_rings = 5;
    cfg.time.n_steps = 4;
    cfg.time.output_stride = 2;
    const RunOutputs out = run_simulation(cfg, RunMode::Coupled, dir.string());
    CHECK(fs::exists(dir / "diagnostics.csv"));
    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(dir / "config_echo.json"));
    CHECK(fs::exists(dir / "validation.json"));
    CHECK(fs::exists(dir / "fields_000002.vtk"));
    CHECK(fs::exists(dir / "fields_000004.vtk"));

    // The echoed config re-parses to an identical RunConfig.
    const RunConfig echoed = parse_config((dir / "config_echo.json").string());
    CHECK(echoed == cfg);

    std::ifstream csv(dir / "diagnostics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == diagnostics_csv_header);
    int rows = 0;
    std::string line;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == cfg.time.n_steps + 1); // initial record plus one per step
    CHECK(out.state.records.size() == static_cast<std::size_t>(cfg.time.n_steps + 1));
    fs::remove_all(dir);
}

TEST_CASE("ch-only runs with prescribed rigid transport")
{
    RunConfig cfg;
    cfg.mesh.n_rings = 5;
    cfg.time.n_steps = 10;
    cfg.initial.velocity = "rigid";
    cfg.initial.omega0 = 0.5;
    const RunOutputs out = run_simulation(cfg, RunMode::ChOnly, "");
    const double m0 = out.state.records.front().mass_combined;
    for (const auto& r : out.state.records) CHECK(std::abs(r.mass_combined - m0) <= 1e-10);
    // The prescribed flow is untouched by the phase step.
    CHECK(out.state.flow.omega == 0.5);
}
