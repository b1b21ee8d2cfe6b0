#include "bsnsch/coupled.hpp"

#include <cmath>
#include <numbers>

namespace bsnsch {

double energy_budget(const DiagnosticsRecord& a, const DiagnosticsRecord& b, double dt)
{
    const double diss = b.diss_visc_bulk + b.diss_visc_surf + b.diss_friction + b.diss_mob_bulk +
                        b.diss_mob_surf + b.diss_chi_l;
    return (b.e_total - a.e_total) / dt + diss;
}

CoupledSimulator::CoupledSimulator(const DiskMesh& mesh, const SpaceOperators& ops, const ModelParameters& params,
                                   const CoupledOptions& options)
    : params_(params), ch_(mesh, ops, params), stokes_(mesh, ops, params), options_(options)
{
}

SimulationState CoupledSimulator::initial_state(const BulkSurfaceField& phase0,
                                                const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& v0,
                                                double omega0, bool* potentials_projected) const
{
    SimulationState state;
    state.ch.phase = phase0;
    state.ch.potential = ch_.initial_potentials(phase0, potentials_projected);
    state.ch.t = 0.0;
    state.flow = stokes_.project(v0, omega0);
    state.flow.t = 0.0;
    state.step = 0;
    state.records.push_back(make_record(state, 0));
    return state;
}

SimulationState CoupledSimulator::initial_state_rest(const BulkSurfaceField& phase0) const
{
    SimulationState state;
    state.ch.phase = phase0;
    state.ch.potential = ch_.initial_potentials(phase0);
    state.ch.t = 0.0;
    state.flow = stokes_.zero_flow();
    state.step = 0;
    state.records.push_back(make_record(state, 0));
    return state;
}

SimulationState CoupledSimulator::initial_state_flow(const BulkSurfaceField& phase0, FlowState flow) const
{
    SimulationState state;
    state.ch.phase = phase0;
    state.ch.potential = ch_.initial_potentials(phase0);
    state.ch.t = 0.0;
    state.flow = std::move(flow);
    state.flow.t = 0.0;
    state.step = 0;
    state.records.push_back(make_record(state, 0));
    return state;
}

void CoupledSimulator::advance_ch_only(SimulationState& state, const VelocitySample& vel, double dt) const
{
    const CHStepResult res = ch_advance(state.ch, vel, dt, 0);
    state.ch = res.state;
    state.flow.t = state.ch.t;
    state.step += 1;
    state.records.push_back(make_record(state, res.newton_iters));
}

CHStepResult CoupledSimulator::ch_advance(const CHState& state, const VelocitySample& vel, double dt,
                                          int depth) const
{
    CHStepConfig cfg = options_.ch;
    cfg.dt = dt;
    try {
        return ch_.step(state, vel, cfg);
    } catch (const ch_step_failure&) {
        if (depth >= options_.max_dt_halvings)
            throw solver_error("coupled step: phase solve failed after " +
                               std::to_string(options_.max_dt_halvings) + " dt halvings");
    } catch (const barrier_error&) {
        if (depth >= options_.max_dt_halvings)
            throw solver_error("coupled step: barrier rejection persisted through all dt halvings");
    }
    CHStepResult first = ch_advance(state, vel, 0.5 * dt, depth + 1);
    CHStepResult second = ch_advance(first.state, vel, 0.5 * dt, depth + 1);
    second.newton_iters += first.newton_iters;
    return second;
}

void CoupledSimulator::advance(SimulationState& state, double dt) const
{
    VelocitySample vel = stokes_.sample_velocity(state.flow);
    CHStepResult ch_res;
    StokesSolution ns;
    const int sweeps = std::max(1, options_.picard_sweeps);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        ch_res = ch_advance(state.ch, vel, dt, 0);
        ns = stokes_.ns_step(state.flow, ch_res.state, dt);
        if (sweep + 1 < sweeps) vel = stokes_.sample_velocity(ns.state);
    }
    state.ch = ch_res.state;
    state.flow = ns.state;
    state.flow.t = state.ch.t;
    state.step += 1;
    last_courant_ = ns.stats.courant;
    DiagnosticsRecord rec = make_record(state, ch_res.newton_iters, &ns.stats);
    state.records.push_back(rec);
}

DiagnosticsRecord CoupledSimulator::make_record(const SimulationState& state, int newton_iters,
                                                const StokesStats* stats) const
{
    DiagnosticsRecord r;
    r.step = state.step;
    r.t = state.ch.t;
    const FreeEnergy fe = ch_.free_energy(state.ch);
    r.e_free_bulk = fe.bulk;
    r.e_free_surf = fe.surface;
    r.e_penalty = fe.penalty;
    if (stats && stats->has_diagnostics) {
        r.e_kin_bulk = stats->kinetic_bulk;
        r.e_kin_surf = stats->kinetic_surf;
        r.diss_visc_bulk = stats->viscous_dissipation;
        r.diss_friction = stats->friction_dissipation;
    } else {
        r.e_kin_bulk = stokes_.kinetic_energy_bulk(state.flow, state.ch.phase);
        r.e_kin_surf = stokes_.kinetic_energy_surface(state.flow, state.ch.phase);
        r.diss_visc_bulk = stokes_.viscous_dissipation(state.flow, state.ch.phase);
        r.diss_friction = stokes_.friction_dissipation(state.flow, state.ch.phase);
    }
    r.e_total = r.e_kin_bulk + r.e_kin_surf + r.e_free_bulk + r.e_free_surf + r.e_penalty;
    const MassValues m = ch_.mass_functionals(state.ch);
    r.mass_bulk = m.bulk;
    r.mass_surf = m.surface;
    r.mass_combined = m.combined;
    const auto d = ch_.dissipation(state.ch);
    r.diss_mob_bulk = d[0];
    r.diss_mob_surf = d[1];
    r.diss_chi_l = d[2];
    r.diss_visc_surf = 0.0;
    r.separation_margin = ch_.separation_margin(state.ch);
    r.newton_iters = newton_iters;
    return r;
}

ContinuousDependenceReport continuous_dependence_experiment(const DiskMesh& mesh, const SpaceOperators& ops,
                                                            const ModelParameters& params,
                                                            const CoupledOptions& options,
                                                            const BulkSurfaceField& base_phase, double dt,
                                                            double t_final, const std::vector<double>& epsilons)
{
    if (params.L == 0.0)
        throw input_error("continuous dependence experiment requires L in (0, inf]: uniqueness of strong solutions is only available there");
    for (double eps : epsilons)
        if (!(eps > 0.0) || eps > 1e-2)
            throw input_error("continuous dependence: epsilon must lie in (0, 1e-2]");

    CoupledSimulator sim(mesh, ops, params, options);

    // Smooth mean-free-ish perturbation, normalized to unit coupled L2 norm.
    BulkSurfaceField bump(mesh.n_vertices(), mesh.n_boundary());
    for (int i = 0; i < mesh.n_vertices(); ++i) {
        const double x = mesh.vertices[i].x() / mesh.radius;
        const double y = mesh.vertices[i].y() / mesh.radius;
        bump.phi[i] = std::cos(std::numbers::pi * x) * std::sin(std::numbers::pi * y);
    }
    for (int b = 0; b < mesh.n_boundary(); ++b) bump.psi[b] = bump.phi[mesh.boundary_loop[b]];
    const double bump_norm = std::sqrt(bump.phi.dot(ops.M_bulk * bump.phi) + bump.psi.dot(ops.M_surf * bump.psi));
    bump.phi /= bump_norm;
    bump.psi /= bump_norm;

    const int n_steps = static_cast<int>(std::llround(t_final / dt));

    auto run_traj = [&](const BulkSurfaceField& phase0) {
        SimulationState st = sim.initial_state_rest(phase0);
        for (int s = 0; s < n_steps; ++s) sim.advance(st, dt);
        return st;
    };

    const SimulationState base = run_traj(base_phase);

    ContinuousDependenceReport rep;
    for (double eps : epsilons) {
        BulkSurfaceField pert = base_phase;
        pert.phi += eps * bump.phi;
        pert.psi += eps * bump.psi;
        const SimulationState other = run_traj(pert);
        const Eigen::VectorXd dphi = other.ch.phase.phi - base.ch.phase.phi;
        const Eigen::VectorXd dpsi = other.ch.phase.psi - base.ch.phase.psi;
        const double dist = std::sqrt(dphi.dot(ops.M_bulk * dphi) + dpsi.dot(ops.M_surf * dpsi));
        rep.epsilons.push_back(eps);
        rep.ratios.push_back(dist / eps);
    }
    double lo = rep.ratios[0], hi = rep.ratios[0];
    for (double r : rep.ratios) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    rep.max_ratio = hi;
    rep.ratio_spread = lo > 0.0 ? hi / lo : infinite;
    return rep;
}

} // namespace bsnsch
