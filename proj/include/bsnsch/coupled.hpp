#pragma once

#include "bsnsch/cahn_hilliard.hpp"
#include "bsnsch/stokes.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bsnsch {

// Per-step diagnostics; e_total is the sum of the five energy components and
// the dissipation integrals are evaluated at the new time level.
struct DiagnosticsRecord {
    int step = 0;
    double t = 0.0;
    double e_kin_bulk = 0.0;
    double e_kin_surf = 0.0;
    double e_free_bulk = 0.0;
    double e_free_surf = 0.0;
    double e_penalty = 0.0;
    double e_total = 0.0;
    double mass_bulk = 0.0;
    double mass_surf = 0.0;
    double mass_combined = 0.0;
    double diss_visc_bulk = 0.0;
    double diss_visc_surf = 0.0; // identically zero in the 2D reduction
    double diss_friction = 0.0;
    double diss_mob_bulk = 0.0;
    double diss_mob_surf = 0.0;
    double diss_chi_l = 0.0;
    double separation_margin = 0.0;
    int newton_iters = 0;
};

struct SimulationState {
    CHState ch;
    FlowState flow;
    int step = 0;
    std::vector<DiagnosticsRecord> records;
};

// Energy-budget residual between consecutive records:
// (E^{n+1} - E^n)/dt + sum of dissipation integrals at t^{n+1}.
double energy_budget(const DiagnosticsRecord& a, const DiagnosticsRecord& b, double dt);

struct CoupledOptions {
    CHStepConfig ch;
    int picard_sweeps = 1;   // re-solve the phase step with the updated velocity
    int max_dt_halvings = 5; // phase-step retries with halved dt
};

// Lie-splitting NSCH integrator: phase step with the current velocity, then
// the momentum step with the updated phase/potentials.
class CoupledSimulator {
public:
    CoupledSimulator(const DiskMesh& mesh, const SpaceOperators& ops, const ModelParameters& params,
                     const CoupledOptions& options);

    // Assembles the initial state: chemical potentials from the constitutive
    // compatibility condition, velocity projected onto the divergence-free
    // boundary-kinematic space.
    SimulationState initial_state(const BulkSurfaceField& phase0,
                                  const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& v0,
                                  double omega0, bool* potentials_projected = nullptr) const;

    SimulationState initial_state_rest(const BulkSurfaceField& phase0) const;

    // Initial state with a caller-supplied (already admissible) flow.
    SimulationState initial_state_flow(const BulkSurfaceField& phase0, FlowState flow) const;

    // One coupled step; appends a diagnostics record. Throws solver_error
    // when the phase step fails after all dt halvings.
    void advance(SimulationState& state, double dt) const;

    // Phase step only; the flow is treated as prescribed and left unchanged.
    void advance_ch_only(SimulationState& state, const VelocitySample& vel, double dt) const;

    DiagnosticsRecord make_record(const SimulationState& state, int newton_iters,
                                  const StokesStats* stats = nullptr) const;

    const CHSystem& ch_system() const { return ch_; }
    const StokesSolver& stokes() const { return stokes_; }
    const CoupledOptions& options() const { return options_; }

    double last_courant() const { return last_courant_; }

private:
    const ModelParameters& params_;
    CHSystem ch_;
    StokesSolver stokes_;
    CoupledOptions options_;
    mutable double last_courant_ = 0.0;

    CHStepResult ch_advance(const CHState& state, const VelocitySample& vel, double dt, int depth) const;
};

struct ContinuousDependenceReport {
    std::vector<double> epsilons;
    std::vector<double> ratios; // L2 distance at final time divided by epsilon
    double max_ratio = 0.0;
    double ratio_spread = 0.0; // max ratio / min ratio
};

// Runs pairs of trajectories from data differing by a smooth perturbation of
// L2 size epsilon; L must lie in (0, inf] (theorem scope).
ContinuousDependenceReport continuous_dependence_experiment(const DiskMesh& mesh, const SpaceOperators& ops,
                                                            const ModelParameters& params,
                                                            const CoupledOptions& options,
                                                            const BulkSurfaceField& base_phase, double dt,
                                                            double t_final, const std::vector<double>& epsilons);

} // namespace bsnsch
