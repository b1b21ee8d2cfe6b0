#pragma once

#include "bsnsch/config.hpp"
#include "bsnsch/coupled.hpp"
#include "bsnsch/elliptic.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace bsnsch {

BulkSurfaceField make_initial_phase(const RunConfig& config, const DiskMesh& mesh);

enum class RunMode { Coupled, ChOnly };

struct RunOutputs {
    SimulationState state;
    std::string csv;
    double wall_seconds = 0.0;
    double min_separation = 0.0;
};

// Executes a run per the configuration. When out_dir is nonempty, writes the
// echoed config, diagnostics.csv, summary.json and stride-sampled VTK fields
// into it. ch-only advances the phase field with the prescribed velocity.
RunOutputs run_simulation(const RunConfig& config, RunMode mode, const std::string& out_dir,
                          std::ostream* log = nullptr);

// Manufactured-solution refinement study for the constant-coefficient
// elliptic problem with L = inf on the unit disk.
struct ConvergenceRow {
    int n_rings = 0;
    double h = 0.0;
    double l2_error = 0.0;
    double rate = 0.0; // versus the previous row
    double residual = 0.0;
};
std::vector<ConvergenceRow> elliptic_convergence_study(const std::vector<int>& rings);

struct VerifyResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Fast property suite over all modules (small meshes); the CLI `verify`
// subcommand prints one line per entry and exits nonzero on failure.
std::vector<VerifyResult> run_verify(const RunConfig& config);

double eigen_orthonormality_defect(const StokesSolver& solver, const EigenPairs& pairs);

} // namespace bsnsch
