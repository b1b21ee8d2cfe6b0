#pragma once

#include "bsnsch/common.hpp"
#include "bsnsch/fields.hpp"
#include "bsnsch/materials.hpp"
#include "bsnsch/mesh.hpp"

#include <functional>
#include <vector>

namespace bsnsch {

// Phase pair, chemical potentials and time stamp. The potentials satisfy the
// discrete constitutive relations to solver tolerance; with logarithmic
// potentials max |phi| and max |psi| stay strictly below one.
struct CHState {
    BulkSurfaceField phase;      // (phi, psi)
    BulkSurfaceField potential;  // (mu, theta)
    double t = 0.0;
};

enum class CHScheme { FullyImplicit, ConvexSplitting };

struct CHStepConfig {
    double dt = 1e-3;
    CHScheme scheme = CHScheme::FullyImplicit;
    double newton_tol = 1e-10;
    int max_newton = 50;
    double line_search_shrink = 0.5;
};

// Transporting velocity evaluated at the transport quadrature points of every
// triangle, plus the uniform tangential surface speed. Decouples the phase
// solver from the velocity representation (zero, rigid rotation, P1 or P2).
struct VelocitySample {
    // One row per (triangle, quad point), interleaved [vx, vy].
    Eigen::MatrixX2d at_quad;
    double omega = 0.0;

    static constexpr int n_quad = 6; // transport quadrature (degree 4)

    static VelocitySample zero(const DiskMesh& mesh);
    // Rigid rotation with boundary speed omega: v = (omega/R) * (-y, x).
    static VelocitySample rigid(const DiskMesh& mesh, double omega);
    static VelocitySample from_p1(const DiskMesh& mesh, const BulkVectorField& v, double omega);
    static VelocitySample from_callback(const DiskMesh& mesh,
                                        const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& v,
                                        double omega);
};

struct FreeEnergy {
    double bulk = 0.0;     // 1/2 |grad phi|^2 + F(phi)
    double surface = 0.0;  // 1/2 |grad_G psi|^2 + G(psi)
    double penalty = 0.0;  // chi(K)/2 (alpha psi - phi)^2 on Gamma
    double total() const { return bulk + surface + penalty; }
};

struct MassValues {
    double bulk = 0.0;
    double surface = 0.0;
    double combined = 0.0; // beta * bulk + surface
};

struct CHStepResult {
    CHState state;
    int newton_iters = 0;
    std::vector<double> residual_history;
};

// Newton failed to converge; carries the last residual so the caller can
// halve dt and retry.
struct ch_step_failure : solver_error {
    double last_residual;
    ch_step_failure(const std::string& what, double res) : solver_error(what), last_residual(res) {}
};

// One implicit step of the convective bulk-surface Cahn-Hilliard system.
// Backward Euler with the velocity explicit; the potentials are implicit
// (fully implicit F', or convex splitting with the concave part explicit).
// Mass is conserved exactly per regime: combined (beta,1) mass for L < inf,
// separate bulk and surface masses for L = inf.
class CHSystem {
public:
    CHSystem(const DiskMesh& mesh, const SpaceOperators& ops, const ModelParameters& params);

    CHStepResult step(const CHState& state, const VelocitySample& vel, const CHStepConfig& config) const;

    FreeEnergy free_energy(const CHState& state) const;
    MassValues mass_functionals(const CHState& state) const;

    // Mobility-weighted dissipation integrals of the current state:
    // (bulk mobility, surface mobility, chi(L)(beta theta - mu)^2).
    std::array<double, 3> dissipation(const CHState& state) const;

    // Chemical potentials from the constitutive compatibility condition.
    // For L = 0 the pair must satisfy mu = beta theta on the boundary; if the
    // unconstrained solve violates this, the pair is projected and
    // *projected is set.
    BulkSurfaceField initial_potentials(const BulkSurfaceField& phase, bool* projected = nullptr) const;

    double separation_margin(const CHState& state) const;

    const ModelParameters& params() const { return params_; }
    const SpaceOperators& ops() const { return ops_; }
    const DiskMesh& mesh() const { return mesh_; }

private:
    const DiskMesh& mesh_;
    const SpaceOperators& ops_;
    const ModelParameters& params_;
    double chi_k_, chi_l_;
    bool l_inf_;

    // L = 0 identification mu = beta theta on the boundary.
    bool identify_mt_ = false;
    std::vector<int> vertex_boundary_; // bulk vertex -> boundary index or -1
    std::vector<int> interior_index_;  // bulk vertex -> interior slot or -1
    int n_interior_ = 0;
    int n_mt_red_ = 0;

    struct Assembled;
    void assemble(Assembled& out, const Eigen::VectorXd& x, const BulkSurfaceField& prev,
                  const VelocitySample& vel, const CHStepConfig& config, bool jacobian) const;

    Eigen::VectorXd pack(const BulkSurfaceField& phase, const BulkSurfaceField& pot) const;
    void unpack(const Eigen::VectorXd& x, BulkSurfaceField& phase, BulkSurfaceField& pot) const;
    bool admissible(const Eigen::VectorXd& x) const;
};

} // namespace bsnsch
