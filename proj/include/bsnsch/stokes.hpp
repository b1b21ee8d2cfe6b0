#pragma once

#include "bsnsch/cahn_hilliard.hpp"
#include "bsnsch/fields.hpp"
#include "bsnsch/materials.hpp"
#include "bsnsch/mesh.hpp"

#include <functional>
#include <vector>

namespace bsnsch {

// P2 velocity space on the triangulation: vertex nodes followed by edge
// midpoint nodes. Boundary nodes are listed in loop order (vertex, midpoint,
// vertex, ...) with their radial frame.
struct P2Space {
    int n_nodes = 0;
    std::vector<std::array<int, 6>> tri_nodes; // v0 v1 v2, mid(1,2), mid(2,0), mid(0,1)
    std::vector<Eigen::Vector2d> node_pos;

    struct BoundaryNode {
        int node;                // P2 node id
        Eigen::Vector2d normal;  // radial
        Eigen::Vector2d tangent; // counterclockwise
        double radius_scale;     // |x| / R; 1 at vertices
        bool is_vertex;
        int loop_index; // boundary vertex index for vertices, edge index for midpoints
    };
    std::vector<BoundaryNode> boundary; // loop order: v0, m0, v1, m1, ...
};

P2Space build_p2_space(const DiskMesh& mesh);

// Bulk velocity (P2 coefficients), bulk pressure (P1, zero mean), uniform
// tangential surface speed omega (the 2D reduction of the surface velocity)
// and the recovered surface pressure q (zero mean).
struct FlowState {
    Eigen::VectorXd v_p2; // interleaved [vx, vy] per P2 node
    Eigen::VectorXd p;    // per bulk vertex
    double omega = 0.0;
    Eigen::VectorXd q;    // per boundary vertex
    double t = 0.0;
};

struct StokesStats {
    double weak_residual = 0.0;   // relative linear-system residual
    double energy_identity = 0.0; // relative defect of the discrete energy identity
    double courant = 0.0;         // explicit-convection Courant number (ns_step)
    bool has_diagnostics = false; // the four entries below are filled by ns_step
    double kinetic_bulk = 0.0;
    double kinetic_surf = 0.0;
    double viscous_dissipation = 0.0;
    double friction_dissipation = 0.0;
};

struct StokesSolution {
    FlowState state;
    StokesStats stats;
};

struct EigenPairs {
    std::vector<double> values;            // ascending, all positive
    std::vector<Eigen::VectorXd> fields;   // P2 velocity coefficients
    std::vector<double> omegas;            // surface speed per field
};

// Bulk-surface Stokes solver on the symmetric polar disk mesh. The surface
// velocity is reduced to the single scalar omega (closed-curve surface
// incompressibility); boundary kinematics v.n = 0, v.tau = (|x|/R) omega are
// imposed strongly through constraint rows. A full surface-DOF assembly is
// retained behind a flag for the reduction-equivalence test.
class StokesSolver {
public:
    StokesSolver(const DiskMesh& mesh, const SpaceOperators& ops, const ModelParameters& params);

    // Stationary solve of the variable-coefficient Stokes system with bulk
    // load f (P1 nodal) and tangential surface forcing g (scalar per boundary
    // vertex). The phase pair supplies the viscosity/friction coefficients.
    StokesSolution solve_stokes(const BulkSurfaceField& phase, const BulkVectorField& f,
                                const Eigen::VectorXd& g_tau, bool full_surface_dofs = false) const;

    // Vector-valued surface forcing; rejects non-tangential data.
    StokesSolution solve_stokes_vector_g(const BulkSurfaceField& phase, const BulkVectorField& f,
                                         const std::vector<Eigen::Vector2d>& g,
                                         bool full_surface_dofs = false) const;

    // Semi-implicit momentum step of the coupled model: implicit inertia,
    // viscosity and friction; explicit convection, flux convection and
    // capillary forcing taken from the Cahn-Hilliard state.
    StokesSolution ns_step(const FlowState& flow, const CHState& ch, double dt) const;

    // Smallest k eigenpairs of the constant-coefficient bulk-surface Stokes
    // operator on the discretely divergence-free constrained space,
    // orthonormal in the coupled L2 product.
    EigenPairs eigenpairs(int k) const;

    // Discrete Korn constant: sqrt of the largest generalized eigenvalue of
    // (coupled H1 form, Korn form) on the trace-coupled space.
    double korn_constant() const;

    // L2 projection onto the divergence-free, boundary-kinematics-consistent
    // space (discrete analogue of the initial-velocity projection).
    FlowState project(const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& v0, double omega0) const;

    FlowState zero_flow() const;

    // Exact rigid rotation with boundary speed omega (p = q = 0).
    FlowState rigid_flow(double omega) const;

    BulkVectorField vertex_velocity(const FlowState& flow) const;
    VelocitySample sample_velocity(const FlowState& flow) const;

    // Coupled L2 inner product (bulk P2 mass plus the surface omega pairing).
    double l2_inner(const Eigen::VectorXd& ua, double omega_a, const Eigen::VectorXd& ub, double omega_b) const;

    // Diagnostics for the flow invariants.
    double divergence_residual(const FlowState& flow) const;
    double kinematics_residual(const FlowState& flow) const;
    double kinetic_energy_bulk(const FlowState& flow, const BulkSurfaceField& phase) const; // 1/2 rho |v|^2
    double kinetic_energy_surface(const FlowState& flow, const BulkSurfaceField& phase) const;
    double viscous_dissipation(const FlowState& flow, const BulkSurfaceField& phase) const; // 2 nu |Dv|^2
    double friction_dissipation(const FlowState& flow, const BulkSurfaceField& phase) const;

    const P2Space& space() const { return p2_; }

private:
    const DiskMesh& mesh_;
    const SpaceOperators& ops_;
    const ModelParameters& params_;
    P2Space p2_;
    SpMat div_rows_;   // NV x nU, entries -int zeta div N
    SpMat mass_p2_;    // unweighted vector P2 mass
    SpMat proj_int_;   // nU x nU_interior selection of interior velocity DOFs
    Eigen::VectorXd t_vec_; // boundary rigid tie: U = proj_int * U_int + t_vec * omega
    double h_min_ = 0.0;

    int n_u() const { return 2 * p2_.n_nodes; }

    SpMat viscous_matrix(const BulkSurfaceField& phase) const;
    SpMat rho_mass_matrix(const BulkSurfaceField& phase) const;

    struct Kkt;
    StokesSolution solve_kkt(const BulkSurfaceField& phase, const SpMat& a_block, double a_omega,
                             const Eigen::VectorXd& rhs_u, double rhs_omega,
                             const Eigen::VectorXd& q_residual_source, bool full_surface_dofs,
                             double sigma_dt_mass, double omega_old) const;
};

// Velocity sample (for the Cahn-Hilliard transport) from a P2 flow.
VelocitySample sample_velocity_p2(const DiskMesh& mesh, const P2Space& p2, const FlowState& flow);

} // namespace bsnsch
