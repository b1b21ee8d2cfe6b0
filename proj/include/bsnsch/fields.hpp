#pragma once

#include "bsnsch/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <string>
#include <vector>

namespace bsnsch {

using SpMat = Eigen::SparseMatrix<double>;

// Scalar pair (phi on bulk vertices, psi on boundary vertices): the central
// unknown type for phase fields, chemical potentials and elliptic data.
struct BulkSurfaceField {
    Eigen::VectorXd phi;
    Eigen::VectorXd psi;

    BulkSurfaceField() = default;
    BulkSurfaceField(int nv, int nb) : phi(Eigen::VectorXd::Zero(nv)), psi(Eigen::VectorXd::Zero(nb)) {}

    bool finite() const { return phi.allFinite() && psi.allFinite(); }
};

// 2-vector per bulk vertex (P1 velocity sample).
struct BulkVectorField {
    Eigen::VectorXd x; // component-interleaved: [v0x, v0y, v1x, v1y, ...]

    BulkVectorField() = default;
    explicit BulkVectorField(int nv) : x(Eigen::VectorXd::Zero(2 * nv)) {}

    Eigen::Vector2d at(int v) const { return {x[2 * v], x[2 * v + 1]}; }
    void set(int v, const Eigen::Vector2d& val)
    {
        x[2 * v] = val.x();
        x[2 * v + 1] = val.y();
    }
};

// Per-triangle geometry reused by all assemblers: vertex ids, area and the
// constant P1 barycentric gradients. The third gradient is the negative sum
// of the first two so that gradient sums vanish exactly in floating point
// (this is what makes A * constant identically zero).
struct TriGeometry {
    std::array<int, 3> v;
    double area;
    Eigen::Matrix<double, 2, 3> grad;
};

struct EdgeGeometry {
    int a, b;      // boundary-vertex indices (surface DOFs), edge a -> b
    double length;
};

struct FemGeometry {
    std::vector<TriGeometry> tris;
    std::vector<EdgeGeometry> edges; // boundary loop edges in order
};

FemGeometry build_fem_geometry(const DiskMesh& mesh);

// Assembled P1 operators for the bulk triangulation and the boundary loop.
// Mass matrices are consistent (non-lumped); lumped variants are exposed for
// diagnostics only.
struct SpaceOperators {
    SpMat M_bulk;   // NV x NV
    SpMat A_bulk;   // NV x NV
    SpMat M_surf;   // NB x NB (closed-loop P1 mass)
    SpMat A_surf;   // NB x NB (arclength second differences)
    SpMat trace;    // NB x NV selection: (T phi)_b = phi[loop[b]]
    Eigen::VectorXd lumped_bulk;
    Eigen::VectorXd lumped_surf;
    double area = 0.0;
    double perimeter = 0.0;
    FemGeometry geom;

    int n_bulk() const { return static_cast<int>(M_bulk.rows()); }
    int n_surf() const { return static_cast<int>(M_surf.rows()); }
};

SpaceOperators build_space_operators(const DiskMesh& mesh);

// Stiffness matrices with a P1-interpolated scalar weight (vertex values w).
SpMat weighted_bulk_stiffness(const SpaceOperators& ops, const Eigen::VectorXd& w_vertex);
SpMat weighted_surf_stiffness(const SpaceOperators& ops, const Eigen::VectorXd& w_boundary);

// Generalized bulk-surface mean. For the finite-L regime this is
// (beta |Omega| <phi> + |Gamma| <psi>) / (beta^2 |Omega| + |Gamma|) with
// discrete measures; the infinite regime keeps the two means separate.
double generalized_mean(const SpaceOperators& ops, const BulkSurfaceField& f, double beta);
std::pair<double, double> separate_means(const SpaceOperators& ops, const BulkSurfaceField& f);

// Bilinear form (a,b)_{L,beta}: bulk stiffness + surface stiffness +
// chi(L) boundary penalty between beta*psi and the bulk trace. L may be 0 or
// +infinity (chi vanishes there).
double inner_lb(const SpaceOperators& ops, const BulkSurfaceField& a, const BulkSurfaceField& b,
                double L, double beta);

// || . ||_{K,alpha} with chi(K) = 1/K; rejects K outside (0, inf).
double norm_ka(const SpaceOperators& ops, const BulkSurfaceField& a, double K, double alpha);

// Discrete Poincare constant: sqrt of the largest generalized eigenvalue of
// (L^2 mass form, (K,alpha) form) on the subspace where the (beta,1)-weighted
// generalized mean vanishes.
double poincare_check(const SpaceOperators& ops, double K, double alpha, double beta);

// Max over random discrete fields of ||u||_{L2(Gamma)} /
// (||u||_{L2}^{1/2} ||u||_{H1}^{1/2}); finite and refinement-stable.
double trace_interpolation_quotient(const SpaceOperators& ops, int n_samples, std::uint64_t seed);

// Coordinate-format text export (row col value per line, 17 digits).
void write_coordinate_matrix(const SpMat& m, const std::string& path);

// Deterministic smooth fields for tests and experiments: a low-order
// trigonometric polynomial in (x, y) with seeded coefficients, scaled so that
// max |phi| <= amplitude; psi is the boundary trace.
BulkSurfaceField random_smooth_field(const DiskMesh& mesh, double amplitude, std::uint64_t seed);

} // namespace bsnsch
