#pragma once

#include "bsnsch/fields.hpp"
#include "bsnsch/materials.hpp"

#include <Eigen/SparseLU>

#include <memory>
#include <vector>

namespace bsnsch {

// Factorized coupled bulk-surface elliptic operator: the mobility-weighted
// form with chi(L) boundary penalty, mean constraints as Lagrange multipliers
// (one generalized mean for L < inf, separate bulk/surface means for
// L = inf), and DOF identification u = beta v on the boundary when L = 0.
// Immutable after construction; concurrent solves with distinct right-hand
// sides are safe.
class EllipticProblem {
public:
    // m_bulk / m_surf are mobility values at bulk vertices / boundary
    // vertices (identically one for the constant-coefficient problem).
    EllipticProblem(const SpaceOperators& ops, double L, double beta,
                    Eigen::VectorXd m_bulk, Eigen::VectorXd m_surf);

    // Constant-coefficient problem (m = 1).
    EllipticProblem(const SpaceOperators& ops, double L, double beta);

    // Mobility evaluated from a phase pair through the coefficient set.
    EllipticProblem(const SpaceOperators& ops, double L, double beta,
                    const BulkSurfaceField& phase, const CoefficientSet& coeffs);

    struct Result {
        BulkSurfaceField solution;
        double weak_residual = 0.0;    // relative residual over all test rows
        std::vector<double> multipliers; // mean-constraint multipliers
    };

    // Weak solve. The right-hand side is given as nodal values of (f, g);
    // its generalized mean (L < inf) or both means (L = inf) must vanish to
    // 1e-10 relative unless auto_mean_removal is set.
    Result solve(const BulkSurfaceField& rhs, bool auto_mean_removal = false) const;

    // Discrete || . ||_{L,beta,[phi,psi],*}: the mobility-weighted form of
    // S(rhs) with itself, square-rooted.
    double dual_norm(const BulkSurfaceField& rhs, bool auto_mean_removal = false) const;

    // The weighted primal form ((a),(b))_{L,beta,[phi,psi]} on nodal fields.
    double inner_weighted(const BulkSurfaceField& a, const BulkSurfaceField& b) const;

    double L() const { return L_; }
    double beta() const { return beta_; }

private:
    const SpaceOperators& ops_;
    double L_;
    double beta_;
    Eigen::VectorXd m_bulk_, m_surf_;
    SpMat a_bulk_w_, a_surf_w_; // mobility-weighted stiffness blocks
    SpMat form_full_;   // weighted bilinear form on the full (u,v) space
    SpMat reduction_;   // full = reduction * reduced (identity unless L = 0)
    SpMat form_red_;
    std::vector<Eigen::VectorXd> constraints_; // reduced-space constraint vectors
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
    int n_red_ = 0;

    void assemble_and_factor();
    Eigen::VectorXd reduced_rhs(const BulkSurfaceField& rhs) const;
};

} // namespace bsnsch
