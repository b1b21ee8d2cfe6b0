#include "bsnsch/stokes.hpp"

#include "bsnsch/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace bsnsch {

namespace {

// P2 shape values and gradients at barycentric coordinates lam, given the
// constant P1 gradients g of the triangle.
void p2_shapes(const double lam[3], const Eigen::Matrix<double, 2, 3>& g, double n[6],
               Eigen::Matrix<double, 2, 6>& dn)
{
    n[0] = lam[0] * (2.0 * lam[0] - 1.0);
    n[1] = lam[1] * (2.0 * lam[1] - 1.0);
    n[2] = lam[2] * (2.0 * lam[2] - 1.0);
    n[3] = 4.0 * lam[1] * lam[2];
    n[4] = 4.0 * lam[2] * lam[0];
    n[5] = 4.0 * lam[0] * lam[1];
    dn.col(0) = (4.0 * lam[0] - 1.0) * g.col(0);
    dn.col(1) = (4.0 * lam[1] - 1.0) * g.col(1);
    dn.col(2) = (4.0 * lam[2] - 1.0) * g.col(2);
    dn.col(3) = 4.0 * (lam[1] * g.col(2) + lam[2] * g.col(1));
    dn.col(4) = 4.0 * (lam[2] * g.col(0) + lam[0] * g.col(2));
    dn.col(5) = 4.0 * (lam[0] * g.col(1) + lam[1] * g.col(0));
}

// 1D P2 shapes on [0,1].
void p2_shapes_1d(double t, double n[3], double dn[3])
{
    n[0] = (1.0 - t) * (1.0 - 2.0 * t);
    n[1] = 4.0 * t * (1.0 - t);
    n[2] = t * (2.0 * t - 1.0);
    dn[0] = 4.0 * t - 3.0;
    dn[1] = 4.0 - 8.0 * t;
    dn[2] = 4.0 * t - 1.0;
}

void append_sym(std::vector<Eigen::Triplet<double>>& t, int i, int j, double v)
{
    t.emplace_back(i, j, v);
    t.emplace_back(j, i, v);
}

// Direct solver for symmetric saddle systems: factors a quasi-definite
// regularization (tiny negative diagonal on the multiplier block) with
// unpivoted LDLT and recovers the exact solution of the unregularized system
// by iterative refinement.
class SaddleSolver {
public:
    // reg_rows: indices whose diagonal receives -eps * reg_scale.
    SaddleSolver(SpMat kkt, const std::vector<int>& reg_rows, double eps = 1e-8)
        : kkt_(std::move(kkt))
    {
        SpMat reg(kkt_.rows(), kkt_.cols());
        std::vector<Eigen::Triplet<double>> tr;
        tr.reserve(reg_rows.size());
        for (int i : reg_rows) tr.emplace_back(i, i, -eps);
        reg.setFromTriplets(tr.begin(), tr.end());
        const SpMat kkt_reg = kkt_ + reg;
        ldlt_.compute(kkt_reg);
        ok_ = ldlt_.info() == Eigen::Success;
    }

    bool ok() const { return ok_; }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const
    {
        Eigen::VectorXd x = ldlt_.solve(rhs);
        for (int it = 0; it < 3; ++it) {
            const Eigen::VectorXd r = rhs - kkt_ * x;
            const double rn = r.cwiseAbs().maxCoeff();
            if (rn <= 1e-16 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) break;
            x += ldlt_.solve(r);
        }
        return x;
    }

    const SpMat& matrix() const { return kkt_; }

private:
    SpMat kkt_;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
    bool ok_ = false;
};

} // namespace

P2Space build_p2_space(const DiskMesh& mesh)
{
    P2Space p2;
    const int nv = mesh.n_vertices();
    std::map<std::pair<int, int>, int> edge_id;
    auto get_edge = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = edge_id.find(key);
        if (it != edge_id.end()) return it->second;
        const int id = static_cast<int>(edge_id.size());
        edge_id.emplace(key, id);
        return id;
    };

    p2.tri_nodes.reserve(mesh.n_triangles());
    for (const auto& tri : mesh.triangles) {
        std::array<int, 6> nodes;
        nodes[0] = tri[0];
        nodes[1] = tri[1];
        nodes[2] = tri[2];
        nodes[3] = nv + get_edge(tri[1], tri[2]);
        nodes[4] = nv + get_edge(tri[2], tri[0]);
        nodes[5] = nv + get_edge(tri[0], tri[1]);
        p2.tri_nodes.push_back(nodes);
    }
    p2.n_nodes = nv + static_cast<int>(edge_id.size());
    p2.node_pos.resize(p2.n_nodes);
    for (int i = 0; i < nv; ++i) p2.node_pos[i] = mesh.vertices[i];
    for (const auto& [key, id] : edge_id)
        p2.node_pos[nv + id] = 0.5 * (mesh.vertices[key.first] + mesh.vertices[key.second]);

    const int nb = mesh.n_boundary();
    p2.boundary.reserve(2 * nb);
    for (int b = 0; b < nb; ++b) {
        const int va = mesh.boundary_loop[b];
        const int vb = mesh.boundary_loop[(b + 1) % nb];
        for (int which = 0; which < 2; ++which) {
            P2Space::BoundaryNode bn;
            if (which == 0) {
                bn.node = va;
                bn.is_vertex = true;
                bn.loop_index = b;
            } else {
                bn.node = nv + get_edge(va, vb);
                bn.is_vertex = false;
                bn.loop_index = b;
            }
            const Eigen::Vector2d pos = p2.node_pos[bn.node];
            const double r = pos.norm();
            bn.normal = pos / r;
            bn.tangent = Eigen::Vector2d(-bn.normal.y(), bn.normal.x());
            bn.radius_scale = r / mesh.radius;
            p2.boundary.push_back(bn);
        }
    }
    return p2;
}

StokesSolver::StokesSolver(const DiskMesh& mesh, const SpaceOperators& ops, const ModelParameters& params)
    : mesh_(mesh), ops_(ops), params_(params), p2_(build_p2_space(mesh))
{
    // Divergence rows: -int zeta div u (P1 pressure test, exact with the
    // degree-2 rule) and the unweighted vector P2 mass.
    std::vector<Eigen::Triplet<double>> tb, tm;
    for (std::size_t t = 0; t < ops_.geom.tris.size(); ++t) {
        const auto& tg = ops_.geom.tris[t];
        const auto& nodes = p2_.tri_nodes[t];
        double n[6];
        Eigen::Matrix<double, 2, 6> dn;
        for (const auto& tq : tri_quad_deg2) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            const double w = tq.w * tg.area;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 6; ++j)
                    for (int d = 0; d < 2; ++d)
                        tb.emplace_back(tg.v[i], 2 * nodes[j] + d, -w * lam[i] * dn(d, j));
        }
        for (const auto& tq : tri_quad_deg4) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            const double w = tq.w * tg.area;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j)
                    for (int d = 0; d < 2; ++d) tm.emplace_back(2 * nodes[i] + d, 2 * nodes[j] + d, w * n[i] * n[j]);
        }
    }
    div_rows_.resize(ops_.n_bulk(), n_u());
    div_rows_.setFromTriplets(tb.begin(), tb.end());
    mass_p2_.resize(n_u(), n_u());
    mass_p2_.setFromTriplets(tm.begin(), tm.end());

    // Interior projection for the eliminated (reduced) solve path: boundary
    // velocity nodes carry no free DOFs, their value is tau * (|x|/R) * omega.
    std::vector<int> bmark(p2_.n_nodes, -1);
    for (int m = 0; m < static_cast<int>(p2_.boundary.size()); ++m) bmark[p2_.boundary[m].node] = m;
    int nui = 0;
    std::vector<Eigen::Triplet<double>> tp;
    t_vec_ = Eigen::VectorXd::Zero(n_u());
    for (int i = 0; i < p2_.n_nodes; ++i) {
        if (bmark[i] < 0) {
            tp.emplace_back(2 * i, nui++, 1.0);
            tp.emplace_back(2 * i + 1, nui++, 1.0);
        } else {
            const auto& bn = p2_.boundary[bmark[i]];
            t_vec_[2 * i] = bn.radius_scale * bn.tangent.x();
            t_vec_[2 * i + 1] = bn.radius_scale * bn.tangent.y();
        }
    }
    proj_int_.resize(n_u(), nui);
    proj_int_.setFromTriplets(tp.begin(), tp.end());

    h_min_ = infinite;
    for (const auto& tg : ops_.geom.tris) {
        double lmax = 0.0;
        for (int e = 0; e < 3; ++e) {
            const Eigen::Vector2d d = mesh.vertices[tg.v[(e + 1) % 3]] - mesh.vertices[tg.v[e]];
            lmax = std::max(lmax, d.norm());
        }
        h_min_ = std::min(h_min_, 2.0 * tg.area / lmax);
    }
}

SpMat StokesSolver::viscous_matrix(const BulkSurfaceField& phase) const
{
    std::vector<Eigen::Triplet<double>> ta;
    ta.reserve(144 * ops_.geom.tris.size());
    for (std::size_t t = 0; t < ops_.geom.tris.size(); ++t) {
        const auto& tg = ops_.geom.tris[t];
        const auto& nodes = p2_.tri_nodes[t];
        double n[6];
        Eigen::Matrix<double, 2, 6> dn;
        for (const auto& tq : tri_quad_deg4) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            const double nu = params_.coeffs.nu_bulk(lam[0] * phase.phi[tg.v[0]] + lam[1] * phase.phi[tg.v[1]] +
                                                     lam[2] * phase.phi[tg.v[2]]);
            const double w = tq.w * tg.area * nu;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    const double gij = dn.col(i).dot(dn.col(j));
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            double val = dn(dj, i) * dn(di, j);
                            if (di == dj) val += gij;
                            ta.emplace_back(2 * nodes[i] + di, 2 * nodes[j] + dj, w * val);
                        }
                }
        }
    }
    SpMat a(n_u(), n_u());
    a.setFromTriplets(ta.begin(), ta.end());
    return a;
}

SpMat StokesSolver::rho_mass_matrix(const BulkSurfaceField& phase) const
{
    SpMat out;
    std::vector<Eigen::Triplet<double>> tm;
    tm.reserve(144 * ops_.geom.tris.size());
    for (std::size_t t = 0; t < ops_.geom.tris.size(); ++t) {
        const auto& tg = ops_.geom.tris[t];
        const auto& nodes = p2_.tri_nodes[t];
        double n[6];
        Eigen::Matrix<double, 2, 6> dn;
        for (const auto& tq : tri_quad_deg5) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            const double rho = params_.rho(lam[0] * phase.phi[tg.v[0]] + lam[1] * phase.phi[tg.v[1]] +
                                           lam[2] * phase.phi[tg.v[2]]);
            const double w = tq.w * tg.area * rho;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    const double v = w * n[i] * n[j];
                    tm.emplace_back(2 * nodes[i], 2 * nodes[j], v);
                    tm.emplace_back(2 * nodes[i] + 1, 2 * nodes[j] + 1, v);
                }
        }
    }
    out.resize(n_u(), n_u());
    out.setFromTriplets(tm.begin(), tm.end());
    return out;
}

struct StokesSolver::Kkt {
    // Reduced path: [U_int omega p s]; full path: [U p w lambda_tie lambda_unif s].
};

StokesSolution StokesSolver::solve_kkt(const BulkSurfaceField& phase, const SpMat& a_block, double a_omega,
                                       const Eigen::VectorXd& rhs_u, double rhs_omega,
                                       const Eigen::VectorXd& q_residual_source, bool full_surface_dofs,
                                       double sigma_dt_mass, double omega_old) const
{
    const int nu = n_u();
    const int nv = ops_.n_bulk();
    const int nb = ops_.n_surf();
    const int nbn = static_cast<int>(p2_.boundary.size());

    StokesSolution out;
    Eigen::VectorXd lam_t(nbn); // nodal tangential constraint forces

    if (!full_surface_dofs) {
        // Eliminated formulation: rotate boundary DOFs into the rigid tie.
        const int nui = static_cast<int>(proj_int_.cols());
        const int idx_w = nui, idx_p = nui + 1, idx_s = idx_p + nv;
        const int dim = idx_s + 1;

        const SpMat a_ii = proj_int_.transpose() * a_block * proj_int_;
        const Eigen::VectorXd a_it = proj_int_.transpose() * (a_block * t_vec_);
        const double a_tt = t_vec_.dot(a_block * t_vec_) + a_omega;
        const SpMat d_i = div_rows_ * proj_int_;
        const Eigen::VectorXd d_w = div_rows_ * t_vec_;

        std::vector<Eigen::Triplet<double>> tk;
        tk.reserve(a_ii.nonZeros() + 2 * d_i.nonZeros() + 4 * nui + 16);
        for (int k = 0; k < a_ii.outerSize(); ++k)
            for (SpMat::InnerIterator it(a_ii, k); it; ++it) tk.emplace_back(it.row(), it.col(), it.value());
        for (int i = 0; i < nui; ++i)
            if (a_it[i] != 0.0) append_sym(tk, i, idx_w, a_it[i]);
        tk.emplace_back(idx_w, idx_w, a_tt);
        for (int k = 0; k < d_i.outerSize(); ++k)
            for (SpMat::InnerIterator it(d_i, k); it; ++it) {
                tk.emplace_back(idx_p + it.row(), it.col(), it.value());
                tk.emplace_back(it.col(), idx_p + it.row(), it.value());
            }
        for (int i = 0; i < nv; ++i)
            if (d_w[i] != 0.0) append_sym(tk, idx_p + i, idx_w, d_w[i]);
        // Quotient pressure gauge: slack on the redundant divergence row paired
        // with a pinned pressure DOF; p is shifted to zero mean afterwards.
        append_sym(tk, idx_s, idx_p + 0, 1.0);

        SpMat kkt(dim, dim);
        kkt.setFromTriplets(tk.begin(), tk.end());
        std::vector<int> reg_rows(nv + 1);
        for (int i = 0; i <= nv; ++i) reg_rows[i] = idx_p + i;
        const SaddleSolver solver(std::move(kkt), reg_rows);
        if (!solver.ok())
            throw solver_error("bulk-surface Stokes: singular constrained system (no surface dissipation?)");

        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
        rhs.head(nui) = proj_int_.transpose() * rhs_u;
        rhs[idx_w] = rhs_omega + t_vec_.dot(rhs_u);
        const Eigen::VectorXd sol = solver.solve(rhs);
        if (!sol.allFinite()) throw solver_error("bulk-surface Stokes: solve produced non-finite values");

        out.state.omega = sol[idx_w];
        out.state.v_p2 = proj_int_ * sol.head(nui) + t_vec_ * out.state.omega;
        out.state.p = sol.segment(idx_p, nv);
        out.state.p.array() -= ops_.lumped_bulk.dot(out.state.p) / ops_.area;

        {
            const Eigen::VectorXd resid = solver.matrix() * sol - rhs;
            const double scale = std::max(1e-300, rhs.cwiseAbs().maxCoeff());
            out.stats.weak_residual = resid.cwiseAbs().maxCoeff() / scale;
        }
        {
            const double lhs = out.state.v_p2.dot(a_block * out.state.v_p2) +
                               a_omega * out.state.omega * out.state.omega;
            const double rhsv = out.state.v_p2.dot(rhs_u) + out.state.omega * rhs_omega;
            out.stats.energy_identity =
                std::abs(lhs - rhsv) / std::max({1.0e-300, std::abs(lhs), std::abs(rhsv)});
        }
        // Constraint forces from the eliminated boundary momentum rows. The
        // pressure gradient enters through the stored divergence pairing.
        const Eigen::VectorXd mom_resid =
            rhs_u - a_block * out.state.v_p2 - div_rows_.transpose() * sol.segment(idx_p, nv);
        for (int m = 0; m < nbn; ++m) {
            const auto& bn = p2_.boundary[m];
            const Eigen::Vector2d rm(mom_resid[2 * bn.node], mom_resid[2 * bn.node + 1]);
            lam_t[m] = bn.tangent.dot(rm);
        }
    } else {
        // Multiplier formulation with explicit surface speed DOFs, retained
        // for the reduction-equivalence test.
        const int idx_p = nu;
        const int idx_w = nu + nv;
        const int nw = nbn;
        const int idx_lam = idx_w + nw;
        const int n_tie = 2 * nbn;
        const int idx_unif = idx_lam + n_tie;
        const int n_unif = nbn - 1;
        const int idx_s = idx_unif + n_unif;
        const int dim = idx_s + 1;

        std::vector<Eigen::Triplet<double>> tk;
        for (int k = 0; k < a_block.outerSize(); ++k)
            for (SpMat::InnerIterator it(a_block, k); it; ++it) tk.emplace_back(it.row(), it.col(), it.value());
        for (int k = 0; k < div_rows_.outerSize(); ++k)
            for (SpMat::InnerIterator it(div_rows_, k); it; ++it) {
                tk.emplace_back(idx_p + it.row(), it.col(), it.value());
                tk.emplace_back(it.col(), idx_p + it.row(), it.value());
            }
        // Friction (and inertia) as a weighted P2 loop mass on the speed DOFs;
        // identical to the reduced scalar once the uniformity rows collapse it.
        for (int b = 0; b < nb; ++b) {
            const int m0 = 2 * b, m1 = 2 * b + 1, m2 = (2 * b + 2) % nbn;
            const double l = ops_.geom.edges[b].length;
            const double ga = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b]], phase.psi[b]);
            const double gb =
                params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[(b + 1) % nb]], phase.psi[(b + 1) % nb]);
            const int idx[3] = {idx_w + m0, idx_w + m1, idx_w + m2};
            for (const auto& eq : edge_quad_deg5) {
                double sh[3], dsh[3];
                p2_shapes_1d(eq.t, sh, dsh);
                const double gq = (1.0 - eq.t) * ga + eq.t * gb;
                const double sq = sigma_dt_mass != 0.0
                                      ? sigma_dt_mass * ((1.0 - eq.t) * params_.sigma(phase.psi[b]) +
                                                         eq.t * params_.sigma(phase.psi[(b + 1) % nb]))
                                      : 0.0;
                const double w = eq.w * l * (gq + sq);
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) tk.emplace_back(idx[i], idx[j], w * sh[i] * sh[j]);
            }
        }
        for (int m = 0; m < nbn - 1; ++m) {
            append_sym(tk, idx_unif + m, idx_w + m, 1.0);
            append_sym(tk, idx_unif + m, idx_w + m + 1, -1.0);
        }
        for (int m = 0; m < nbn; ++m) {
            const auto& bn = p2_.boundary[m];
            const int rn = idx_lam + 2 * m;
            const int rt = idx_lam + 2 * m + 1;
            append_sym(tk, rn, 2 * bn.node, bn.normal.x());
            append_sym(tk, rn, 2 * bn.node + 1, bn.normal.y());
            append_sym(tk, rt, 2 * bn.node, bn.tangent.x());
            append_sym(tk, rt, 2 * bn.node + 1, bn.tangent.y());
            append_sym(tk, rt, idx_w + m, -bn.radius_scale);
        }
        append_sym(tk, idx_s, idx_p + 0, 1.0);

        SpMat kkt(dim, dim);
        kkt.setFromTriplets(tk.begin(), tk.end());
        Eigen::SparseLU<SpMat> lu(kkt);
        if (lu.info() != Eigen::Success)
            throw solver_error("bulk-surface Stokes: singular constrained system (no surface dissipation?)");

        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
        rhs.head(nu) = rhs_u;
        // Distribute the tangential load with the loop P2 basis.
        for (int b = 0; b < nb; ++b) {
            const double l = ops_.geom.edges[b].length;
            const double fa = q_residual_source[b];
            const double fb = q_residual_source[(b + 1) % nb];
            const int idx[3] = {idx_w + 2 * b, idx_w + 2 * b + 1, idx_w + (2 * b + 2) % nbn};
            for (const auto& eq : edge_quad_deg5) {
                double sh[3], dsh[3];
                p2_shapes_1d(eq.t, sh, dsh);
                const double fq = (1.0 - eq.t) * fa + eq.t * fb;
                double sq = 0.0;
                if (sigma_dt_mass != 0.0)
                    sq = sigma_dt_mass * omega_old *
                         ((1.0 - eq.t) * params_.sigma(phase.psi[b]) + eq.t * params_.sigma(phase.psi[(b + 1) % nb]));
                for (int i = 0; i < 3; ++i) rhs[idx[i]] += eq.w * l * (fq + sq) * sh[i];
            }
        }
        const Eigen::VectorXd sol = lu.solve(rhs);
        if (!sol.allFinite()) throw solver_error("bulk-surface Stokes: solve produced non-finite values");

        out.state.v_p2 = sol.head(nu);
        out.state.p = sol.segment(idx_p, nv);
        out.state.p.array() -= ops_.lumped_bulk.dot(out.state.p) / ops_.area;
        out.state.omega = sol[idx_w];
        {
            const Eigen::VectorXd resid = kkt * sol - rhs;
            const double scale = std::max(1e-300, rhs.cwiseAbs().maxCoeff());
            out.stats.weak_residual = resid.cwiseAbs().maxCoeff() / scale;
        }
        for (int m = 0; m < nbn; ++m) lam_t[m] = sol[idx_lam + 2 * m + 1];
    }
    out.state.t = 0.0;

    // Surface pressure from the tangential momentum balance along the loop.
    // Each boundary edge carries the increment q(b+1) - q(b) = integral over
    // the edge of the tangential residual (applied density minus friction and
    // inertia) plus the constraint-force shares of its nodes; the tiny loop
    //-closure defect is spread proportionally to edge length before marching,
    // and q is normalized to zero mean.
    {
        Eigen::VectorXd incr = Eigen::VectorXd::Zero(nb);
        for (int b = 0; b < nb; ++b) {
            const int b1 = (b + 1) % nb;
            const double l = ops_.geom.edges[b].length;
            const double ga = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b]], phase.psi[b]);
            const double gb = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b1]], phase.psi[b1]);
            const double sa = params_.sigma(phase.psi[b]);
            const double sb = params_.sigma(phase.psi[b1]);
            const double dw = sigma_dt_mass * (out.state.omega - omega_old);
            const double ra = q_residual_source[b] - ga * out.state.omega - sa * dw;
            const double rb = q_residual_source[b1] - gb * out.state.omega - sb * dw;
            incr[b] = 0.5 * l * (ra + rb);
            incr[b] += 0.5 * lam_t[2 * b];                 // vertex b share
            incr[b] += lam_t[2 * b + 1];                   // edge midpoint
            incr[b] += 0.5 * lam_t[(2 * b + 2) % nbn];     // vertex b+1 share
        }
        const double defect = incr.sum();
        for (int b = 0; b < nb; ++b) incr[b] -= defect * ops_.geom.edges[b].length / ops_.perimeter;
        out.state.q.resize(nb);
        out.state.q[0] = 0.0;
        for (int b = 0; b + 1 < nb; ++b) out.state.q[b + 1] = out.state.q[b] + incr[b];
        const double qmean = ops_.lumped_surf.dot(out.state.q) / ops_.perimeter;
        out.state.q.array() -= qmean;
    }
    return out;
}

StokesSolution StokesSolver::solve_stokes(const BulkSurfaceField& phase, const BulkVectorField& f,
                                          const Eigen::VectorXd& g_tau, bool full_surface_dofs) const
{
    const SpMat a = viscous_matrix(phase);

    // gamma integral and tangential load.
    double a_omega = 0.0, rhs_omega = 0.0;
    const int nb = ops_.n_surf();
    for (int b = 0; b < nb; ++b) {
        const double l = ops_.geom.edges[b].length;
        const int b1 = (b + 1) % nb;
        const double ga = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b]], phase.psi[b]);
        const double gb = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b1]], phase.psi[b1]);
        for (const auto& eq : edge_quad_deg5) {
            a_omega += eq.w * l * ((1.0 - eq.t) * ga + eq.t * gb);
            rhs_omega += eq.w * l * ((1.0 - eq.t) * g_tau[b] + eq.t * g_tau[b1]);
        }
    }

    // Bulk load against P2 test functions (f is P1 nodal data).
    Eigen::VectorXd rhs_u = Eigen::VectorXd::Zero(n_u());
    for (std::size_t t = 0; t < ops_.geom.tris.size(); ++t) {
        const auto& tg = ops_.geom.tris[t];
        const auto& nodes = p2_.tri_nodes[t];
        double n[6];
        Eigen::Matrix<double, 2, 6> dn;
        for (const auto& tq : tri_quad_deg4) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            const Eigen::Vector2d fq = lam[0] * f.at(tg.v[0]) + lam[1] * f.at(tg.v[1]) + lam[2] * f.at(tg.v[2]);
            const double w = tq.w * tg.area;
            for (int i = 0; i < 6; ++i) {
                rhs_u[2 * nodes[i]] += w * fq.x() * n[i];
                rhs_u[2 * nodes[i] + 1] += w * fq.y() * n[i];
            }
        }
    }

    return solve_kkt(phase, a, a_omega, rhs_u, rhs_omega, g_tau, full_surface_dofs, 0.0, 0.0);
}

StokesSolution StokesSolver::solve_stokes_vector_g(const BulkSurfaceField& phase, const BulkVectorField& f,
                                                   const std::vector<Eigen::Vector2d>& g,
                                                   bool full_surface_dofs) const
{
    const int nb = ops_.n_surf();
    if (static_cast<int>(g.size()) != nb) throw input_error("solve_bs_stokes: g must have one vector per boundary vertex");
    Eigen::VectorXd g_tau(nb);
    const BoundaryFrame frame = compute_boundary_frame(mesh_);
    for (int b = 0; b < nb; ++b) {
        const double gn = g[b].dot(frame.normal[b]);
        if (std::abs(gn) > 1e-12 * std::max(1.0, g[b].norm()))
            throw input_error("solve_bs_stokes: surface forcing must be tangential");
        g_tau[b] = g[b].dot(frame.tangent[b]);
    }
    return solve_stokes(phase, f, g_tau, full_surface_dofs);
}

StokesSolution StokesSolver::ns_step(const FlowState& flow, const CHState& ch, double dt) const
{
    if (!(dt > 0.0)) throw input_error("ns_step: dt must be positive");
    const BulkSurfaceField& phase = ch.phase;
    const BulkSurfaceField& pot = ch.potential;
    const int nb = ops_.n_surf();

    SpMat a = viscous_matrix(phase);
    const SpMat mrho = rho_mass_matrix(phase);
    a = a + SpMat((1.0 / dt) * mrho);

    // Surface scalar coefficients.
    double gamma_int = 0.0, sigma_int = 0.0, chi_int = 0.0, cap_surf = 0.0;
    Eigen::VectorXd fs_density = Eigen::VectorXd::Zero(nb);
    const double chi_l = chi(params_.L);
    const double c_chi = 0.5 * chi_l * (params_.beta * params_.dsigma() - params_.drho());
    for (int b = 0; b < nb; ++b) {
        const int b1 = (b + 1) % nb;
        const double l = ops_.geom.edges[b].length;
        const double ga = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b]], phase.psi[b]);
        const double gb = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b1]], phase.psi[b1]);
        const double sa = params_.sigma(phase.psi[b]);
        const double sb = params_.sigma(phase.psi[b1]);
        const double ra = params_.beta * pot.psi[b] - pot.phi[mesh_.boundary_loop[b]];
        const double rb = params_.beta * pot.psi[b1] - pot.phi[mesh_.boundary_loop[b1]];
        for (const auto& eq : edge_quad_deg3) {
            const double w = eq.w * l;
            gamma_int += w * ((1.0 - eq.t) * ga + eq.t * gb);
            sigma_int += w * ((1.0 - eq.t) * sa + eq.t * sb);
            chi_int += w * ((1.0 - eq.t) * ra + eq.t * rb);
        }
        // Surface capillary pairing - int psi d_s theta (same rule as the
        // Cahn-Hilliard transport term so the energy exchange matches).
        const double dth = (pot.psi[b1] - pot.psi[b]) / l;
        for (const auto& eq : edge_quad_deg3) {
            const double psi_q = (1.0 - eq.t) * phase.psi[b] + eq.t * phase.psi[b1];
            cap_surf -= eq.w * l * psi_q * dth;
        }
        const double dens = -0.5 * (phase.psi[b] + phase.psi[b1]) * dth + c_chi * 0.5 * (ra + rb) * flow.omega;
        fs_density[b] += 0.5 * dens;
        fs_density[b1] += 0.5 * dens;
    }
    const double a_omega = gamma_int + sigma_int / dt - c_chi * chi_int;
    double rhs_omega = (sigma_int / dt) * flow.omega + cap_surf;

    // Bulk explicit terms: convection, flux convection and capillary force.
    Eigen::VectorXd rhs_u = (1.0 / dt) * (mrho * flow.v_p2);
    double vmax = 0.0;
    for (std::size_t t = 0; t < ops_.geom.tris.size(); ++t) {
        const auto& tg = ops_.geom.tris[t];
        const auto& nodes = p2_.tri_nodes[t];
        double n[6];
        Eigen::Matrix<double, 2, 6> dn;

        Eigen::Vector2d grad_mu = Eigen::Vector2d::Zero();
        for (int j = 0; j < 3; ++j) grad_mu += pot.phi[tg.v[j]] * tg.grad.col(j);

        // Convection (degree-5 rule).
        for (const auto& tq : tri_quad_deg5) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            Eigen::Vector2d vq = Eigen::Vector2d::Zero();
            Eigen::Matrix2d gv = Eigen::Matrix2d::Zero();
            for (int j = 0; j < 6; ++j) {
                const Eigen::Vector2d vj(flow.v_p2[2 * nodes[j]], flow.v_p2[2 * nodes[j] + 1]);
                vq += n[j] * vj;
                gv += vj * dn.col(j).transpose(); // (grad v)_{ab} = d_b v_a
            }
            vmax = std::max(vmax, vq.norm());
            const double phi_q = lam[0] * phase.phi[tg.v[0]] + lam[1] * phase.phi[tg.v[1]] + lam[2] * phase.phi[tg.v[2]];
            const double rho_q = params_.rho(phi_q);
            const double mob_q = params_.coeffs.m_bulk(phi_q);
            const Eigen::Vector2d jflux = -params_.drho() * mob_q * grad_mu;
            const Eigen::Vector2d conv = rho_q * (gv * vq) + gv * jflux;
            const double w = tq.w * tg.area;
            for (int i = 0; i < 6; ++i) {
                rhs_u[2 * nodes[i]] -= w * conv.x() * n[i];
                rhs_u[2 * nodes[i] + 1] -= w * conv.y() * n[i];
            }
        }
        // Capillary force - int phi grad(mu) . vhat (degree-4 rule, matching
        // the transport quadrature of the phase solver).
        for (const auto& tq : tri_quad_deg4) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            const double phi_q = lam[0] * phase.phi[tg.v[0]] + lam[1] * phase.phi[tg.v[1]] + lam[2] * phase.phi[tg.v[2]];
            const double w = tq.w * tg.area;
            for (int i = 0; i < 6; ++i) {
                rhs_u[2 * nodes[i]] -= w * phi_q * grad_mu.x() * n[i];
                rhs_u[2 * nodes[i] + 1] -= w * phi_q * grad_mu.y() * n[i];
            }
        }
    }

    StokesSolution out =
        solve_kkt(phase, a, a_omega, rhs_u, rhs_omega, fs_density, false, 1.0 / dt, flow.omega);
    out.state.t = ch.t;
    out.stats.courant = vmax * dt / h_min_;
    // Diagnostics from the matrices already at hand: a = A_nu + M_rho/dt.
    const Eigen::VectorXd mrv = mrho * out.state.v_p2;
    out.stats.kinetic_bulk = 0.5 * out.state.v_p2.dot(mrv);
    out.stats.viscous_dissipation = out.state.v_p2.dot(a * out.state.v_p2) - out.state.v_p2.dot(mrv) / dt;
    out.stats.friction_dissipation = gamma_int * out.state.omega * out.state.omega;
    out.stats.kinetic_surf = 0.5 * sigma_int * out.state.omega * out.state.omega;
    out.stats.has_diagnostics = true;
    return out;
}

FlowState StokesSolver::zero_flow() const
{
    FlowState f;
    f.v_p2 = Eigen::VectorXd::Zero(n_u());
    f.p = Eigen::VectorXd::Zero(ops_.n_bulk());
    f.q = Eigen::VectorXd::Zero(ops_.n_surf());
    f.omega = 0.0;
    return f;
}

FlowState StokesSolver::rigid_flow(double omega) const
{
    FlowState f = zero_flow();
    f.omega = omega;
    const double scale = omega / mesh_.radius;
    for (int i = 0; i < p2_.n_nodes; ++i) {
        f.v_p2[2 * i] = -scale * p2_.node_pos[i].y();
        f.v_p2[2 * i + 1] = scale * p2_.node_pos[i].x();
    }
    return f;
}

FlowState StokesSolver::project(const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& v0,
                                double omega0) const
{
    Eigen::VectorXd v0_nodes(n_u());
    for (int i = 0; i < p2_.n_nodes; ++i) {
        const Eigen::Vector2d val = v0(p2_.node_pos[i]);
        v0_nodes[2 * i] = val.x();
        v0_nodes[2 * i + 1] = val.y();
    }
    const Eigen::VectorXd rhs_u = mass_p2_ * v0_nodes;
    BulkSurfaceField unit_phase(ops_.n_bulk(), ops_.n_surf());
    StokesSolution sol = solve_kkt(unit_phase, mass_p2_, ops_.perimeter, rhs_u, ops_.perimeter * omega0,
                                   Eigen::VectorXd::Zero(ops_.n_surf()), false, 0.0, 0.0);
    sol.state.p.setZero();
    sol.state.q.setZero();
    return sol.state;
}

BulkVectorField StokesSolver::vertex_velocity(const FlowState& flow) const
{
    BulkVectorField v(ops_.n_bulk());
    for (int i = 0; i < ops_.n_bulk(); ++i)
        v.set(i, {flow.v_p2[2 * i], flow.v_p2[2 * i + 1]});
    return v;
}

VelocitySample StokesSolver::sample_velocity(const FlowState& flow) const
{
    return sample_velocity_p2(mesh_, p2_, flow);
}

VelocitySample sample_velocity_p2(const DiskMesh& mesh, const P2Space& p2, const FlowState& flow)
{
    VelocitySample s;
    s.at_quad.resize(static_cast<Eigen::Index>(mesh.n_triangles()) * VelocitySample::n_quad, 2);
    s.omega = flow.omega;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& nodes = p2.tri_nodes[t];
        for (int q = 0; q < VelocitySample::n_quad; ++q) {
            const auto& tq = tri_quad_deg4[q];
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            double n[6];
            n[0] = lam[0] * (2.0 * lam[0] - 1.0);
            n[1] = lam[1] * (2.0 * lam[1] - 1.0);
            n[2] = lam[2] * (2.0 * lam[2] - 1.0);
            n[3] = 4.0 * lam[1] * lam[2];
            n[4] = 4.0 * lam[2] * lam[0];
            n[5] = 4.0 * lam[0] * lam[1];
            Eigen::Vector2d v = Eigen::Vector2d::Zero();
            for (int j = 0; j < 6; ++j)
                v += n[j] * Eigen::Vector2d(flow.v_p2[2 * nodes[j]], flow.v_p2[2 * nodes[j] + 1]);
            s.at_quad.row(t * VelocitySample::n_quad + q) = v.transpose();
        }
    }
    return s;
}

double StokesSolver::l2_inner(const Eigen::VectorXd& ua, double omega_a, const Eigen::VectorXd& ub,
                              double omega_b) const
{
    return ua.dot(mass_p2_ * ub) + ops_.perimeter * omega_a * omega_b;
}

double StokesSolver::divergence_residual(const FlowState& flow) const
{
    // Row 0 is the quotient-redundant test function (it carries the gauge
    // slack); the enforced constraints are the remaining rows.
    const Eigen::VectorXd r = div_rows_ * flow.v_p2;
    return r.tail(r.size() - 1).cwiseAbs().maxCoeff() / (1.0 + flow.v_p2.cwiseAbs().maxCoeff());
}

double StokesSolver::kinematics_residual(const FlowState& flow) const
{
    double worst = 0.0;
    for (const auto& bn : p2_.boundary) {
        const Eigen::Vector2d v(flow.v_p2[2 * bn.node], flow.v_p2[2 * bn.node + 1]);
        worst = std::max(worst, std::abs(v.dot(bn.normal)));
        worst = std::max(worst, std::abs(v.dot(bn.tangent) - bn.radius_scale * flow.omega));
    }
    return worst;
}

double StokesSolver::kinetic_energy_bulk(const FlowState& flow, const BulkSurfaceField& phase) const
{
    const SpMat mrho = rho_mass_matrix(phase);
    return 0.5 * flow.v_p2.dot(mrho * flow.v_p2);
}

double StokesSolver::kinetic_energy_surface(const FlowState& flow, const BulkSurfaceField& phase) const
{
    double sigma_int = 0.0;
    for (int b = 0; b < ops_.n_surf(); ++b) {
        const int b1 = (b + 1) % ops_.n_surf();
        const double l = ops_.geom.edges[b].length;
        sigma_int += 0.5 * l * (params_.sigma(phase.psi[b]) + params_.sigma(phase.psi[b1]));
    }
    return 0.5 * sigma_int * flow.omega * flow.omega;
}

double StokesSolver::viscous_dissipation(const FlowState& flow, const BulkSurfaceField& phase) const
{
    const SpMat a = viscous_matrix(phase);
    return flow.v_p2.dot(a * flow.v_p2);
}

double StokesSolver::friction_dissipation(const FlowState& flow, const BulkSurfaceField& phase) const
{
    double gamma_int = 0.0;
    for (int b = 0; b < ops_.n_surf(); ++b) {
        const int b1 = (b + 1) % ops_.n_surf();
        const double l = ops_.geom.edges[b].length;
        const double ga = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b]], phase.psi[b]);
        const double gb = params_.coeffs.gamma(phase.phi[mesh_.boundary_loop[b1]], phase.psi[b1]);
        gamma_int += 0.5 * l * (ga + gb);
    }
    return gamma_int * flow.omega * flow.omega;
}

EigenPairs StokesSolver::eigenpairs(int k) const
{
    const int nu = n_u();
    const int nv = ops_.n_bulk();
    const int nui = static_cast<int>(proj_int_.cols());
    const int n_x = nu + 1;

    const int dim_constrained = nui + 1 - (nv - 1);
    if (k < 1 || k > std::max(1, dim_constrained))
        throw input_error("stokes_eigenpairs: k exceeds the constrained-space dimension");

    // Constant-coefficient operator: nu = gamma = 1.
    BulkSurfaceField zero_phase(nv, ops_.n_surf());
    ModelParameters unit = params_;
    unit.coeffs.nu_bulk = ScalarCoefficient::constant(1.0);
    unit.coeffs.nu_surf = ScalarCoefficient::constant(1.0);
    unit.coeffs.gamma = FrictionCoefficient{1.0, 0.0};
    StokesSolver unit_solver(mesh_, ops_, unit);

    const SpMat s_mat = unit_solver.viscous_matrix(zero_phase);
    const double s_omega = ops_.perimeter;
    const double m_omega = ops_.perimeter;

    // Eliminated operator blocks on [U_int omega p s].
    const int idx_w = nui, idx_p = nui + 1, idx_s = idx_p + nv;
    const int dim = idx_s + 1;
    const SpMat s_ii = proj_int_.transpose() * s_mat * proj_int_;
    const Eigen::VectorXd s_it = proj_int_.transpose() * (s_mat * t_vec_);
    const double s_tt = t_vec_.dot(s_mat * t_vec_) + s_omega;
    const SpMat d_i = div_rows_ * proj_int_;
    const Eigen::VectorXd d_w = div_rows_ * t_vec_;

    std::vector<Eigen::Triplet<double>> tk;
    for (int kk = 0; kk < s_ii.outerSize(); ++kk)
        for (SpMat::InnerIterator it(s_ii, kk); it; ++it) tk.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < nui; ++i)
        if (s_it[i] != 0.0) append_sym(tk, i, idx_w, s_it[i]);
    tk.emplace_back(idx_w, idx_w, s_tt);
    for (int kk = 0; kk < d_i.outerSize(); ++kk)
        for (SpMat::InnerIterator it(d_i, kk); it; ++it) {
            tk.emplace_back(idx_p + it.row(), it.col(), it.value());
            tk.emplace_back(it.col(), idx_p + it.row(), it.value());
        }
    for (int i = 0; i < nv; ++i)
        if (d_w[i] != 0.0) append_sym(tk, idx_p + i, idx_w, d_w[i]);
    append_sym(tk, idx_s, idx_p + 0, 1.0);
    SpMat kkt(dim, dim);
    kkt.setFromTriplets(tk.begin(), tk.end());
    std::vector<int> reg_rows(nv + 1);
    for (int i = 0; i <= nv; ++i) reg_rows[i] = idx_p + i;
    const SaddleSolver lu(std::move(kkt), reg_rows);
    if (!lu.ok()) throw solver_error("stokes_eigenpairs: singular constrained operator");

    auto apply_m = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd y(n_x);
        y.head(nu) = mass_p2_ * x.head(nu);
        y[nu] = m_omega * x[nu];
        return y;
    };
    auto inner_m = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return a.head(nu).dot(mass_p2_ * b.head(nu)) + m_omega * a[nu] * b[nu];
    };
    auto apply_s = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd y(n_x);
        y.head(nu) = s_mat * x.head(nu);
        y[nu] = s_omega * x[nu];
        return y;
    };
    // Inverse of the constrained operator applied to a load functional on
    // (U, omega): reduce, solve, reconstruct.
    auto inv_apply = [&](const Eigen::VectorXd& f) {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
        rhs.head(nui) = proj_int_.transpose() * f.head(nu);
        rhs[idx_w] = f[nu] + t_vec_.dot(f.head(nu));
        const Eigen::VectorXd sol = lu.solve(rhs);
        Eigen::VectorXd y(n_x);
        y[nu] = sol[idx_w];
        y.head(nu) = proj_int_ * sol.head(nui) + t_vec_ * sol[idx_w];
        return y;
    };

    const int m_cols = std::min(n_x, k + std::max(4, k));
    std::mt19937_64 eng(20240617);
    std::vector<Eigen::VectorXd> X(m_cols, Eigen::VectorXd(n_x));
    for (auto& col : X)
        for (int i = 0; i < n_x; ++i) col[i] = uniform(eng, -1.0, 1.0);

    std::vector<double> lam_prev(k, 0.0);
    std::vector<double> lam(k, 0.0);
    for (int iter = 0; iter < 300; ++iter) {
        for (auto& col : X) col = inv_apply(apply_m(col));
        // M-orthonormalize (modified Gram-Schmidt).
        for (int i = 0; i < m_cols; ++i) {
            for (int j = 0; j < i; ++j) X[i] -= inner_m(X[j], X[i]) * X[j];
            const double nn = std::sqrt(inner_m(X[i], X[i]));
            if (nn < 1e-300) throw solver_error("stokes_eigenpairs: subspace collapsed");
            X[i] /= nn;
        }
        // Rayleigh-Ritz.
        Eigen::MatrixXd h(m_cols, m_cols), g(m_cols, m_cols);
        std::vector<Eigen::VectorXd> sx(m_cols);
        for (int i = 0; i < m_cols; ++i) sx[i] = apply_s(X[i]);
        for (int i = 0; i < m_cols; ++i)
            for (int j = 0; j < m_cols; ++j) {
                h(i, j) = X[i].dot(sx[j]);
                g(i, j) = inner_m(X[i], X[j]);
            }
        h = 0.5 * (h + h.transpose()).eval();
        g = 0.5 * (g + g.transpose()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(h, g);
        if (ges.info() != Eigen::Success) throw solver_error("stokes_eigenpairs: dense eigensolver failed");
        std::vector<Eigen::VectorXd> xnew(m_cols, Eigen::VectorXd::Zero(n_x));
        for (int c = 0; c < m_cols; ++c)
            for (int r = 0; r < m_cols; ++r) xnew[c] += ges.eigenvectors()(r, c) * X[r];
        X = std::move(xnew);
        bool converged = iter > 3;
        for (int c = 0; c < k; ++c) {
            lam[c] = ges.eigenvalues()[c];
            if (std::abs(lam[c] - lam_prev[c]) > 1e-13 * std::max(1.0, std::abs(lam[c]))) converged = false;
            lam_prev[c] = lam[c];
        }
        if (converged) break;
    }

    EigenPairs out;
    for (int c = 0; c < k; ++c) {
        out.values.push_back(lam[c]);
        out.fields.push_back(X[c].head(nu));
        out.omegas.push_back(X[c][nu]);
    }
    return out;
}

double StokesSolver::korn_constant() const
{
    const int nu = n_u();
    const int nbn = static_cast<int>(p2_.boundary.size());
    const int nb = ops_.n_surf();

    // H form: bulk H1 (full gradient + mass) plus surface H1 of the
    // tangential trace speed; K form: |Dv|^2 plus the same surface seminorm
    // and surface mass.
    std::vector<Eigen::Triplet<double>> th, tkf;
    for (std::size_t t = 0; t < ops_.geom.tris.size(); ++t) {
        const auto& tg = ops_.geom.tris[t];
        const auto& nodes = p2_.tri_nodes[t];
        double n[6];
        Eigen::Matrix<double, 2, 6> dn;
        for (const auto& tq : tri_quad_deg4) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            p2_shapes(lam, tg.grad, n, dn);
            const double w = tq.w * tg.area;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    const double gij = dn.col(i).dot(dn.col(j));
                    const double mij = n[i] * n[j];
                    for (int di = 0; di < 2; ++di) {
                        th.emplace_back(2 * nodes[i] + di, 2 * nodes[j] + di, w * (gij + mij));
                        for (int dj = 0; dj < 2; ++dj) {
                            double val = 0.5 * dn(dj, i) * dn(di, j);
                            if (di == dj) val += 0.5 * gij;
                            tkf.emplace_back(2 * nodes[i] + di, 2 * nodes[j] + dj, w * val);
                        }
                    }
                }
        }
    }
    // Surface terms from the tangential trace on each boundary edge.
    for (int b = 0; b < nb; ++b) {
        const double l = ops_.geom.edges[b].length;
        const int n0 = p2_.boundary[2 * b].node;
        const int nm = p2_.boundary[2 * b + 1].node;
        const int n1 = p2_.boundary[(2 * b + 2) % nbn].node;
        const int enodes[3] = {n0, nm, n1};
        const Eigen::Vector2d pa = p2_.node_pos[n0];
        const Eigen::Vector2d pb = p2_.node_pos[n1];
        Eigen::Vector2d te = (pb - pa).normalized();
        for (const auto& eq : edge_quad_deg5) {
            double sh[3], dsh[3];
            p2_shapes_1d(eq.t, sh, dsh);
            const double w = eq.w * l;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double kij = (dsh[i] / l) * (dsh[j] / l);
                    const double mij = sh[i] * sh[j];
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            const double tt = te[di] * te[dj];
                            th.emplace_back(2 * enodes[i] + di, 2 * enodes[j] + dj, w * (kij + mij) * tt);
                            tkf.emplace_back(2 * enodes[i] + di, 2 * enodes[j] + dj, w * (kij + mij) * tt);
                        }
                }
        }
    }
    SpMat hform(nu, nu), kform(nu, nu);
    hform.setFromTriplets(th.begin(), th.end());
    kform.setFromTriplets(tkf.begin(), tkf.end());

    // Eliminate the normal constraints by rotating boundary nodes onto their
    // tangent: the normal component is dropped, the tangential one is free.
    std::vector<int> bmark(p2_.n_nodes, -1);
    for (int m = 0; m < nbn; ++m) bmark[p2_.boundary[m].node] = m;
    std::vector<Eigen::Triplet<double>> tp;
    int cols = 0;
    for (int i = 0; i < p2_.n_nodes; ++i) {
        if (bmark[i] < 0) {
            tp.emplace_back(2 * i, cols++, 1.0);
            tp.emplace_back(2 * i + 1, cols++, 1.0);
        } else {
            const auto& bn = p2_.boundary[bmark[i]];
            tp.emplace_back(2 * i, cols, bn.tangent.x());
            tp.emplace_back(2 * i + 1, cols, bn.tangent.y());
            ++cols;
        }
    }
    SpMat proj(nu, cols);
    proj.setFromTriplets(tp.begin(), tp.end());
    const SpMat h_red = SpMat(proj.transpose() * hform * proj);
    const SpMat k_red = SpMat(proj.transpose() * kform * proj);

    Eigen::SimplicialLDLT<SpMat> ldlt(k_red);
    if (ldlt.info() != Eigen::Success) throw solver_error("korn_check: singular Korn form");

    const int m_cols = 4;
    std::mt19937_64 eng(71);
    std::vector<Eigen::VectorXd> X(m_cols, Eigen::VectorXd(cols));
    for (auto& col : X)
        for (int i = 0; i < cols; ++i) col[i] = uniform(eng, -1.0, 1.0);
    double lam_max = 0.0, lam_prev = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        for (auto& col : X) col = ldlt.solve(h_red * col);
        for (int i = 0; i < m_cols; ++i) {
            for (int j = 0; j < i; ++j) X[i] -= X[j].dot(h_red * X[i]) / X[j].dot(h_red * X[j]) * X[j];
            const double nn = std::sqrt(X[i].dot(h_red * X[i]));
            if (nn < 1e-300) throw solver_error("korn_check: subspace collapsed");
            X[i] /= nn;
        }
        Eigen::MatrixXd h(m_cols, m_cols), g(m_cols, m_cols);
        for (int i = 0; i < m_cols; ++i)
            for (int j = 0; j < m_cols; ++j) {
                h(i, j) = X[i].dot(h_red * X[j]);
                g(i, j) = X[i].dot(k_red * X[j]);
            }
        h = 0.5 * (h + h.transpose()).eval();
        g = 0.5 * (g + g.transpose()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(g, h);
        if (ges.info() != Eigen::Success) throw solver_error("korn_check: dense eigensolver failed");
        // Largest of (H, K) = 1 / smallest of (K, H).
        lam_max = 1.0 / ges.eigenvalues()[0];
        if (iter > 3 && std::abs(lam_max - lam_prev) <= 1e-10 * lam_max) break;
        lam_prev = lam_max;
    }
    return std::sqrt(lam_max);
}

} // namespace bsnsch
