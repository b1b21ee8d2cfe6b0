#include "bsnsch/elliptic.hpp"

#include "bsnsch/common.hpp"

#include <cmath>

namespace bsnsch {

namespace {

void append_block(std::vector<Eigen::Triplet<double>>& t, const SpMat& m, int r0, int c0, double s)
{
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
}

} // namespace

EllipticProblem::EllipticProblem(const SpaceOperators& ops, double L, double beta,
                                 Eigen::VectorXd m_bulk, Eigen::VectorXd m_surf)
    : ops_(ops), L_(L), beta_(beta), m_bulk_(std::move(m_bulk)), m_surf_(std::move(m_surf))
{
    assemble_and_factor();
}

EllipticProblem::EllipticProblem(const SpaceOperators& ops, double L, double beta)
    : EllipticProblem(ops, L, beta, Eigen::VectorXd::Ones(ops.n_bulk()), Eigen::VectorXd::Ones(ops.n_surf()))
{
}

EllipticProblem::EllipticProblem(const SpaceOperators& ops, double L, double beta,
                                 const BulkSurfaceField& phase, const CoefficientSet& coeffs)
    : ops_(ops), L_(L), beta_(beta)
{
    m_bulk_.resize(ops.n_bulk());
    m_surf_.resize(ops.n_surf());
    for (int i = 0; i < ops.n_bulk(); ++i) m_bulk_[i] = coeffs.m_bulk(phase.phi[i]);
    for (int b = 0; b < ops.n_surf(); ++b) m_surf_[b] = coeffs.m_surf(phase.psi[b]);
    assemble_and_factor();
}

void EllipticProblem::assemble_and_factor()
{
    const int nv = ops_.n_bulk();
    const int nb = ops_.n_surf();
    const int n_full = nv + nb;

    a_bulk_w_ = weighted_bulk_stiffness(ops_, m_bulk_);
    a_surf_w_ = weighted_surf_stiffness(ops_, m_surf_);

    std::vector<Eigen::Triplet<double>> tf;
    append_block(tf, a_bulk_w_, 0, 0, 1.0);
    append_block(tf, a_surf_w_, nv, nv, 1.0);
    const double ch = chi(L_);
    if (ch != 0.0) {
        const SpMat TtMT = ops_.trace.transpose() * ops_.M_surf * ops_.trace;
        const SpMat TtM = ops_.trace.transpose() * ops_.M_surf;
        const SpMat MT = ops_.M_surf * ops_.trace;
        append_block(tf, TtMT, 0, 0, ch);
        append_block(tf, ops_.M_surf, nv, nv, ch * beta_ * beta_);
        append_block(tf, TtM, 0, nv, -ch * beta_);
        append_block(tf, MT, nv, 0, -ch * beta_);
    }
    form_full_.resize(n_full, n_full);
    form_full_.setFromTriplets(tf.begin(), tf.end());

    // Reduction: for L = 0 the boundary bulk DOF is identified with beta * v.
    std::vector<Eigen::Triplet<double>> tr;
    if (L_ == 0.0) {
        // trace row b selects vertex loop[b]; recover the vertex -> boundary map.
        std::vector<int> is_boundary(nv, -1);
        for (int k = 0; k < ops_.trace.outerSize(); ++k)
            for (SpMat::InnerIterator it(ops_.trace, k); it; ++it) is_boundary[it.col()] = static_cast<int>(it.row());
        int idx = 0;
        std::vector<int> interior_index(nv, -1);
        for (int i = 0; i < nv; ++i)
            if (is_boundary[i] < 0) interior_index[i] = idx++;
        n_red_ = idx + nb;
        for (int i = 0; i < nv; ++i) {
            if (is_boundary[i] < 0)
                tr.emplace_back(i, interior_index[i], 1.0);
            else
                tr.emplace_back(i, idx + is_boundary[i], beta_);
        }
        for (int b = 0; b < nb; ++b) tr.emplace_back(nv + b, idx + b, 1.0);
    } else {
        n_red_ = n_full;
        for (int i = 0; i < n_full; ++i) tr.emplace_back(i, i, 1.0);
    }
    reduction_.resize(n_full, n_red_);
    reduction_.setFromTriplets(tr.begin(), tr.end());

    form_red_ = reduction_.transpose() * form_full_ * reduction_;

    // Mean constraints: duality pairing against the kernel constants.
    constraints_.clear();
    if (std::isinf(L_)) {
        Eigen::VectorXd c1 = Eigen::VectorXd::Zero(n_full), c2 = Eigen::VectorXd::Zero(n_full);
        c1.head(nv) = ops_.lumped_bulk;
        c2.tail(nb) = ops_.lumped_surf;
        constraints_.push_back(reduction_.transpose() * c1);
        constraints_.push_back(reduction_.transpose() * c2);
    } else {
        Eigen::VectorXd c(n_full);
        c.head(nv) = beta_ * ops_.lumped_bulk;
        c.tail(nb) = ops_.lumped_surf;
        constraints_.push_back(reduction_.transpose() * c);
    }

    const int nc = static_cast<int>(constraints_.size());
    std::vector<Eigen::Triplet<double>> tk;
    append_block(tk, form_red_, 0, 0, 1.0);
    for (int c = 0; c < nc; ++c) {
        for (int i = 0; i < n_red_; ++i) {
            const double v = constraints_[c][i];
            if (v != 0.0) {
                tk.emplace_back(i, n_red_ + c, v);
                tk.emplace_back(n_red_ + c, i, v);
            }
        }
    }
    SpMat kkt(n_red_ + nc, n_red_ + nc);
    kkt.setFromTriplets(tk.begin(), tk.end());
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    lu_->compute(kkt);
    if (lu_->info() != Eigen::Success)
        throw solver_error("elliptic problem: singular constrained system (assembly bug)");
}

Eigen::VectorXd EllipticProblem::reduced_rhs(const BulkSurfaceField& rhs) const
{
    Eigen::VectorXd b_full(ops_.n_bulk() + ops_.n_surf());
    b_full.head(ops_.n_bulk()) = ops_.M_bulk * rhs.phi;
    b_full.tail(ops_.n_surf()) = ops_.M_surf * rhs.psi;
    return reduction_.transpose() * b_full;
}

EllipticProblem::Result EllipticProblem::solve(const BulkSurfaceField& rhs, bool auto_mean_removal) const
{
    BulkSurfaceField f = rhs;
    const double scale =
        std::max({1.0, f.phi.cwiseAbs().maxCoeff() * ops_.area, f.psi.size() ? f.psi.cwiseAbs().maxCoeff() * ops_.perimeter : 0.0});

    if (std::isinf(L_)) {
        auto [mb, ms] = separate_means(ops_, f);
        if (auto_mean_removal) {
            f.phi.array() -= mb;
            f.psi.array() -= ms;
        } else if (std::abs(mb) * ops_.area > 1e-10 * scale || std::abs(ms) * ops_.perimeter > 1e-10 * scale) {
            throw compatibility_error("elliptic rhs: bulk/surface means must vanish for L = inf");
        }
    } else {
        const double gm = generalized_mean(ops_, f, beta_);
        if (auto_mean_removal) {
            f.phi.array() -= beta_ * gm;
            f.psi.array() -= gm;
        } else if (std::abs(gm) * (beta_ * beta_ * ops_.area + ops_.perimeter) > 1e-10 * scale) {
            throw compatibility_error("elliptic rhs: generalized mean must vanish");
        }
    }

    const Eigen::VectorXd b = reduced_rhs(f);
    const int nc = static_cast<int>(constraints_.size());
    Eigen::VectorXd rhs_kkt = Eigen::VectorXd::Zero(n_red_ + nc);
    rhs_kkt.head(n_red_) = b;
    const Eigen::VectorXd sol = lu_->solve(rhs_kkt);

    Result res;
    const Eigen::VectorXd x = sol.head(n_red_);
    Eigen::VectorXd resid = form_red_ * x - b;
    for (int c = 0; c < nc; ++c) resid += sol[n_red_ + c] * constraints_[c];
    const double bn = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
    res.weak_residual = resid.cwiseAbs().maxCoeff() / bn;

    const Eigen::VectorXd full = reduction_ * x;
    res.solution.phi = full.head(ops_.n_bulk());
    res.solution.psi = full.tail(ops_.n_surf());
    for (int c = 0; c < nc; ++c) res.multipliers.push_back(sol[n_red_ + c]);
    return res;
}

double EllipticProblem::inner_weighted(const BulkSurfaceField& a, const BulkSurfaceField& b) const
{
    double val = a.phi.dot(a_bulk_w_ * b.phi) + a.psi.dot(a_surf_w_ * b.psi);
    const double ch = chi(L_);
    if (ch != 0.0) {
        const Eigen::VectorXd ra = beta_ * a.psi - ops_.trace * a.phi;
        const Eigen::VectorXd rb = beta_ * b.psi - ops_.trace * b.phi;
        val += ch * ra.dot(ops_.M_surf * rb);
    }
    return val;
}

double EllipticProblem::dual_norm(const BulkSurfaceField& rhs, bool auto_mean_removal) const
{
    const Result res = solve(rhs, auto_mean_removal);
    return std::sqrt(std::max(0.0, inner_weighted(res.solution, res.solution)));
}

} // namespace bsnsch
