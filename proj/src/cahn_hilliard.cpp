#include "bsnsch/cahn_hilliard.hpp"

#include "bsnsch/quadrature.hpp"

#include <Eigen/SparseLU>

#include <cmath>

namespace bsnsch {

namespace {

Eigen::Vector2d quad_point(const DiskMesh& mesh, const std::array<int, 3>& v, const TriQuadPoint& q)
{
    return q.l0 * mesh.vertices[v[0]] + q.l1 * mesh.vertices[v[1]] + q.l2 * mesh.vertices[v[2]];
}

} // namespace

VelocitySample VelocitySample::zero(const DiskMesh& mesh)
{
    VelocitySample s;
    s.at_quad = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(mesh.n_triangles()) * n_quad, 2);
    s.omega = 0.0;
    return s;
}

VelocitySample VelocitySample::from_callback(const DiskMesh& mesh,
                                             const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& v,
                                             double omega)
{
    VelocitySample s;
    s.at_quad.resize(static_cast<Eigen::Index>(mesh.n_triangles()) * n_quad, 2);
    s.omega = omega;
    for (int t = 0; t < mesh.n_triangles(); ++t)
        for (int q = 0; q < n_quad; ++q) {
            const Eigen::Vector2d val = v(quad_point(mesh, mesh.triangles[t], tri_quad_deg4[q]));
            s.at_quad.row(t * n_quad + q) = val.transpose();
        }
    return s;
}

VelocitySample VelocitySample::rigid(const DiskMesh& mesh, double omega)
{
    const double scale = omega / mesh.radius;
    return from_callback(
        mesh, [scale](const Eigen::Vector2d& p) { return Eigen::Vector2d(-scale * p.y(), scale * p.x()); }, omega);
}

VelocitySample VelocitySample::from_p1(const DiskMesh& mesh, const BulkVectorField& v, double omega)
{
    VelocitySample s;
    s.at_quad.resize(static_cast<Eigen::Index>(mesh.n_triangles()) * n_quad, 2);
    s.omega = omega;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (int q = 0; q < n_quad; ++q) {
            const auto& tq = tri_quad_deg4[q];
            const Eigen::Vector2d val = tq.l0 * v.at(tri[0]) + tq.l1 * v.at(tri[1]) + tq.l2 * v.at(tri[2]);
            s.at_quad.row(t * n_quad + q) = val.transpose();
        }
    }
    return s;
}

CHSystem::CHSystem(const DiskMesh& mesh, const SpaceOperators& ops, const ModelParameters& params)
    : mesh_(mesh), ops_(ops), params_(params)
{
    chi_k_ = chi(params.K);
    chi_l_ = chi(params.L);
    l_inf_ = params.l_is_infinite();
    identify_mt_ = (params.L == 0.0);

    const int nv = ops_.n_bulk();
    const int nb = ops_.n_surf();
    vertex_boundary_.assign(nv, -1);
    for (int b = 0; b < nb; ++b) vertex_boundary_[mesh.boundary_loop[b]] = b;
    interior_index_.assign(nv, -1);
    n_interior_ = 0;
    for (int i = 0; i < nv; ++i)
        if (vertex_boundary_[i] < 0) interior_index_[i] = n_interior_++;
    n_mt_red_ = identify_mt_ ? n_interior_ + nb : nv + nb;
}

Eigen::VectorXd CHSystem::pack(const BulkSurfaceField& phase, const BulkSurfaceField& pot) const
{
    const int nv = ops_.n_bulk();
    const int nb = ops_.n_surf();
    Eigen::VectorXd x(nv + nb + n_mt_red_);
    x.head(nv) = phase.phi;
    x.segment(nv, nb) = phase.psi;
    if (identify_mt_) {
        for (int i = 0; i < nv; ++i)
            if (interior_index_[i] >= 0) x[nv + nb + interior_index_[i]] = pot.phi[i];
        x.tail(nb) = pot.psi;
    } else {
        x.segment(nv + nb, nv) = pot.phi;
        x.tail(nb) = pot.psi;
    }
    return x;
}

void CHSystem::unpack(const Eigen::VectorXd& x, BulkSurfaceField& phase, BulkSurfaceField& pot) const
{
    const int nv = ops_.n_bulk();
    const int nb = ops_.n_surf();
    phase.phi = x.head(nv);
    phase.psi = x.segment(nv, nb);
    pot.psi = x.tail(nb);
    pot.phi.resize(nv);
    if (identify_mt_) {
        for (int i = 0; i < nv; ++i) {
            if (interior_index_[i] >= 0)
                pot.phi[i] = x[nv + nb + interior_index_[i]];
            else
                pot.phi[i] = params_.beta * pot.psi[vertex_boundary_[i]];
        }
    } else {
        pot.phi = x.segment(nv + nb, nv);
    }
}

bool CHSystem::admissible(const Eigen::VectorXd& x) const
{
    const int nv = ops_.n_bulk();
    const int nb = ops_.n_surf();
    const double lim = 1.0 - PotentialSpec::eps_barrier;
    if (params_.F.is_logarithmic())
        for (int i = 0; i < nv; ++i)
            if (std::abs(x[i]) >= lim) return false;
    if (params_.G.is_logarithmic())
        for (int b = 0; b < nb; ++b)
            if (std::abs(x[nv + b]) >= lim) return false;
    return true;
}

struct CHSystem::Assembled {
    Eigen::VectorXd residual; // reduced row space
    SpMat jacobian;           // reduced
};

void CHSystem::assemble(Assembled& out, const Eigen::VectorXd& x, const BulkSurfaceField& prev,
                        const VelocitySample& vel, const CHStepConfig& config, bool jacobian) const
{
    const int nv = ops_.n_bulk();
    const int nb = ops_.n_surf();
    const double dt = config.dt;
    const bool split = config.scheme == CHScheme::ConvexSplitting;
    const double cf = params_.F.convex_shift();
    const double cg = params_.G.convex_shift();

    BulkSurfaceField phase, pot;
    unpack(x, phase, pot);

    // Full-space residual blocks: [evolution bulk; evolution surface;
    // constitutive bulk; constitutive surface].
    Eigen::VectorXd rev_b = Eigen::VectorXd::Zero(nv);
    Eigen::VectorXd rev_s = Eigen::VectorXd::Zero(nb);
    Eigen::VectorXd rcon_b = Eigen::VectorXd::Zero(nv);
    Eigen::VectorXd rcon_s = Eigen::VectorXd::Zero(nb);

    std::vector<Eigen::Triplet<double>> tj;
    if (jacobian) tj.reserve(200 * ops_.geom.tris.size());

    // Column/row offsets in the full index space.
    const int c_phi = 0, c_psi = nv, c_mu = nv + nb, c_th = 2 * nv + nb;
    const int r_evb = 0, r_evs = nv, r_cb = nv + nb, r_cs = 2 * nv + nb;

    // Time derivative (consistent mass).
    rev_b += ops_.M_bulk * (phase.phi - prev.phi) / dt;
    rev_s += ops_.M_surf * (phase.psi - prev.psi) / dt;

    // Bulk element loop: mobility-weighted potential flux, transport,
    // nonlinear constitutive terms.
    for (std::size_t t = 0; t < ops_.geom.tris.size(); ++t) {
        const auto& tg = ops_.geom.tris[t];
        const double area = tg.area;

        const double m0 = params_.coeffs.m_bulk(phase.phi[tg.v[0]]);
        const double m1 = params_.coeffs.m_bulk(phase.phi[tg.v[1]]);
        const double m2 = params_.coeffs.m_bulk(phase.phi[tg.v[2]]);
        const double mbar = (m0 + m1 + m2) / 3.0;

        Eigen::Vector2d grad_mu = Eigen::Vector2d::Zero();
        for (int j = 0; j < 3; ++j) grad_mu += pot.phi[tg.v[j]] * tg.grad.col(j);

        for (int i = 0; i < 3; ++i) {
            rev_b[tg.v[i]] += area * mbar * grad_mu.dot(tg.grad.col(i));
            if (jacobian) {
                for (int j = 0; j < 3; ++j) {
                    tj.emplace_back(r_evb + tg.v[i], c_mu + tg.v[j],
                                    area * mbar * tg.grad.col(j).dot(tg.grad.col(i)));
                    const double dm = params_.coeffs.m_bulk.derivative(phase.phi[tg.v[j]]) / 3.0;
                    if (dm != 0.0)
                        tj.emplace_back(r_evb + tg.v[i], c_phi + tg.v[j], area * dm * grad_mu.dot(tg.grad.col(i)));
                }
            }
        }

        // Transport - int phi v . grad zeta (degree-4 rule, velocity sampled).
        for (int q = 0; q < VelocitySample::n_quad; ++q) {
            const auto& tq = tri_quad_deg4[q];
            const Eigen::Vector2d vq = vel.at_quad.row(t * VelocitySample::n_quad + q).transpose();
            if (vq.squaredNorm() == 0.0) continue;
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            const double phi_q = lam[0] * phase.phi[tg.v[0]] + lam[1] * phase.phi[tg.v[1]] + lam[2] * phase.phi[tg.v[2]];
            for (int i = 0; i < 3; ++i) {
                const double vi = tq.w * area * vq.dot(tg.grad.col(i));
                rev_b[tg.v[i]] -= vi * phi_q;
                if (jacobian)
                    for (int j = 0; j < 3; ++j) tj.emplace_back(r_evb + tg.v[i], c_phi + tg.v[j], -vi * lam[j]);
            }
        }

        // Constitutive: stiffness part -int grad phi . grad eta and the
        // potential term (degree-2 rule; same quadrature defines the energy).
        Eigen::Vector2d grad_phi = Eigen::Vector2d::Zero();
        for (int j = 0; j < 3; ++j) grad_phi += phase.phi[tg.v[j]] * tg.grad.col(j);
        for (int i = 0; i < 3; ++i) {
            rcon_b[tg.v[i]] -= area * grad_phi.dot(tg.grad.col(i));
            if (jacobian)
                for (int j = 0; j < 3; ++j)
                    tj.emplace_back(r_cb + tg.v[i], c_phi + tg.v[j], -area * tg.grad.col(j).dot(tg.grad.col(i)));
        }
        for (const auto& tq : tri_quad_deg2) {
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            const double phi_q = lam[0] * phase.phi[tg.v[0]] + lam[1] * phase.phi[tg.v[1]] + lam[2] * phase.phi[tg.v[2]];
            const double w = tq.w * area;
            double fp, fpp;
            if (split) {
                const double phin_q = lam[0] * prev.phi[tg.v[0]] + lam[1] * prev.phi[tg.v[1]] + lam[2] * prev.phi[tg.v[2]];
                fp = params_.F.eval_f0(phi_q, 1) - cf * phin_q;
                fpp = params_.F.eval_f0(phi_q, 2);
            } else {
                fp = params_.F.eval(phi_q, 1);
                fpp = params_.F.eval(phi_q, 2);
            }
            for (int i = 0; i < 3; ++i) {
                rcon_b[tg.v[i]] -= w * fp * lam[i];
                if (jacobian)
                    for (int j = 0; j < 3; ++j) tj.emplace_back(r_cb + tg.v[i], c_phi + tg.v[j], -w * fpp * lam[i] * lam[j]);
            }
        }
    }

    // mu mass pairing of the constitutive rows.
    rcon_b += ops_.M_bulk * pot.phi;
    rcon_s += ops_.M_surf * pot.psi;

    // Surface element loop.
    for (const auto& e : ops_.geom.edges) {
        const double l = e.length;
        const int idx[2] = {e.a, e.b};

        const double mbar = 0.5 * (params_.coeffs.m_surf(phase.psi[e.a]) + params_.coeffs.m_surf(phase.psi[e.b]));
        const double dpsi_th = (pot.psi[e.b] - pot.psi[e.a]) / l; // d theta / ds
        const double ds[2] = {-1.0 / l, 1.0 / l};
        for (int i = 0; i < 2; ++i) {
            rev_s[idx[i]] += l * mbar * dpsi_th * ds[i];
            if (jacobian) {
                for (int j = 0; j < 2; ++j) {
                    tj.emplace_back(r_evs + idx[i], c_th + idx[j], l * mbar * ds[j] * ds[i]);
                    const double dm = 0.5 * params_.coeffs.m_surf.derivative(phase.psi[idx[j]]);
                    if (dm != 0.0) tj.emplace_back(r_evs + idx[i], c_psi + idx[j], l * dm * dpsi_th * ds[i]);
                }
            }
        }

        // Transport - omega int psi d_s xi.
        if (vel.omega != 0.0) {
            for (const auto& eq : edge_quad_deg3) {
                const double sh[2] = {1.0 - eq.t, eq.t};
                const double psi_q = sh[0] * phase.psi[e.a] + sh[1] * phase.psi[e.b];
                for (int i = 0; i < 2; ++i) {
                    const double vi = vel.omega * eq.w * l * ds[i];
                    rev_s[idx[i]] -= vi * psi_q;
                    if (jacobian)
                        for (int j = 0; j < 2; ++j) tj.emplace_back(r_evs + idx[i], c_psi + idx[j], -vi * sh[j]);
                }
            }
        }

        // Constitutive surface stiffness and potential.
        const double dpsi = (phase.psi[e.b] - phase.psi[e.a]) / l;
        for (int i = 0; i < 2; ++i) {
            rcon_s[idx[i]] -= l * dpsi * ds[i];
            if (jacobian)
                for (int j = 0; j < 2; ++j) tj.emplace_back(r_cs + idx[i], c_psi + idx[j], -l * ds[j] * ds[i]);
        }
        for (const auto& eq : edge_quad_deg3) {
            const double sh[2] = {1.0 - eq.t, eq.t};
            const double psi_q = sh[0] * phase.psi[e.a] + sh[1] * phase.psi[e.b];
            const double w = eq.w * l;
            double gp, gpp;
            if (split) {
                const double psin_q = sh[0] * prev.psi[e.a] + sh[1] * prev.psi[e.b];
                gp = params_.G.eval_f0(psi_q, 1) - cg * psin_q;
                gpp = params_.G.eval_f0(psi_q, 2);
            } else {
                gp = params_.G.eval(psi_q, 1);
                gpp = params_.G.eval(psi_q, 2);
            }
            for (int i = 0; i < 2; ++i) {
                rcon_s[idx[i]] -= w * gp * sh[i];
                if (jacobian)
                    for (int j = 0; j < 2; ++j) tj.emplace_back(r_cs + idx[i], c_psi + idx[j], -w * gpp * sh[i] * sh[j]);
            }
        }
    }

    // chi(L) potential coupling in the evolution rows.
    if (chi_l_ != 0.0) {
        const Eigen::VectorXd r = params_.beta * pot.psi - ops_.trace * pot.phi;
        const Eigen::VectorXd mr = ops_.M_surf * r;
        rev_b -= chi_l_ * (ops_.trace.transpose() * mr);
        rev_s += chi_l_ * params_.beta * mr;
        if (jacobian) {
            for (int b = 0; b < nb; ++b) {
                for (SpMat::InnerIterator it(ops_.M_surf, b); it; ++it) {
                    const int bi = static_cast<int>(it.row());
                    const int bj = static_cast<int>(it.col());
                    const int vi = mesh_.boundary_loop[bi];
                    const int vj = mesh_.boundary_loop[bj];
                    const double m = it.value();
                    tj.emplace_back(r_evb + vi, c_mu + vj, chi_l_ * m);
                    tj.emplace_back(r_evb + vi, c_th + bj, -chi_l_ * params_.beta * m);
                    tj.emplace_back(r_evs + bi, c_mu + vj, -chi_l_ * params_.beta * m);
                    tj.emplace_back(r_evs + bi, c_th + bj, chi_l_ * params_.beta * params_.beta * m);
                }
            }
        }
    }

    // chi(K) phase coupling in the constitutive rows.
    if (chi_k_ != 0.0) {
        const Eigen::VectorXd rk = params_.alpha * phase.psi - ops_.trace * phase.phi;
        const Eigen::VectorXd mrk = ops_.M_surf * rk;
        rcon_b += chi_k_ * (ops_.trace.transpose() * mrk);
        rcon_s -= chi_k_ * params_.alpha * mrk;
        if (jacobian) {
            const double a = params_.alpha;
            for (int b = 0; b < nb; ++b) {
                for (SpMat::InnerIterator it(ops_.M_surf, b); it; ++it) {
                    const int bi = static_cast<int>(it.row());
                    const int bj = static_cast<int>(it.col());
                    const int vi = mesh_.boundary_loop[bi];
                    const int vj = mesh_.boundary_loop[bj];
                    const double m = it.value();
                    tj.emplace_back(r_cb + vi, c_phi + vj, -chi_k_ * m);
                    tj.emplace_back(r_cb + vi, c_psi + bj, chi_k_ * a * m);
                    tj.emplace_back(r_cs + bi, c_phi + vj, chi_k_ * a * m);
                    tj.emplace_back(r_cs + bi, c_psi + bj, -chi_k_ * a * a * m);
                }
            }
        }
    }

    // Mass-matrix Jacobian entries for the time derivative and mu pairing.
    if (jacobian) {
        for (int k = 0; k < ops_.M_bulk.outerSize(); ++k)
            for (SpMat::InnerIterator it(ops_.M_bulk, k); it; ++it) {
                tj.emplace_back(r_evb + it.row(), c_phi + it.col(), it.value() / dt);
                tj.emplace_back(r_cb + it.row(), c_mu + it.col(), it.value());
            }
        for (int k = 0; k < ops_.M_surf.outerSize(); ++k)
            for (SpMat::InnerIterator it(ops_.M_surf, k); it; ++it) {
                tj.emplace_back(r_evs + it.row(), c_psi + it.col(), it.value() / dt);
                tj.emplace_back(r_cs + it.row(), c_th + it.col(), it.value());
            }
    }

    // Reduce rows (test space) and columns (trial space).
    const int n_red = nv + nb + n_mt_red_;
    out.residual.resize(n_red);
    if (identify_mt_) {
        Eigen::VectorXd ev(n_mt_red_);
        for (int i = 0; i < nv; ++i)
            if (interior_index_[i] >= 0) ev[interior_index_[i]] = rev_b[i];
        for (int b = 0; b < nb; ++b) ev[n_interior_ + b] = params_.beta * rev_b[mesh_.boundary_loop[b]] + rev_s[b];
        out.residual << ev, rcon_b, rcon_s;
    } else {
        out.residual << rev_b, rev_s, rcon_b, rcon_s;
    }

    if (jacobian) {
        const int n_full = 2 * nv + 2 * nb;
        SpMat jf(n_full, n_full);
        jf.setFromTriplets(tj.begin(), tj.end());
        // Row map Q and column map R for the L = 0 identification; identity
        // otherwise (modulo reordering of the row blocks).
        std::vector<Eigen::Triplet<double>> tq, tr;
        if (identify_mt_) {
            for (int i = 0; i < nv; ++i)
                if (interior_index_[i] >= 0)
                    tq.emplace_back(r_evb + i, interior_index_[i], 1.0);
                else
                    tq.emplace_back(r_evb + i, n_interior_ + vertex_boundary_[i], params_.beta);
            for (int b = 0; b < nb; ++b) tq.emplace_back(r_evs + b, n_interior_ + b, 1.0);
            for (int i = 0; i < nv; ++i) tq.emplace_back(r_cb + i, n_mt_red_ + i, 1.0);
            for (int b = 0; b < nb; ++b) tq.emplace_back(r_cs + b, n_mt_red_ + nv + b, 1.0);

            for (int i = 0; i < nv; ++i) tr.emplace_back(c_phi + i, i, 1.0);
            for (int b = 0; b < nb; ++b) tr.emplace_back(c_psi + b, nv + b, 1.0);
            for (int i = 0; i < nv; ++i)
                if (interior_index_[i] >= 0)
                    tr.emplace_back(c_mu + i, nv + nb + interior_index_[i], 1.0);
                else
                    tr.emplace_back(c_mu + i, nv + nb + n_interior_ + vertex_boundary_[i], params_.beta);
            for (int b = 0; b < nb; ++b) tr.emplace_back(c_th + b, nv + nb + n_interior_ + b, 1.0);
        } else {
            for (int i = 0; i < n_full; ++i) {
                tq.emplace_back(i, i, 1.0);
                tr.emplace_back(i, i, 1.0);
            }
        }
        SpMat Q(n_full, n_red), R(n_full, n_red);
        Q.setFromTriplets(tq.begin(), tq.end());
        R.setFromTriplets(tr.begin(), tr.end());
        out.jacobian = Q.transpose() * jf * R;
    }
}

CHStepResult CHSystem::step(const CHState& state, const VelocitySample& vel, const CHStepConfig& config) const
{
    if (!(config.dt > 0.0)) throw input_error("ch_step: dt must be positive");
    const BulkSurfaceField prev = state.phase;
    Eigen::VectorXd x = pack(state.phase, state.potential);
    if (!admissible(x)) throw barrier_error("ch_step: initial state violates the logarithmic barrier");

    CHStepResult result;
    Assembled sys;
    assemble(sys, x, prev, vel, config, false);
    double rnorm = sys.residual.cwiseAbs().maxCoeff();
    result.residual_history.push_back(rnorm);

    bool polished = false;
    int iter = 0;
    for (; iter < config.max_newton; ++iter) {
        if (rnorm <= config.newton_tol) {
            // One polish iteration drives the residual to rounding level so
            // that the discrete mass identities hold to ~1e-15.
            if (rnorm <= 1e-13 || polished) break;
            polished = true;
        }
        assemble(sys, x, prev, vel, config, true);
        Eigen::SparseLU<SpMat> lu(sys.jacobian);
        if (lu.info() != Eigen::Success) throw solver_error("ch_step: singular Newton system");
        const Eigen::VectorXd delta = lu.solve(-sys.residual);

        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            Eigen::VectorXd x_try = x + t * delta;
            if (admissible(x_try)) {
                Assembled trial;
                assemble(trial, x_try, prev, vel, config, false);
                const double rn_try = trial.residual.cwiseAbs().maxCoeff();
                if (rn_try < rnorm) {
                    x = std::move(x_try);
                    rnorm = rn_try;
                    accepted = true;
                    break;
                }
            }
            t *= config.line_search_shrink;
        }
        result.residual_history.push_back(rnorm);
        if (!accepted) {
            if (rnorm <= config.newton_tol) break; // already converged; polish hit the rounding floor
            throw ch_step_failure("ch_step: line search failed at residual " + fmt17(rnorm), rnorm);
        }
    }
    if (rnorm > config.newton_tol)
        throw ch_step_failure("ch_step: Newton did not converge within max iterations (residual " + fmt17(rnorm) + ")",
                              rnorm);

    result.newton_iters = iter;
    result.state.t = state.t + config.dt;
    unpack(x, result.state.phase, result.state.potential);
    return result;
}

FreeEnergy CHSystem::free_energy(const CHState& state) const
{
    FreeEnergy e;
    const auto& phi = state.phase.phi;
    const auto& psi = state.phase.psi;
    e.bulk = 0.5 * phi.dot(ops_.A_bulk * phi);
    for (const auto& tg : ops_.geom.tris) {
        for (const auto& tq : tri_quad_deg2) {
            const double phi_q = tq.l0 * phi[tg.v[0]] + tq.l1 * phi[tg.v[1]] + tq.l2 * phi[tg.v[2]];
            e.bulk += tq.w * tg.area * params_.F.eval(phi_q, 0);
        }
    }
    e.surface = 0.5 * psi.dot(ops_.A_surf * psi);
    for (const auto& eg : ops_.geom.edges) {
        for (const auto& eq : edge_quad_deg3) {
            const double psi_q = (1.0 - eq.t) * psi[eg.a] + eq.t * psi[eg.b];
            e.surface += eq.w * eg.length * params_.G.eval(psi_q, 0);
        }
    }
    if (chi_k_ != 0.0) {
        const Eigen::VectorXd rk = params_.alpha * psi - ops_.trace * phi;
        e.penalty = 0.5 * chi_k_ * rk.dot(ops_.M_surf * rk);
    }
    return e;
}

MassValues CHSystem::mass_functionals(const CHState& state) const
{
    MassValues m;
    m.bulk = ops_.lumped_bulk.dot(state.phase.phi);
    m.surface = ops_.lumped_surf.dot(state.phase.psi);
    m.combined = params_.beta * m.bulk + m.surface;
    return m;
}

std::array<double, 3> CHSystem::dissipation(const CHState& state) const
{
    Eigen::VectorXd mb(ops_.n_bulk()), ms(ops_.n_surf());
    for (int i = 0; i < ops_.n_bulk(); ++i) mb[i] = params_.coeffs.m_bulk(state.phase.phi[i]);
    for (int b = 0; b < ops_.n_surf(); ++b) ms[b] = params_.coeffs.m_surf(state.phase.psi[b]);
    const SpMat aw = weighted_bulk_stiffness(ops_, mb);
    const SpMat as = weighted_surf_stiffness(ops_, ms);
    const double d_bulk = state.potential.phi.dot(aw * state.potential.phi);
    const double d_surf = state.potential.psi.dot(as * state.potential.psi);
    double d_chi = 0.0;
    if (chi_l_ != 0.0) {
        const Eigen::VectorXd r = params_.beta * state.potential.psi - ops_.trace * state.potential.phi;
        d_chi = chi_l_ * r.dot(ops_.M_surf * r);
    }
    return {d_bulk, d_surf, d_chi};
}

BulkSurfaceField CHSystem::initial_potentials(const BulkSurfaceField& phase, bool* projected) const
{
    const int nb = ops_.n_surf();
    Eigen::VectorXd rhs_b = ops_.A_bulk * phase.phi;
    Eigen::VectorXd rhs_s = ops_.A_surf * phase.psi;
    for (const auto& tg : ops_.geom.tris) {
        for (const auto& tq : tri_quad_deg2) {
            const double phi_q = tq.l0 * phase.phi[tg.v[0]] + tq.l1 * phase.phi[tg.v[1]] + tq.l2 * phase.phi[tg.v[2]];
            const double fp = params_.F.eval(phi_q, 1);
            const double lam[3] = {tq.l0, tq.l1, tq.l2};
            for (int i = 0; i < 3; ++i) rhs_b[tg.v[i]] += tq.w * tg.area * fp * lam[i];
        }
    }
    for (const auto& eg : ops_.geom.edges) {
        for (const auto& eq : edge_quad_deg3) {
            const double psi_q = (1.0 - eq.t) * phase.psi[eg.a] + eq.t * phase.psi[eg.b];
            const double gp = params_.G.eval(psi_q, 1);
            const double sh[2] = {1.0 - eq.t, eq.t};
            const int idx[2] = {eg.a, eg.b};
            for (int i = 0; i < 2; ++i) rhs_s[idx[i]] += eq.w * eg.length * gp * sh[i];
        }
    }
    if (chi_k_ != 0.0) {
        const Eigen::VectorXd rk = params_.alpha * phase.psi - ops_.trace * phase.phi;
        const Eigen::VectorXd mrk = ops_.M_surf * rk;
        rhs_b -= chi_k_ * (ops_.trace.transpose() * mrk);
        rhs_s += chi_k_ * params_.alpha * mrk;
    }

    Eigen::SimplicialLDLT<SpMat> mb(ops_.M_bulk), ms(ops_.M_surf);
    BulkSurfaceField pot;
    pot.phi = mb.solve(rhs_b);
    pot.psi = ms.solve(rhs_s);

    if (projected) *projected = false;
    if (identify_mt_) {
        // Membership in the identified space: mu = beta theta on Gamma.
        double viol = 0.0;
        for (int b = 0; b < nb; ++b)
            viol = std::max(viol, std::abs(pot.phi[mesh_.boundary_loop[b]] - params_.beta * pot.psi[b]));
        if (viol > 1e-10 * std::max(1.0, pot.phi.cwiseAbs().maxCoeff())) {
            // Lumped L2 projection onto the identified pairs.
            for (int b = 0; b < nb; ++b) {
                const int i = mesh_.boundary_loop[b];
                const double mi = ops_.lumped_bulk[i];
                const double mg = ops_.lumped_surf[b];
                const double th = (mi * params_.beta * pot.phi[i] + mg * pot.psi[b]) /
                                  (mi * params_.beta * params_.beta + mg);
                pot.psi[b] = th;
                pot.phi[i] = params_.beta * th;
            }
            if (projected) *projected = true;
        }
    }
    return pot;
}

double CHSystem::separation_margin(const CHState& state) const
{
    const double mp = state.phase.phi.cwiseAbs().maxCoeff();
    const double ms = state.phase.psi.cwiseAbs().maxCoeff();
    return std::min(1.0 - mp, 1.0 - ms);
}

} // namespace bsnsch
