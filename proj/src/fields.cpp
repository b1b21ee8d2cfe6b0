#include "bsnsch/fields.hpp"

#include "bsnsch/common.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <fstream>
#include <random>

namespace bsnsch {

namespace {

// Force exact zero row sums by recomputing each diagonal as the negative sum
// of its off-diagonal entries; this makes A * constant vanish bitwise.
void enforce_zero_row_sums(SpMat& a)
{
    for (int k = 0; k < a.outerSize(); ++k) {
        double offdiag = 0.0;
        for (SpMat::InnerIterator it(a, k); it; ++it)
            if (it.row() != it.col()) offdiag += it.value();
        for (SpMat::InnerIterator it(a, k); it; ++it)
            if (it.row() == it.col()) it.valueRef() = -offdiag;
    }
}

} // namespace

FemGeometry build_fem_geometry(const DiskMesh& mesh)
{
    FemGeometry geom;
    geom.tris.reserve(mesh.n_triangles());
    for (const auto& tri : mesh.triangles) {
        const Eigen::Vector2d& p0 = mesh.vertices[tri[0]];
        const Eigen::Vector2d& p1 = mesh.vertices[tri[1]];
        const Eigen::Vector2d& p2 = mesh.vertices[tri[2]];
        const double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
        if (det <= 0.0) throw input_error("build_fem_geometry: non-positive triangle area");
        TriGeometry tg;
        tg.v = tri;
        tg.area = 0.5 * det;
        // grad lambda_0 = -(grad lambda_1 + grad lambda_2) so the sum is exactly zero.
        Eigen::Vector2d gl1((p2.y() - p0.y()) / det, -(p2.x() - p0.x()) / det);
        Eigen::Vector2d gl2(-(p1.y() - p0.y()) / det, (p1.x() - p0.x()) / det);
        tg.grad.col(1) = gl1;
        tg.grad.col(2) = gl2;
        tg.grad.col(0) = -(gl1 + gl2);
        geom.tris.push_back(tg);
    }

    const int nb = mesh.n_boundary();
    geom.edges.reserve(nb);
    for (int b = 0; b < nb; ++b) {
        const Eigen::Vector2d& p = mesh.vertices[mesh.boundary_loop[b]];
        const Eigen::Vector2d& q = mesh.vertices[mesh.boundary_loop[(b + 1) % nb]];
        geom.edges.push_back({b, (b + 1) % nb, (q - p).norm()});
    }
    return geom;
}

SpaceOperators build_space_operators(const DiskMesh& mesh)
{
    SpaceOperators ops;
    ops.geom = build_fem_geometry(mesh);
    const int nv = mesh.n_vertices();
    const int nb = mesh.n_boundary();

    std::vector<Eigen::Triplet<double>> tm, ta;
    tm.reserve(9 * ops.geom.tris.size());
    ta.reserve(9 * ops.geom.tris.size());
    for (const auto& tg : ops.geom.tris) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const double mij = tg.area / 12.0 * (i == j ? 2.0 : 1.0);
                const double aij = tg.area * tg.grad.col(i).dot(tg.grad.col(j));
                tm.emplace_back(tg.v[i], tg.v[j], mij);
                ta.emplace_back(tg.v[i], tg.v[j], aij);
            }
        }
    }
    ops.M_bulk.resize(nv, nv);
    ops.M_bulk.setFromTriplets(tm.begin(), tm.end());
    ops.A_bulk.resize(nv, nv);
    ops.A_bulk.setFromTriplets(ta.begin(), ta.end());
    enforce_zero_row_sums(ops.A_bulk);

    std::vector<Eigen::Triplet<double>> sm, sa, tt;
    for (const auto& e : ops.geom.edges) {
        const double l = e.length;
        const int idx[2] = {e.a, e.b};
        const double me[2][2] = {{l / 3.0, l / 6.0}, {l / 6.0, l / 3.0}};
        const double ae[2][2] = {{1.0 / l, -1.0 / l}, {-1.0 / l, 1.0 / l}};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                sm.emplace_back(idx[i], idx[j], me[i][j]);
                sa.emplace_back(idx[i], idx[j], ae[i][j]);
            }
    }
    ops.M_surf.resize(nb, nb);
    ops.M_surf.setFromTriplets(sm.begin(), sm.end());
    ops.A_surf.resize(nb, nb);
    ops.A_surf.setFromTriplets(sa.begin(), sa.end());
    enforce_zero_row_sums(ops.A_surf);

    for (int b = 0; b < nb; ++b) tt.emplace_back(b, mesh.boundary_loop[b], 1.0);
    ops.trace.resize(nb, nv);
    ops.trace.setFromTriplets(tt.begin(), tt.end());

    ops.lumped_bulk = ops.M_bulk * Eigen::VectorXd::Ones(nv);
    ops.lumped_surf = ops.M_surf * Eigen::VectorXd::Ones(nb);
    ops.area = ops.lumped_bulk.sum();
    ops.perimeter = ops.lumped_surf.sum();
    return ops;
}

SpMat weighted_bulk_stiffness(const SpaceOperators& ops, const Eigen::VectorXd& w_vertex)
{
    std::vector<Eigen::Triplet<double>> ta;
    ta.reserve(9 * ops.geom.tris.size());
    for (const auto& tg : ops.geom.tris) {
        const double wbar = (w_vertex[tg.v[0]] + w_vertex[tg.v[1]] + w_vertex[tg.v[2]]) / 3.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                ta.emplace_back(tg.v[i], tg.v[j], wbar * tg.area * tg.grad.col(i).dot(tg.grad.col(j)));
    }
    SpMat a(ops.n_bulk(), ops.n_bulk());
    a.setFromTriplets(ta.begin(), ta.end());
    enforce_zero_row_sums(a);
    return a;
}

SpMat weighted_surf_stiffness(const SpaceOperators& ops, const Eigen::VectorXd& w_boundary)
{
    std::vector<Eigen::Triplet<double>> ta;
    for (const auto& e : ops.geom.edges) {
        const double wbar = 0.5 * (w_boundary[e.a] + w_boundary[e.b]);
        const double k = wbar / e.length;
        ta.emplace_back(e.a, e.a, k);
        ta.emplace_back(e.b, e.b, k);
        ta.emplace_back(e.a, e.b, -k);
        ta.emplace_back(e.b, e.a, -k);
    }
    SpMat a(ops.n_surf(), ops.n_surf());
    a.setFromTriplets(ta.begin(), ta.end());
    enforce_zero_row_sums(a);
    return a;
}

double generalized_mean(const SpaceOperators& ops, const BulkSurfaceField& f, double beta)
{
    const double denom = beta * beta * ops.area + ops.perimeter;
    if (std::abs(denom) < 1e-14 * (ops.area + ops.perimeter))
        throw input_error("generalized_mean: beta^2 |Omega| + |Gamma| vanishes");
    const double bulk = ops.lumped_bulk.dot(f.phi);
    const double surf = ops.lumped_surf.dot(f.psi);
    return (beta * bulk + surf) / denom;
}

std::pair<double, double> separate_means(const SpaceOperators& ops, const BulkSurfaceField& f)
{
    return {ops.lumped_bulk.dot(f.phi) / ops.area, ops.lumped_surf.dot(f.psi) / ops.perimeter};
}

namespace {

double chi_of(double r)
{
    if (r == 0.0 || std::isinf(r)) return 0.0;
    return 1.0 / r;
}

} // namespace

double inner_lb(const SpaceOperators& ops, const BulkSurfaceField& a, const BulkSurfaceField& b,
                double L, double beta)
{
    double val = a.phi.dot(ops.A_bulk * b.phi) + a.psi.dot(ops.A_surf * b.psi);
    const double chi = chi_of(L);
    if (chi != 0.0) {
        const Eigen::VectorXd ra = beta * a.psi - ops.trace * a.phi;
        const Eigen::VectorXd rb = beta * b.psi - ops.trace * b.phi;
        val += chi * ra.dot(ops.M_surf * rb);
    }
    return val;
}

double norm_ka(const SpaceOperators& ops, const BulkSurfaceField& a, double K, double alpha)
{
    if (!(K > 0.0) || std::isinf(K))
        throw input_error("norm_ka: K must lie in (0, inf)");
    return std::sqrt(std::max(0.0, inner_lb(ops, a, a, K, alpha)));
}

namespace {

// Largest generalized eigenvalue of (M, A) on {c^T x = 0} via inverse
// iteration on the bordered system [A c; c^T 0].
double constrained_largest_eig(const SpMat& M, const SpMat& A, const Eigen::VectorXd& c)
{
    const int n = static_cast<int>(A.rows());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros() + 2 * n);
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < n; ++i) {
        trip.emplace_back(i, n, c[i]);
        trip.emplace_back(n, i, c[i]);
    }
    SpMat kkt(n + 1, n + 1);
    kkt.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<SpMat> lu(kkt);
    if (lu.info() != Eigen::Success) throw solver_error("constrained eigen solve: singular constrained form");

    std::mt19937_64 eng(7);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = uniform(eng, -1.0, 1.0);
    double lam = 0.0;
    for (int it = 0; it < 400; ++it) {
        Eigen::VectorXd rhs(n + 1);
        rhs.head(n) = M * x;
        rhs[n] = 0.0;
        Eigen::VectorXd y = lu.solve(rhs);
        x = y.head(n);
        const double num = x.dot(M * x);
        const double den = x.dot(A * x);
        if (den <= 0.0) throw solver_error("constrained eigen solve: form not positive on subspace");
        const double lam_new = num / den;
        const double nx = std::sqrt(num);
        if (nx > 0.0) x /= nx;
        if (it > 4 && std::abs(lam_new - lam) <= 1e-12 * std::abs(lam_new)) {
            lam = lam_new;
            break;
        }
        lam = lam_new;
    }
    return lam;
}

} // namespace

double poincare_check(const SpaceOperators& ops, double K, double alpha, double beta)
{
    if (!(K > 0.0) || std::isinf(K)) throw input_error("poincare_check: K must lie in (0, inf)");
    const double denom = alpha * beta * ops.area + ops.perimeter;
    if (std::abs(denom) < 1e-12 * (ops.area + ops.perimeter))
        throw input_error("poincare_check: alpha*beta*|Omega| + |Gamma| vanishes");

    const int nv = ops.n_bulk();
    const int nb = ops.n_surf();
    const int n = nv + nb;
    const double chi = 1.0 / K;

    std::vector<Eigen::Triplet<double>> ta, tm;
    auto add_block = [&](std::vector<Eigen::Triplet<double>>& t, const SpMat& m, int r0, int c0, double s) {
        for (int k = 0; k < m.outerSize(); ++k)
            for (SpMat::InnerIterator it(m, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
    };
    add_block(ta, ops.A_bulk, 0, 0, 1.0);
    add_block(ta, ops.A_surf, nv, nv, 1.0);
    // chi(K) * (alpha psi - phi|_Gamma) penalty
    const SpMat TtMT = ops.trace.transpose() * ops.M_surf * ops.trace;
    const SpMat TtM = ops.trace.transpose() * ops.M_surf;
    add_block(ta, TtMT, 0, 0, chi);
    add_block(ta, ops.M_surf, nv, nv, chi * alpha * alpha);
    add_block(ta, TtM, 0, nv, -chi * alpha);
    SpMat MtT = ops.M_surf * ops.trace;
    add_block(ta, MtT, nv, 0, -chi * alpha);

    add_block(tm, ops.M_bulk, 0, 0, 1.0);
    add_block(tm, ops.M_surf, nv, nv, 1.0);

    SpMat A(n, n), M(n, n);
    A.setFromTriplets(ta.begin(), ta.end());
    M.setFromTriplets(tm.begin(), tm.end());

    Eigen::VectorXd c(n);
    c.head(nv) = beta * ops.lumped_bulk;
    c.tail(nb) = ops.lumped_surf;

    return std::sqrt(constrained_largest_eig(M, A, c));
}

double trace_interpolation_quotient(const SpaceOperators& ops, int n_samples, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    double worst = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        Eigen::VectorXd u(ops.n_bulk());
        for (int i = 0; i < ops.n_bulk(); ++i) u[i] = uniform(eng, -1.0, 1.0);
        const Eigen::VectorXd ug = ops.trace * u;
        const double l2g = std::sqrt(ug.dot(ops.M_surf * ug));
        const double l2 = std::sqrt(u.dot(ops.M_bulk * u));
        const double h1 = std::sqrt(u.dot(ops.M_bulk * u) + u.dot(ops.A_bulk * u));
        const double denom = std::sqrt(l2 * h1);
        if (denom > 0.0) worst = std::max(worst, l2g / denom);
    }
    return worst;
}

void write_coordinate_matrix(const SpMat& m, const std::string& path)
{
    std::ofstream os(path);
    if (!os) throw input_error("write_coordinate_matrix: cannot open " + path);
    os << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
            os << it.row() << " " << it.col() << " " << fmt17(it.value()) << "\n";
}

BulkSurfaceField random_smooth_field(const DiskMesh& mesh, double amplitude, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    // Low-order trigonometric polynomial: smooth, deterministic, mesh independent.
    std::array<double, 8> c;
    for (auto& v : c) v = uniform(eng, -1.0, 1.0);
    auto f = [&](const Eigen::Vector2d& p) {
        const double x = p.x() / mesh.radius, y = p.y() / mesh.radius;
        return c[0] + c[1] * std::sin(x) + c[2] * std::sin(y) + c[3] * std::cos(x + y) +
               c[4] * std::sin(2.0 * x) * std::cos(y) + c[5] * std::cos(2.0 * y) + c[6] * std::sin(x) * std::sin(y) +
               c[7] * std::cos(x - 2.0 * y);
    };
    BulkSurfaceField out(mesh.n_vertices(), mesh.n_boundary());
    double maxabs = 0.0;
    for (int i = 0; i < mesh.n_vertices(); ++i) {
        out.phi[i] = f(mesh.vertices[i]);
        maxabs = std::max(maxabs, std::abs(out.phi[i]));
    }
    const double scale = maxabs > 0.0 ? amplitude / maxabs : 0.0;
    out.phi *= scale;
    for (int b = 0; b < mesh.n_boundary(); ++b) out.psi[b] = out.phi[mesh.boundary_loop[b]];
    return out;
}

} // namespace bsnsch
