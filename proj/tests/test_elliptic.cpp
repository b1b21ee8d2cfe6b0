#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsnsch/common.hpp"
#include "bsnsch/elliptic.hpp"
#include "bsnsch/runner.hpp"

#include <cmath>
#include <random>

using namespace bsnsch;

namespace {

BulkSurfaceField random_compatible(const SpaceOperators& ops, double beta, std::mt19937_64& eng)
{
    BulkSurfaceField f(ops.n_bulk(), ops.n_surf());
    for (int i = 0; i < ops.n_bulk(); ++i) f.phi[i] = uniform(eng, -1.0, 1.0);
    for (int b = 0; b < ops.n_surf(); ++b) f.psi[b] = uniform(eng, -1.0, 1.0);
    const double gm = generalized_mean(ops, f, beta);
    f.phi.array() -= beta * gm;
    f.psi.array() -= gm;
    return f;
}

double l2_pair(const SpaceOperators& ops, const BulkSurfaceField& a, const BulkSurfaceField& b)
{
    return a.phi.dot(ops.M_bulk * b.phi) + a.psi.dot(ops.M_surf * b.psi);
}

} // namespace

TEST_CASE("zero right-hand side gives the zero solution")
{
    const DiskMesh mesh = build_disk_mesh(4, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    for (double L : {0.5, 0.0, infinite}) {
        EllipticProblem prob(ops, L, 1.0);
        const auto res = prob.solve(BulkSurfaceField(mesh.n_vertices(), mesh.n_boundary()));
        CHECK(res.solution.phi.cwiseAbs().maxCoeff() <= 1e-14);
        CHECK(res.solution.psi.cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("manufactured solution oracle is self-consistent")
{
    // u = (2 - r^2)(x^2 - y^2) on the unit disk: check -Lap u = 12 (x^2 - y^2)
    // and d_n u = 0 at r = 1 with central differences, independently of the
    // solver path.
    auto u = [](double x, double y) {
        const double r2 = x * x + y * y;
        return (2.0 - r2) * (x * x - y * y);
    };
    const double h = 1e-4;
    for (const auto& pt : {std::pair{0.3, 0.1}, {0.0, 0.5}, {-0.4, -0.6}, {0.2, -0.7}}) {
        const auto [x, y] = pt;
        const double lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4.0 * u(x, y)) / (h * h);
        CHECK(std::abs(-lap - 12.0 * (x * x - y * y)) <= 1e-6);
    }
    for (double th : {0.3, 1.2, 2.9}) {
        const double c = std::cos(th), s = std::sin(th);
        const double dn = (u((1.0 + h) * c, (1.0 + h) * s) - u((1.0 - h) * c, (1.0 - h) * s)) / (2.0 * h);
        CHECK(std::abs(dn) <= 1e-7);
    }
}

TEST_CASE("manufactured solution converges at second order")
{
    const auto rows = elliptic_convergence_study({8, 16, 32});
    for (const auto& r : rows) CHECK(r.residual <= 1e-10);
    CHECK(rows[1].rate > 1.7);
    CHECK(rows[1].rate < 2.3);
    CHECK(rows[2].rate > 1.7);
    CHECK(rows[2].rate < 2.3);
}

TEST_CASE("finite-L manufactured solution exercises the chi(L) coupling")
{
    // u = r^2 cos(2 theta) is harmonic (f = 0); with L = 1, beta = 2 the
    // boundary conditions force v = (1 + 2L)/beta cos(2 theta) = 1.5 cos(2s)
    // and g = (4 * 1.5 + 2 * 2) cos(2 theta) = 10 cos(2 theta).
    const double L = 1.0, beta = 2.0;
    auto exact_u = [](const Eigen::Vector2d& p) { return p.x() * p.x() - p.y() * p.y(); };

    std::array<double, 2> errs{};
    int idx = 0;
    for (int n : {8, 16}) {
        const DiskMesh mesh = build_disk_mesh(n, 1.0);
        const SpaceOperators ops = build_space_operators(mesh);
        EllipticProblem prob(ops, L, beta);
        BulkSurfaceField rhs(mesh.n_vertices(), mesh.n_boundary());
        for (int b = 0; b < mesh.n_boundary(); ++b) {
            const Eigen::Vector2d p = mesh.vertices[mesh.boundary_loop[b]];
            rhs.psi[b] = 10.0 * std::cos(2.0 * std::atan2(p.y(), p.x()));
        }
        const auto res = prob.solve(rhs, true);
        CHECK(res.weak_residual <= 1e-10);
        Eigen::VectorXd err_b(mesh.n_vertices());
        for (int i = 0; i < mesh.n_vertices(); ++i) err_b[i] = res.solution.phi[i] - exact_u(mesh.vertices[i]);
        Eigen::VectorXd err_s(mesh.n_boundary());
        for (int b = 0; b < mesh.n_boundary(); ++b) {
            const Eigen::Vector2d p = mesh.vertices[mesh.boundary_loop[b]];
            err_s[b] = res.solution.psi[b] - 1.5 * std::cos(2.0 * std::atan2(p.y(), p.x()));
        }
        errs[idx++] = std::sqrt(err_b.dot(ops.M_bulk * err_b) + err_s.dot(ops.M_surf * err_s));
    }
    const double rate = std::log2(errs[0] / errs[1]);
    CHECK(rate > 1.5);
    CHECK(rate < 2.5);
}

TEST_CASE("solution operator is self-adjoint in the coupled L2 product")
{
    const DiskMesh mesh = build_disk_mesh(8, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    std::mt19937_64 eng(31);
    CoefficientSet coeffs;
    coeffs.m_bulk = ScalarCoefficient::affine(0.6, 1.8);
    coeffs.m_surf = ScalarCoefficient::quadratic(1.0, 0.2, 0.3);
    const BulkSurfaceField phase = random_smooth_field(mesh, 0.8, 12);

    for (double L : {1.7, infinite}) {
        EllipticProblem prob(ops, L, 1.2, phase, coeffs);
        for (int s = 0; s < 3; ++s) {
            BulkSurfaceField f = random_compatible(ops, 1.2, eng);
            BulkSurfaceField g = random_compatible(ops, 1.2, eng);
            if (std::isinf(L)) {
                // Separate means must vanish in this regime.
                auto fix = [&](BulkSurfaceField& h) {
                    const auto [mb, ms] = separate_means(ops, h);
                    h.phi.array() -= mb;
                    h.psi.array() -= ms;
                };
                fix(f);
                fix(g);
            }
            const auto sf = prob.solve(f);
            const auto sg = prob.solve(g);
            const double d1 = l2_pair(ops, sf.solution, g);
            const double d2 = l2_pair(ops, f, sg.solution);
            CHECK(std::abs(d1 - d2) <= 1e-10 * std::max(1.0, std::abs(d1)));
            CHECK(sf.weak_residual <= 1e-10);
        }
    }
}

TEST_CASE("solution means vanish and multipliers act as compatibility checks")
{
    const DiskMesh mesh = build_disk_mesh(8, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    std::mt19937_64 eng(7);

    EllipticProblem prob(ops, 2.0, 0.8);
    const BulkSurfaceField f = random_compatible(ops, 0.8, eng);
    const auto res = prob.solve(f);
    CHECK(std::abs(generalized_mean(ops, res.solution, 0.8)) <= 1e-12);
    CHECK(std::abs(res.multipliers[0]) <= 1e-10);

    EllipticProblem pinf(ops, infinite, 0.8);
    BulkSurfaceField g = f;
    const auto [mb, ms] = separate_means(ops, g);
    g.phi.array() -= mb;
    g.psi.array() -= ms;
    const auto rinf = pinf.solve(g);
    const auto [smb, sms] = separate_means(ops, rinf.solution);
    CHECK(std::abs(smb) <= 1e-12);
    CHECK(std::abs(sms) <= 1e-12);
}

TEST_CASE("incompatible data is rejected unless auto-removal is requested")
{
    const DiskMesh mesh = build_disk_mesh(4, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    EllipticProblem prob(ops, 1.0, 1.0);

    // The constant pair (c, c) with beta = 1 is exactly the generalized-mean
    // direction: removal annihilates it completely.
    BulkSurfaceField c(mesh.n_vertices(), mesh.n_boundary());
    c.phi.setConstant(0.7);
    c.psi.setConstant(0.7);
    CHECK_THROWS_AS(prob.solve(c), compatibility_error);
    const auto rz = prob.solve(c, true);
    CHECK(rz.solution.phi.cwiseAbs().maxCoeff() <= 1e-12);

    // A bulk-only constant is incompatible; after removal a nontrivial but
    // compatible load remains and the solve succeeds with a mean-free solution.
    BulkSurfaceField f(mesh.n_vertices(), mesh.n_boundary());
    f.phi.setConstant(1.0);
    CHECK_THROWS_AS(prob.solve(f), compatibility_error);
    const auto res = prob.solve(f, true);
    CHECK(res.weak_residual <= 1e-10);
    CHECK(std::abs(generalized_mean(ops, res.solution, 1.0)) <= 1e-12);
    CHECK(res.solution.phi.cwiseAbs().maxCoeff() > 1e-3); // genuinely nonzero
}

TEST_CASE("dual norm: homogeneity and the mobility norm equivalence")
{
    const DiskMesh mesh = build_disk_mesh(8, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    std::mt19937_64 eng(99);

    CoefficientSet coeffs;
    coeffs.m_bulk = ScalarCoefficient::affine(0.5, 2.0);
    coeffs.m_surf = ScalarCoefficient::affine(0.5, 2.0);
    const BulkSurfaceField phase = random_smooth_field(mesh, 0.9, 77);
    EllipticProblem weighted(ops, 1.0, 1.0, phase, coeffs);
    EllipticProblem unit(ops, 1.0, 1.0);

    BulkSurfaceField zero(mesh.n_vertices(), mesh.n_boundary());
    CHECK(weighted.dual_norm(zero) == 0.0);

    const BulkSurfaceField f = random_compatible(ops, 1.0, eng);
    BulkSurfaceField f2 = f;
    f2.phi *= 2.0;
    f2.psi *= 2.0;
    CHECK(weighted.dual_norm(f2) == doctest::Approx(2.0 * weighted.dual_norm(f)).epsilon(1e-10));

    // min{1, sqrt(m_*)} ||.||_{weighted,*} <= ||.||_* <= max{1, sqrt(m^*)} ||.||_{weighted,*}
    const double lo = std::min(1.0, std::sqrt(0.5));
    const double hi = std::max(1.0, std::sqrt(2.0));
    int violations = 0;
    for (int s = 0; s < 100; ++s) {
        const BulkSurfaceField r = random_compatible(ops, 1.0, eng);
        const double nw = weighted.dual_norm(r);
        const double n1 = unit.dual_norm(r);
        if (!(lo * nw <= n1 * (1.0 + 1e-10) && n1 <= hi * nw * (1.0 + 1e-10))) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("L = 0 identification and reduced-space mean")
{
    const DiskMesh mesh = build_disk_mesh(8, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    std::mt19937_64 eng(13);
    const double beta = 1.6;

    EllipticProblem prob(ops, 0.0, beta);
    const BulkSurfaceField f = random_compatible(ops, beta, eng);
    const auto res = prob.solve(f, true);
    for (int b = 0; b < mesh.n_boundary(); ++b)
        CHECK(res.solution.phi[mesh.boundary_loop[b]] == doctest::Approx(beta * res.solution.psi[b]).epsilon(1e-13));
    CHECK(std::abs(generalized_mean(ops, res.solution, beta)) <= 1e-12);
    CHECK(res.weak_residual <= 1e-10);
}

TEST_CASE("unit mobility agrees with the constant-coefficient assembly")
{
    const DiskMesh mesh = build_disk_mesh(6, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);
    std::mt19937_64 eng(55);
    EllipticProblem direct(ops, 1.0, 1.0);
    EllipticProblem via_fields(ops, 1.0, 1.0, Eigen::VectorXd::Ones(mesh.n_vertices()),
                               Eigen::VectorXd::Ones(mesh.n_boundary()));
    const BulkSurfaceField f = random_compatible(ops, 1.0, eng);
    const auto a = direct.solve(f);
    const auto b = via_fields.solve(f);
    CHECK((a.solution.phi - b.solution.phi).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.solution.psi - b.solution.psi).cwiseAbs().maxCoeff() <= 1e-12);
}
