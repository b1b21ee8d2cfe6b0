#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsnsch/common.hpp"
#include "bsnsch/materials.hpp"

#include <cmath>

using namespace bsnsch;

TEST_CASE("chi case function")
{
    CHECK(chi(4.0) == 0.25);
    CHECK(chi(0.0) == 0.0);
    CHECK(chi(infinite) == 0.0);
    // Nonincreasing and continuous on (0, inf).
    double prev = chi(1e-6);
    for (double r = 1e-5; r < 1e6; r *= 3.0) {
        CHECK(chi(r) <= prev);
        prev = chi(r);
    }
    CHECK_THROWS_AS(chi(-1.0), input_error);
}

TEST_CASE("affine densities")
{
    ModelParameters p;
    p.rho1 = 1.0;
    p.rho2 = 3.0;
    CHECK(p.rho(1.0) == 3.0);
    CHECK(p.rho(-1.0) == 1.0);
    CHECK(p.rho(0.0) == 2.0);
    CHECK(p.rho(5.0) == 3.0); // clamped

    ModelParameters matched;
    matched.rho1 = matched.rho2 = 1.7;
    for (double s : {-1.0, -0.3, 0.0, 0.9}) CHECK(matched.rho(s) == 1.7);
}

TEST_CASE("logarithmic potential")
{
    const PotentialSpec w = make_log_potential(1.0, 2.0);
    CHECK(w.eval(0.0, 0) == 0.0);
    CHECK(w.eval(0.0, 1) == 0.0);
    CHECK(w.eval(0.0, 2) == doctest::Approx(-1.0).epsilon(1e-15)); // Theta/(1-s^2) - Theta_c at 0

    CHECK_THROWS_AS(w.eval(1.0 - 1e-10, 0), barrier_error);
    CHECK_THROWS_AS(w.eval(-1.0, 1), barrier_error);
    CHECK_THROWS_AS(make_log_potential(2.0, 1.0), config_error);

    // Derivative consistency via central differences at 50 interior points.
    for (int i = 0; i < 50; ++i) {
        const double s = -0.92 + 1.84 * i / 49.0;
        const double h = 1e-5;
        const double fd1 = (w.eval(s + h, 0) - w.eval(s - h, 0)) / (2.0 * h);
        const double fd2 = (w.eval(s + h, 1) - w.eval(s - h, 1)) / (2.0 * h);
        CHECK(std::abs(fd1 - w.eval(s, 1)) <= 1e-6 * std::max(1.0, std::abs(w.eval(s, 1))));
        CHECK(std::abs(fd2 - w.eval(s, 2)) <= 1e-6 * std::max(1.0, std::abs(w.eval(s, 2))));
    }
}

TEST_CASE("polynomial potential is normalized and differentiates consistently")
{
    // F0 = s^4/4 + 0.05 s^2 + junk constant/linear terms that the
    // normalization must remove.
    PotentialSpec p = make_poly_potential({3.0, -2.0, 0.05, 0.0, 0.25}, 1.1);
    CHECK(p.eval_f0(0.0, 0) == 0.0);
    CHECK(p.eval_f0(0.0, 1) == 0.0);
    CHECK(p.convex_shift() == 1.1);
    for (int i = 0; i < 50; ++i) {
        const double s = -1.3 + 2.6 * i / 49.0;
        const double h = 1e-6;
        const double fd1 = (p.eval(s + h, 0) - p.eval(s - h, 0)) / (2.0 * h);
        CHECK(std::abs(fd1 - p.eval(s, 1)) <= 1e-6 * std::max(1.0, std::abs(p.eval(s, 1))));
    }
}

TEST_CASE("coefficient functions and bounds")
{
    const ScalarCoefficient aff = ScalarCoefficient::affine(0.5, 2.0);
    CHECK(aff(-1.0) == 0.5);
    CHECK(aff(1.0) == 2.0);
    CHECK(aff(-2.0) == 0.5); // clamped
    const auto [lo, hi] = aff.bounds();
    CHECK(lo == 0.5);
    CHECK(hi == 2.0);
    // Bound invariants on a fine grid.
    for (int i = 0; i <= 1000; ++i) {
        const double s = -1.0 + 2.0 * i / 1000.0;
        CHECK(aff(s) >= lo);
        CHECK(aff(s) <= hi);
    }

    const ScalarCoefficient quad = ScalarCoefficient::quadratic(1.0, 0.0, -0.5);
    const auto [qlo, qhi] = quad.bounds();
    CHECK(qlo == 0.5);
    CHECK(qhi == 1.0);

    const FrictionCoefficient gamma{1.0, 0.4};
    CHECK(gamma(1.0, 1.0) == doctest::Approx(1.4));
    CHECK(gamma(-1.0, -1.0) == doctest::Approx(0.6));
}

TEST_CASE("assumption validation")
{
    const DiskMesh mesh = build_disk_mesh(6, 1.0);
    const SpaceOperators ops = build_space_operators(mesh);

    SUBCASE("defaults pass")
    {
        const ValidationReport rep = validate_assumptions(ModelParameters{}, ops);
        CHECK(rep.ok());
        CHECK(rep.to_json().find("\"ok\": true") != std::string::npos);
    }
    SUBCASE("K outside the theorem scope is rejected unless experimental")
    {
        ModelParameters p;
        p.K = 0.0;
        CHECK_FALSE(validate_assumptions(p, ops).ok());
        p.K = infinite;
        CHECK_FALSE(validate_assumptions(p, ops).ok());
        CHECK(validate_assumptions(p, ops, true).ok());
    }
    SUBCASE("A2 mean condition")
    {
        ModelParameters p;
        p.alpha = -1.0;
        p.beta = ops.perimeter / ops.area; // alpha*beta*|Omega| + |Gamma| = 0
        CHECK_FALSE(validate_assumptions(p, ops).ok());
    }
    SUBCASE("L = 0 density compatibility")
    {
        ModelParameters p;
        p.L = 0.0;
        p.beta = 2.0;
        p.rho1 = 1.0;
        p.rho2 = 1.8;
        p.sigma1 = 1.0;
        p.sigma2 = 1.4; // beta (sigma2 - sigma1) = 0.8 = rho2 - rho1
        CHECK(validate_assumptions(p, ops).ok());
        p.rho2 = 2.0;
        CHECK_FALSE(validate_assumptions(p, ops).ok());
    }
    SUBCASE("A4 positivity")
    {
        ModelParameters p;
        p.coeffs.m_bulk = ScalarCoefficient::affine(-0.1, 1.0);
        CHECK_FALSE(validate_assumptions(p, ops).ok());
    }
    SUBCASE("domination constants for matching potentials")
    {
        ModelParameters p; // F = G logarithmic, alpha = 1
        const auto [k1, k2] = fit_domination_constants(p);
        CHECK(k1 == doctest::Approx(1.0).epsilon(0.06));
        CHECK(k2 <= 0.05);
    }
}
