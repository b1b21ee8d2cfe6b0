#pragma once

#include "bsnsch/fields.hpp"
#include "bsnsch/mesh.hpp"

#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace bsnsch {

inline constexpr double infinite = std::numeric_limits<double>::infinity();

// Case function distinguishing the coupling regimes: 1/r on (0, inf),
// 0 at r = 0 and r = inf.
double chi(double r);

// Free energy density F = F0 - (c_F/2) s^2 with F0 strongly convex.
// Logarithmic (Flory-Huggins): F0 = Theta/2 [(1+s)ln(1+s) + (1-s)ln(1-s)],
// c_F = Theta_c. Polynomial: F0 given by coefficients, normalized so that
// F0(0) = F0'(0) = 0.
struct LogPotential {
    double theta;
    double theta_c;
    bool operator==(const LogPotential&) const = default;
};

struct PolyPotential {
    std::vector<double> f0_coeffs; // F0 = sum_k c_k s^k (before normalization)
    double c_f;
    bool operator==(const PolyPotential&) const = default;
};

struct PotentialSpec {
    std::variant<LogPotential, PolyPotential> kind;

    static constexpr double eps_barrier = 1e-9;

    bool is_logarithmic() const { return std::holds_alternative<LogPotential>(kind); }
    double convex_shift() const; // c_F

    // F and derivatives; order in {0,1,2}. Logarithmic evaluation within
    // eps_barrier of +-1 raises barrier_error (the Newton safeguard's signal).
    double eval(double s, int order) const;
    // Convex part F0 and derivatives under the same barrier rule.
    double eval_f0(double s, int order) const;

    bool operator==(const PotentialSpec&) const = default;
};

PotentialSpec make_log_potential(double theta, double theta_c);
PotentialSpec make_poly_potential(std::vector<double> f0_coeffs, double c_f);

// Scalar coefficient function on [-1,1]: constant, affine between endpoint
// values, or a quadratic; arguments are clamped to [-1,1] before evaluation.
struct ScalarCoefficient {
    enum class Kind { Constant, Affine, Quadratic } kind = Kind::Constant;
    // Constant: c0. Affine: value v_minus at s=-1, v_plus at s=+1.
    // Quadratic: c0 + c1 s + c2 s^2.
    double c0 = 1.0, c1 = 0.0, c2 = 0.0;

    double operator()(double s) const;
    double derivative(double s) const;
    std::pair<double, double> bounds() const; // min/max over [-1,1]

    static ScalarCoefficient constant(double c);
    static ScalarCoefficient affine(double v_minus, double v_plus);
    static ScalarCoefficient quadratic(double c0, double c1, double c2);

    bool operator==(const ScalarCoefficient&) const = default;
};

// Friction coefficient on [-1,1]^2: gamma0 + gamma1 * (s + r)/2.
struct FrictionCoefficient {
    double gamma0 = 1.0, gamma1 = 0.0;
    double operator()(double s, double r) const;
    std::pair<double, double> bounds() const;

    bool operator==(const FrictionCoefficient&) const = default;
};

struct CoefficientSet {
    ScalarCoefficient m_bulk, m_surf;   // mobilities
    ScalarCoefficient nu_bulk, nu_surf; // viscosities
    FrictionCoefficient gamma;

    bool operator==(const CoefficientSet&) const = default;
};

struct ModelParameters {
    double K = 1.0;         // (0, inf); theorem scope excludes 0 and inf
    double L = 1.0;         // [0, inf], inf encoded as +infinity
    double alpha = 1.0;     // [-1, 1]
    double beta = 1.0;
    double rho1 = 1.0, rho2 = 1.0;     // bulk specific densities, > 0
    double sigma1 = 1.0, sigma2 = 1.0; // surface specific densities, > 0
    CoefficientSet coeffs;
    PotentialSpec F = make_log_potential(1.0, 2.0);
    PotentialSpec G = make_log_potential(1.0, 2.0);
    std::optional<std::pair<double, double>> a7_constants; // user-supplied (C_sharp, gamma_sharp)

    double rho(double s) const;   // affine density, argument clamped to [-1,1]
    double sigma(double s) const;
    double drho() const { return 0.5 * (rho2 - rho1); }
    double dsigma() const { return 0.5 * (sigma2 - sigma1); }
    bool l_is_infinite() const { return std::isinf(L); }

    bool operator==(const ModelParameters&) const = default;
};

struct ValidationItem {
    std::string id;
    bool pass = true;
    bool hard = true; // hard failures break solver well-posedness
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationItem> items;
    bool ok() const;           // no hard failures
    std::string to_json() const;
};

// Checks A2-A7 for the given configuration against discrete measures.
// experimental lifts the K-range gate (exploration outside the verified
// envelope); A6/A7 findings are warnings.
ValidationReport validate_assumptions(const ModelParameters& params, const SpaceOperators& ops,
                                      bool experimental = false);

// Fit the smallest feasible (kappa1, kappa2) for |F0'(alpha s)| <=
// kappa1 |G0'(s)| + kappa2 on a sampled grid (minimizing kappa1 + kappa2).
std::pair<double, double> fit_domination_constants(const ModelParameters& params, int grid = 1001);

} // namespace bsnsch
