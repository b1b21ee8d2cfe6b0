#include "bsnsch/materials.hpp"

#include "bsnsch/common.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bsnsch {

double chi(double r)
{
    if (std::isnan(r) || r < 0.0) throw input_error("chi: argument must lie in [0, inf]");
    if (r == 0.0 || std::isinf(r)) return 0.0;
    return 1.0 / r;
}

namespace {

double clamp1(double s) { return std::clamp(s, -1.0, 1.0); }

void check_barrier(double s)
{
    if (std::abs(s) >= 1.0 - PotentialSpec::eps_barrier)
        throw barrier_error("logarithmic potential evaluated at |s| >= 1 - eps_barrier");
}

// Normalization shift so that F0(0) = F0'(0) = 0.
struct PolyNormalized {
    std::vector<double> c;
};

// Horner evaluation of the order-th derivative of sum_k c_k s^k.
double poly_eval(const std::vector<double>& c, double s, int order)
{
    double v = 0.0;
    const int n = static_cast<int>(c.size());
    for (int k = n - 1; k >= order; --k) {
        double coeff = c[k];
        for (int d = 0; d < order; ++d) coeff *= static_cast<double>(k - d);
        v = v * s + coeff;
    }
    return v;
}

} // namespace

PotentialSpec make_log_potential(double theta, double theta_c)
{
    if (!(theta > 0.0) || !(theta < theta_c))
        throw config_error("logarithmic potential requires 0 < Theta < Theta_c");
    PotentialSpec spec;
    spec.kind = LogPotential{theta, theta_c};
    return spec;
}

PotentialSpec make_poly_potential(std::vector<double> f0_coeffs, double c_f)
{
    if (f0_coeffs.empty()) throw config_error("polynomial potential needs F0 coefficients");
    // Normalize F0(0) = F0'(0) = 0.
    f0_coeffs[0] = 0.0;
    if (f0_coeffs.size() > 1) f0_coeffs[1] = 0.0;
    PotentialSpec spec;
    spec.kind = PolyPotential{std::move(f0_coeffs), c_f};
    return spec;
}

double PotentialSpec::convex_shift() const
{
    if (const auto* lp = std::get_if<LogPotential>(&kind)) return lp->theta_c;
    return std::get<PolyPotential>(kind).c_f;
}

double PotentialSpec::eval_f0(double s, int order) const
{
    if (const auto* lp = std::get_if<LogPotential>(&kind)) {
        check_barrier(s);
        const double th = lp->theta;
        switch (order) {
            case 0: return 0.5 * th * ((1.0 + s) * std::log(1.0 + s) + (1.0 - s) * std::log(1.0 - s));
            case 1: return 0.5 * th * std::log((1.0 + s) / (1.0 - s));
            case 2: return th / (1.0 - s * s);
            default: throw input_error("potential order must be 0, 1 or 2");
        }
    }
    const auto& pp = std::get<PolyPotential>(kind);
    if (order < 0 || order > 2) throw input_error("potential order must be 0, 1 or 2");
    return poly_eval(pp.f0_coeffs, s, order);
}

double PotentialSpec::eval(double s, int order) const
{
    const double cf = convex_shift();
    const double f0 = eval_f0(s, order);
    switch (order) {
        case 0: return f0 - 0.5 * cf * s * s;
        case 1: return f0 - cf * s;
        default: return f0 - cf;
    }
}

ScalarCoefficient ScalarCoefficient::constant(double c)
{
    ScalarCoefficient sc;
    sc.kind = Kind::Constant;
    sc.c0 = c;
    return sc;
}

ScalarCoefficient ScalarCoefficient::affine(double v_minus, double v_plus)
{
    ScalarCoefficient sc;
    sc.kind = Kind::Affine;
    sc.c0 = 0.5 * (v_plus + v_minus);
    sc.c1 = 0.5 * (v_plus - v_minus);
    return sc;
}

ScalarCoefficient ScalarCoefficient::quadratic(double c0, double c1, double c2)
{
    ScalarCoefficient sc;
    sc.kind = Kind::Quadratic;
    sc.c0 = c0;
    sc.c1 = c1;
    sc.c2 = c2;
    return sc;
}

double ScalarCoefficient::operator()(double s) const
{
    s = clamp1(s);
    switch (kind) {
        case Kind::Constant: return c0;
        case Kind::Affine: return c0 + c1 * s;
        case Kind::Quadratic: return c0 + c1 * s + c2 * s * s;
    }
    return c0;
}

double ScalarCoefficient::derivative(double s) const
{
    // The coefficient is constant outside [-1,1] because of clamping.
    if (s < -1.0 || s > 1.0) return 0.0;
    switch (kind) {
        case Kind::Constant: return 0.0;
        case Kind::Affine: return c1;
        case Kind::Quadratic: return c1 + 2.0 * c2 * s;
    }
    return 0.0;
}

std::pair<double, double> ScalarCoefficient::bounds() const
{
    double lo = std::min((*this)(-1.0), (*this)(1.0));
    double hi = std::max((*this)(-1.0), (*this)(1.0));
    if (kind == Kind::Quadratic && c2 != 0.0) {
        const double sv = -c1 / (2.0 * c2);
        if (sv > -1.0 && sv < 1.0) {
            const double v = (*this)(sv);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    return {lo, hi};
}

double FrictionCoefficient::operator()(double s, double r) const
{
    return gamma0 + gamma1 * 0.5 * (clamp1(s) + clamp1(r));
}

std::pair<double, double> FrictionCoefficient::bounds() const
{
    return {std::min(gamma0 - std::abs(gamma1), gamma0 + std::abs(gamma1)),
            std::max(gamma0 - std::abs(gamma1), gamma0 + std::abs(gamma1))};
}

double ModelParameters::rho(double s) const
{
    return drho() * clamp1(s) + 0.5 * (rho1 + rho2);
}

double ModelParameters::sigma(double s) const
{
    return dsigma() * clamp1(s) + 0.5 * (sigma1 + sigma2);
}

bool ValidationReport::ok() const
{
    for (const auto& item : items)
        if (item.hard && !item.pass) return false;
    return true;
}

std::string ValidationReport::to_json() const
{
    std::ostringstream os;
    os << "{\n  \"ok\": " << (ok() ? "true" : "false") << ",\n  \"items\": [\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        os << "    {\"id\": \"" << it.id << "\", \"pass\": " << (it.pass ? "true" : "false")
           << ", \"severity\": \"" << (it.hard ? "hard" : "warning") << "\", \"message\": \"" << it.message
           << "\"}" << (i + 1 < items.size() ? "," : "") << "\n";
    }
    os << "  ]\n}\n";
    return os.str();
}

std::pair<double, double> fit_domination_constants(const ModelParameters& params, int grid)
{
    const double delta = 1e-4;
    auto f0p = [&](double s) { return params.F.eval_f0(s, 1); };
    auto g0p = [&](double s) { return params.G.eval_f0(s, 1); };

    std::vector<double> sv, fa, gb;
    for (int i = 0; i < grid; ++i) {
        const double s = -1.0 + delta + (2.0 - 2.0 * delta) * i / (grid - 1);
        double f, g;
        try {
            f = std::abs(f0p(params.alpha * s));
            g = std::abs(g0p(s));
        } catch (const barrier_error&) {
            continue;
        }
        sv.push_back(s);
        fa.push_back(f);
        gb.push_back(g);
    }
    double best_k1 = 0.0, best_k2 = 0.0, best_obj = infinite;
    for (int j = 0; j <= 80; ++j) {
        const double k1 = 0.05 * j;
        double k2 = 0.0;
        for (std::size_t i = 0; i < fa.size(); ++i) k2 = std::max(k2, fa[i] - k1 * gb[i]);
        if (k1 + k2 < best_obj) {
            best_obj = k1 + k2;
            best_k1 = k1;
            best_k2 = k2;
        }
    }
    return {best_k1, best_k2};
}

ValidationReport validate_assumptions(const ModelParameters& params, const SpaceOperators& ops,
                                      bool experimental)
{
    ValidationReport rep;
    auto add = [&](std::string id, bool pass, bool hard, std::string msg) {
        rep.items.push_back({std::move(id), pass, hard, std::move(msg)});
    };

    // Theorem scope for K: (0, inf). The case K = 0 is not admissible with
    // non-degenerate mobilities; K = inf drops the dynamic coupling.
    if (experimental) {
        add("K-range", true, true, "experimental flag set; K-range gate lifted");
    } else {
        const bool kok = params.K > 0.0 && !std::isinf(params.K);
        add("K-range", kok, true,
            kok ? "K in (0, inf)"
                : "K outside (0, inf): strong well-posedness with non-degenerate mobilities needs K in (0, inf) "
                  "(use --experimental to override)");
    }

    const bool lok = params.L >= 0.0 && !std::isnan(params.L);
    add("L-range", lok, true, lok ? "L in [0, inf]" : "L must lie in [0, inf]");

    // A2: alpha in [-1,1], alpha*beta*|Omega| + |Gamma| != 0 with discrete measures.
    const bool alpha_ok = params.alpha >= -1.0 && params.alpha <= 1.0;
    add("A2-alpha", alpha_ok, true, alpha_ok ? "alpha in [-1,1]" : "alpha outside [-1,1]");
    const double a2 = params.alpha * params.beta * ops.area + ops.perimeter;
    const bool a2ok = std::abs(a2) > 1e-12 * (ops.area + ops.perimeter);
    add("A2-mean", a2ok, true,
        a2ok ? "alpha*beta*|Omega| + |Gamma| = " + fmt17(a2)
             : "alpha*beta*|Omega| + |Gamma| vanishes (discrete measures)");

    // A3: positive specific densities.
    const bool a3 = params.rho1 > 0.0 && params.rho2 > 0.0 && params.sigma1 > 0.0 && params.sigma2 > 0.0;
    add("A3", a3, true, a3 ? "specific densities positive" : "specific densities must be positive");

    // L = 0 requires the density compatibility beta(sigma2 - sigma1) = rho2 - rho1.
    if (params.L == 0.0) {
        const double lhs = params.beta * (params.sigma2 - params.sigma1);
        const double rhs = params.rho2 - params.rho1;
        const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
        const bool comp = std::abs(lhs - rhs) <= 1e-12 * scale;
        add("L0-density-compatibility", comp, true,
            comp ? "beta(sigma2 - sigma1) = rho2 - rho1 holds"
                 : "L = 0 requires the density compatibility beta(sigma2 - sigma1) = rho2 - rho1");
    }

    // A4: coefficient bounds on a 1001-point grid.
    auto check_coeff = [&](const char* name, const ScalarCoefficient& c) {
        double lo = infinite, hi = -infinite;
        for (int i = 0; i <= 1000; ++i) {
            const double s = -1.0 + 2.0 * i / 1000.0;
            const double v = c(s);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const bool pos = lo > 0.0;
        add(std::string("A4-") + name, pos, true,
            std::string(name) + " in [" + fmt17(lo) + ", " + fmt17(hi) + "]" + (pos ? "" : " (not positive)"));
    };
    check_coeff("m_bulk", params.coeffs.m_bulk);
    check_coeff("m_surf", params.coeffs.m_surf);
    check_coeff("nu_bulk", params.coeffs.nu_bulk);
    check_coeff("nu_surf", params.coeffs.nu_surf);
    {
        const auto [lo, hi] = params.coeffs.gamma.bounds();
        add("A4-gamma", lo > 0.0, true,
            "gamma in [" + fmt17(lo) + ", " + fmt17(hi) + "]" + (lo > 0.0 ? "" : " (not positive)"));
    }

    // A5: strong convexity of F0 and G0 on a fine grid of (-1,1), plus the
    // logarithmic structure checks.
    auto check_potential = [&](const char* name, const PotentialSpec& p) {
        if (const auto* lp = std::get_if<LogPotential>(&p.kind)) {
            const bool sep = lp->theta > 0.0 && lp->theta < lp->theta_c;
            add(std::string("A5-") + name + "-separation", sep, true,
                sep ? "0 < Theta < Theta_c" : "logarithmic potential needs 0 < Theta < Theta_c");
        }
        double conv = infinite;
        const double delta = 1e-4;
        for (int i = 0; i <= 1000; ++i) {
            const double s = -1.0 + delta + (2.0 - 2.0 * delta) * i / 1000.0;
            try {
                conv = std::min(conv, p.eval_f0(s, 2));
            } catch (const barrier_error&) {
            }
        }
        add(std::string("A5-") + name + "-convexity", conv > 0.0, true,
            std::string("min F0'' on grid = ") + fmt17(conv));
        if (!p.is_logarithmic())
            add(std::string("A5-") + name + "-singular", true, false,
                "polynomial potential: singular growth of F0' at +-1 not satisfied (separation not guaranteed)");
    };
    check_potential("F", params.F);
    check_potential("G", params.G);

    // A6: domination |F0'(alpha s)| <= kappa1 |G0'(s)| + kappa2, fitted on a grid.
    {
        const auto [k1, k2] = fit_domination_constants(params);
        const bool ok = std::isfinite(k2) && k2 < 1e6;
        add("A6", ok, false,
            "fitted kappa1 = " + fmt17(k1) + ", kappa2 = " + fmt17(k2) + (ok ? "" : " (no moderate constants found)"));
    }

    // A7: growth alternative. For the logarithmic family, alternative (A.7.2)
    // holds with kappa = 1; otherwise check a user-supplied (C_sharp,
    // gamma_sharp) for (A.7.1) on the grid, or report unverifiable.
    if (params.F.is_logarithmic()) {
        add("A7", true, false, "logarithmic F0 satisfies the slow-growth alternative (kappa = 1)");
    } else if (params.a7_constants) {
        const auto [cs, gs] = *params.a7_constants;
        bool ok = gs >= 1.0 && gs < 2.0;
        const double delta = 1e-4;
        for (int i = 0; i <= 1000 && ok; ++i) {
            const double s = -1.0 + delta + (2.0 - 2.0 * delta) * i / 1000.0;
            try {
                ok = params.F.eval_f0(s, 2) <= cs * std::exp(cs * std::pow(std::abs(params.F.eval_f0(s, 1)), gs));
            } catch (const barrier_error&) {
            }
        }
        add("A7", ok, false, ok ? "supplied (C_sharp, gamma_sharp) verified on grid" : "supplied constants fail on grid");
    } else {
        add("A7", true, false, "unverifiable: no growth constants supplied for non-logarithmic potential");
    }

    return rep;
}

} // namespace bsnsch
