#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace bsnsch {

// Error taxonomy. The CLI maps these onto exit codes:
// config_error -> 1, solver_error -> 2, property_error -> 3.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct solver_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a logarithmic potential is evaluated within eps_barrier of +-1.
// The Newton loop treats it as "shrink the step", not as a program failure.
struct barrier_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Right-hand side violates the mean compatibility condition of an elliptic solve.
struct compatibility_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct property_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All floating-point file output goes through this: 17 significant digits,
// shortest faithful form g-style, locale independent.
inline std::string fmt17(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// Deterministic uniform doubles in [0,1) from a raw 64-bit engine output.
// Avoids std::uniform_real_distribution, whose output is implementation defined.
template <class Engine>
double uniform01(Engine& eng)
{
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

template <class Engine>
double uniform(Engine& eng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(eng);
}

} // namespace bsnsch
