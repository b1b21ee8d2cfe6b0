#pragma once

#include "bsnsch/cahn_hilliard.hpp"
#include "bsnsch/materials.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bsnsch {

struct MeshConfig {
    int n_rings = 16;
    double radius = 1.0;
    bool operator==(const MeshConfig&) const = default;
};

struct TimeConfig {
    double dt = 1e-3;
    int n_steps = 200;
    int output_stride = 0; // 0 disables field output
    bool operator==(const TimeConfig&) const = default;
};

struct SchemeConfig {
    CHScheme scheme = CHScheme::FullyImplicit;
    double newton_tol = 1e-10;
    int max_newton = 50;
    double line_search_shrink = 0.5;
    int picard_sweeps = 1;
    int max_dt_halvings = 5;
    bool operator==(const SchemeConfig&) const = default;
};

struct InitialConfig {
    std::string kind = "cosine"; // constant | cosine | random_smooth
    double amplitude = 0.7;
    double offset = 0.2;
    int mode_x = 1;
    int mode_y = 1;
    std::string velocity = "zero"; // zero | rigid
    double omega0 = 0.0;
    bool operator==(const InitialConfig&) const = default;
};

struct ContinuousDependenceConfig {
    std::vector<double> epsilons = {1e-3, 1e-4, 1e-5};
    double time = 0.1;
    bool operator==(const ContinuousDependenceConfig&) const = default;
};

struct RunConfig {
    MeshConfig mesh;
    ModelParameters params;
    TimeConfig time;
    SchemeConfig scheme;
    InitialConfig initial;
    ContinuousDependenceConfig cd;
    std::string out_dir;
    std::uint64_t seed = 12345;
    bool experimental = false;
    bool operator==(const RunConfig&) const = default;
};

// Reads a JSON or TOML configuration (chosen by extension), applies defaults
// for omitted fields and rejects malformed input with a named diagnostic.
// Validation against the model assumptions happens separately once a mesh is
// available.
RunConfig parse_config(const std::string& path);

// Canonical JSON echo of a configuration; parsing it again yields an equal
// RunConfig.
std::string config_to_json(const RunConfig& config);

RunConfig parse_config_json_text(const std::string& text);

} // namespace bsnsch
