#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsnsch/common.hpp"
#include "bsnsch/config.hpp"
#include "bsnsch/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace bsnsch;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text)
{
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream os(path);
    os << text;
    return path;
}

} // namespace

TEST_CASE("minimal configuration applies the documented defaults")
{
    const auto path = write_temp("bsnsch_min.json", "{}\n");
    const RunConfig cfg = parse_config(path.string());
    CHECK(cfg == RunConfig{});
    CHECK(cfg.time.dt == 1e-3);
    CHECK(cfg.mesh.n_rings == 16);
    CHECK(cfg.scheme.scheme == CHScheme::FullyImplicit);
    std::filesystem::remove(path);
}

TEST_CASE("config echo round-trips to an equal RunConfig")
{
    RunConfig cfg;
    cfg.mesh.n_rings = 9;
    cfg.params.L = infinite;
    cfg.params.K = 0.37;
    cfg.params.beta = -1.25;
    cfg.params.coeffs.m_bulk = ScalarCoefficient::affine(0.5, 2.0);
    cfg.params.coeffs.nu_surf = ScalarCoefficient::quadratic(1.0, 0.1, 0.2);
    cfg.params.F = make_poly_potential({0.0, 0.0, 0.05, 0.0, 0.25}, 1.1);
    cfg.params.a7_constants = {2.0, 1.5};
    cfg.time.dt = 2.5e-4;
    cfg.scheme.scheme = CHScheme::ConvexSplitting;
    cfg.initial.kind = "random_smooth";
    cfg.cd.epsilons = {1e-3, 5e-4};
    cfg.seed = 42;

    const std::string echoed = config_to_json(cfg);
    const RunConfig back = parse_config_json_text(echoed);
    CHECK(back == cfg);
}

TEST_CASE("extended-real encodings")
{
    const auto path = write_temp("bsnsch_linf.json", R"({"model": {"L": "inf"}})");
    const RunConfig cfg = parse_config(path.string());
    CHECK(std::isinf(cfg.params.L));
    std::filesystem::remove(path);

    const auto path2 = write_temp("bsnsch_lnum.json", R"({"model": {"L": 0.0}})");
    CHECK(parse_config(path2.string()).params.L == 0.0);
    std::filesystem::remove(path2);
}

TEST_CASE("TOML subset covers the configuration schema")
{
    const std::string toml = R"(# sample run
seed = 99
experimental = true

[mesh]
n_rings = 8
radius = 1.0

[model]
K = 0.5
L = inf            # decoupled potentials
alpha = -0.5
beta = 2.0
rho = [1.0, 1.3]

[model.potential_bulk]
kind = "logarithmic"
theta = 1.0
theta_c = 2.0

[model.mobility_bulk]
kind = "affine"
v_minus = 0.5
v_plus = 2.0

[time]
dt = 5e-4
n_steps = 12

[scheme]
kind = "convex-splitting"

[initial]
kind = "constant"
offset = 0.1
)";
    const auto path = write_temp("bsnsch_sample.toml", toml);
    const RunConfig cfg = parse_config(path.string());
    CHECK(cfg.mesh.n_rings == 8);
    CHECK(cfg.params.K == 0.5);
    CHECK(std::isinf(cfg.params.L));
    CHECK(cfg.params.alpha == -0.5);
    CHECK(cfg.params.rho2 == 1.3);
    CHECK(cfg.params.coeffs.m_bulk == ScalarCoefficient::affine(0.5, 2.0));
    CHECK(cfg.time.dt == 5e-4);
    CHECK(cfg.time.n_steps == 12);
    CHECK(cfg.scheme.scheme == CHScheme::ConvexSplitting);
    CHECK(cfg.initial.kind == "constant");
    CHECK(cfg.seed == 99);
    CHECK(cfg.experimental);
    std::filesystem::remove(path);
}

TEST_CASE("malformed configurations raise named diagnostics")
{
    CHECK_THROWS_AS(parse_config("/nonexistent/path.json"), config_error);

    const auto bad_json = write_temp("bsnsch_bad.json", "{ not json");
    CHECK_THROWS_AS(parse_config(bad_json.string()), config_error);
    std::filesystem::remove(bad_json);

    const auto bad_ext = write_temp("bsnsch_bad.yaml", "a: 1");
    CHECK_THROWS_AS(parse_config(bad_ext.string()), config_error);
    std::filesystem::remove(bad_ext);

    const auto bad_kind = write_temp("bsnsch_badkind.json", R"({"scheme": {"kind": "magic"}})");
    CHECK_THROWS_AS(parse_config(bad_kind.string()), config_error);
    std::filesystem::remove(bad_kind);

    const auto bad_dt = write_temp("bsnsch_baddt.json", R"({"time": {"dt": -1.0}})");
    CHECK_THROWS_AS(parse_config(bad_dt.string()), config_error);
    std::filesystem::remove(bad_dt);

    const auto bad_toml = write_temp("bsnsch_bad.toml", "key value-without-equals\n");
    CHECK_THROWS_AS(parse_config(bad_toml.string()), config_error);
    std::filesystem::remove(bad_toml);
}

TEST_CASE("well-posedness rejections carry the violated rule")
{
    RunConfig cfg;
    cfg.mesh.n_rings = 4;
    cfg.time.n_steps = 1;
    cfg.params.K = 0.0;
    try {
        run_simulation(cfg, RunMode::Coupled, "");
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("K-range") != std::string::npos);
    }

    RunConfig l0 = RunConfig{};
    l0.mesh.n_rings = 4;
    l0.time.n_steps = 1;
    l0.params.L = 0.0;
    l0.params.rho2 = 2.0; // violates the density compatibility
    try {
        run_simulation(l0, RunMode::Coupled, "");
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("L0-density-compatibility") != std::string::npos);
    }

    // The experimental flag lifts the K gate.
    RunConfig exp_cfg;
    exp_cfg.mesh.n_rings = 4;
    exp_cfg.time.n_steps = 1;
    exp_cfg.params.K = infinite;
    exp_cfg.experimental = true;
    const RunOutputs out = run_simulation(exp_cfg, RunMode::Coupled, "");
    CHECK(out.state.records.size() == 2);
}

TEST_CASE("initial data amplitude is gated for logarithmic potentials")
{
    RunConfig cfg;
    cfg.mesh.n_rings = 4;
    cfg.initial.amplitude = 0.95;
    cfg.initial.offset = 0.2; // max 1.15 >= 1
    CHECK_THROWS_AS(run_simulation(cfg, RunMode::Coupled, ""), config_error);
}
