#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsnsch/common.hpp"
#include "bsnsch/io.hpp"
#include "bsnsch/mesh.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace bsnsch;

TEST_CASE("single ring is the regular hexagon")
{
    const DiskMesh mesh = build_disk_mesh(1, 1.0);
    CHECK(mesh.n_vertices() == 7);
    CHECK(mesh.n_triangles() == 6);
    // Closed form: six equilateral triangles of side 1.
    const double hexagon_area = 6.0 * std::sqrt(3.0) / 4.0;
    CHECK(mesh_area(mesh) == doctest::Approx(hexagon_area).epsilon(1e-14));
    const BoundaryFrame frame = compute_boundary_frame(mesh);
    CHECK(frame.perimeter() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("boundary frame is orthonormal with radial normals")
{
    for (int n : {1, 3, 7}) {
        const DiskMesh mesh = build_disk_mesh(n, 1.7);
        const BoundaryFrame frame = compute_boundary_frame(mesh);
        double wsum = 0.0;
        for (int b = 0; b < mesh.n_boundary(); ++b) {
            CHECK(std::abs(frame.normal[b].norm() - 1.0) <= 1e-12);
            CHECK(std::abs(frame.tangent[b].norm() - 1.0) <= 1e-12);
            CHECK(std::abs(frame.normal[b].dot(frame.tangent[b])) <= 1e-12);
            // Regular-polygon symmetry: the bisector normal is exactly radial.
            const Eigen::Vector2d radial = mesh.vertices[mesh.boundary_loop[b]].normalized();
            CHECK((frame.normal[b] - radial).norm() <= 1e-12);
            CHECK(frame.weight[b] > 0.0);
            wsum += frame.weight[b];
        }
        CHECK(wsum == doctest::Approx(frame.perimeter()).epsilon(1e-13));
    }
}

TEST_CASE("triangles are counterclockwise and the loop winds once")
{
    const DiskMesh mesh = build_disk_mesh(5, 1.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) CHECK(triangle_signed_area(mesh, t) > 0.0);

    const BoundaryFrame frame = compute_boundary_frame(mesh);
    double turning = 0.0;
    for (int b = 0; b < mesh.n_boundary(); ++b) turning += frame.curvature[b] * frame.weight[b];
    CHECK(turning == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("boundary loop visits each boundary vertex once with shared edges")
{
    const DiskMesh mesh = build_disk_mesh(4, 1.0);
    std::set<int> seen(mesh.boundary_loop.begin(), mesh.boundary_loop.end());
    CHECK(static_cast<int>(seen.size()) == mesh.n_boundary());

    std::set<std::pair<int, int>> edges;
    for (const auto& tri : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            const int a = tri[e], b = tri[(e + 1) % 3];
            edges.insert(std::minmax(a, b));
        }
    for (int b = 0; b < mesh.n_boundary(); ++b) {
        const int va = mesh.boundary_loop[b];
        const int vb = mesh.boundary_loop[(b + 1) % mesh.n_boundary()];
        CHECK(edges.count(std::minmax(va, vb)) == 1);
    }
}

TEST_CASE("area and curvature converge at second order")
{
    double area_err[3], curv_err[3];
    const double R = 1.0;
    int idx = 0;
    for (int n : {4, 8, 16}) {
        const DiskMesh mesh = build_disk_mesh(n, R);
        const BoundaryFrame frame = compute_boundary_frame(mesh);
        area_err[idx] = std::abs(mesh_area(mesh) - std::numbers::pi * R * R);
        double k = 0.0;
        for (double c : frame.curvature) k = std::max(k, std::abs(c - 1.0 / R));
        curv_err[idx] = k;
        ++idx;
    }
    for (int i = 0; i + 1 < 3; ++i) {
        const double rate = std::log2(area_err[i] / area_err[i + 1]);
        CHECK(rate > 1.7);
        CHECK(rate < 2.3);
    }
    CHECK(curv_err[2] < curv_err[1]);
    CHECK(curv_err[1] < curv_err[0]);
    CHECK(std::log2(curv_err[1] / curv_err[2]) > 1.5);
}

TEST_CASE("invalid construction is rejected")
{
    CHECK_THROWS_AS(build_disk_mesh(0, 1.0), input_error);
    CHECK_THROWS_AS(build_disk_mesh(3, -1.0), input_error);

    DiskMesh broken = build_disk_mesh(2, 1.0);
    broken.vertices[broken.boundary_loop[0]] = broken.vertices[broken.boundary_loop[1]];
    CHECK_THROWS_AS(compute_boundary_frame(broken), input_error);
}

TEST_CASE("mesh summary and VTK export")
{
    const DiskMesh mesh = build_disk_mesh(3, 1.0);
    const std::string json = mesh_summary_json(mesh);
    CHECK(json.find("\"vertices\": 37") != std::string::npos);
    CHECK(json.find("\"triangles\": 54") != std::string::npos);

    const auto path = std::filesystem::temp_directory_path() / "bsnsch_mesh_test.vtk";
    write_vtk_mesh(path.string(), mesh);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "# vtk DataFile Version 3.0");
    std::getline(is, line);
    std::getline(is, line);
    CHECK(line == "ASCII");
    std::getline(is, line);
    CHECK(line == "DATASET UNSTRUCTURED_GRID");
    std::filesystem::remove(path);
}
