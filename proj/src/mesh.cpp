#include "bsnsch/mesh.hpp"

#include "bsnsch/common.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace bsnsch {

namespace {

// Stitch two concentric vertex rings into a counterclockwise triangle strip.
// inner/outer hold global vertex ids ordered by angle; fractions are compared
// exactly via integer cross-multiplication so the split is deterministic and
// symmetric under the hexagonal symmetry group.
void stitch_rings(const std::vector<int>& inner, const std::vector<int>& outer,
                  std::vector<std::array<int, 3>>& tris)
{
    const std::int64_t a = static_cast<std::int64_t>(inner.size());
    const std::int64_t b = static_cast<std::int64_t>(outer.size());
    std::int64_t i = 0, k = 0;
    while (i < a || k < b) {
        const bool inner_done = (i == a);
        const bool outer_done = (k == b);
        // Advance whichever ring's next vertex comes first in angle
        // ((i+1)/a vs (k+1)/b); ties advance the outer ring.
        bool advance_outer;
        if (outer_done) {
            advance_outer = false;
        } else if (inner_done) {
            advance_outer = true;
        } else {
            advance_outer = (k + 1) * a <= (i + 1) * b;
        }
        if (advance_outer) {
            tris.push_back({outer[k % b], outer[(k + 1) % b], inner[i % a]});
            ++k;
        } else {
            tris.push_back({inner[(i + 1) % a], inner[i % a], outer[k % b]});
            ++i;
        }
    }
}

} // namespace

double triangle_signed_area(const DiskMesh& mesh, int t)
{
    const auto& tri = mesh.triangles[t];
    const Eigen::Vector2d& p0 = mesh.vertices[tri[0]];
    const Eigen::Vector2d& p1 = mesh.vertices[tri[1]];
    const Eigen::Vector2d& p2 = mesh.vertices[tri[2]];
    return 0.5 * ((p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y()));
}

double mesh_area(const DiskMesh& mesh)
{
    double area = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) area += triangle_signed_area(mesh, t);
    return area;
}

DiskMesh build_disk_mesh(int n_rings, double radius)
{
    if (n_rings < 1) throw input_error("build_disk_mesh: n_rings must be >= 1");
    if (!(radius > 0.0)) throw input_error("build_disk_mesh: radius must be positive");

    DiskMesh mesh;
    mesh.radius = radius;
    mesh.vertices.emplace_back(0.0, 0.0);

    std::vector<std::vector<int>> rings(n_rings + 1);
    rings[0] = {0};
    for (int r = 1; r <= n_rings; ++r) {
        const int count = 6 * r;
        const double rr = radius * static_cast<double>(r) / n_rings;
        rings[r].reserve(count);
        for (int j = 0; j < count; ++j) {
            const double th = 2.0 * std::numbers::pi * j / count;
            rings[r].push_back(mesh.n_vertices());
            mesh.vertices.emplace_back(rr * std::cos(th), rr * std::sin(th));
        }
    }

    // Center fan.
    for (int j = 0; j < 6; ++j)
        mesh.triangles.push_back({0, rings[1][j], rings[1][(j + 1) % 6]});
    for (int r = 1; r < n_rings; ++r) stitch_rings(rings[r], rings[r + 1], mesh.triangles);

    mesh.boundary_loop = rings[n_rings];
    return mesh;
}

BoundaryFrame compute_boundary_frame(const DiskMesh& mesh)
{
    const int nb = mesh.n_boundary();
    if (nb < 3) throw input_error("compute_boundary_frame: boundary loop too short");

    BoundaryFrame frame;
    frame.normal.resize(nb);
    frame.tangent.resize(nb);
    frame.weight.resize(nb);
    frame.curvature.resize(nb);
    frame.edge_length.resize(nb);

    for (int b = 0; b < nb; ++b) {
        const Eigen::Vector2d& p = mesh.vertices[mesh.boundary_loop[b]];
        const Eigen::Vector2d& q = mesh.vertices[mesh.boundary_loop[(b + 1) % nb]];
        const double len = (q - p).norm();
        if (len <= 0.0) throw input_error("compute_boundary_frame: degenerate boundary edge");
        frame.edge_length[b] = len;
    }

    for (int b = 0; b < nb; ++b) {
        const int bp = (b + nb - 1) % nb;
        const Eigen::Vector2d& prev = mesh.vertices[mesh.boundary_loop[bp]];
        const Eigen::Vector2d& cur = mesh.vertices[mesh.boundary_loop[b]];
        const Eigen::Vector2d& next = mesh.vertices[mesh.boundary_loop[(b + 1) % nb]];

        const Eigen::Vector2d e_in = (cur - prev) / frame.edge_length[bp];
        const Eigen::Vector2d e_out = (next - cur) / frame.edge_length[b];
        // Outward edge normals for a counterclockwise loop point to the right
        // of the travel direction.
        const Eigen::Vector2d n_in(e_in.y(), -e_in.x());
        const Eigen::Vector2d n_out(e_out.y(), -e_out.x());
        Eigen::Vector2d n = n_in + n_out;
        const double nn = n.norm();
        if (nn <= 0.0) throw input_error("compute_boundary_frame: undefined vertex normal");
        n /= nn;
        frame.normal[b] = n;
        frame.tangent[b] = Eigen::Vector2d(-n.y(), n.x());
        frame.weight[b] = 0.5 * (frame.edge_length[bp] + frame.edge_length[b]);
        const double turning = std::atan2(e_in.x() * e_out.y() - e_in.y() * e_out.x(), e_in.dot(e_out));
        frame.curvature[b] = turning / frame.weight[b];
    }
    return frame;
}

double BoundaryFrame::perimeter() const
{
    double p = 0.0;
    for (double len : edge_length) p += len;
    return p;
}

std::string mesh_summary_json(const DiskMesh& mesh)
{
    const BoundaryFrame frame = compute_boundary_frame(mesh);
    std::ostringstream os;
    os << "{\n"
       << "  \"vertices\": " << mesh.n_vertices() << ",\n"
       << "  \"triangles\": " << mesh.n_triangles() << ",\n"
       << "  \"boundary_vertices\": " << mesh.n_boundary() << ",\n"
       << "  \"radius\": " << fmt17(mesh.radius) << ",\n"
       << "  \"area\": " << fmt17(mesh_area(mesh)) << ",\n"
       << "  \"perimeter\": " << fmt17(frame.perimeter()) << "\n"
       << "}\n";
    return os.str();
}

} // namespace bsnsch
