#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace bsnsch {

// Triangulated disk with an ordered (counterclockwise, closed) boundary loop.
// Triangles are counterclockwise; the boundary loop visits each boundary
// vertex exactly once and consecutive entries share an edge.
struct DiskMesh {
    std::vector<Eigen::Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> boundary_loop;
    double radius = 1.0;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_triangles() const { return static_cast<int>(triangles.size()); }
    int n_boundary() const { return static_cast<int>(boundary_loop.size()); }
};

// Per-boundary-vertex discrete frame: outward unit normal, counterclockwise
// unit tangent, lumped arclength weight (half-sum of adjacent edge lengths)
// and turning-angle curvature. Entry b corresponds to boundary_loop[b].
struct BoundaryFrame {
    std::vector<Eigen::Vector2d> normal;
    std::vector<Eigen::Vector2d> tangent;
    std::vector<double> weight;
    std::vector<double> curvature;
    std::vector<double> edge_length; // edge b goes loop[b] -> loop[b+1]

    double perimeter() const;
};

// Structured polar triangulation: ring r carries 6r equally spaced vertices,
// rings share vertices at multiples of 60 degrees, so the mesh is symmetric
// under the dihedral group of the hexagon and boundary vertex normals are
// exactly radial.
DiskMesh build_disk_mesh(int n_rings, double radius);

BoundaryFrame compute_boundary_frame(const DiskMesh& mesh);

double mesh_area(const DiskMesh& mesh);
double triangle_signed_area(const DiskMesh& mesh, int t);

// JSON summary: vertex/triangle counts, area, perimeter.
std::string mesh_summary_json(const DiskMesh& mesh);

} // namespace bsnsch
