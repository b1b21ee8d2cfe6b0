#pragma once

#include "bsnsch/coupled.hpp"
#include "bsnsch/mesh.hpp"

#include <string>
#include <vector>

namespace bsnsch {

// VTK legacy ASCII (UNSTRUCTURED_GRID) mesh writer.
void write_vtk_mesh(const std::string& path, const DiskMesh& mesh);

// Mesh plus nodal point data: named scalars (one value per vertex) and an
// optional vector field (velocity at vertices).
struct VtkPointData {
    std::vector<std::pair<std::string, Eigen::VectorXd>> scalars;
    const BulkVectorField* vectors = nullptr;
    std::string vector_name = "velocity";
};

void write_vtk_fields(const std::string& path, const DiskMesh& mesh, const VtkPointData& data);

// Diagnostics CSV: fixed schema, one row per step, 17 significant digits.
extern const char* const diagnostics_csv_header;
std::string diagnostics_csv_row(const DiagnosticsRecord& r);
std::string diagnostics_to_csv(const std::vector<DiagnosticsRecord>& records);

} // namespace bsnsch
