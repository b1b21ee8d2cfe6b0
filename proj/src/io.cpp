#include "bsnsch/io.hpp"

#include "bsnsch/common.hpp"

#include <fstream>
#include <sstream>

namespace bsnsch {

namespace {

std::ofstream open_or_throw(const std::string& path)
{
    std::ofstream os(path);
    if (!os) throw input_error("cannot open output file '" + path + "'");
    return os;
}

} // namespace

void write_vtk_mesh(const std::string& path, const DiskMesh& mesh)
{
    std::ofstream os = open_or_throw(path);
    os << "# vtk DataFile Version 3.0\n"
       << "bsnsch disk mesh\n"
       << "ASCII\n"
       << "DATASET UNSTRUCTURED_GRID\n"
       << "POINTS " << mesh.n_vertices() << " double\n";
    for (const auto& p : mesh.vertices) os << fmt17(p.x()) << " " << fmt17(p.y()) << " 0\n";
    os << "CELLS " << mesh.n_triangles() << " " << 4 * mesh.n_triangles() << "\n";
    for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    os << "CELL_TYPES " << mesh.n_triangles() << "\n";
    for (int t = 0; t < mesh.n_triangles(); ++t) os << "5\n";
}

void write_vtk_fields(const std::string& path, const DiskMesh& mesh, const VtkPointData& data)
{
    write_vtk_mesh(path, mesh);
    std::ofstream os(path, std::ios::app);
    os << "POINT_DATA " << mesh.n_vertices() << "\n";
    for (const auto& [name, values] : data.scalars) {
        os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (int i = 0; i < mesh.n_vertices(); ++i) os << fmt17(values[i]) << "\n";
    }
    if (data.vectors) {
        os << "VECTORS " << data.vector_name << " double\n";
        for (int i = 0; i < mesh.n_vertices(); ++i) {
            const Eigen::Vector2d v = data.vectors->at(i);
            os << fmt17(v.x()) << " " << fmt17(v.y()) << " 0\n";
        }
    }
}

const char* const diagnostics_csv_header =
    "step,t,e_kin_bulk,e_kin_surf,e_free_bulk,e_free_surf,e_penalty,e_total,"
    "mass_bulk,mass_surf,mass_combined,diss_visc_bulk,diss_visc_surf,diss_friction,"
    "diss_mob_bulk,diss_mob_surf,diss_chi_l,separation_margin,newton_iters";

std::string diagnostics_csv_row(const DiagnosticsRecord& r)
{
    std::ostringstream os;
    os << r.step << ',' << fmt17(r.t) << ',' << fmt17(r.e_kin_bulk) << ',' << fmt17(r.e_kin_surf) << ','
       << fmt17(r.e_free_bulk) << ',' << fmt17(r.e_free_surf) << ',' << fmt17(r.e_penalty) << ','
       << fmt17(r.e_total) << ',' << fmt17(r.mass_bulk) << ',' << fmt17(r.mass_surf) << ','
       << fmt17(r.mass_combined) << ',' << fmt17(r.diss_visc_bulk) << ',' << fmt17(r.diss_visc_surf) << ','
       << fmt17(r.diss_friction) << ',' << fmt17(r.diss_mob_bulk) << ',' << fmt17(r.diss_mob_surf) << ','
       << fmt17(r.diss_chi_l) << ',' << fmt17(r.separation_margin) << ',' << r.newton_iters;
    return os.str();
}

std::string diagnostics_to_csv(const std::vector<DiagnosticsRecord>& records)
{
    std::ostringstream os;
    os << diagnostics_csv_header << "\n";
    for (const auto& r : records) os << diagnostics_csv_row(r) << "\n";
    return os.str();
}

} // namespace bsnsch
