#include "npull/mesher.hpp"

#include <unordered_map>

#include <fmt/format.h>

#include "mc_tables.hpp"
#include "npull/error.hpp"

namespace npull
{
    namespace
    {
        void check_resolution(const std::array<std::size_t, 3>& resolution)
        {
            for (std::size_t r : resolution) {
                if (r < 2) throw ConfigError("grid resolution must be >= 2 along every axis");
            }
        }

        ScalarGrid empty_grid(const Bounds& bounds, std::array<std::size_t, 3> resolution)
        {
            check_resolution(resolution);
            ScalarGrid grid;
            grid.resolution = resolution;
            grid.bounds = bounds;
            grid.values.resize(resolution[0] * resolution[1] * resolution[2]);
            return grid;
        }
    }

    Vec3 ScalarGrid::spacing() const
    {
        return bounds.extent().cwiseQuotient(Vec3(static_cast<double>(resolution[0] - 1),
                                                  static_cast<double>(resolution[1] - 1),
                                                  static_cast<double>(resolution[2] - 1)));
    }

    Vec3 ScalarGrid::point(std::size_t i, std::size_t j, std::size_t k) const
    {
        // Endpoints are placed exactly on the bounds.
        auto coord = [&](int axis, std::size_t n) {
            const std::size_t last = resolution[static_cast<std::size_t>(axis)] - 1;
            if (n == last) return bounds.max[axis];
            const double t = static_cast<double>(n) / static_cast<double>(last);
            return bounds.min[axis] + t * (bounds.max[axis] - bounds.min[axis]);
        };
        return Vec3(coord(0, i), coord(1, j), coord(2, k));
    }

    double TriangleMesh::area() const
    {
        double total = 0.0;
        for (const auto& t : triangles) {
            total += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
        }
        return total;
    }

    void TriangleMesh::validate() const
    {
        for (std::size_t f = 0; f < triangles.size(); ++f) {
            for (std::uint32_t v : triangles[f]) {
                if (v >= vertices.size()) {
                    throw ConfigError("triangle " + std::to_string(f) + " references missing vertex "
                                      + std::to_string(v));
                }
            }
        }
        if (normals && normals->size() != vertices.size()) {
            throw ConfigError("mesh normal count does not match vertex count");
        }
    }

    ScalarGrid sample_grid(const std::function<double(const Vec3&)>& field, const Bounds& bounds,
                           std::array<std::size_t, 3> resolution)
    {
        ScalarGrid grid = empty_grid(bounds, resolution);
        for (std::size_t k = 0; k < resolution[2]; ++k)
            for (std::size_t j = 0; j < resolution[1]; ++j)
                for (std::size_t i = 0; i < resolution[0]; ++i) grid.values[grid.flat(i, j, k)] = field(grid.point(i, j, k));
        return grid;
    }

    ScalarGrid eval_grid(const SdfNetwork& net, const Bounds& bounds, std::array<std::size_t, 3> resolution)
    {
        if (net.architecture().input_dim != 3) throw ConfigError("eval_grid needs a 3-D network");
        ScalarGrid grid = empty_grid(bounds, resolution);
        const std::size_t slab = resolution[0] * resolution[1];
        Eigen::MatrixXd points(3, static_cast<Eigen::Index>(slab));
        for (std::size_t k = 0; k < resolution[2]; ++k) {
            for (std::size_t j = 0; j < resolution[1]; ++j) {
                for (std::size_t i = 0; i < resolution[0]; ++i) {
                    points.col(static_cast<Eigen::Index>(i + resolution[0] * j)) = grid.point(i, j, k);
                }
            }
            const Eigen::RowVectorXd values = net.eval_batch(points);
            std::copy(values.data(), values.data() + slab, grid.values.begin() + static_cast<std::ptrdiff_t>(k * slab));
        }
        return grid;
    }

    TriangleMesh marching_cubes(const ScalarGrid& grid, double iso, std::string* warning)
    {
        const auto [nx, ny, nz] = grid.resolution;
        const std::size_t points = nx * ny * nz;
        TriangleMesh mesh;
        // Crossing vertices are keyed by their edge (3 * lower grid point + axis);
        // crossings that land exactly on a grid point are keyed by that point.
        std::unordered_map<std::uint64_t, std::uint32_t> vertex_of;

        auto edge_vertex = [&](std::size_t i, std::size_t j, std::size_t k, int edge) -> std::uint32_t {
            const int* c0 = detail::mc_corner_offset[detail::mc_edge_corners[edge][0]];
            const int* c1 = detail::mc_corner_offset[detail::mc_edge_corners[edge][1]];
            std::size_t a[3] = {i + c0[0], j + c0[1], k + c0[2]};
            std::size_t b[3] = {i + c1[0], j + c1[1], k + c1[2]};
            if (grid.flat(a[0], a[1], a[2]) > grid.flat(b[0], b[1], b[2])) std::swap(a, b);
            const std::size_t ga = grid.flat(a[0], a[1], a[2]);
            const std::size_t gb = grid.flat(b[0], b[1], b[2]);
            const double va = grid.values[ga];
            const double vb = grid.values[gb];
            const double t = (iso - va) / (vb - va);
            std::uint64_t key = 0;
            if (t <= 0.0) {
                key = 3 * points + ga;
            } else if (t >= 1.0) {
                key = 3 * points + gb;
            } else {
                const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
                key = 3 * ga + static_cast<std::uint64_t>(axis);
            }
            const auto [it, inserted] = vertex_of.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
            if (inserted) {
                const Vec3 pa = grid.point(a[0], a[1], a[2]);
                const Vec3 pb = grid.point(b[0], b[1], b[2]);
                mesh.vertices.push_back(t <= 0.0 ? pa : (t >= 1.0 ? pb : Vec3(pa + t * (pb - pa))));
            }
            return it->second;
        };

        for (std::size_t k = 0; k + 1 < nz; ++k) {
            for (std::size_t j = 0; j + 1 < ny; ++j) {
                for (std::size_t i = 0; i + 1 < nx; ++i) {
                    int config = 0;
                    for (int c = 0; c < 8; ++c) {
                        const int* o = detail::mc_corner_offset[c];
                        if (grid.at(i + o[0], j + o[1], k + o[2]) < iso) config |= 1 << c;
                    }
                    const std::int8_t* row = detail::mc_triangles[config];
                    for (int n = 0; row[n] != -1; n += 3) {
                        const std::uint32_t v0 = edge_vertex(i, j, k, row[n]);
                        const std::uint32_t v1 = edge_vertex(i, j, k, row[n + 1]);
                        const std::uint32_t v2 = edge_vertex(i, j, k, row[n + 2]);
                        if (v0 == v1 || v1 == v2 || v0 == v2) continue;
                        mesh.triangles.push_back({v0, v1, v2});
                    }
                }
            }
        }
        if (mesh.triangles.empty()) {
            mesh.vertices.clear();
            if (warning) *warning = fmt::format("no crossing of iso value {} in the grid; mesh is empty", iso);
        }
        return mesh;
    }

    void compute_vertex_normals(TriangleMesh& mesh)
    {
        std::vector<Vec3> normals(mesh.vertices.size(), Vec3::Zero());
        for (const auto& t : mesh.triangles) {
            const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
            for (std::uint32_t v : t) normals[v] += n;
        }
        for (Vec3& n : normals) {
            const double len = n.norm();
            n = len > 0.0 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
        }
        mesh.normals = std::move(normals);
    }

    std::string export_mesh(const TriangleMesh& mesh, MeshFormat format)
    {
        mesh.validate();
        std::string out;
        if (format == MeshFormat::obj) {
            for (const Vec3& v : mesh.vertices) out += fmt::format("v {:.9g} {:.9g} {:.9g}\n", v.x(), v.y(), v.z());
            if (mesh.normals) {
                for (const Vec3& n : *mesh.normals) out += fmt::format("vn {:.9g} {:.9g} {:.9g}\n", n.x(), n.y(), n.z());
                for (const auto& t : mesh.triangles) {
                    out += fmt::format("f {0}//{0} {1}//{1} {2}//{2}\n", t[0] + 1, t[1] + 1, t[2] + 1);
                }
            } else {
                for (const auto& t : mesh.triangles) out += fmt::format("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1);
            }
            return out;
        }
        out += "ply\nformat ascii 1.0\n";
        out += fmt::format("element vertex {}\n", mesh.vertices.size());
        out += "property double x\nproperty double y\nproperty double z\n";
        if (mesh.normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
        out += fmt::format("element face {}\n", mesh.triangles.size());
        out += "property list uchar int vertex_indices\nend_header\n";
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec3& v = mesh.vertices[i];
            out += fmt::format("{:.9g} {:.9g} {:.9g}", v.x(), v.y(), v.z());
            if (mesh.normals) {
                const Vec3& n = (*mesh.normals)[i];
                out += fmt::format(" {:.9g} {:.9g} {:.9g}", n.x(), n.y(), n.z());
            }
            out += '\n';
        }
        for (const auto& t : mesh.triangles) out += fmt::format("3 {} {} {}\n", t[0], t[1], t[2]);
        return out;
    }
}
