#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "npull/network.hpp"
#include "npull/spatial.hpp"

namespace npull
{
    /// Samples of a scalar field on a regular lattice that includes both
    /// bound corners. Values are stored x-fastest.
    struct ScalarGrid
    {
        std::array<std::size_t, 3> resolution{2, 2, 2};
        Bounds bounds;
        std::vector<double> values;

        std::size_t flat(std::size_t i, std::size_t j, std::size_t k) const
        {
            return i + resolution[0] * (j + resolution[1] * k);
        }
        double at(std::size_t i, std::size_t j, std::size_t k) const { return values[flat(i, j, k)]; }
        Vec3 spacing() const;
        Vec3 point(std::size_t i, std::size_t j, std::size_t k) const;
    };

    struct TriangleMesh
    {
        std::vector<Vec3> vertices;
        std::vector<std::array<std::uint32_t, 3>> triangles;
        std::optional<std::vector<Vec3>> normals;

        bool empty() const noexcept { return triangles.empty(); }
        double area() const;
        /// Throws ConfigError if an index is out of range.
        void validate() const;
    };

    /// Grid of f at every lattice point. Throws ConfigError when any
    /// resolution is below 2.
    ScalarGrid eval_grid(const SdfNetwork& net, const Bounds& bounds, std::array<std::size_t, 3> resolution);
    ScalarGrid sample_grid(const std::function<double(const Vec3&)>& field, const Bounds& bounds,
                           std::array<std::size_t, 3> resolution);

    /// Iso-surface with vertices at linearly interpolated edge crossings,
    /// shared between neighbouring cells. Triangles wind so that their
    /// normals point toward values above `iso`. A grid without any crossing
    /// yields an empty mesh and, if `warning` is given, a message in it.
    TriangleMesh marching_cubes(const ScalarGrid& grid, double iso = 0.0, std::string* warning = nullptr);

    /// Area-weighted vertex normals from face normals.
    void compute_vertex_normals(TriangleMesh& mesh);

    enum class MeshFormat
    {
        obj,
        ply,
    };

    /// ASCII OBJ (`v`, 1-based `f`) or ASCII PLY; coordinates printed with
    /// 9 significant digits, LF line endings.
    std::string export_mesh(const TriangleMesh& mesh, MeshFormat format);
}
