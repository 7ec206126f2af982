#pragma once

#include <iosfwd>
#include <string>

#include "npull/mesher.hpp"
#include "npull/spatial.hpp"

namespace npull
{
    /// Maps original coordinates to the normalized frame:
    /// apply(x) = (x + translation) * scale.
    struct NormalizationTransform
    {
        Vec3 translation = Vec3::Zero();
        double scale = 1.0;

        Vec3 apply(const Vec3& x) const { return (x + translation) * scale; }
        Vec3 inverse(const Vec3& y) const { return y / scale - translation; }

        /// Points are mapped; normals are direction-only and pass through.
        PointCloud apply(const PointCloud& cloud) const;
        PointCloud inverse(const PointCloud& cloud) const;
        TriangleMesh inverse(const TriangleMesh& mesh) const;
    };

    struct NormalizedCloud
    {
        PointCloud cloud;
        NormalizationTransform transform;
    };

    /// Centroid at the origin, largest bounding-box extent equal to 1.
    /// Throws ConfigError on an empty cloud or one with zero extent.
    NormalizedCloud normalize(const PointCloud& cloud);

    /// Reads `.xyz` (`x y z [nx ny nz]` per line; blank lines and `#`
    /// comments skipped) or ASCII `.ply`. Normals are rescaled to unit
    /// length. Throws FileError if the file cannot be opened and ParseError
    /// (with the 1-based line) for malformed content.
    PointCloud read_cloud(const std::string& path);
    PointCloud parse_xyz(std::istream& in);
    PointCloud parse_ply_cloud(std::istream& in);

    /// Reads an ASCII `.obj` or `.ply` triangle mesh. Polygons with more
    /// than three vertices are fan-triangulated.
    TriangleMesh read_mesh(const std::string& path);
    TriangleMesh parse_obj(std::istream& in);
    TriangleMesh parse_ply_mesh(std::istream& in);

    /// xyz text, 9 significant digits, normals appended when present.
    std::string format_xyz(const PointCloud& cloud);
    /// ASCII PLY with double-precision vertex properties.
    std::string format_ply_cloud(const PointCloud& cloud);
    /// Chooses the format from the extension (`.xyz` or `.ply`).
    void write_cloud(const std::string& path, const PointCloud& cloud);
    /// Chooses the format from the extension (`.obj` or `.ply`).
    void write_mesh(const std::string& path, const TriangleMesh& mesh);

    std::string read_file(const std::string& path);
    void write_file(const std::string& path, const std::string& contents);
    /// Lower-cased extension including the dot, or empty.
    std::string extension_of(const std::string& path);
}
