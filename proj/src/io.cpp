#include "npull/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "npull/error.hpp"

namespace npull
{
    namespace
    {
        std::vector<std::string_view> tokens(std::string_view line)
        {
            std::vector<std::string_view> out;
            std::size_t i = 0;
            while (i < line.size()) {
                while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
                const std::size_t start = i;
                while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
                if (i > start) out.push_back(line.substr(start, i - start));
            }
            return out;
        }

        double to_double(std::string_view tok, std::size_t line)
        {
            if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
            double v = 0.0;
            const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || end != tok.data() + tok.size()) {
                throw ParseError(fmt::format("line {}: '{}' is not a number", line, tok), line);
            }
            if (!std::isfinite(v)) throw ParseError(fmt::format("line {}: non-finite value '{}'", line, tok), line);
            return v;
        }

        long long to_integer(std::string_view tok, std::size_t line)
        {
            if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
            long long v = 0;
            const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || end != tok.data() + tok.size()) {
                throw ParseError(fmt::format("line {}: '{}' is not an integer", line, tok), line);
            }
            return v;
        }

        Vec3 unit_normal(const Vec3& n, std::size_t line)
        {
            const double len = n.norm();
            if (!(len > 0.0)) throw ParseError(fmt::format("line {}: normal has zero length", line), line);
            return n / len;
        }

        struct PlyProperty
        {
            std::string name;
            bool is_list = false;
        };

        struct PlyElement
        {
            std::string name;
            std::size_t count = 0;
            std::vector<PlyProperty> properties;
        };

        struct PlyHeader
        {
            std::vector<PlyElement> elements;
            std::size_t lines = 0;
        };

        PlyHeader read_ply_header(std::istream& in)
        {
            PlyHeader h;
            std::string line;
            bool saw_format = false;
            while (std::getline(in, line)) {
                ++h.lines;
                const auto t = tokens(line);
                if (h.lines == 1) {
                    if (t.size() != 1 || t[0] != "ply") throw ParseError("line 1: missing 'ply' magic", 1);
                    continue;
                }
                if (t.empty() || t[0] == "comment" || t[0] == "obj_info") continue;
                if (t[0] == "format") {
                    if (t.size() < 2 || t[1] != "ascii") {
                        throw ParseError(fmt::format("line {}: only ASCII PLY is supported", h.lines), h.lines);
                    }
                    saw_format = true;
                } else if (t[0] == "element") {
                    if (t.size() != 3) throw ParseError(fmt::format("line {}: malformed element", h.lines), h.lines);
                    const long long count = to_integer(t[2], h.lines);
                    if (count < 0) throw ParseError(fmt::format("line {}: negative element count", h.lines), h.lines);
                    h.elements.push_back({std::string(t[1]), static_cast<std::size_t>(count), {}});
                } else if (t[0] == "property") {
                    if (h.elements.empty()) {
                        throw ParseError(fmt::format("line {}: property before any element", h.lines), h.lines);
                    }
                    const bool list = t.size() >= 2 && t[1] == "list";
                    if ((list && t.size() != 5) || (!list && t.size() != 3)) {
                        throw ParseError(fmt::format("line {}: malformed property", h.lines), h.lines);
                    }
                    h.elements.back().properties.push_back({std::string(t.back()), list});
                } else if (t[0] == "end_header") {
                    if (!saw_format) throw ParseError("PLY header has no format line", h.lines);
                    return h;
                } else {
                    throw ParseError(fmt::format("line {}: unknown header keyword '{}'", h.lines, t[0]), h.lines);
                }
            }
            throw ParseError("PLY header is not terminated by end_header", h.lines);
        }

        /// Calls visit(element, fields, line) for every body row, with one
        /// token span per declared property.
        template <typename Visit>
        void read_ply_body(std::istream& in, const PlyHeader& h, Visit&& visit)
        {
            std::size_t lineno = h.lines;
            std::string line;
            for (std::size_t e = 0; e < h.elements.size(); ++e) {
                const PlyElement& el = h.elements[e];
                for (std::size_t r = 0; r < el.count; ++r) {
                    if (!std::getline(in, line)) {
                        throw ParseError(fmt::format("PLY body ends early in element '{}' ({} of {} rows)", el.name,
                                                     r, el.count),
                                         lineno);
                    }
                    ++lineno;
                    const auto t = tokens(line);
                    std::vector<std::vector<std::string_view>> fields;
                    std::size_t pos = 0;
                    for (const PlyProperty& p : el.properties) {
                        if (pos >= t.size()) throw ParseError(fmt::format("line {}: too few values", lineno), lineno);
                        if (p.is_list) {
                            const long long n = to_integer(t[pos++], lineno);
                            if (n < 0 || pos + static_cast<std::size_t>(n) > t.size()) {
                                throw ParseError(fmt::format("line {}: bad list length", lineno), lineno);
                            }
                            fields.emplace_back(t.begin() + static_cast<std::ptrdiff_t>(pos),
                                                t.begin() + static_cast<std::ptrdiff_t>(pos + n));
                            pos += static_cast<std::size_t>(n);
                        } else {
                            fields.push_back({t[pos++]});
                        }
                    }
                    if (pos != t.size()) throw ParseError(fmt::format("line {}: too many values", lineno), lineno);
                    visit(e, fields, lineno);
                }
            }
        }

        int property_index(const PlyElement& el, std::string_view name)
        {
            for (std::size_t i = 0; i < el.properties.size(); ++i) {
                if (!el.properties[i].is_list && el.properties[i].name == name) return static_cast<int>(i);
            }
            return -1;
        }

        struct VertexLayout
        {
            std::size_t element = 0;
            int xyz[3] = {-1, -1, -1};
            int normal[3] = {-1, -1, -1};
            bool has_normals = false;
        };

        VertexLayout vertex_layout(const PlyHeader& h)
        {
            for (std::size_t e = 0; e < h.elements.size(); ++e) {
                const PlyElement& el = h.elements[e];
                if (el.name != "vertex") continue;
                VertexLayout v;
                v.element = e;
                const char* names[3] = {"x", "y", "z"};
                const char* nnames[3] = {"nx", "ny", "nz"};
                for (int a = 0; a < 3; ++a) {
                    v.xyz[a] = property_index(el, names[a]);
                    v.normal[a] = property_index(el, nnames[a]);
                    if (v.xyz[a] < 0) throw ParseError(fmt::format("PLY vertex has no '{}' property", names[a]), h.lines);
                }
                v.has_normals = v.normal[0] >= 0 && v.normal[1] >= 0 && v.normal[2] >= 0;
                return v;
            }
            throw ParseError("PLY file has no vertex element", h.lines);
        }

        std::ifstream open_input(const std::string& path)
        {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw FileError(fmt::format("cannot open '{}'", path), path);
            return in;
        }

        template <typename Fn>
        auto with_source(const std::string& path, Fn&& fn)
        {
            try {
                return fn();
            } catch (const ParseError& e) {
                throw ParseError(fmt::format("{}: {}", path, e.what()), e.location());
            }
        }
    }

    PointCloud NormalizationTransform::apply(const PointCloud& cloud) const
    {
        PointCloud out = cloud;
        for (Vec3& p : out.points) p = apply(p);
        return out;
    }

    PointCloud NormalizationTransform::inverse(const PointCloud& cloud) const
    {
        PointCloud out = cloud;
        for (Vec3& p : out.points) p = inverse(p);
        return out;
    }

    TriangleMesh NormalizationTransform::inverse(const TriangleMesh& mesh) const
    {
        TriangleMesh out = mesh;
        for (Vec3& p : out.vertices) p = inverse(p);
        return out;
    }

    NormalizedCloud normalize(const PointCloud& cloud)
    {
        if (cloud.empty()) throw ConfigError("normalize: point cloud is empty");
        Vec3 centroid = Vec3::Zero();
        for (const Vec3& p : cloud.points) centroid += p;
        centroid /= static_cast<double>(cloud.size());
        const double extent = Bounds::of(cloud.points).extent().maxCoeff();
        if (!(extent > 0.0)) throw ConfigError("normalize: all points coincide (zero extent)");
        NormalizedCloud out;
        out.transform.translation = -centroid;
        out.transform.scale = 1.0 / extent;
        out.cloud = out.transform.apply(cloud);
        return out;
    }

    PointCloud parse_xyz(std::istream& in)
    {
        PointCloud cloud;
        std::vector<Vec3> normals;
        std::size_t columns = 0;
        std::size_t first_line = 0;
        std::string line;
        for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
            const auto t = tokens(line);
            if (t.empty() || t[0].front() == '#') continue;
            if (t.size() != 3 && t.size() != 6) {
                throw ParseError(fmt::format("line {}: expected 3 or 6 values, found {}", lineno, t.size()), lineno);
            }
            if (columns == 0) {
                columns = t.size();
                first_line = lineno;
            } else if (t.size() != columns) {
                throw ParseError(fmt::format("line {}: {} values, but line {} has {}", lineno, t.size(), first_line,
                                             columns),
                                 lineno);
            }
            cloud.points.emplace_back(to_double(t[0], lineno), to_double(t[1], lineno), to_double(t[2], lineno));
            if (columns == 6) {
                normals.push_back(
                    unit_normal(Vec3(to_double(t[3], lineno), to_double(t[4], lineno), to_double(t[5], lineno)), lineno));
            }
        }
        if (columns == 6) cloud.normals = std::move(normals);
        return cloud;
    }

    PointCloud parse_ply_cloud(std::istream& in)
    {
        const PlyHeader h = read_ply_header(in);
        const VertexLayout layout = vertex_layout(h);
        PointCloud cloud;
        std::vector<Vec3> normals;
        read_ply_body(in, h, [&](std::size_t e, const auto& f, std::size_t line) {
            if (e != layout.element) return;
            Vec3 p;
            for (int a = 0; a < 3; ++a) p[a] = to_double(f[static_cast<std::size_t>(layout.xyz[a])][0], line);
            cloud.points.push_back(p);
            if (layout.has_normals) {
                Vec3 n;
                for (int a = 0; a < 3; ++a) n[a] = to_double(f[static_cast<std::size_t>(layout.normal[a])][0], line);
                normals.push_back(unit_normal(n, line));
            }
        });
        if (layout.has_normals) cloud.normals = std::move(normals);
        return cloud;
    }

    PointCloud read_cloud(const std::string& path)
    {
        const std::string ext = extension_of(path);
        if (ext != ".xyz" && ext != ".ply") {
            throw ConfigError(fmt::format("'{}': unsupported point cloud format (use .xyz or .ply)", path));
        }
        std::ifstream in = open_input(path);
        return with_source(path, [&] { return ext == ".xyz" ? parse_xyz(in) : parse_ply_cloud(in); });
    }

    TriangleMesh parse_obj(std::istream& in)
    {
        TriangleMesh mesh;
        std::vector<std::vector<long long>> faces;
        std::vector<std::size_t> face_lines;
        std::string line;
        for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
            const auto t = tokens(line);
            if (t.empty()) continue;
            if (t[0] == "v") {
                if (t.size() < 4) throw ParseError(fmt::format("line {}: vertex needs 3 coordinates", lineno), lineno);
                mesh.vertices.emplace_back(to_double(t[1], lineno), to_double(t[2], lineno), to_double(t[3], lineno));
            } else if (t[0] == "f") {
                if (t.size() < 4) throw ParseError(fmt::format("line {}: face needs 3 vertices", lineno), lineno);
                std::vector<long long> face;
                for (std::size_t i = 1; i < t.size(); ++i) {
                    const std::string_view tok = t[i].substr(0, t[i].find('/'));
                    long long idx = to_integer(tok, lineno);
                    if (idx < 0) idx += static_cast<long long>(mesh.vertices.size()) + 1;
                    if (idx < 1 || idx > static_cast<long long>(mesh.vertices.size())) {
                        throw ParseError(fmt::format("line {}: vertex index {} out of range", lineno, tok), lineno);
                    }
                    face.push_back(idx - 1);
                }
                faces.push_back(std::move(face));
            }
        }
        for (const auto& face : faces) {
            for (std::size_t i = 1; i + 1 < face.size(); ++i) {
                mesh.triangles.push_back({static_cast<std::uint32_t>(face[0]), static_cast<std::uint32_t>(face[i]),
                                          static_cast<std::uint32_t>(face[i + 1])});
            }
        }
        return mesh;
    }

    TriangleMesh parse_ply_mesh(std::istream& in)
    {
        const PlyHeader h = read_ply_header(in);
        const VertexLayout layout = vertex_layout(h);
        int face_element = -1;
        int index_property = -1;
        for (std::size_t e = 0; e < h.elements.size(); ++e) {
            if (h.elements[e].name != "face") continue;
            face_element = static_cast<int>(e);
            for (std::size_t p = 0; p < h.elements[e].properties.size(); ++p) {
                const PlyProperty& prop = h.elements[e].properties[p];
                if (prop.is_list && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
                    index_property = static_cast<int>(p);
                }
            }
            if (index_property < 0) throw ParseError("PLY face element has no vertex_indices list", h.lines);
        }
        TriangleMesh mesh;
        std::vector<Vec3> normals;
        std::size_t vertex_count = h.elements[layout.element].count;
        read_ply_body(in, h, [&](std::size_t e, const auto& f, std::size_t line) {
            if (e == layout.element) {
                Vec3 p;
                for (int a = 0; a < 3; ++a) p[a] = to_double(f[static_cast<std::size_t>(layout.xyz[a])][0], line);
                mesh.vertices.push_back(p);
                if (layout.has_normals) {
                    Vec3 n;
                    for (int a = 0; a < 3; ++a) n[a] = to_double(f[static_cast<std::size_t>(layout.normal[a])][0], line);
                    normals.push_back(unit_normal(n, line));
                }
            } else if (static_cast<int>(e) == face_element) {
                const auto& list = f[static_cast<std::size_t>(index_property)];
                if (list.size() < 3) throw ParseError(fmt::format("line {}: face needs 3 vertices", line), line);
                std::vector<std::uint32_t> ids;
                for (std::string_view tok : list) {
                    const long long idx = to_integer(tok, line);
                    if (idx < 0 || static_cast<std::size_t>(idx) >= vertex_count) {
                        throw ParseError(fmt::format("line {}: vertex index {} out of range", line, idx), line);
                    }
                    ids.push_back(static_cast<std::uint32_t>(idx));
                }
                for (std::size_t i = 1; i + 1 < ids.size(); ++i) mesh.triangles.push_back({ids[0], ids[i], ids[i + 1]});
            }
        });
        if (layout.has_normals) mesh.normals = std::move(normals);
        return mesh;
    }

    TriangleMesh read_mesh(const std::string& path)
    {
        const std::string ext = extension_of(path);
        if (ext != ".obj" && ext != ".ply") {
            throw ConfigError(fmt::format("'{}': unsupported mesh format (use .obj or .ply)", path));
        }
        std::ifstream in = open_input(path);
        return with_source(path, [&] { return ext == ".obj" ? parse_obj(in) : parse_ply_mesh(in); });
    }

    std::string format_xyz(const PointCloud& cloud)
    {
        std::string out;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Vec3& p = cloud.points[i];
            out += fmt::format("{:.9g} {:.9g} {:.9g}", p.x(), p.y(), p.z());
            if (cloud.normals) {
                const Vec3& n = (*cloud.normals)[i];
                out += fmt::format(" {:.9g} {:.9g} {:.9g}", n.x(), n.y(), n.z());
            }
            out += '\n';
        }
        return out;
    }

    std::string format_ply_cloud(const PointCloud& cloud)
    {
        std::string out = fmt::format("ply\nformat ascii 1.0\nelement vertex {}\n", cloud.size());
        out += "property double x\nproperty double y\nproperty double z\n";
        if (cloud.normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
        out += "end_header\n";
        return out + format_xyz(cloud);
    }

    void write_cloud(const std::string& path, const PointCloud& cloud)
    {
        const std::string ext = extension_of(path);
        if (ext == ".xyz") {
            write_file(path, format_xyz(cloud));
        } else if (ext == ".ply") {
            write_file(path, format_ply_cloud(cloud));
        } else {
            throw ConfigError(fmt::format("'{}': unsupported point cloud format (use .xyz or .ply)", path));
        }
    }

    void write_mesh(const std::string& path, const TriangleMesh& mesh)
    {
        const std::string ext = extension_of(path);
        if (ext != ".obj" && ext != ".ply") {
            throw ConfigError(fmt::format("'{}': unsupported mesh format (use .obj or .ply)", path));
        }
        write_file(path, export_mesh(mesh, ext == ".obj" ? MeshFormat::obj : MeshFormat::ply));
    }

    std::string read_file(const std::string& path)
    {
        std::ifstream in = open_input(path);
        std::ostringstream ss;
        ss << in.rdbuf();
        if (in.bad()) throw FileError(fmt::format("cannot read '{}'", path), path);
        return ss.str();
    }

    void write_file(const std::string& path, const std::string& contents)
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw FileError(fmt::format("cannot open '{}' for writing", path), path);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.close();
        if (!out) throw FileError(fmt::format("cannot write '{}'", path), path);
    }

    std::string extension_of(const std::string& path)
    {
        const auto slash = path.find_last_of("/\\");
        const auto dot = path.find_last_of('.');
        if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return {};
        std::string ext = path.substr(dot);
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        return ext;
    }
}
