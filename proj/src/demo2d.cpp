#include "npull/demo2d.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "npull/error.hpp"
#include "npull/io.hpp"
#include "npull/random.hpp"

namespace npull
{
    namespace
    {
        constexpr std::uint64_t circle_stream = 0x63697263;
        constexpr double canvas = 480.0;

        std::string svg_open(double size)
        {
            return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" "
                               "viewBox=\"0 0 {0} {0}\" shape-rendering=\"crispEdges\">\n",
                               size);
        }

        /// Five-stop approximation of the viridis map, t in [0, 1].
        std::string sequential(double t)
        {
            static constexpr double stops[5][3] = {
                {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
            t = std::clamp(t, 0.0, 1.0) * 4.0;
            const int lo = std::min(3, static_cast<int>(t));
            const double f = t - lo;
            int rgb[3];
            for (int c = 0; c < 3; ++c) {
                rgb[c] = static_cast<int>(std::lround(stops[lo][c] + f * (stops[lo + 1][c] - stops[lo][c])));
            }
            return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
        }

        const char* diverging(std::int8_t sign)
        {
            return sign < 0 ? "#2166ac" : (sign > 0 ? "#b2182b" : "#f7f7f7");
        }

        /// Canvas coordinates for a planar point, y pointing up.
        std::pair<double, double> to_canvas(const Vec2& p, double extent)
        {
            return {(p.x() + extent) / (2.0 * extent) * canvas, (extent - p.y()) / (2.0 * extent) * canvas};
        }

        template <typename Color>
        std::string raster_svg(const Field2D& field, Color&& color)
        {
            const auto [nx, ny] = field.resolution;
            const double cw = canvas / static_cast<double>(nx);
            const double ch = canvas / static_cast<double>(ny);
            std::string out = svg_open(canvas);
            for (std::size_t j = 0; j < ny; ++j) {
                const double y = canvas - static_cast<double>(j + 1) * ch;
                std::size_t i = 0;
                while (i < nx) {
                    // Runs of equal colour become a single rectangle.
                    const std::string c = color(field.flat(i, j));
                    std::size_t end = i + 1;
                    while (end < nx && color(field.flat(end, j)) == c) ++end;
                    out += fmt::format("<rect x=\"{:.3f}\" y=\"{:.3f}\" width=\"{:.3f}\" height=\"{:.3f}\" fill=\"{}\"/>\n",
                                       static_cast<double>(i) * cw, y, static_cast<double>(end - i) * cw, ch, c);
                    i = end;
                }
            }
            return out + "</svg>\n";
        }
    }

    Vec2 Field2D::point(std::size_t i, std::size_t j) const
    {
        auto coord = [&](int axis, std::size_t n) {
            const std::size_t last = resolution[static_cast<std::size_t>(axis)] - 1;
            if (n == last) return max[axis];
            return min[axis] + static_cast<double>(n) / static_cast<double>(last) * (max[axis] - min[axis]);
        };
        return Vec2(coord(0, i), coord(1, j));
    }

    void Field2D::validate() const
    {
        const std::size_t n = resolution[0] * resolution[1];
        if (values.size() != n || sign.size() != n) {
            throw ConfigError(fmt::format("field has {} values and {} signs for a {}x{} lattice", values.size(),
                                          sign.size(), resolution[0], resolution[1]));
        }
    }

    CircleDemoConfig CircleDemoConfig::planar() const
    {
        CircleDemoConfig out = *this;
        out.sampler.dimension = 2;
        out.train.architecture.input_dim = 2;
        return out;
    }

    void CircleDemoConfig::validate() const
    {
        if (!(radius > 0.0)) throw ConfigError("demo2d: radius must be > 0");
        if (samples < 3) throw ConfigError("demo2d: at least 3 circle samples are required");
        if (raster < 2) throw ConfigError("demo2d: raster resolution must be >= 2");
        if (!(extent > radius)) throw ConfigError("demo2d: raster extent must exceed the radius");
        if (sampler.dimension != 2 || train.architecture.input_dim != 2) {
            throw ConfigError("demo2d: sampler and network must be planar");
        }
        sampler.validate();
        train.validate();
    }

    std::vector<Vec2> circle_samples(double radius, std::size_t n, std::uint64_t seed)
    {
        CounterRng rng(seed, circle_stream);
        std::vector<Vec2> out(n);
        for (Vec2& p : out) {
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            p = Vec2(radius * std::cos(angle), radius * std::sin(angle));
        }
        return out;
    }

    std::vector<PulledQuery> pull_queries(const SdfNetwork& net, const std::vector<QuerySample>& queries,
                                          double grad_floor)
    {
        std::vector<PulledQuery> out(queries.size());
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const QuerySample& s = queries[i];
            PulledQuery& r = out[i];
            r.index = i;
            r.source_index = s.source_index;
            r.query = s.q.head<2>();
            r.target = s.t.head<2>();
            const ValueAndGradient vg = net.eval_with_grad(r.query);
            if (vg.gradient.norm() > grad_floor) {
                r.pulled = pull(r.query, vg.value, vg.gradient, grad_floor);
            } else {
                r.pulled = r.query;
                r.degenerate = true;
            }
        }
        return out;
    }

    Field2D eval_field(const SdfNetwork& net, std::size_t resolution, double extent)
    {
        if (net.architecture().input_dim != 2) throw ConfigError("eval_field needs a 2-D network");
        if (resolution < 2) throw ConfigError("field resolution must be >= 2");
        Field2D field;
        field.resolution = {resolution, resolution};
        field.min = Vec2::Constant(-extent);
        field.max = Vec2::Constant(extent);
        Eigen::MatrixXd points(2, static_cast<Eigen::Index>(resolution * resolution));
        for (std::size_t j = 0; j < resolution; ++j) {
            for (std::size_t i = 0; i < resolution; ++i) {
                points.col(static_cast<Eigen::Index>(field.flat(i, j))) = field.point(i, j);
            }
        }
        const Eigen::RowVectorXd values = net.eval_batch(points);
        field.values.assign(values.data(), values.data() + values.size());
        field.sign.resize(field.values.size());
        for (std::size_t n = 0; n < field.values.size(); ++n) {
            field.sign[n] = static_cast<std::int8_t>((field.values[n] > 0.0) - (field.values[n] < 0.0));
        }
        return field;
    }

    CircleDemoResult run_circle_demo(const CircleDemoConfig& input)
    {
        const CircleDemoConfig cfg = input.planar();
        cfg.validate();
        CircleDemoResult result{cfg, circle_samples(cfg.radius, cfg.samples, cfg.sampler.seed), {}, {},
                                initial_network(cfg.train), {}};

        PointCloud cloud;
        cloud.points.reserve(result.samples.size());
        for (const Vec2& p : result.samples) cloud.points.emplace_back(p.x(), p.y(), 0.0);
        const KdIndex index(cloud);
        const QuerySet queries = build_query_set(cloud, index, cfg.sampler);

        TrainResult trained = train_on(result.network, queries, cfg.sampler, cfg.train);
        result.network = std::move(trained.network);
        result.curve = std::move(trained.curve);
        result.pulled = pull_queries(result.network, queries.samples(), cfg.train.grad_floor);
        result.field = eval_field(result.network, cfg.raster, cfg.extent);
        return result;
    }

    double fraction_on_circle(const std::vector<PulledQuery>& pulled, double radius, double tolerance)
    {
        std::size_t used = 0, hits = 0;
        for (const PulledQuery& p : pulled) {
            if (p.degenerate) continue;
            ++used;
            hits += std::abs(p.pulled.norm() - radius) <= tolerance ? 1 : 0;
        }
        return used ? static_cast<double>(hits) / static_cast<double>(used) : 0.0;
    }

    std::string pulled_csv(const std::vector<PulledQuery>& pulled)
    {
        std::string out = "index,source_index,qx,qy,px,py,tx,ty,degenerate\n";
        for (const PulledQuery& p : pulled) {
            out += fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{}\n", p.index, p.source_index,
                               p.query.x(), p.query.y(), p.pulled.x(), p.pulled.y(), p.target.x(), p.target.y(),
                               p.degenerate ? 1 : 0);
        }
        return out;
    }

    std::string field_csv(const Field2D& field)
    {
        field.validate();
        std::string out = "i,j,x,y,value,sign\n";
        for (std::size_t j = 0; j < field.resolution[1]; ++j) {
            for (std::size_t i = 0; i < field.resolution[0]; ++i) {
                const Vec2 p = field.point(i, j);
                const std::size_t n = field.flat(i, j);
                out += fmt::format("{},{},{:.9g},{:.9g},{:.9g},{}\n", i, j, p.x(), p.y(), field.values[n],
                                   static_cast<int>(field.sign[n]));
            }
        }
        return out;
    }

    std::string samples_csv(const std::vector<Vec2>& samples)
    {
        std::string out = "index,x,y\n";
        for (std::size_t i = 0; i < samples.size(); ++i) {
            out += fmt::format("{},{:.9g},{:.9g}\n", i, samples[i].x(), samples[i].y());
        }
        return out;
    }

    std::string render_sign_svg(const Field2D& field)
    {
        field.validate();
        return raster_svg(field, [&](std::size_t n) { return std::string(diverging(field.sign[n])); });
    }

    std::string render_magnitude_svg(const Field2D& field)
    {
        field.validate();
        double peak = 0.0;
        for (double v : field.values) peak = std::max(peak, std::abs(v));
        if (!(peak > 0.0)) peak = 1.0;
        // Quantized to 64 levels so neighbouring cells merge into runs.
        return raster_svg(field, [&](std::size_t n) {
            return sequential(std::round(std::abs(field.values[n]) / peak * 64.0) / 64.0);
        });
    }

    std::string render_points_svg(const CircleDemoResult& result, bool pulled)
    {
        const double extent = result.config.extent;
        std::string out = svg_open(canvas);
        out += fmt::format("<rect width=\"{0}\" height=\"{0}\" fill=\"#ffffff\"/>\n", canvas);
        const double count = static_cast<double>(std::max<std::size_t>(result.pulled.size(), 1));
        for (const PulledQuery& p : result.pulled) {
            const auto [x, y] = to_canvas(pulled ? p.pulled : p.query, extent);
            out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.2\" fill=\"hsl({:.1f},80%,50%)\"/>\n", x, y,
                               360.0 * static_cast<double>(p.index) / count);
        }
        for (const Vec2& s : result.samples) {
            const auto [x, y] = to_canvas(s, extent);
            out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.5\" fill=\"#000000\"/>\n", x, y);
        }
        return out + "</svg>\n";
    }

    std::vector<std::string> write_demo_artifacts(const CircleDemoResult& result, const std::string& dir)
    {
        std::filesystem::create_directories(dir);
        std::ostringstream loss;
        result.curve.write_csv(loss);
        const std::vector<std::pair<std::string, std::string>> files = {
            {"samples.csv", samples_csv(result.samples)},
            {"pulled_queries.csv", pulled_csv(result.pulled)},
            {"field.csv", field_csv(result.field)},
            {"loss.csv", loss.str()},
            {"queries.svg", render_points_svg(result, false)},
            {"pulled.svg", render_points_svg(result, true)},
            {"magnitude.svg", render_magnitude_svg(result.field)},
            {"sign.svg", render_sign_svg(result.field)},
        };
        std::vector<std::string> names;
        for (const auto& [name, contents] : files) {
            write_file((std::filesystem::path(dir) / name).string(), contents);
            names.push_back(name);
        }
        return names;
    }
}
