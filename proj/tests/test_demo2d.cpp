#include <cmath>
#include <filesystem>
#include <sstream>

#include <doctest.h>

#include <npull/demo2d.hpp>
#include <npull/error.hpp>
#include <npull/io.hpp>

using namespace npull;
namespace fs = std::filesystem;

namespace
{
    CircleDemoConfig small_demo()
    {
        CircleDemoConfig cfg;
        cfg.radius = 0.5;
        cfg.samples = 200;
        cfg.raster = 24;
        cfg.sampler.queries_per_point = 5;
        cfg.sampler.sigma_k = 20;
        cfg.sampler.batch_size = 250;
        cfg.sampler.seed = 4;
        cfg.train.epochs = 30;
        cfg.train.learning_rate = 1e-3;
        cfg.train.schedule = LrSchedule::cosine;
        cfg.train.architecture.depth = 3;
        cfg.train.architecture.hidden_width = 32;
        cfg.train.architecture.skip_at.reset();
        cfg.train.seed = 4;
        return cfg.planar();
    }

    std::size_t count_lines(const std::string& s)
    {
        std::size_t n = 0;
        for (char c : s) n += c == '\n' ? 1 : 0;
        return n;
    }
}

TEST_CASE("circle samples lie on the circle")
{
    const auto s = circle_samples(0.7, 300, 1);
    REQUIRE(s.size() == 300);
    for (const Vec2& p : s) CHECK(std::abs(p.norm() - 0.7) <= 1e-15);
    CHECK(circle_samples(0.7, 300, 1) == s);
    CHECK(circle_samples(0.7, 300, 2) != s);
}

TEST_CASE("field lattice")
{
    Field2D f;
    f.resolution = {3, 2};
    f.min = Vec2(-1, 0);
    f.max = Vec2(1, 2);
    CHECK(f.point(0, 0) == Vec2(-1, 0));
    CHECK(f.point(1, 0) == Vec2(0, 0));
    CHECK(f.point(2, 1) == Vec2(1, 2));
    CHECK(f.flat(2, 1) == 5);
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f.values.assign(6, 0.0);
    f.sign.assign(6, 0);
    CHECK_NOTHROW(f.validate());
}

TEST_CASE("demo configuration is planar")
{
    CircleDemoConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(cfg.planar().validate());
    CircleDemoConfig tight = cfg.planar();
    tight.extent = tight.radius;
    CHECK_THROWS_AS(tight.validate(), ConfigError);
}

TEST_CASE("pull_queries applies the pull with the network gradient")
{
    ArchitectureConfig arch;
    arch.input_dim = 2;
    arch.depth = 3;
    arch.hidden_width = 16;
    arch.skip_at.reset();
    const SdfNetwork net = SdfNetwork::init_geometric(arch, 0.5, 2);

    std::vector<QuerySample> queries;
    for (int i = 0; i < 40; ++i) {
        QuerySample s;
        s.q = Vec3(std::cos(i * 0.3) * 0.8, std::sin(i * 0.5) * 0.6, 0.0);
        s.t = Vec3(0.1 * i, 0.0, 0.0);
        s.source_index = static_cast<std::size_t>(i) * 3;
        queries.push_back(s);
    }
    const auto pulled = pull_queries(net, queries, 1e-12);
    REQUIRE(pulled.size() == queries.size());
    for (std::size_t i = 0; i < pulled.size(); ++i) {
        const PulledQuery& p = pulled[i];
        CHECK(p.index == i);
        CHECK(p.source_index == queries[i].source_index);
        CHECK(p.query == queries[i].q.head<2>());
        CHECK(p.target == queries[i].t.head<2>());
        const ValueAndGradient vg = net.eval_with_grad(p.query);
        CHECK_FALSE(p.degenerate);
        CHECK(p.pulled == pull(p.query, vg.value, vg.gradient, 1e-12));
    }
}

TEST_CASE("fraction on circle skips degenerate queries")
{
    std::vector<PulledQuery> p(4);
    p[0].pulled = Vec2(0.5, 0.0);
    p[1].pulled = Vec2(0.0, 0.515);
    p[2].pulled = Vec2(0.0, 0.6);
    p[3].pulled = Vec2(0.0, 0.0);
    p[3].degenerate = true;
    CHECK(fraction_on_circle(p, 0.5, 0.02) == doctest::Approx(2.0 / 3.0));
    CHECK(fraction_on_circle({}, 0.5, 0.02) == 0.0);
}

TEST_CASE("a short circle demo")
{
    const CircleDemoConfig cfg = small_demo();
    const CircleDemoResult r = run_circle_demo(cfg);
    CHECK(r.samples.size() == 200);
    CHECK(r.pulled.size() == 1000);
    REQUIRE(r.curve.records.size() == 30 * 4);
    CHECK(r.curve.records.back().loss < r.curve.records.front().loss);
    CHECK_NOTHROW(r.field.validate());
    CHECK(r.field.resolution == std::array<std::size_t, 2>{24, 24});
    for (std::size_t n = 0; n < r.field.values.size(); ++n) {
        const double v = r.field.values[n];
        CHECK(r.field.sign[n] == (v > 0.0 ? 1 : (v < 0.0 ? -1 : 0)));
    }
    // Inside negative, far corners positive.
    CHECK(r.network.eval(Vec2(0.0, 0.0)) < 0.0);
    CHECK(r.field.sign[r.field.flat(0, 0)] > 0);
    CHECK(r.field.sign[r.field.flat(23, 23)] > 0);
    const double fraction = fraction_on_circle(r.pulled, cfg.radius, 0.05);
    CHECK(fraction > 0.5);

    const CircleDemoResult again = run_circle_demo(cfg);
    CHECK(again.network.flat_parameters() == r.network.flat_parameters());
    CHECK(again.field.values == r.field.values);

    const std::string pulled = pulled_csv(r.pulled);
    CHECK(pulled.rfind("index,source_index,qx,qy,px,py,tx,ty,degenerate\n", 0) == 0);
    CHECK(count_lines(pulled) == 1001);
    const std::string field = field_csv(r.field);
    CHECK(field.rfind("i,j,x,y,value,sign\n", 0) == 0);
    CHECK(count_lines(field) == 24 * 24 + 1);
    CHECK(count_lines(samples_csv(r.samples)) == 201);

    const std::string sign = render_sign_svg(r.field);
    CHECK(sign.rfind("<svg", 0) == 0);
    CHECK(sign.find("#2166ac") != std::string::npos);
    CHECK(sign.find("#b2182b") != std::string::npos);
    CHECK(render_magnitude_svg(r.field).find("<rect") != std::string::npos);
    CHECK(render_points_svg(r, true).find("<circle") != std::string::npos);

    const fs::path dir = fs::temp_directory_path() / "npull_demo_tests";
    fs::remove_all(dir);
    const auto files = write_demo_artifacts(r, dir.string());
    CHECK(files.size() == 8);
    for (const std::string& f : files) {
        CHECK(fs::exists(dir / f));
        CHECK(fs::file_size(dir / f) > 0);
    }
    CHECK(read_file((dir / "field.csv").string()) == field);
}
