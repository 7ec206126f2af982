#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include <doctest.h>

#include <npull/error.hpp>
#include <npull/network.hpp>

#include "support.hpp"

using namespace npull;

namespace
{
    ArchitectureConfig desk_arch()
    {
        ArchitectureConfig a;
        a.depth = 6;
        a.hidden_width = 64;
        a.skip_at = 3;
        return a;
    }

    /// Two relu units computing relu(c.q) - relu(-c.q) = c.q.
    SdfNetwork linear_network(const Eigen::Vector3d& c)
    {
        ArchitectureConfig a;
        a.depth = 2;
        a.hidden_width = 2;
        a.activation = {ad::ActivationKind::relu, 0.0};
        a.skip_at.reset();
        DenseLayer first{Eigen::MatrixXd(2, 3), Eigen::VectorXd::Zero(2)};
        first.weight.row(0) = c.transpose();
        first.weight.row(1) = -c.transpose();
        DenseLayer last{Eigen::MatrixXd(1, 2), Eigen::VectorXd::Zero(1)};
        last.weight << 1.0, -1.0;
        return SdfNetwork(a, {first, last});
    }
}

TEST_CASE("hand-built linear networks")
{
    const SdfNetwork fx = linear_network({1, 0, 0});
    CHECK(fx.eval(Eigen::Vector3d(2, 0, 0)) == 2.0);

    const SdfNetwork fz = linear_network({0, 0, 1});
    for (const Eigen::Vector3d q : {Eigen::Vector3d(0.3, -0.2, 0.9), Eigen::Vector3d(0.1, 0.4, -0.7)}) {
        CHECK(fz.eval(q) == q.z());
        CHECK(fz.grad_wrt_input(q) == Eigen::VectorXd(Eigen::Vector3d(0, 0, 1)));
        const auto vg = fz.eval_with_grad(q);
        CHECK(vg.value == fz.eval(q));
        CHECK(vg.gradient == fz.grad_wrt_input(q));
        CHECK_FALSE(vg.degenerate);
    }
}

TEST_CASE("a zero gradient is flagged as degenerate")
{
    SdfNetwork net = linear_network({0, 0, 0});
    CHECK(net.eval_with_grad(Eigen::Vector3d(0.1, 0.2, 0.3)).degenerate);
}

TEST_CASE("architecture validation")
{
    ArchitectureConfig a;
    a.depth = 1;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.hidden_width = 0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.activation.beta = 0.0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = {};
    a.skip_at = 8;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    CHECK_NOTHROW(desk_arch().validate());
    CHECK_THROWS_AS(SdfNetwork::init_geometric(desk_arch(), 0.0, 1), ConfigError);
}

TEST_CASE("geometric initialization approximates a sphere")
{
    for (const ArchitectureConfig& arch : {desk_arch(), ArchitectureConfig{}}) {
        const SdfNetwork net = SdfNetwork::init_geometric(arch, 0.5, 7);
        CHECK(net.all_finite());
        CHECK(net.eval(Eigen::Vector3d(0, 0, 0)) < 0.0);
        CHECK(net.eval(Eigen::Vector3d(1, 1, 1)) > 0.0);
        CHECK(std::abs(net.eval(Eigen::Vector3d(0, 0, 0.5))) <= 0.1);

        double deviation = 0.0;
        bool signs = true;
        const auto qs = testing::random_points(1000, 11);
        for (const Vec3& q : qs) {
            const double f = net.eval(q);
            deviation += std::abs(f - (q.norm() - 0.5));
            if (q.norm() < 0.25 && !(f < 0.0)) signs = false;
            if (q.norm() > 0.75 && !(f > 0.0)) signs = false;
        }
        CHECK(deviation / 1000.0 <= 0.1);
        CHECK(signs);

        const Eigen::Vector3d q(0, 0, 0.9);
        const Eigen::Vector3d g = net.grad_wrt_input(q);
        const double angle = std::acos(std::clamp(g.normalized().dot(q.normalized()), -1.0, 1.0));
        CHECK(angle * 180.0 / std::numbers::pi <= 15.0);

        for (int c = 0; c < 8; ++c) {
            const Eigen::Vector3d corner((c & 1) ? 1 : -1, (c & 2) ? 1 : -1, (c & 4) ? 1 : -1);
            bool changed = false;
            double prev = net.eval(Eigen::Vector3d::Zero());
            for (int s = 1; s <= 100; ++s) {
                const double f = net.eval(corner * (s / 100.0));
                if ((f > 0.0) != (prev > 0.0)) changed = true;
                prev = f;
            }
            CHECK(changed);
        }
    }
}

TEST_CASE("input gradients match central differences")
{
    const double h = 1e-5;
    for (std::uint64_t seed : {1, 2, 3}) {
        const SdfNetwork net = seed == 1 ? SdfNetwork::init_geometric(desk_arch(), 0.5, seed)
                                         : SdfNetwork::init_random(desk_arch(), seed);
        for (const Vec3& q : testing::random_points(20, seed + 50, -0.6, 0.6)) {
            const Eigen::VectorXd g = net.grad_wrt_input(q);
            for (int k = 0; k < 3; ++k) {
                Vec3 a = q, b = q;
                a[k] += h;
                b[k] -= h;
                CHECK(testing::relative_error(g[k], (net.eval(a) - net.eval(b)) / (2 * h), 1e-6) <= 1e-4);
            }
        }
    }
}

TEST_CASE("evaluation is deterministic and batch-independent")
{
    const SdfNetwork net = SdfNetwork::init_geometric(desk_arch(), 0.5, 3);
    const auto qs = testing::random_points(17, 4);
    Eigen::MatrixXd m(3, 17);
    for (int i = 0; i < 17; ++i) m.col(i) = qs[i];
    const Eigen::RowVectorXd batch = net.eval_batch(m);
    for (int i = 0; i < 17; ++i) {
        CHECK(net.eval(qs[i]) == net.eval(qs[i]));
        CHECK(batch(i) == net.eval(qs[i]));
        CHECK(net.eval_with_grad(qs[i]).value == net.eval(qs[i]));
    }
}

TEST_CASE("the network is continuous")
{
    const SdfNetwork net = SdfNetwork::init_random(desk_arch(), 21);
    CounterRng rng(5);
    double worst = 0.0;
    for (const Vec3& q : testing::random_points(200, 6)) {
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        d = d.normalized() * 1e-6;
        const double diff = std::abs(net.eval(q) - net.eval(q + d));
        CHECK(std::isfinite(diff));
        worst = std::max(worst, diff / 1e-6);
    }
    CHECK(worst < 100.0);
}

TEST_CASE("flat parameters round-trip")
{
    SdfNetwork net = SdfNetwork::init_random(desk_arch(), 8);
    const Eigen::VectorXd flat = net.flat_parameters();
    CHECK(static_cast<std::size_t>(flat.size()) == net.parameter_count());
    SdfNetwork other = SdfNetwork::init_random(desk_arch(), 9);
    other.assign_parameters(flat);
    CHECK(other.flat_parameters() == flat);
    CHECK_THROWS_AS(other.assign_parameters(flat.head(flat.size() - 1)), ConfigError);
}

TEST_CASE("checkpoint round-trip and failure modes")
{
    const SdfNetwork net = SdfNetwork::init_geometric(desk_arch(), 0.5, 12);
    const std::vector<std::uint8_t> bytes = net.save();
    REQUIRE(bytes.size() > 8);
    CHECK(std::memcmp(bytes.data(), "NPUL", 4) == 0);

    const SdfNetwork back = SdfNetwork::load(bytes);
    CHECK(back.architecture() == net.architecture());
    CHECK(back.seed() == net.seed());
    for (const Vec3& q : testing::random_points(100, 13)) CHECK(back.eval(q) == net.eval(q));
    CHECK(back.save() == bytes);

    for (std::size_t cut : {std::size_t{2}, std::size_t{6}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(cut));
        CHECK_THROWS_AS(SdfNetwork::load(truncated), ParseError);
    }

    std::vector<std::uint8_t> wrong_version = bytes;
    wrong_version[4] = 9;
    try {
        SdfNetwork::load(wrong_version);
        FAIL("expected a version error");
    } catch (const VersionError& e) {
        CHECK(e.found() == 9);
    }

    std::vector<std::uint8_t> bad_magic = bytes;
    bad_magic[1] = 'X';
    try {
        SdfNetwork::load(bad_magic);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.location() == 1);
    }

    std::vector<std::uint8_t> trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(SdfNetwork::load(trailing), ParseError);

    CHECK_THROWS_AS(SdfNetwork::load_file("/nonexistent/net.ckpt"), FileError);
}

TEST_CASE("planar networks take two inputs")
{
    ArchitectureConfig a = desk_arch();
    a.input_dim = 2;
    const SdfNetwork net = SdfNetwork::init_geometric(a, 0.5, 1);
    CHECK(net.eval(Eigen::Vector2d(0, 0)) < 0.0);
    CHECK(net.eval(Eigen::Vector2d(1, 1)) > 0.0);
    CHECK(net.grad_wrt_input(Eigen::Vector2d(0.3, 0.1)).size() == 2);
    CHECK_THROWS_AS(net.eval(Eigen::Vector3d(0, 0, 0)), ConfigError);
}
