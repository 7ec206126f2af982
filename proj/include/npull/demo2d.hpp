#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "npull/network.hpp"
#include "npull/sampler.hpp"
#include "npull/trainer.hpp"

namespace npull
{
    using Vec2 = Eigen::Vector2d;

    /// Samples of a planar field on a lattice over [min, max], x-fastest.
    /// `sign` holds -1, 0 or +1 per value.
    struct Field2D
    {
        std::array<std::size_t, 2> resolution{2, 2};
        Vec2 min = Vec2::Constant(-1.0);
        Vec2 max = Vec2::Constant(1.0);
        std::vector<double> values;
        std::vector<std::int8_t> sign;

        std::size_t flat(std::size_t i, std::size_t j) const { return i + resolution[0] * j; }
        Vec2 point(std::size_t i, std::size_t j) const;
        /// Throws ConfigError if value or sign counts differ from the lattice size.
        void validate() const;
    };

    struct CircleDemoConfig
    {
        double radius = 0.5;
        std::size_t samples = 500;
        /// Raster resolution along each axis over [-extent, extent]^2.
        std::size_t raster = 96;
        double extent = 1.0;
        SamplerConfig sampler;
        TrainConfig train;

        /// Forces the planar dimension on the sampler and network.
        CircleDemoConfig planar() const;
        void validate() const;
    };

    /// One pulled query. `pulled` equals `query` when the gradient is degenerate.
    struct PulledQuery
    {
        std::size_t index = 0;
        std::size_t source_index = 0;
        Vec2 query = Vec2::Zero();
        Vec2 pulled = Vec2::Zero();
        Vec2 target = Vec2::Zero();
        bool degenerate = false;
    };

    struct CircleDemoResult
    {
        CircleDemoConfig config;
        std::vector<Vec2> samples;
        std::vector<PulledQuery> pulled;
        Field2D field;
        SdfNetwork network;
        LossCurve curve;
    };

    /// Points on the circle at uniformly random angles.
    std::vector<Vec2> circle_samples(double radius, std::size_t n, std::uint64_t seed);

    /// Trains a 2-input network on circle samples and pulls every query.
    /// Throws TrainingError on divergence.
    CircleDemoResult run_circle_demo(const CircleDemoConfig& cfg);

    /// Pulls each query with trainer::pull on the network's value and gradient.
    std::vector<PulledQuery> pull_queries(const SdfNetwork& net, const std::vector<QuerySample>& queries,
                                          double grad_floor);

    Field2D eval_field(const SdfNetwork& net, std::size_t resolution, double extent);

    /// Fraction of non-degenerate pulled queries whose distance to the
    /// circle of `radius` about the origin is at most `tolerance`.
    double fraction_on_circle(const std::vector<PulledQuery>& pulled, double radius, double tolerance);

    /// index,source_index,qx,qy,px,py,tx,ty,degenerate
    std::string pulled_csv(const std::vector<PulledQuery>& pulled);
    /// i,j,x,y,value,sign
    std::string field_csv(const Field2D& field);
    /// index,x,y
    std::string samples_csv(const std::vector<Vec2>& samples);

    std::string render_sign_svg(const Field2D& field);
    std::string render_magnitude_svg(const Field2D& field);
    /// Circle samples in black; queries and pulled positions coloured by
    /// query index so corresponding dots share a hue.
    std::string render_points_svg(const CircleDemoResult& result, bool pulled);

    /// Writes every artifact into `dir` and returns the file names written.
    std::vector<std::string> write_demo_artifacts(const CircleDemoResult& result, const std::string& dir);
}
