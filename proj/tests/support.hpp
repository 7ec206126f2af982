#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include <npull/random.hpp>
#include <npull/spatial.hpp>

namespace npull::testing
{
    /// Points drawn uniformly on a sphere about the origin, with outward normals.
    inline PointCloud sphere_cloud(std::size_t n, double radius, std::uint64_t seed, Vec3 center = Vec3::Zero())
    {
        CounterRng rng(seed, 0x73706872);
        PointCloud cloud;
        cloud.normals.emplace();
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 d;
            do {
                d = Vec3(rng.normal(), rng.normal(), rng.normal());
            } while (d.norm() < 1e-9);
            d.normalize();
            cloud.points.push_back(center + radius * d);
            cloud.normals->push_back(d);
        }
        return cloud;
    }

    inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
    {
        CounterRng rng(seed, 0x70747321);
        std::vector<Vec3> out(n);
        for (Vec3& p : out) p = Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
        return out;
    }

    inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, bool with_normals = false)
    {
        PointCloud c;
        c.points = random_points(n, seed);
        if (with_normals) {
            c.normals.emplace();
            for (const Vec3& p : random_points(n, seed + 1000)) c.normals->push_back(p.normalized());
        }
        return c;
    }

    /// Exhaustive nearest neighbour, lowest index on ties.
    inline Neighbor brute_nearest(const std::vector<Vec3>& points, const Vec3& q)
    {
        Neighbor best{0, std::numeric_limits<double>::infinity()};
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double d = squared_distance(points[i], q);
            if (d < best.squared_distance) best = {i, d};
        }
        return best;
    }

    /// Squared distances to every other point, sorted.
    inline std::vector<double> sorted_distances(const std::vector<Vec3>& points, std::size_t self)
    {
        std::vector<double> d;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (i != self) d.push_back(squared_distance(points[i], points[self]));
        }
        std::sort(d.begin(), d.end());
        return d;
    }

    inline double relative_error(double a, double b, double floor = 1e-8)
    {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
    }

    /// Exact sphere SDF and its gradient.
    struct SphereSdf
    {
        double radius = 1.0;
        Vec3 center = Vec3::Zero();

        double operator()(const Vec3& q) const { return (q - center).norm() - radius; }
        Vec3 gradient(const Vec3& q) const { return (q - center).normalized(); }
    };
}
