#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include <npull/spatial.hpp>

/// O(n^2) reference metrics. Each nearest neighbour is found by a linear
/// scan; the reductions repeat the library's floating-point operations in
/// the same order, so results compare exactly.
namespace npull::oracle
{
    inline std::size_t nearest(const PointCloud& to, const Vec3& q, double& best)
    {
        best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t i = 0; i < to.size(); ++i) {
            const double d = squared_distance(to.points[i], q);
            if (d < best) {
                best = d;
                arg = i;
            }
        }
        return arg;
    }

    inline double one_sided(const PointCloud& from, const PointCloud& to, bool squared)
    {
        double sum = 0.0;
        for (const Vec3& p : from.points) {
            double d = 0.0;
            nearest(to, p, d);
            sum += squared ? d : std::sqrt(d);
        }
        return sum / static_cast<double>(from.size());
    }

    inline double chamfer(const PointCloud& a, const PointCloud& b, bool squared)
    {
        return 0.5 * one_sided(a, b, squared) + 0.5 * one_sided(b, a, squared);
    }

    inline double alignment(const PointCloud& from, const PointCloud& to)
    {
        double sum = 0.0;
        for (std::size_t i = 0; i < from.size(); ++i) {
            double d = 0.0;
            const std::size_t j = nearest(to, from.points[i], d);
            sum += std::abs((*from.normals)[i].dot((*to.normals)[j]));
        }
        return sum / static_cast<double>(from.size());
    }

    inline double normal_consistency(const PointCloud& a, const PointCloud& b)
    {
        return 0.5 * alignment(a, b) + 0.5 * alignment(b, a);
    }

    inline double within(const PointCloud& from, const PointCloud& to, double tau)
    {
        std::size_t hits = 0;
        for (const Vec3& p : from.points) {
            double d = 0.0;
            nearest(to, p, d);
            hits += d <= tau * tau ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(from.size());
    }

    inline double fscore(const PointCloud& recon, const PointCloud& gt, double tau)
    {
        const double p = within(recon, gt, tau);
        const double r = within(gt, recon, tau);
        return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
}
