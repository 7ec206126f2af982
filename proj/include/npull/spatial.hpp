#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace npull
{
    using Vec3 = Eigen::Vector3d;

    /// Sample points, optionally with unit normals of the same count.
    struct PointCloud
    {
        std::vector<Vec3> points;
        std::optional<std::vector<Vec3>> normals;

        std::size_t size() const noexcept { return points.size(); }
        bool empty() const noexcept { return points.empty(); }
        bool has_normals() const noexcept { return normals.has_value(); }

        /// Throws ConfigError unless non-empty, finite, and normals (when
        /// present) match the point count and have unit length within 1e-6.
        void validate() const;
    };

    /// Axis-aligned box.
    struct Bounds
    {
        Vec3 min = Vec3::Zero();
        Vec3 max = Vec3::Zero();

        Vec3 center() const { return 0.5 * (min + max); }
        Vec3 extent() const { return max - min; }
        bool contains(const Vec3& p) const
        {
            return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
        }
        /// Grows every side by `fraction` of the largest extent.
        Bounds padded(double fraction) const
        {
            const Vec3 pad = Vec3::Constant(fraction * extent().maxCoeff());
            return Bounds{min - pad, max + pad};
        }
        static Bounds of(const std::vector<Vec3>& points);
    };

    /// Squared Euclidean distance, evaluated in a fixed operation order.
    inline double squared_distance(const Vec3& a, const Vec3& b)
    {
        const double dx = a.x() - b.x();
        const double dy = a.y() - b.y();
        const double dz = a.z() - b.z();
        return dx * dx + dy * dy + dz * dz;
    }

    struct Neighbor
    {
        std::size_t index = 0;
        double squared_distance = 0.0;
    };

    /// Static kd-tree over a point set. Queries are exact; ties between
    /// equidistant points resolve to the lowest point index.
    class KdIndex
    {
    public:
        explicit KdIndex(std::vector<Vec3> points);
        explicit KdIndex(const PointCloud& cloud) : KdIndex(cloud.points) {}

        std::size_t size() const noexcept { return points_.size(); }
        const std::vector<Vec3>& points() const noexcept { return points_; }

        /// Closest point to q. The index must be non-empty.
        Neighbor nearest(const Vec3& q) const;

        /// The k closest points, nearest first, skipping `exclude` if given.
        std::vector<Neighbor> k_nearest(const Vec3& q, std::size_t k,
                                        std::optional<std::size_t> exclude = std::nullopt) const;

        /// Squared distance from p to its k-th nearest point, skipping the
        /// point `exclude`. Throws InsufficientPointsError when size() <= k.
        double kth_nearest_sq(const Vec3& p, std::size_t k, std::optional<std::size_t> exclude) const;
        /// As above; if p coincides with a member, the lowest-index such
        /// member is the one excluded.
        double kth_nearest_sq(const Vec3& p, std::size_t k) const;

        /// Leaf-order permutation of point indices (each index exactly once).
        const std::vector<std::size_t>& order() const noexcept { return order_; }

    private:
        struct Node
        {
            std::size_t begin = 0;
            std::size_t end = 0;
            int axis = -1;  // -1 for leaves
            double split = 0.0;
            std::size_t left = 0;
            std::size_t right = 0;
        };

        std::size_t build(std::size_t begin, std::size_t end);

        std::vector<Vec3> points_;
        std::vector<std::size_t> order_;
        std::vector<Node> nodes_;
    };
}
