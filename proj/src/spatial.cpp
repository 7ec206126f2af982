#include "npull/spatial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>

#include "npull/error.hpp"

namespace npull
{
    namespace
    {
        constexpr std::size_t leaf_size = 8;

        bool closer(double d2, std::size_t index, const Neighbor& best)
        {
            return d2 < best.squared_distance || (d2 == best.squared_distance && index < best.index);
        }

        struct FartherFirst
        {
            bool operator()(const Neighbor& a, const Neighbor& b) const
            {
                // max-heap on (distance, index)
                return closer(a.squared_distance, a.index, b);
            }
        };
    }

    namespace
    {
        /// Subtree awaiting a visit, with a lower bound on the squared
        /// distance from the query to anything inside it.
        struct Pending
        {
            std::size_t node;
            double plane_d2;
        };

        /// Median splits keep the tree depth below log2(n) + 1, and a
        /// depth-first walk holds at most one entry per level plus one.
        class PendingStack
        {
        public:
            void push(Pending p) { items_[size_++] = p; }
            Pending pop() { return items_[--size_]; }
            bool empty() const { return size_ == 0; }

        private:
            std::array<Pending, 130> items_;
            std::size_t size_ = 0;
        };
    }

    void PointCloud::validate() const
    {
        if (points.empty()) throw ConfigError("point cloud is empty");
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!points[i].allFinite()) throw ConfigError("point " + std::to_string(i) + " is not finite");
        }
        if (normals) {
            if (normals->size() != points.size()) {
                throw ConfigError("normal count does not match point count");
            }
            for (std::size_t i = 0; i < normals->size(); ++i) {
                if (std::abs((*normals)[i].norm() - 1.0) > 1e-6) {
                    throw ConfigError("normal " + std::to_string(i) + " is not unit length");
                }
            }
        }
    }

    Bounds Bounds::of(const std::vector<Vec3>& points)
    {
        if (points.empty()) throw ConfigError("bounds of an empty point set");
        Bounds b{points.front(), points.front()};
        for (const Vec3& p : points) {
            b.min = b.min.cwiseMin(p);
            b.max = b.max.cwiseMax(p);
        }
        return b;
    }

    KdIndex::KdIndex(std::vector<Vec3> points) : points_(std::move(points))
    {
        order_.resize(points_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        if (!points_.empty()) {
            nodes_.reserve(2 * points_.size() / leaf_size + 1);
            build(0, points_.size());
        }
    }

    std::size_t KdIndex::build(std::size_t begin, std::size_t end)
    {
        const std::size_t id = nodes_.size();
        nodes_.push_back(Node{begin, end});
        if (end - begin <= leaf_size) {
            return id;
        }
        Vec3 lo = points_[order_[begin]];
        Vec3 hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) {
                             const double ca = points_[a][axis];
                             const double cb = points_[b][axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        const double split = points_[order_[mid]][axis];
        const std::size_t left = build(begin, mid);
        const std::size_t right = build(mid, end);
        Node& node = nodes_[id];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        return id;
    }

    Neighbor KdIndex::nearest(const Vec3& q) const
    {
        if (points_.empty()) throw ConfigError("nearest: index is empty");
        Neighbor best{points_.size(), INFINITY};
        // Depth-first, near child first.
        PendingStack pending;
        pending.push({0, 0.0});
        while (!pending.empty()) {
            const Pending top = pending.pop();
            if (top.plane_d2 > best.squared_distance) continue;
            const Node& node = nodes_[top.node];
            if (node.axis < 0) {
                for (std::size_t i = node.begin; i < node.end; ++i) {
                    const std::size_t idx = order_[i];
                    const double d2 = squared_distance(points_[idx], q);
                    if (closer(d2, idx, best)) best = Neighbor{idx, d2};
                }
                continue;
            }
            const double diff = q[node.axis] - node.split;
            const std::size_t near_child = diff < 0.0 ? node.left : node.right;
            const std::size_t far_child = diff < 0.0 ? node.right : node.left;
            pending.push({far_child, std::max(top.plane_d2, diff * diff)});
            pending.push({near_child, top.plane_d2});
        }
        return best;
    }

    std::vector<Neighbor> KdIndex::k_nearest(const Vec3& q, std::size_t k, std::optional<std::size_t> exclude) const
    {
        std::priority_queue<Neighbor, std::vector<Neighbor>, FartherFirst> heap;
        if (k == 0 || points_.empty()) return {};
        auto worst = [&]() { return heap.size() < k ? INFINITY : heap.top().squared_distance; };
        PendingStack pending;
        pending.push({0, 0.0});
        while (!pending.empty()) {
            const Pending top = pending.pop();
            if (top.plane_d2 > worst()) continue;
            const Node& node = nodes_[top.node];
            if (node.axis < 0) {
                for (std::size_t i = node.begin; i < node.end; ++i) {
                    const std::size_t idx = order_[i];
                    if (exclude && idx == *exclude) continue;
                    const double d2 = squared_distance(points_[idx], q);
                    if (heap.size() < k) {
                        heap.push(Neighbor{idx, d2});
                    } else if (closer(d2, idx, heap.top())) {
                        heap.pop();
                        heap.push(Neighbor{idx, d2});
                    }
                }
                continue;
            }
            const double diff = q[node.axis] - node.split;
            const std::size_t near_child = diff < 0.0 ? node.left : node.right;
            const std::size_t far_child = diff < 0.0 ? node.right : node.left;
            pending.push({far_child, std::max(top.plane_d2, diff * diff)});
            pending.push({near_child, top.plane_d2});
        }
        std::vector<Neighbor> out(heap.size());
        for (std::size_t i = out.size(); i-- > 0;) {
            out[i] = heap.top();
            heap.pop();
        }
        return out;
    }

    double KdIndex::kth_nearest_sq(const Vec3& p, std::size_t k, std::optional<std::size_t> exclude) const
    {
        if (k == 0) throw ConfigError("kth_nearest_sq: k must be >= 1");
        if (points_.size() <= k) throw InsufficientPointsError(points_.size(), k + 1);
        const auto neighbors = k_nearest(p, k, exclude);
        return neighbors.back().squared_distance;
    }

    double KdIndex::kth_nearest_sq(const Vec3& p, std::size_t k) const
    {
        if (points_.size() <= k) throw InsufficientPointsError(points_.size(), k + 1);
        const Neighbor hit = nearest(p);
        std::optional<std::size_t> exclude;
        if (hit.squared_distance == 0.0) exclude = hit.index;
        return kth_nearest_sq(p, k, exclude);
    }
}
