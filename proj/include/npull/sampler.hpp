#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "npull/random.hpp"
#include "npull/spatial.hpp"

namespace npull
{
    enum class BatchStrategy
    {
        random,           // uniform without replacement from the whole query set
        surface_uniform,  // uniform cloud points, one stored query per point
    };

    enum class QueryPlacement
    {
        gaussian,       // around each cloud point with adaptive variance
        space_uniform,  // uniform in the padded bounding box (ablation)
    };

    struct SamplerConfig
    {
        std::size_t queries_per_point = 25;
        std::size_t sigma_k = 50;
        double sigma_scale = 1.0;
        std::size_t batch_size = 5000;
        BatchStrategy batch_strategy = BatchStrategy::random;
        QueryPlacement placement = QueryPlacement::gaussian;
        /// 3 for surfaces; 2 for planar curves embedded at z = 0.
        std::size_t dimension = 3;
        std::uint64_t seed = 0;

        void validate() const;

        friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
    };

    /// A query location and its nearest cloud point.
    struct QuerySample
    {
        Vec3 q = Vec3::Zero();
        Vec3 t = Vec3::Zero();
        std::size_t source_index = 0;
    };

    /// Frozen query set, grouped by the cloud point that spawned each sample.
    class QuerySet
    {
    public:
        QuerySet(std::vector<QuerySample> samples, std::size_t cloud_size);

        const std::vector<QuerySample>& samples() const noexcept { return samples_; }
        std::size_t size() const noexcept { return samples_.size(); }
        bool empty() const noexcept { return samples_.empty(); }
        std::size_t cloud_size() const noexcept { return cloud_size_; }
        /// Cloud indices that spawned at least one sample, ascending.
        const std::vector<std::size_t>& sources() const noexcept { return sources_; }
        /// Sample indices spawned by sources()[i].
        std::span<const std::size_t> spawned_by(std::size_t source_slot) const;

    private:
        std::vector<QuerySample> samples_;
        std::size_t cloud_size_ = 0;
        std::vector<std::size_t> sources_;
        std::vector<std::size_t> offsets_;
        std::vector<std::size_t> members_;
    };

    /// sigma_scale times the squared distance from each point to its
    /// sigma_k-th nearest other point. Throws InsufficientPointsError if the
    /// cloud has sigma_k points or fewer.
    std::vector<double> compute_sigmas(const PointCloud& cloud, const KdIndex& index, const SamplerConfig& cfg);

    /// queries_per_point draws from N(p_j, sigma2_j I) per point, ordered by
    /// point then draw. Point j uses its own substream, so the result does
    /// not depend on evaluation order.
    std::vector<QuerySample> sample_queries(const PointCloud& cloud, const KdIndex& index,
                                            const std::vector<double>& sigma2, const SamplerConfig& cfg);

    /// `n` points uniform in `bounds` (z fixed at the box centre when
    /// dimension is 2). source_index is the nearest cloud point.
    std::vector<QuerySample> sample_space_uniform(const Bounds& bounds, std::size_t n, const KdIndex& index,
                                                  CounterRng& rng, std::size_t dimension = 3);

    /// Builds the configured query set: gaussian placement, or space-uniform
    /// placement with the same count inside the 10%-padded cloud bounds.
    QuerySet build_query_set(const PointCloud& cloud, const KdIndex& index, const SamplerConfig& cfg);

    /// One training batch. Throws ConfigError for an empty set, or when the
    /// random strategy asks for more samples than the set holds.
    std::vector<QuerySample> make_batch(const QuerySet& queries, const SamplerConfig& cfg, CounterRng& rng);

    /// CSV `qx,qy,qz,tx,ty,tz,source_index` with a header row.
    void write_query_csv(std::ostream& out, const std::vector<QuerySample>& samples);
}
