#include "npull/sampler.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "npull/error.hpp"

namespace npull
{
    namespace
    {
        constexpr std::uint64_t query_stream = 0x71756572;
        constexpr std::uint64_t space_stream = 0x73706163;
    }

    void SamplerConfig::validate() const
    {
        if (queries_per_point < 1) throw ConfigError("sampler: queries_per_point must be >= 1");
        if (sigma_k < 1) throw ConfigError("sampler: sigma_k must be >= 1");
        if (batch_size < 1) throw ConfigError("sampler: batch_size must be >= 1");
        if (!(sigma_scale > 0.0) || !std::isfinite(sigma_scale)) {
            throw ConfigError("sampler: sigma_scale must be a positive number");
        }
        if (dimension != 2 && dimension != 3) throw ConfigError("sampler: dimension must be 2 or 3");
    }

    QuerySet::QuerySet(std::vector<QuerySample> samples, std::size_t cloud_size)
        : samples_(std::move(samples)), cloud_size_(cloud_size)
    {
        std::vector<std::size_t> counts(cloud_size_, 0);
        for (const QuerySample& s : samples_) {
            if (s.source_index >= cloud_size_) throw ConfigError("query source index outside the cloud");
            ++counts[s.source_index];
        }
        offsets_.push_back(0);
        for (std::size_t j = 0; j < cloud_size_; ++j) {
            if (counts[j] > 0) {
                sources_.push_back(j);
                offsets_.push_back(offsets_.back() + counts[j]);
            }
        }
        // slot lookup by source
        std::vector<std::size_t> slot(cloud_size_, 0);
        for (std::size_t i = 0; i < sources_.size(); ++i) slot[sources_[i]] = i;
        std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
        members_.resize(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            members_[fill[slot[samples_[i].source_index]]++] = i;
        }
    }

    std::span<const std::size_t> QuerySet::spawned_by(std::size_t source_slot) const
    {
        return std::span<const std::size_t>(members_).subspan(offsets_.at(source_slot),
                                                              offsets_.at(source_slot + 1) - offsets_[source_slot]);
    }

    std::vector<double> compute_sigmas(const PointCloud& cloud, const KdIndex& index, const SamplerConfig& cfg)
    {
        cfg.validate();
        if (cloud.size() <= cfg.sigma_k) throw InsufficientPointsError(cloud.size(), cfg.sigma_k + 1);
        std::vector<double> sigma2(cloud.size());
        for (std::size_t j = 0; j < cloud.size(); ++j) {
            sigma2[j] = cfg.sigma_scale * index.kth_nearest_sq(cloud.points[j], cfg.sigma_k, j);
        }
        return sigma2;
    }

    std::vector<QuerySample> sample_queries(const PointCloud& cloud, const KdIndex& index,
                                            const std::vector<double>& sigma2, const SamplerConfig& cfg)
    {
        cfg.validate();
        if (sigma2.size() != cloud.size()) throw ConfigError("sampler: one variance per cloud point is required");
        const CounterRng root(cfg.seed, query_stream);
        std::vector<QuerySample> out(cloud.size() * cfg.queries_per_point);
        for (std::size_t j = 0; j < cloud.size(); ++j) {
            CounterRng rng = root.substream(j);
            const double sigma = std::sqrt(sigma2[j]);
            for (std::size_t m = 0; m < cfg.queries_per_point; ++m) {
                QuerySample& s = out[j * cfg.queries_per_point + m];
                Vec3 offset = Vec3::Zero();
                for (std::size_t axis = 0; axis < cfg.dimension; ++axis) offset[axis] = sigma * rng.normal();
                s.q = cloud.points[j] + offset;
                const Neighbor nn = index.nearest(s.q);
                s.t = index.points()[nn.index];
                s.source_index = j;
            }
        }
        return out;
    }

    std::vector<QuerySample> sample_space_uniform(const Bounds& bounds, std::size_t n, const KdIndex& index,
                                                  CounterRng& rng, std::size_t dimension)
    {
        std::vector<QuerySample> out(n);
        const Vec3 centre = bounds.center();
        for (QuerySample& s : out) {
            for (int axis = 0; axis < 3; ++axis) {
                s.q[axis] = static_cast<std::size_t>(axis) < dimension ? rng.uniform(bounds.min[axis], bounds.max[axis])
                                                                        : centre[axis];
            }
            const Neighbor nn = index.nearest(s.q);
            s.t = index.points()[nn.index];
            s.source_index = nn.index;
        }
        return out;
    }

    QuerySet build_query_set(const PointCloud& cloud, const KdIndex& index, const SamplerConfig& cfg)
    {
        cfg.validate();
        if (cfg.placement == QueryPlacement::space_uniform) {
            CounterRng rng(cfg.seed, space_stream);
            const Bounds box = Bounds::of(cloud.points).padded(0.1);
            return QuerySet(sample_space_uniform(box, cloud.size() * cfg.queries_per_point, index, rng, cfg.dimension),
                            cloud.size());
        }
        const auto sigma2 = compute_sigmas(cloud, index, cfg);
        return QuerySet(sample_queries(cloud, index, sigma2, cfg), cloud.size());
    }

    std::vector<QuerySample> make_batch(const QuerySet& queries, const SamplerConfig& cfg, CounterRng& rng)
    {
        if (queries.empty()) throw ConfigError("make_batch: query set is empty");
        const auto& all = queries.samples();
        std::vector<QuerySample> batch;
        batch.reserve(cfg.batch_size);
        if (cfg.batch_strategy == BatchStrategy::random) {
            if (cfg.batch_size > all.size()) {
                throw ConfigError(fmt::format("make_batch: batch size {} exceeds the {} available queries",
                                              cfg.batch_size, all.size()));
            }
            std::vector<std::size_t> pick(all.size());
            std::iota(pick.begin(), pick.end(), std::size_t{0});
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
                batch.push_back(all[pick[i]]);
            }
            return batch;
        }

        // surface_uniform: distinct cloud points while there are enough of them
        const auto& sources = queries.sources();
        std::vector<std::size_t> slots(sources.size());
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        const bool distinct = cfg.batch_size <= slots.size();
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            std::size_t slot = 0;
            if (distinct) {
                std::swap(slots[i], slots[i + rng.below(slots.size() - i)]);
                slot = slots[i];
            } else {
                slot = rng.below(slots.size());
            }
            const auto members = queries.spawned_by(slot);
            batch.push_back(all[members[rng.below(members.size())]]);
        }
        return batch;
    }

    void write_query_csv(std::ostream& out, const std::vector<QuerySample>& samples)
    {
        out << "qx,qy,qz,tx,ty,tz,source_index\n";
        for (const QuerySample& s : samples) {
            out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{}\n", s.q.x(), s.q.y(), s.q.z(), s.t.x(),
                               s.t.y(), s.t.z(), s.source_index);
        }
    }
}
