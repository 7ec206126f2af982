#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "npull/network.hpp"
#include "npull/sampler.hpp"
#include "npull/spatial.hpp"

namespace npull
{
    enum class InitMode
    {
        geometric,
        random,
    };

    enum class LrSchedule
    {
        constant,
        cosine,  // half cosine from learning_rate down to 0 at the last step
    };

    struct TrainConfig
    {
        double learning_rate = 1e-4;
        LrSchedule schedule = LrSchedule::constant;
        std::size_t epochs = 2500;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_epsilon = 1e-8;
        InitMode init_mode = InitMode::geometric;
        double init_radius = 0.5;
        double grad_floor = 1e-12;
        std::uint64_t seed = 0;
        ArchitectureConfig architecture{};

        void validate() const;

        friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
    };

    struct LossRecord
    {
        std::size_t step = 0;
        std::size_t epoch = 0;
        double loss = 0.0;
    };

    struct LossCurve
    {
        std::vector<LossRecord> records;

        /// CSV `step,epoch,loss` with a header row.
        void write_csv(std::ostream& out) const;
    };

    /// Moves q by the predicted distance s along the normalized gradient:
    /// q - s * g / ||g||. Throws DegenerateGradientError when ||g|| <= grad_floor.
    Eigen::VectorXd pull(const Eigen::Ref<const Eigen::VectorXd>& q, double s,
                         const Eigen::Ref<const Eigen::VectorXd>& g, double grad_floor = 1e-12);

    struct BatchLoss
    {
        double loss = 0.0;
        /// d loss / d parameters, laid out like SdfNetwork::flat_parameters().
        Eigen::VectorXd gradient;
        std::size_t used = 0;
        std::size_t degenerate = 0;
    };

    /// Mean squared distance between pulled queries and their targets, with
    /// gradients taken through both f and its input gradient. Samples whose
    /// gradient norm is at or below grad_floor are dropped from the mean;
    /// throws DegenerateGradientError if every sample is dropped.
    BatchLoss batch_loss(const SdfNetwork& net, const std::vector<QuerySample>& batch, double grad_floor = 1e-12);

    struct AdamSettings
    {
        double learning_rate = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    struct AdamState
    {
        Eigen::VectorXd first_moment;
        Eigen::VectorXd second_moment;
        std::size_t steps = 0;

        explicit AdamState(Eigen::Index n = 0)
            : first_moment(Eigen::VectorXd::Zero(n)), second_moment(Eigen::VectorXd::Zero(n)) {}
    };

    /// Bias-corrected Adam update in place.
    void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
                   AdamState& state, const AdamSettings& settings);

    struct TrainHooks
    {
        /// Learning rate for a 0-based step, given the scheduled rate; empty
        /// keeps the schedule.
        std::function<double(std::size_t step, double base)> learning_rate;
        /// Called after each completed epoch (1-based).
        std::function<void(std::size_t epoch, const SdfNetwork& net)> on_epoch;
        /// Called after each step with the recorded loss.
        std::function<void(const LossRecord&)> on_step;
    };

    struct TrainResult
    {
        SdfNetwork network;
        LossCurve curve;
        std::size_t degenerate_samples = 0;
        std::size_t query_count = 0;
    };

    /// Number of optimizer steps in one pass over `query_count` queries.
    std::size_t steps_per_epoch(std::size_t query_count, std::size_t batch_size);

    SdfNetwork initial_network(const TrainConfig& cfg);

    /// Learning rate of the 0-based `step` out of `total_steps`.
    double scheduled_rate(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

    /// Samples the frozen query set and runs epochs * steps_per_epoch Adam
    /// steps. Throws TrainingError on a non-finite loss or an all-degenerate
    /// batch. Deterministic given the two seeds.
    TrainResult train(const PointCloud& cloud, const SamplerConfig& sampler_cfg, const TrainConfig& train_cfg,
                      const TrainHooks& hooks = {});

    /// As train(), starting from `initial` on a prepared query set.
    TrainResult train_on(SdfNetwork initial, const QuerySet& queries, const SamplerConfig& sampler_cfg,
                         const TrainConfig& train_cfg, const TrainHooks& hooks = {});
}
