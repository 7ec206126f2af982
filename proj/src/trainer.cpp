#include "npull/trainer.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "npull/error.hpp"

namespace npull
{
    namespace
    {
        constexpr std::uint64_t batch_stream = 0x62617463;
    }

    void TrainConfig::validate() const
    {
        if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("train: adam beta1 must lie in (0, 1)");
        if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("train: adam beta2 must lie in (0, 1)");
        if (!(adam_epsilon > 0.0)) throw ConfigError("train: adam epsilon must be > 0");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (!(grad_floor > 0.0)) throw ConfigError("train: grad_floor must be > 0");
        if (!(init_radius > 0.0)) throw ConfigError("train: init_radius must be > 0");
        architecture.validate();
    }

    void LossCurve::write_csv(std::ostream& out) const
    {
        out << "step,epoch,loss\n";
        for (const LossRecord& r : records) out << fmt::format("{},{},{:.9g}\n", r.step, r.epoch, r.loss);
    }

    Eigen::VectorXd pull(const Eigen::Ref<const Eigen::VectorXd>& q, double s,
                         const Eigen::Ref<const Eigen::VectorXd>& g, double grad_floor)
    {
        const double norm = g.norm();
        if (!(norm > grad_floor)) {
            throw DegenerateGradientError(fmt::format("gradient norm {:.3g} is at or below the floor {:.3g}", norm,
                                                      grad_floor));
        }
        return q - s * (g / norm);
    }

    BatchLoss batch_loss(const SdfNetwork& net, const std::vector<QuerySample>& batch, double grad_floor)
    {
        if (batch.empty()) throw ConfigError("batch_loss: batch is empty");
        const auto dim = static_cast<Eigen::Index>(net.architecture().input_dim);
        const auto count = static_cast<Eigen::Index>(batch.size());

        ad::Matrix queries(dim, count);
        ad::Matrix targets(dim, count);
        for (Eigen::Index j = 0; j < count; ++j) {
            queries.col(j) = batch[j].q.head(dim);
            targets.col(j) = batch[j].t.head(dim);
        }

        ad::Tape tape;
        const ad::NodeId x = tape.leaf(std::move(queries), false);
        const RecordedNetwork rec = net.record(tape, x, true, true);
        const ad::NodeId distance = tape.slice_cols(rec.output, 0, count);
        ad::NodeId gradient = tape.slice_cols(rec.output, count, count);
        for (Eigen::Index k = 1; k < dim; ++k) {
            gradient = tape.concat_rows(gradient, tape.slice_cols(rec.output, (k + 1) * count, count));
        }
        const ad::NodeId norm = tape.col_norm(gradient);

        // Degenerate columns get a unit norm offset so the graph stays finite;
        // their weight in the mean is zero.
        BatchLoss out;
        ad::Matrix offset = ad::Matrix::Zero(1, count);
        ad::Matrix weight = ad::Matrix::Zero(1, count);
        for (Eigen::Index j = 0; j < count; ++j) {
            if (tape.value(norm)(0, j) > grad_floor) {
                ++out.used;
            } else {
                offset(0, j) = 1.0;
                ++out.degenerate;
            }
        }
        if (out.used == 0) {
            throw DegenerateGradientError(fmt::format("all {} samples in the batch have a degenerate gradient", count));
        }
        for (Eigen::Index j = 0; j < count; ++j) {
            if (offset(0, j) == 0.0) weight(0, j) = 1.0 / static_cast<double>(out.used);
        }

        const ad::NodeId safe_norm = tape.add(norm, tape.leaf(std::move(offset), false));
        const ad::NodeId direction = tape.scale_cols(gradient, tape.reciprocal(safe_norm));
        const ad::NodeId pulled = tape.sub(x, tape.scale_cols(direction, distance));
        const ad::NodeId residual = tape.sub(pulled, tape.leaf(std::move(targets), false));
        const ad::NodeId squared = tape.col_dot(residual, residual);
        const ad::NodeId loss = tape.dot(squared, tape.leaf(std::move(weight), false));
        tape.backward(loss);

        out.loss = tape.value(loss)(0, 0);
        out.gradient.resize(static_cast<Eigen::Index>(net.parameter_count()));
        Eigen::Index pos = 0;
        for (const auto& [w, b] : rec.parameters) {
            const ad::Matrix& dw = tape.adjoint(w);
            const ad::Matrix& db = tape.adjoint(b);
            out.gradient.segment(pos, dw.size()) = dw.reshaped();
            pos += dw.size();
            out.gradient.segment(pos, db.size()) = db.reshaped();
            pos += db.size();
        }
        return out;
    }

    void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
                   AdamState& state, const AdamSettings& s)
    {
        if (params.size() != grads.size() || state.first_moment.size() != params.size()
            || state.second_moment.size() != params.size()) {
            throw ConfigError("adam_step: parameter, gradient, and state sizes differ");
        }
        ++state.steps;
        const double t = static_cast<double>(state.steps);
        const double correction1 = 1.0 - std::pow(s.beta1, t);
        const double correction2 = 1.0 - std::pow(s.beta2, t);
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            state.first_moment[i] = s.beta1 * state.first_moment[i] + (1.0 - s.beta1) * g;
            state.second_moment[i] = s.beta2 * state.second_moment[i] + (1.0 - s.beta2) * g * g;
            const double m_hat = state.first_moment[i] / correction1;
            const double v_hat = state.second_moment[i] / correction2;
            params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
        }
    }

    std::size_t steps_per_epoch(std::size_t query_count, std::size_t batch_size)
    {
        if (batch_size == 0) throw ConfigError("batch size must be >= 1");
        return (query_count + batch_size - 1) / batch_size;
    }

    SdfNetwork initial_network(const TrainConfig& cfg)
    {
        return cfg.init_mode == InitMode::geometric
                   ? SdfNetwork::init_geometric(cfg.architecture, cfg.init_radius, cfg.seed)
                   : SdfNetwork::init_random(cfg.architecture, cfg.seed);
    }

    double scheduled_rate(const TrainConfig& cfg, std::size_t step, std::size_t total_steps)
    {
        if (cfg.schedule == LrSchedule::constant || total_steps == 0) return cfg.learning_rate;
        const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
        return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }

    TrainResult train(const PointCloud& cloud, const SamplerConfig& sampler_cfg, const TrainConfig& train_cfg,
                      const TrainHooks& hooks)
    {
        cloud.validate();
        sampler_cfg.validate();
        train_cfg.validate();
        if (train_cfg.architecture.input_dim != sampler_cfg.dimension) {
            throw ConfigError("network input dimension does not match sampler dimension");
        }
        const KdIndex index(cloud);
        const QuerySet queries = build_query_set(cloud, index, sampler_cfg);
        return train_on(initial_network(train_cfg), queries, sampler_cfg, train_cfg, hooks);
    }

    TrainResult train_on(SdfNetwork initial, const QuerySet& queries, const SamplerConfig& sampler_cfg,
                         const TrainConfig& train_cfg, const TrainHooks& hooks)
    {
        train_cfg.validate();
        TrainResult result{std::move(initial), {}, 0, queries.size()};
        SdfNetwork& net = result.network;
        const std::size_t per_epoch = steps_per_epoch(queries.size(), sampler_cfg.batch_size);
        CounterRng rng(train_cfg.seed, batch_stream);
        AdamState state(static_cast<Eigen::Index>(net.parameter_count()));
        Eigen::VectorXd params = net.flat_parameters();
        AdamSettings settings{train_cfg.learning_rate, train_cfg.adam_beta1, train_cfg.adam_beta2,
                              train_cfg.adam_epsilon};
        const std::size_t total_steps = per_epoch * train_cfg.epochs;
        result.curve.records.reserve(total_steps);

        std::size_t step = 0;
        for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
            for (std::size_t i = 0; i < per_epoch; ++i, ++step) {
                const auto batch = make_batch(queries, sampler_cfg, rng);
                BatchLoss loss;
                try {
                    loss = batch_loss(net, batch, train_cfg.grad_floor);
                } catch (const DegenerateGradientError& e) {
                    throw TrainingError(e.what(), step);
                }
                if (!std::isfinite(loss.loss) || !loss.gradient.allFinite()) {
                    throw TrainingError(fmt::format("non-finite loss {} in epoch {}", loss.loss, epoch), step);
                }
                result.degenerate_samples += loss.degenerate;
                const LossRecord record{step, epoch, loss.loss};
                result.curve.records.push_back(record);
                if (hooks.on_step) hooks.on_step(record);

                const double rate = scheduled_rate(train_cfg, step, total_steps);
                settings.learning_rate = hooks.learning_rate ? hooks.learning_rate(step, rate) : rate;
                adam_step(params, loss.gradient, state, settings);
                net.assign_parameters(params);
            }
            if (hooks.on_epoch) hooks.on_epoch(epoch, net);
        }
        return result;
    }
}
