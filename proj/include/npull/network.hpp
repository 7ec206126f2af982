#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npull/autodiff.hpp"

namespace npull
{
    /// Shape of the SDF multilayer perceptron.
    ///
    /// `depth` counts affine layers including the final scalar output layer, so
    /// a network has depth - 1 hidden activations. When `skip_at` is set, the
    /// input of affine layer `skip_at` (0-based) is the previous activation
    /// concatenated with the query point, scaled by 1/sqrt(2).
    struct ArchitectureConfig
    {
        std::size_t input_dim = 3;
        std::size_t depth = 8;
        std::size_t hidden_width = 512;
        ad::Activation activation{};
        std::optional<std::size_t> skip_at = 4;

        /// Throws ConfigError when the description is unusable.
        void validate() const;

        friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
    };

    struct DenseLayer
    {
        Eigen::MatrixXd weight;
        Eigen::VectorXd bias;
    };

    struct ValueAndGradient
    {
        double value = 0.0;
        Eigen::VectorXd gradient;
        /// Set when the gradient norm is below 1e-12; the caller decides what to do.
        bool degenerate = false;
    };

    /// Nodes produced by SdfNetwork::record().
    struct RecordedNetwork
    {
        /// 1 x (1 + tangents) * batch: [f | df/dx_1 | ... | df/dx_d].
        ad::NodeId output;
        /// Weight and bias leaf per layer, in layer order.
        std::vector<std::pair<ad::NodeId, ad::NodeId>> parameters;
    };

    /// Signed distance network f: R^d -> R. Negative inside, positive outside.
    class SdfNetwork
    {
    public:
        SdfNetwork(ArchitectureConfig arch, std::vector<DenseLayer> layers, std::uint64_t seed = 0);

        /// Geometric initialization: the untrained network approximates
        /// ||q|| - radius. Throws ConfigError for radius <= 0.
        static SdfNetwork init_geometric(const ArchitectureConfig& arch, double radius, std::uint64_t seed);
        /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
        static SdfNetwork init_random(const ArchitectureConfig& arch, std::uint64_t seed);

        double eval(const Eigen::Ref<const Eigen::VectorXd>& q) const;
        /// One value per column of `points` (input_dim x n). Column results
        /// are bit-identical to eval() on that column.
        Eigen::RowVectorXd eval_batch(const Eigen::Ref<const Eigen::MatrixXd>& points) const;
        Eigen::VectorXd grad_wrt_input(const Eigen::Ref<const Eigen::VectorXd>& q) const;
        ValueAndGradient eval_with_grad(const Eigen::Ref<const Eigen::VectorXd>& q) const;

        /// Records f on `tape` for the columns of `input` (input_dim x batch).
        /// With `with_input_gradient`, the output carries input_dim tangent
        /// blocks holding the input gradient; parameter leaves are created
        /// with requires_grad = `parameter_gradients`.
        RecordedNetwork record(ad::Tape& tape, ad::NodeId input, bool with_input_gradient,
                               bool parameter_gradients) const;

        const ArchitectureConfig& architecture() const noexcept { return arch_; }
        const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
        std::vector<DenseLayer>& layers() noexcept { return layers_; }
        std::uint64_t seed() const noexcept { return seed_; }

        std::size_t parameter_count() const;
        /// Weights (column-major) then bias, layer by layer.
        Eigen::VectorXd flat_parameters() const;
        void assign_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat);
        bool all_finite() const;

        /// Little-endian checkpoint with "NPUL" magic; see README for the layout.
        std::vector<std::uint8_t> save() const;
        /// Throws ParseError (byte offset) or VersionError.
        static SdfNetwork load(std::span<const std::uint8_t> bytes);
        void save_file(const std::string& path) const;
        static SdfNetwork load_file(const std::string& path);

        static constexpr std::uint32_t checkpoint_version = 1;

    private:
        ArchitectureConfig arch_;
        std::vector<DenseLayer> layers_;
        std::uint64_t seed_ = 0;
    };

    /// Fan-in of every affine layer for `arch`, in layer order.
    std::vector<std::size_t> layer_inputs(const ArchitectureConfig& arch);
}
