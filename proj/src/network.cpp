#include "npull/network.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <Eigen/Cholesky>

#include "npull/error.hpp"
#include "npull/random.hpp"

namespace npull
{
    namespace
    {
        constexpr std::uint8_t magic[4] = {'N', 'P', 'U', 'L'};
        const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;

        class ByteWriter
        {
        public:
            void u32(std::uint32_t v)
            {
                for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
            }
            void u64(std::uint64_t v)
            {
                for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
            }
            void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
            void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

            std::vector<std::uint8_t> bytes;
        };

        class ByteReader
        {
        public:
            explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

            std::uint32_t u32(const char* field)
            {
                need(4, field);
                std::uint32_t v = 0;
                for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
                pos_ += 4;
                return v;
            }
            std::uint64_t u64(const char* field)
            {
                need(8, field);
                std::uint64_t v = 0;
                for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
                pos_ += 8;
                return v;
            }
            std::int32_t i32(const char* field) { return static_cast<std::int32_t>(u32(field)); }
            double f64(const char* field) { return std::bit_cast<double>(u64(field)); }

            std::size_t offset() const { return pos_; }
            std::size_t remaining() const { return data_.size() - pos_; }
            std::uint8_t byte(std::size_t i) const { return data_[i]; }

        private:
            void need(std::size_t n, const char* field) const
            {
                if (data_.size() - pos_ < n) {
                    throw ParseError(std::string("checkpoint truncated while reading ") + field + " at byte "
                                         + std::to_string(pos_),
                                     pos_);
                }
            }

            std::span<const std::uint8_t> data_;
            std::size_t pos_ = 0;
        };

        /// Activations feeding the final layer, one column per point.
        Eigen::MatrixXd final_inputs(const ArchitectureConfig& arch, const std::vector<DenseLayer>& layers,
                                     const Eigen::MatrixXd& input)
        {
            Eigen::MatrixXd h = input, z;
            for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
                if (arch.skip_at && *arch.skip_at == l) {
                    Eigen::MatrixXd joined(h.rows() + input.rows(), h.cols());
                    joined << h, input;
                    h = inv_sqrt2 * joined;
                }
                ad::affine_columns(layers[l].weight, layers[l].bias, h, z);
                h = z.unaryExpr([act = arch.activation](double v) { return act.value(v); });
            }
            if (arch.skip_at && *arch.skip_at + 1 == layers.size()) {
                Eigen::MatrixXd joined(h.rows() + input.rows(), h.cols());
                joined << h, input;
                h = inv_sqrt2 * joined;
            }
            return h;
        }
    }

    void ArchitectureConfig::validate() const
    {
        if (input_dim < 1) throw ConfigError("architecture: input_dim must be >= 1");
        if (depth < 2) throw ConfigError("architecture: depth must be >= 2");
        if (hidden_width < 1) throw ConfigError("architecture: hidden_width must be >= 1");
        if (activation.kind == ad::ActivationKind::softplus && !(activation.beta > 0.0)) {
            throw ConfigError("architecture: softplus beta must be > 0");
        }
        if (skip_at && (*skip_at < 1 || *skip_at >= depth)) {
            throw ConfigError("architecture: skip_at must lie in [1, depth - 1]");
        }
    }

    std::vector<std::size_t> layer_inputs(const ArchitectureConfig& arch)
    {
        std::vector<std::size_t> fan_in(arch.depth);
        for (std::size_t l = 0; l < arch.depth; ++l) {
            fan_in[l] = l == 0 ? arch.input_dim : arch.hidden_width;
            if (arch.skip_at && *arch.skip_at == l) fan_in[l] += arch.input_dim;
        }
        return fan_in;
    }

    SdfNetwork::SdfNetwork(ArchitectureConfig arch, std::vector<DenseLayer> layers, std::uint64_t seed)
        : arch_(arch), layers_(std::move(layers)), seed_(seed)
    {
        arch_.validate();
        const auto fan_in = layer_inputs(arch_);
        if (layers_.size() != arch_.depth) {
            throw ConfigError("network: expected " + std::to_string(arch_.depth) + " layers, got "
                              + std::to_string(layers_.size()));
        }
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto out = static_cast<Eigen::Index>(l + 1 == arch_.depth ? 1 : arch_.hidden_width);
            const auto& layer = layers_[l];
            if (layer.weight.rows() != out || layer.weight.cols() != static_cast<Eigen::Index>(fan_in[l])
                || layer.bias.size() != out) {
                throw ConfigError("network: layer " + std::to_string(l) + " has wrong shape");
            }
        }
    }

    SdfNetwork SdfNetwork::init_geometric(const ArchitectureConfig& arch, double radius, std::uint64_t seed)
    {
        arch.validate();
        if (!(radius > 0.0)) throw ConfigError("geometric init: radius must be > 0");
        CounterRng rng(seed, 0x6e69);
        const auto fan_in = layer_inputs(arch);
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l < arch.depth; ++l) {
            const bool last = l + 1 == arch.depth;
            const auto rows = static_cast<Eigen::Index>(last ? 1 : arch.hidden_width);
            const auto cols = static_cast<Eigen::Index>(fan_in[l]);
            DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd::Zero(rows)};
            if (last) {
                // Mean chosen so that the output tracks ||q|| for a wide rectifier stack.
                const double mean = std::sqrt(std::numbers::pi) / std::sqrt(static_cast<double>(cols));
                for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
                    layer.weight.data()[i] = mean + 1e-4 * rng.normal();
                }
                layer.bias.setConstant(-radius);
            } else {
                const double stddev = std::sqrt(2.0 / static_cast<double>(rows));
                for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
                    layer.weight.data()[i] = stddev * rng.normal();
                }
            }
            layers.push_back(std::move(layer));
        }

        // Narrow stacks and the softplus offset move the output away from
        // ||q|| - radius, so the final layer is refit on samples of [-1, 1]^d
        // by least squares, shrunk toward the constants above.
        const Eigen::Index samples = 4096;
        CounterRng fit_rng(seed, 0x666974);
        Eigen::MatrixXd q(static_cast<Eigen::Index>(arch.input_dim), samples);
        for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = fit_rng.uniform(-1.0, 1.0);
        const Eigen::MatrixXd h = final_inputs(arch, layers, q);
        const Eigen::Index n = h.rows();
        Eigen::MatrixXd design(samples, n + 1);
        design.leftCols(n) = h.transpose();
        design.col(n).setOnes();
        const Eigen::VectorXd target = q.colwise().norm().transpose().array() - radius;
        DenseLayer& out = layers.back();
        Eigen::VectorXd prior(n + 1);
        prior << out.weight.row(0).transpose(), out.bias[0];
        Eigen::MatrixXd normal = design.transpose() * design;
        const double shrink = 1e-3 * normal.diagonal().mean();
        normal.diagonal().array() += shrink;
        const Eigen::VectorXd fit = normal.ldlt().solve(design.transpose() * target + shrink * prior);
        out.weight.row(0) = fit.head(n).transpose();
        out.bias[0] = fit[n];
        return SdfNetwork(arch, std::move(layers), seed);
    }

    SdfNetwork SdfNetwork::init_random(const ArchitectureConfig& arch, std::uint64_t seed)
    {
        arch.validate();
        CounterRng rng(seed, 0x726e64);
        const auto fan_in = layer_inputs(arch);
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l < arch.depth; ++l) {
            const auto rows = static_cast<Eigen::Index>(l + 1 == arch.depth ? 1 : arch.hidden_width);
            const auto cols = static_cast<Eigen::Index>(fan_in[l]);
            const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
            DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
            for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
            for (Eigen::Index i = 0; i < rows; ++i) layer.bias[i] = rng.uniform(-bound, bound);
            layers.push_back(std::move(layer));
        }
        return SdfNetwork(arch, std::move(layers), seed);
    }

    Eigen::RowVectorXd SdfNetwork::eval_batch(const Eigen::Ref<const Eigen::MatrixXd>& points) const
    {
        if (points.rows() != static_cast<Eigen::Index>(arch_.input_dim)) {
            throw ConfigError("network: expected " + std::to_string(arch_.input_dim) + "-dimensional points");
        }
        const Eigen::MatrixXd input = points;
        Eigen::MatrixXd h = input;
        Eigen::MatrixXd z;
        const auto act = arch_.activation;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (arch_.skip_at && *arch_.skip_at == l) {
                Eigen::MatrixXd joined(h.rows() + input.rows(), h.cols());
                joined << h, input;
                h = inv_sqrt2 * joined;
            }
            ad::affine_columns(layers_[l].weight, layers_[l].bias, h, z);
            if (l + 1 == layers_.size()) {
                return z.row(0);
            }
            h = z.unaryExpr([act](double v) { return act.value(v); });
        }
        return {};
    }

    double SdfNetwork::eval(const Eigen::Ref<const Eigen::VectorXd>& q) const
    {
        return eval_batch(q)(0);
    }

    RecordedNetwork SdfNetwork::record(ad::Tape& tape, ad::NodeId input, bool with_input_gradient,
                                       bool parameter_gradients) const
    {
        const auto dim = static_cast<Eigen::Index>(arch_.input_dim);
        const ad::Matrix& x = tape.value(input);
        if (x.rows() != dim) {
            throw ConfigError("network: expected " + std::to_string(dim) + "-dimensional input");
        }
        const Eigen::Index batch = x.cols();
        const Eigen::Index tangents = with_input_gradient ? dim : 0;

        ad::NodeId stacked = input;
        if (with_input_gradient) {
            // Tangent block k is the k-th unit vector in every column.
            ad::Matrix seeds = ad::Matrix::Zero(dim, dim * batch);
            for (Eigen::Index k = 0; k < dim; ++k) seeds.row(k).segment(k * batch, batch).setOnes();
            stacked = tape.concat_cols(input, tape.leaf(std::move(seeds), false));
        }

        RecordedNetwork rec;
        ad::NodeId h = stacked;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (arch_.skip_at && *arch_.skip_at == l) {
                h = tape.scale(tape.concat_rows(h, stacked), inv_sqrt2);
            }
            const ad::NodeId w = tape.leaf(layers_[l].weight, parameter_gradients);
            const ad::NodeId b = tape.leaf(layers_[l].bias, parameter_gradients);
            rec.parameters.emplace_back(w, b);
            const ad::NodeId z = tape.affine(w, b, h, batch);
            if (l + 1 == layers_.size()) {
                rec.output = z;
            } else {
                h = with_input_gradient ? tape.dual_activation(z, arch_.activation, tangents)
                                        : tape.activation(z, arch_.activation);
            }
        }
        return rec;
    }

    Eigen::VectorXd SdfNetwork::grad_wrt_input(const Eigen::Ref<const Eigen::VectorXd>& q) const
    {
        ad::Tape tape;
        const ad::NodeId x = tape.leaf(ad::Matrix(q), true);
        const RecordedNetwork rec = record(tape, x, false, false);
        tape.backward(rec.output);
        return tape.adjoint(x).col(0);
    }

    ValueAndGradient SdfNetwork::eval_with_grad(const Eigen::Ref<const Eigen::VectorXd>& q) const
    {
        ValueAndGradient out;
        out.value = eval(q);
        out.gradient = grad_wrt_input(q);
        out.degenerate = out.gradient.norm() < 1e-12;
        return out;
    }

    std::size_t SdfNetwork::parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
        return n;
    }

    Eigen::VectorXd SdfNetwork::flat_parameters() const
    {
        Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
        Eigen::Index pos = 0;
        for (const auto& layer : layers_) {
            flat.segment(pos, layer.weight.size()) = layer.weight.reshaped();
            pos += layer.weight.size();
            flat.segment(pos, layer.bias.size()) = layer.bias;
            pos += layer.bias.size();
        }
        return flat;
    }

    void SdfNetwork::assign_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat)
    {
        if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
            throw ConfigError("network: parameter vector has wrong length");
        }
        Eigen::Index pos = 0;
        for (auto& layer : layers_) {
            layer.weight.reshaped() = flat.segment(pos, layer.weight.size());
            pos += layer.weight.size();
            layer.bias = flat.segment(pos, layer.bias.size());
            pos += layer.bias.size();
        }
    }

    bool SdfNetwork::all_finite() const
    {
        for (const auto& layer : layers_) {
            if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
        }
        return true;
    }

    std::vector<std::uint8_t> SdfNetwork::save() const
    {
        ByteWriter out;
        out.bytes.assign(std::begin(magic), std::end(magic));
        out.u32(checkpoint_version);
        out.u32(static_cast<std::uint32_t>(arch_.input_dim));
        out.u32(static_cast<std::uint32_t>(arch_.depth));
        out.u32(static_cast<std::uint32_t>(arch_.hidden_width));
        out.u32(arch_.activation.kind == ad::ActivationKind::softplus ? 0u : 1u);
        out.f64(arch_.activation.beta);
        out.i32(arch_.skip_at ? static_cast<std::int32_t>(*arch_.skip_at) : -1);
        out.u64(seed_);
        out.u32(static_cast<std::uint32_t>(layers_.size()));
        for (const auto& layer : layers_) {
            out.u32(static_cast<std::uint32_t>(layer.weight.rows()));
            out.u32(static_cast<std::uint32_t>(layer.weight.cols()));
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.f64(layer.weight(r, c));
            }
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.f64(layer.bias[r]);
        }
        return std::move(out.bytes);
    }

    SdfNetwork SdfNetwork::load(std::span<const std::uint8_t> bytes)
    {
        ByteReader in(bytes);
        if (bytes.size() < 4) throw ParseError("checkpoint truncated while reading magic", 0);
        for (std::size_t i = 0; i < 4; ++i) {
            if (in.byte(i) != magic[i]) throw ParseError("checkpoint magic is not NPUL", i);
        }
        in.u32("magic");
        const std::uint32_t version = in.u32("version");
        if (version != checkpoint_version) throw VersionError(version, checkpoint_version);

        ArchitectureConfig arch;
        arch.input_dim = in.u32("input_dim");
        arch.depth = in.u32("depth");
        arch.hidden_width = in.u32("hidden_width");
        const std::size_t kind_offset = in.offset();
        const std::uint32_t kind = in.u32("activation");
        if (kind > 1) throw ParseError("checkpoint has unknown activation kind", kind_offset);
        arch.activation.kind = kind == 0 ? ad::ActivationKind::softplus : ad::ActivationKind::relu;
        arch.activation.beta = in.f64("beta");
        const std::int32_t skip = in.i32("skip_at");
        arch.skip_at = skip < 0 ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(skip));
        const std::uint64_t seed = in.u64("seed");
        const std::size_t arch_end = in.offset();
        try {
            arch.validate();
        } catch (const ConfigError& e) {
            throw ParseError(std::string("checkpoint architecture invalid: ") + e.what(), arch_end);
        }

        const std::size_t count_offset = in.offset();
        const std::uint32_t count = in.u32("layer count");
        if (count != arch.depth) throw ParseError("checkpoint layer count does not match depth", count_offset);
        const auto fan_in = layer_inputs(arch);
        std::vector<DenseLayer> layers;
        for (std::uint32_t l = 0; l < count; ++l) {
            const std::size_t shape_offset = in.offset();
            const std::uint32_t rows = in.u32("layer rows");
            const std::uint32_t cols = in.u32("layer cols");
            const std::size_t want_rows = l + 1 == count ? 1 : arch.hidden_width;
            if (rows != want_rows || cols != fan_in[l]) {
                throw ParseError("checkpoint layer " + std::to_string(l) + " shape does not match architecture",
                                 shape_offset);
            }
            if (in.remaining() < (static_cast<std::size_t>(rows) * cols + rows) * 8) {
                throw ParseError("checkpoint truncated in layer " + std::to_string(l) + " parameters",
                                 in.offset());
            }
            DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
            for (std::uint32_t r = 0; r < rows; ++r) {
                for (std::uint32_t c = 0; c < cols; ++c) layer.weight(r, c) = in.f64("weight");
            }
            for (std::uint32_t r = 0; r < rows; ++r) layer.bias[r] = in.f64("bias");
            layers.push_back(std::move(layer));
        }
        if (in.remaining() != 0) throw ParseError("checkpoint has trailing bytes", in.offset());
        return SdfNetwork(arch, std::move(layers), seed);
    }

    void SdfNetwork::save_file(const std::string& path) const
    {
        const auto bytes = save();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw FileError("cannot open '" + path + "' for writing", path);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FileError("failed writing '" + path + "'", path);
    }

    SdfNetwork SdfNetwork::load_file(const std::string& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FileError("cannot open '" + path + "'", path);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return load(bytes);
    }
}
