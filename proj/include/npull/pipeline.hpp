#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "npull/config.hpp"
#include "npull/demo2d.hpp"
#include "npull/io.hpp"
#include "npull/mesher.hpp"
#include "npull/metrics.hpp"
#include "npull/network.hpp"
#include "npull/trainer.hpp"

namespace npull
{
    inline constexpr const char* tool_version = "0.1.0";

    /// The learned field in the coordinates of the input cloud.
    struct ReconstructedSdf
    {
        const SdfNetwork* network = nullptr;
        NormalizationTransform transform;

        double operator()(const Vec3& x) const { return network->eval(transform.apply(x)) / transform.scale; }
        Vec3 gradient(const Vec3& x) const { return network->grad_wrt_input(transform.apply(x)); }
    };

    struct Reconstruction
    {
        /// Extracted surface in input coordinates.
        TriangleMesh mesh;
        SdfNetwork network;
        NormalizationTransform transform;
        LossCurve curve;
        /// Points of the normalized training cloud.
        std::size_t training_points = 0;
        std::size_t query_count = 0;
        std::size_t degenerate_samples = 0;
        std::string warning;

        ReconstructedSdf sdf() const { return {&network, transform}; }
    };

    /// `count` points chosen without replacement by a seeded draw, kept in
    /// input order. Returns the cloud unchanged when count is 0 or not
    /// smaller than its size.
    PointCloud subsample(const PointCloud& cloud, std::size_t count, std::uint64_t seed);

    /// Normalize, subsample, train, extract on the padded bounds, and map the
    /// mesh back to input coordinates.
    Reconstruction reconstruct(const PointCloud& cloud, const RunConfig& cfg, const TrainHooks& hooks = {});

    struct ReconstructOutputs
    {
        Reconstruction result;
        std::string mesh_file;
        std::string checkpoint_file;
        std::string loss_file;
        std::string manifest_file;
        std::string manifest;
    };

    /// Reads cfg.input, runs reconstruct, and writes the mesh, checkpoint,
    /// loss curve, and manifest into cfg.out_dir. Written artifacts are read
    /// back and checked; an empty or invalid mesh throws Error.
    ReconstructOutputs cmd_reconstruct(const RunConfig& cfg, std::ostream* log = nullptr);

    /// A mesh file is sampled with eval.samples points; a cloud file is used
    /// as is. `.ply` files with faces are meshes.
    PointCloud load_eval_cloud(const std::string& path, const RunConfig& cfg, std::uint64_t stream);

    MetricsReport cmd_eval(const std::string& recon_path, const std::string& gt_path, const RunConfig& cfg);

    struct AblationRow
    {
        std::string knob;
        std::string value;
        MetricsReport metrics;
    };

    /// Knobs understood by ablate().
    std::vector<std::string> ablation_knobs();

    /// Applies a knob value to a config. `I` sets the total query count and
    /// `J` the training point count while keeping the total query count;
    /// both round queries_per_point to the nearest integer and report
    /// inexact ratios through `warning`.
    void apply_knob(RunConfig& cfg, const std::string& knob, const std::string& value, std::string* warning = nullptr);

    /// One reconstruction per value (duplicates removed, order kept), each
    /// scored against `gt` with eval.samples mesh samples.
    std::vector<AblationRow> ablate(const PointCloud& cloud, const PointCloud& gt, const RunConfig& cfg,
                                    const std::string& knob, const std::vector<std::string>& values,
                                    std::vector<std::string>* warnings = nullptr, std::ostream* log = nullptr);

    /// knob,value,l2_cd_x100,l1_cd,normal_consistency,fscore_mu,fscore_2mu
    std::string ablation_csv(const std::vector<AblationRow>& rows);

    CircleDemoConfig demo_config(const RunConfig& cfg);

    struct DemoOutputs
    {
        CircleDemoResult result;
        std::vector<std::string> files;
    };

    DemoOutputs cmd_demo2d(const RunConfig& cfg, std::ostream* log = nullptr);
}
