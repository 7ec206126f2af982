#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "npull/mesher.hpp"
#include "npull/sampler.hpp"
#include "npull/trainer.hpp"

namespace npull
{
    struct MeshSettings
    {
        std::size_t resolution = 64;
        /// Fraction of the largest extent added on every side of the cloud bounds.
        double padding = 0.1;
        double iso = 0.0;
        MeshFormat format = MeshFormat::obj;

        friend bool operator==(const MeshSettings&, const MeshSettings&) = default;
    };

    struct EvalSettings
    {
        std::size_t samples = 10000;
        double mu = 0.002;
        bool require_normals = false;

        friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
    };

    struct DemoSettings
    {
        double radius = 0.5;
        std::size_t samples = 500;
        std::size_t raster = 96;
        double extent = 1.0;

        friend bool operator==(const DemoSettings&, const DemoSettings&) = default;
    };

    /// Everything needed to reproduce a run. The single `seed` drives every
    /// random stream; the seeds inside `sampler` and `train` are ignored and
    /// stamped by sampler_config() and train_config().
    struct RunConfig
    {
        std::string preset = "desk";
        std::string input;
        std::string out_dir = "out";
        std::uint64_t seed = 0;
        /// Cloud points kept after a seeded subsample; 0 keeps all.
        std::size_t points = 0;
        SamplerConfig sampler;
        TrainConfig train;
        MeshSettings mesh;
        EvalSettings eval;
        DemoSettings demo;

        SamplerConfig sampler_config() const;
        TrainConfig train_config() const;
        void validate() const;

        /// TOML text listing every field in a fixed order.
        std::string canonical() const;
        /// Hex SHA-256 of canonical().
        std::string hash() const;

        friend bool operator==(const RunConfig&, const RunConfig&) = default;
    };

    /// `paper` or `desk`. Throws ConfigError for other names.
    RunConfig preset_config(std::string_view name);
    std::vector<std::string> preset_names();

    /// Parses TOML-style text: `[section]` headers, `key = value` lines with
    /// strings, integers, floats, or booleans, and `#` comments. Starts from
    /// `preset` when given, else from the preset named by a top-level
    /// `preset` key, else from `desk`, and applies every other key on top.
    /// Throws ParseError citing the line.
    RunConfig parse_config(std::string_view text, std::string_view preset = {});

    /// Applies a `section.key=value` (or top-level `key=value`) override.
    void apply_override(RunConfig& cfg, std::string_view assignment);

    /// Keys accepted by parse_config and apply_override, as `section.key`.
    std::vector<std::string> config_keys();
}
