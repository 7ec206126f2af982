#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "npull/config.hpp"
#include "npull/error.hpp"
#include "npull/io.hpp"
#include "npull/pipeline.hpp"

namespace
{
    struct CommonOptions
    {
        std::string config_file;
        std::string preset;
        std::string out_dir;
        std::vector<std::string> overrides;
        std::uint64_t seed = 0;
        bool seed_given = false;
        bool quiet = false;
    };

    void add_common(CLI::App* cmd, CommonOptions& o)
    {
        cmd->add_option("-c,--config", o.config_file, "TOML-style run configuration");
        cmd->add_option("-p,--preset", o.preset, "Base preset: desk or paper");
        cmd->add_option("-o,--out-dir", o.out_dir, "Directory for written artifacts");
        cmd->add_option("-s,--seed", o.seed, "Seed for every random stream")->each([&o](const std::string&) {
            o.seed_given = true;
        });
        cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set train.epochs=10");
        cmd->add_flag("-q,--quiet", o.quiet, "Suppress progress output");
    }

    npull::RunConfig resolve(const CommonOptions& o)
    {
        npull::RunConfig cfg;
        if (!o.config_file.empty()) {
            const std::string text = npull::read_file(o.config_file);
            try {
                cfg = npull::parse_config(text, o.preset);
            } catch (const npull::ParseError& e) {
                throw npull::ParseError(fmt::format("{}: {}", o.config_file, e.what()), e.location());
            }
        } else {
            cfg = npull::preset_config(o.preset.empty() ? "desk" : o.preset);
        }
        if (o.seed_given) cfg.seed = o.seed;
        if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
        for (const std::string& s : o.overrides) npull::apply_override(cfg, s);
        cfg.validate();
        return cfg;
    }

    std::vector<std::string> split_list(const std::string& s)
    {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(' ');
            const auto e = item.find_last_not_of(' ');
            if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
        }
        return out;
    }
}

int main(int argc, char** argv)
{
    CLI::App app{"Learn signed distance fields from point clouds by pulling query points onto the surface."};
    app.require_subcommand(1);
    app.set_version_flag("--version", npull::tool_version);

    CommonOptions common;

    auto* rec = app.add_subcommand("reconstruct", "Train on a point cloud and extract a mesh");
    std::string input;
    rec->add_option("input", input, "Point cloud (.xyz or .ply)")->required();
    add_common(rec, common);

    auto* eval = app.add_subcommand("eval", "Compare a reconstruction against ground truth");
    std::string recon_path, gt_path, format = "both";
    eval->add_option("recon", recon_path, "Reconstructed mesh (.obj/.ply) or cloud (.xyz/.ply)")->required();
    eval->add_option("gt", gt_path, "Ground-truth cloud or mesh")->required();
    eval->add_option("--format", format, "json, csv, or both")->check(CLI::IsMember({"json", "csv", "both"}));
    add_common(eval, common);

    auto* abl = app.add_subcommand("ablate", "Sweep one knob and report L2 Chamfer distance per value");
    std::string abl_input, knob, values, abl_gt;
    abl->add_option("input", abl_input, "Point cloud (.xyz or .ply)")->required();
    abl->add_option("-k,--knob", knob, "One of: init_mode, batch_strategy, placement, sigma_scale, I, J")->required();
    abl->add_option("-v,--values", values, "Comma-separated values, e.g. 0.25,1,4")->required();
    abl->add_option("-g,--gt", abl_gt, "Ground truth for scoring (defaults to the input cloud)");
    add_common(abl, common);

    auto* demo = app.add_subcommand("demo2d", "Planar circle demo: pulled queries, field CSV and SVG renders");
    add_common(demo, common);

    auto* show = app.add_subcommand("config", "Print the resolved configuration in canonical form");
    add_common(show, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        npull::RunConfig cfg = resolve(common);
        std::ostream* log = common.quiet ? nullptr : &std::cerr;

        if (rec->parsed()) {
            cfg.input = input;
            const auto out = npull::cmd_reconstruct(cfg, log);
            std::cout << out.manifest_file << '\n';
        } else if (eval->parsed()) {
            const npull::MetricsReport r = npull::cmd_eval(recon_path, gt_path, cfg);
            if (format != "csv") std::cout << r.to_json() << '\n';
            if (format != "json") std::cout << npull::MetricsReport::csv_header() << '\n' << r.csv_row() << '\n';
        } else if (abl->parsed()) {
            cfg.input = abl_input;
            const npull::PointCloud cloud = npull::read_cloud(abl_input);
            const npull::PointCloud gt = abl_gt.empty() ? cloud : npull::load_eval_cloud(abl_gt, cfg, 0);
            std::vector<std::string> warnings;
            const auto rows = npull::ablate(cloud, gt, cfg, knob, split_list(values), &warnings, log);
            for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
            const std::string csv = npull::ablation_csv(rows);
            std::filesystem::create_directories(cfg.out_dir);
            npull::write_file((std::filesystem::path(cfg.out_dir) / ("ablation_" + knob + ".csv")).string(), csv);
            std::cout << csv;
        } else if (demo->parsed()) {
            const auto out = npull::cmd_demo2d(cfg, log);
            for (const std::string& f : out.files) std::cout << (std::filesystem::path(cfg.out_dir) / f).string() << '\n';
        } else if (show->parsed()) {
            std::cout << cfg.canonical();
        }
        return 0;
    } catch (const npull::FileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const npull::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const npull::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
