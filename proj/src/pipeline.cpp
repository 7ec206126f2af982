#include "npull/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "npull/error.hpp"
#include "npull/hash.hpp"
#include "npull/random.hpp"

namespace npull
{
    namespace
    {
        constexpr std::uint64_t subsample_stream = 0x73756273;
        constexpr std::uint64_t eval_stream = 0x6576616c;

        namespace fs = std::filesystem;

        void note(std::ostream* log, const std::string& line)
        {
            if (log) *log << line << '\n' << std::flush;
        }

        TrainHooks progress_hooks(const TrainHooks& base, std::size_t epochs, std::ostream* log)
        {
            if (!log) return base;
            TrainHooks hooks = base;
            auto last = std::make_shared<double>(0.0);
            hooks.on_step = [last, inner = base.on_step](const LossRecord& r) {
                *last = r.loss;
                if (inner) inner(r);
            };
            const std::size_t every = std::max<std::size_t>(1, epochs / 10);
            hooks.on_epoch = [=, inner = base.on_epoch](std::size_t epoch, const SdfNetwork& net) {
                if (epoch % every == 0 || epoch == epochs) note(log, fmt::format("epoch {}/{}  loss {:.6g}", epoch, epochs, *last));
                if (inner) inner(epoch, net);
            };
            return hooks;
        }

        nlohmann::ordered_json vec_json(const Vec3& v) { return nlohmann::ordered_json::array({v.x(), v.y(), v.z()}); }

        std::string file_sha(const std::string& path) { return sha256_hex(read_file(path)); }

        std::size_t rounded_ratio(std::size_t total, std::size_t points, std::string* warning)
        {
            if (points == 0) throw ConfigError("the point count must be set to derive queries per point");
            const auto per = static_cast<std::size_t>(std::llround(static_cast<double>(total) / static_cast<double>(points)));
            if (per == 0) throw ConfigError(fmt::format("{} queries over {} points is below one per point", total, points));
            if (warning && per * points != total) {
                *warning = fmt::format("{} queries over {} points is not a whole number per point; using {} ({} total)",
                                       total, points, per, per * points);
            }
            return per;
        }
    }

    PointCloud subsample(const PointCloud& cloud, std::size_t count, std::uint64_t seed)
    {
        if (count == 0 || count >= cloud.size()) return cloud;
        std::vector<std::size_t> order(cloud.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        CounterRng rng(seed, subsample_stream);
        for (std::size_t i = 0; i < count; ++i) {
            std::swap(order[i], order[i + rng.below(order.size() - i)]);
        }
        order.resize(count);
        std::sort(order.begin(), order.end());
        PointCloud out;
        out.points.reserve(count);
        if (cloud.normals) out.normals.emplace().reserve(count);
        for (std::size_t i : order) {
            out.points.push_back(cloud.points[i]);
            if (cloud.normals) out.normals->push_back((*cloud.normals)[i]);
        }
        return out;
    }

    Reconstruction reconstruct(const PointCloud& cloud, const RunConfig& cfg, const TrainHooks& hooks)
    {
        cfg.validate();
        cloud.validate();
        const NormalizedCloud normalized = normalize(cloud);
        const PointCloud training = subsample(normalized.cloud, cfg.points, cfg.seed);
        const SamplerConfig sampler = cfg.sampler_config();
        TrainConfig train_cfg = cfg.train_config();
        train_cfg.architecture.input_dim = 3;

        TrainResult trained = train(training, sampler, train_cfg, hooks);
        const Bounds bounds = Bounds::of(training.points).padded(cfg.mesh.padding);
        const std::size_t r = cfg.mesh.resolution;
        const ScalarGrid grid = eval_grid(trained.network, bounds, {r, r, r});

        Reconstruction out{{}, std::move(trained.network), normalized.transform, std::move(trained.curve),
                           training.size(), trained.query_count, trained.degenerate_samples, {}};
        out.mesh = out.transform.inverse(marching_cubes(grid, cfg.mesh.iso, &out.warning));
        return out;
    }

    ReconstructOutputs cmd_reconstruct(const RunConfig& cfg, std::ostream* log)
    {
        cfg.validate();
        if (cfg.input.empty()) throw ConfigError("reconstruct: no input file given");
        const std::string input_bytes = read_file(cfg.input);
        const PointCloud cloud = read_cloud(cfg.input);
        note(log, fmt::format("read {} points from {}", cloud.size(), cfg.input));

        ReconstructOutputs out{reconstruct(cloud, cfg, progress_hooks({}, cfg.train.epochs, log)), {}, {}, {}, {}, {}};
        Reconstruction& rec = out.result;
        if (rec.mesh.empty()) throw Error("reconstruct: " + rec.warning);

        fs::create_directories(cfg.out_dir);
        const std::string stem = fs::path(cfg.input).stem().string();
        const std::string mesh_ext = cfg.mesh.format == MeshFormat::obj ? ".obj" : ".ply";
        auto in_dir = [&](const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); };
        out.mesh_file = in_dir(stem + mesh_ext);
        out.checkpoint_file = in_dir(stem + ".ckpt");
        out.loss_file = in_dir("loss.csv");
        out.manifest_file = in_dir("manifest.json");

        write_mesh(out.mesh_file, rec.mesh);
        rec.network.save_file(out.checkpoint_file);
        std::ostringstream loss;
        rec.curve.write_csv(loss);
        write_file(out.loss_file, loss.str());

        // Read every artifact back before declaring success.
        const SdfNetwork reloaded = SdfNetwork::load_file(out.checkpoint_file);
        if (reloaded.flat_parameters() != rec.network.flat_parameters()) {
            throw Error("reconstruct: checkpoint does not reload to the trained parameters");
        }
        const TriangleMesh mesh_back = read_mesh(out.mesh_file);
        mesh_back.validate();
        if (mesh_back.vertices.size() != rec.mesh.vertices.size() || mesh_back.triangles != rec.mesh.triangles) {
            throw Error("reconstruct: mesh file does not reload to the extracted mesh");
        }

        nlohmann::ordered_json m;
        m["tool"] = "npull";
        m["version"] = tool_version;
        m["checkpoint_version"] = SdfNetwork::checkpoint_version;
        m["preset"] = cfg.preset;
        m["seed"] = cfg.seed;
        m["config_sha256"] = cfg.hash();
        m["config"] = cfg.canonical();
        m["input"] = {{"path", cfg.input}, {"sha256", sha256_hex(input_bytes)}, {"points", cloud.size()}};
        m["transform"] = {{"translation", vec_json(rec.transform.translation)}, {"scale", rec.transform.scale}};
        m["training"] = {{"points", rec.training_points},
                         {"queries", rec.query_count},
                         {"steps", rec.curve.records.size()},
                         {"epochs", cfg.train.epochs},
                         {"final_loss", rec.curve.records.empty() ? 0.0 : rec.curve.records.back().loss},
                         {"degenerate_samples", rec.degenerate_samples}};
        m["mesh"] = {{"vertices", rec.mesh.vertices.size()}, {"triangles", rec.mesh.triangles.size()},
                     {"area", rec.mesh.area()}};
        nlohmann::ordered_json outputs;
        for (const std::string& f : {out.mesh_file, out.checkpoint_file, out.loss_file}) {
            outputs[fs::path(f).filename().string()] = file_sha(f);
        }
        m["outputs"] = outputs;
        out.manifest = m.dump(2) + "\n";
        write_file(out.manifest_file, out.manifest);
        note(log, fmt::format("wrote {} ({} vertices, {} triangles)", out.mesh_file, rec.mesh.vertices.size(),
                              rec.mesh.triangles.size()));
        return out;
    }

    PointCloud load_eval_cloud(const std::string& path, const RunConfig& cfg, std::uint64_t stream)
    {
        const std::string ext = extension_of(path);
        TriangleMesh mesh;
        if (ext == ".obj") {
            mesh = read_mesh(path);
        } else if (ext == ".ply") {
            mesh = read_mesh(path);
            if (mesh.triangles.empty()) return read_cloud(path);
        } else {
            return read_cloud(path);
        }
        if (mesh.empty()) throw ConfigError(fmt::format("'{}' contains no triangles to sample", path));
        CounterRng rng(cfg.seed, stream);
        return sample_surface(mesh, cfg.eval.samples, rng);
    }

    MetricsReport cmd_eval(const std::string& recon_path, const std::string& gt_path, const RunConfig& cfg)
    {
        cfg.validate();
        const PointCloud recon = load_eval_cloud(recon_path, cfg, eval_stream);
        const PointCloud gt = load_eval_cloud(gt_path, cfg, eval_stream);
        return evaluate(recon, gt, cfg.eval.mu, cfg.eval.require_normals);
    }

    std::vector<std::string> ablation_knobs() { return {"init_mode", "batch_strategy", "placement", "sigma_scale", "I", "J"}; }

    void apply_knob(RunConfig& cfg, const std::string& knob, const std::string& value, std::string* warning)
    {
        if (knob == "init_mode") {
            apply_override(cfg, "train.init=" + value);
        } else if (knob == "batch_strategy") {
            apply_override(cfg, "sampler.batch_strategy=" + value);
        } else if (knob == "placement") {
            apply_override(cfg, "sampler.placement=" + value);
        } else if (knob == "sigma_scale") {
            apply_override(cfg, "sampler.sigma_scale=" + value);
        } else if (knob == "I" || knob == "J") {
            RunConfig probe = cfg;
            apply_override(probe, "points=" + value);
            const std::size_t n = probe.points;
            if (knob == "I") {
                cfg.sampler.queries_per_point = rounded_ratio(n, cfg.points, warning);
            } else {
                const std::size_t total = cfg.points * cfg.sampler.queries_per_point;
                cfg.points = n;
                cfg.sampler.queries_per_point = rounded_ratio(total, n, warning);
            }
        } else {
            std::string valid;
            for (const std::string& k : ablation_knobs()) valid += (valid.empty() ? "" : ", ") + k;
            throw ConfigError(fmt::format("unknown ablation knob '{}' (valid: {})", knob, valid));
        }
    }

    std::vector<AblationRow> ablate(const PointCloud& cloud, const PointCloud& gt, const RunConfig& cfg,
                                    const std::string& knob, const std::vector<std::string>& values,
                                    std::vector<std::string>* warnings, std::ostream* log)
    {
        auto warn = [&](const std::string& w) {
            if (warnings) warnings->push_back(w);
        };
        std::vector<std::string> unique;
        for (const std::string& v : values) {
            if (std::find(unique.begin(), unique.end(), v) != unique.end()) {
                warn(fmt::format("duplicate value '{}' for {} ignored", v, knob));
            } else {
                unique.push_back(v);
            }
        }
        // Validate every value before the first (slow) run.
        std::vector<RunConfig> configs;
        for (const std::string& v : unique) {
            RunConfig c = cfg;
            std::string w;
            apply_knob(c, knob, v, &w);
            if (!w.empty()) warn(fmt::format("{}={}: {}", knob, v, w));
            c.validate();
            configs.push_back(std::move(c));
        }

        std::vector<AblationRow> rows;
        for (std::size_t i = 0; i < configs.size(); ++i) {
            note(log, fmt::format("{} = {}", knob, unique[i]));
            const Reconstruction rec = reconstruct(cloud, configs[i], progress_hooks({}, configs[i].train.epochs, log));
            AblationRow row{knob, unique[i], {}};
            if (rec.mesh.empty()) {
                warn(fmt::format("{}={}: {}", knob, unique[i], rec.warning));
                const double nan = std::numeric_limits<double>::quiet_NaN();
                row.metrics.l2_cd_x100 = row.metrics.l1_cd = row.metrics.fscore_mu = row.metrics.fscore_2mu = nan;
            } else {
                CounterRng rng(cfg.seed, eval_stream);
                row.metrics = evaluate(sample_surface(rec.mesh, cfg.eval.samples, rng), gt, cfg.eval.mu);
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }

    std::string ablation_csv(const std::vector<AblationRow>& rows)
    {
        std::string out = "knob,value,l2_cd_x100,l1_cd,normal_consistency,fscore_mu,fscore_2mu\n";
        for (const AblationRow& r : rows) {
            const MetricsReport& m = r.metrics;
            out += fmt::format("{},{},{:.9g},{:.9g},{},{:.9g},{:.9g}\n", r.knob, r.value, m.l2_cd_x100, m.l1_cd,
                               m.normal_consistency ? fmt::format("{:.9g}", *m.normal_consistency) : std::string(),
                               m.fscore_mu, m.fscore_2mu);
        }
        return out;
    }

    CircleDemoConfig demo_config(const RunConfig& cfg)
    {
        CircleDemoConfig d;
        d.radius = cfg.demo.radius;
        d.samples = cfg.demo.samples;
        d.raster = cfg.demo.raster;
        d.extent = cfg.demo.extent;
        d.sampler = cfg.sampler_config();
        d.train = cfg.train_config();
        return d.planar();
    }

    DemoOutputs cmd_demo2d(const RunConfig& cfg, std::ostream* log)
    {
        const CircleDemoConfig d = demo_config(cfg);
        d.validate();
        note(log, fmt::format("circle demo: radius {}, {} samples", d.radius, d.samples));
        DemoOutputs out{run_circle_demo(d), {}};
        out.files = write_demo_artifacts(out.result, cfg.out_dir);
        note(log, fmt::format("{:.1f}% of pulled queries within 0.02 of the circle",
                              100.0 * fraction_on_circle(out.result.pulled, d.radius, 0.02)));
        return out;
    }
}
