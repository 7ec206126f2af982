// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <npull/demo2d.hpp>
#include <npull/error.hpp>
#include <npull/io.hpp>
#include <npull/mesher.hpp>
#include <npull/metrics.hpp>
#include <npull/pipeline.hpp>
#include <npull/sampler.hpp>
#include <npull/trainer.hpp>

#include "metrics_oracle.hpp"
#include "support.hpp"

using namespace npull;
namespace fs = std::filesystem;

namespace
{
    constexpr double sphere_radius = 0.4;
    constexpr std::size_t eval_samples = 10000;
    constexpr std::uint64_t mesh_sample_stream = 0x6d657368;

    struct Outcome
    {
        bool pass = false;
        std::string detail;
        std::vector<std::string> notes;
    };

    using Clock = std::chrono::steady_clock;

    double seconds_since(Clock::time_point start)
    {
        return std::chrono::duration<double>(Clock::now() - start).count();
    }

    std::string mark(bool ok) { return ok ? "ok" : "MISS"; }

    /// Shared state for the end-to-end criteria.
    struct SphereRun
    {
        RunConfig cfg;
        PointCloud cloud;
        PointCloud gt;
        std::optional<ReconstructOutputs> out;
        double seconds = 0.0;
        bool ran = false;
        std::string error;
    };

    struct SphereMetrics
    {
        double cd_x100 = std::numeric_limits<double>::infinity();
        double nc = 0.0;
        double f = 0.0;
        bool empty = true;
    };

    SphereMetrics score(const TriangleMesh& mesh, const PointCloud& gt, std::uint64_t seed)
    {
        SphereMetrics m;
        if (mesh.empty()) return m;
        CounterRng rng(seed, mesh_sample_stream);
        const PointCloud recon = sample_surface(mesh, eval_samples, rng);
        m.cd_x100 = 100.0 * chamfer(recon, gt, ChamferNorm::l2);
        m.nc = normal_consistency(recon, gt);
        m.f = fscore(recon, gt, 0.01);
        m.empty = false;
        return m;
    }

    /// Gradient check of the pull loss and the input gradient.
    Outcome gradients()
    {
        const auto start = Clock::now();
        ArchitectureConfig arch = preset_config("desk").train.architecture;
        arch.input_dim = 3;
        const double h = 1e-5, tolerance = 1e-4;
        std::size_t tested = 0, passed = 0;
        double worst = 0.0;

        SamplerConfig sampler = preset_config("desk").sampler_config();
        sampler.queries_per_point = 1;
        sampler.sigma_k = 20;
        for (std::uint64_t trial = 0; trial < 20; ++trial) {
            // Alternate geometric and uniform random starting points, each
            // further perturbed so no two trials share structure.
            SdfNetwork net = trial % 2 == 0 ? SdfNetwork::init_geometric(arch, 0.5, trial)
                                            : SdfNetwork::init_random(arch, trial);
            Eigen::VectorXd theta = net.flat_parameters();
            CounterRng noise(trial, 0x6e6f6973);
            for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.02 * noise.normal();
            net.assign_parameters(theta);

            const PointCloud cloud = testing::sphere_cloud(200, sphere_radius, 100 + trial);
            sampler.seed = trial;
            const QuerySet qs = build_query_set(cloud, KdIndex(cloud), sampler);
            const std::vector<QuerySample> batch(qs.samples().begin(), qs.samples().begin() + 32);

            const BatchLoss base = batch_loss(net, batch);
            CounterRng pick(trial, 0x7069636b);
            for (int n = 0; n < 250; ++n) {
                const auto i = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(theta.size())));
                Eigen::VectorXd t = theta;
                t[i] = theta[i] + h;
                net.assign_parameters(t);
                const double lp = batch_loss(net, batch).loss;
                t[i] = theta[i] - h;
                net.assign_parameters(t);
                const double lm = batch_loss(net, batch).loss;
                const double e = testing::relative_error(base.gradient[i], (lp - lm) / (2.0 * h));
                worst = std::max(worst, e);
                ++tested;
                passed += e <= tolerance ? 1 : 0;
            }
            net.assign_parameters(theta);

            for (std::size_t k = 0; k < 10; ++k) {
                const Vec3 q = batch[k].q;
                const Eigen::VectorXd g = net.grad_wrt_input(q);
                for (int a = 0; a < 3; ++a) {
                    Vec3 qp = q, qm = q;
                    qp[a] += h;
                    qm[a] -= h;
                    const double e = testing::relative_error(g[a], (net.eval(qp) - net.eval(qm)) / (2.0 * h));
                    worst = std::max(worst, e);
                    ++tested;
                    passed += e <= tolerance ? 1 : 0;
                }
            }
        }
        const double secs = seconds_since(start);
        const double rate = static_cast<double>(passed) / static_cast<double>(tested);
        Outcome o;
        o.pass = rate >= 0.99 && secs < 60.0;
        o.detail = fmt::format("{}/{} coordinates within {} ({:.2f}%, need 99%) [{}]; worst {:.2e}; {:.1f}s (need < 60s) [{}]",
                               passed, tested, tolerance, 100.0 * rate, mark(rate >= 0.99), worst, secs,
                               mark(secs < 60.0));
        return o;
    }

    Outcome pull_oracle()
    {
        const testing::SphereSdf sphere{0.5, Vec3(0.0, 0.0, 0.0)};
        CounterRng rng(2, 0x70756c6c);
        std::size_t inside = 0, outside = 0, landed = 0;
        double worst = 0.0;
        const std::size_t n = 10000;
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 d(rng.normal(), rng.normal(), rng.normal());
            d.normalize();
            const Vec3 q = rng.uniform(0.1, 2.0) * d;
            const double s = sphere(q);
            (s < 0.0 ? inside : outside) += 1;
            const Vec3 p = pull(q, s, sphere.gradient(q));
            const double e = std::abs((p - sphere.center).norm() - sphere.radius);
            worst = std::max(worst, e);
            landed += e <= 1e-9 ? 1 : 0;
        }
        Outcome o;
        o.pass = landed == n && inside > 0 && outside > 0;
        o.detail = fmt::format("{}/{} pulled onto the sphere within 1e-9 (worst {:.1e}); {} inside, {} outside", landed,
                               n, worst, inside, outside);
        return o;
    }

    Outcome end_to_end(SphereRun& run)
    {
        if (!run.ran) return {false, "reconstruction failed: " + run.error, {}};
        const SphereMetrics m = score(run.out->result.mesh, run.gt, run.cfg.seed);

        // Best attainable F-score: a second independent sample set of the exact sphere.
        const PointCloud ideal = testing::sphere_cloud(eval_samples, sphere_radius, 9001);
        const double ceiling = fscore(ideal, run.gt, 0.01);

        const bool cd_ok = m.cd_x100 < 0.5, nc_ok = m.nc > 0.97, f_ok = m.f > 0.95, t_ok = run.seconds <= 600.0;
        Outcome o;
        o.pass = cd_ok && nc_ok && f_ok && t_ok;
        o.detail = fmt::format("L2-CDx100 {:.4f} (< 0.5) [{}]; NC {:.4f} (> 0.97) [{}]; F(0.01) {:.4f} (> 0.95) [{}]; "
                               "{:.0f}s (<= 600s) [{}]",
                               m.cd_x100, mark(cd_ok), m.nc, mark(nc_ok), m.f, mark(f_ok), run.seconds, mark(t_ok));
        o.notes.push_back(fmt::format("F(0.01) between two exact {}-sample sets of the same sphere is {:.4f}", eval_samples,
                                      ceiling));
        o.notes.push_back(fmt::format("mesh: {} vertices, {} triangles, area {:.5f} (sphere {:.5f})",
                                      run.out->result.mesh.vertices.size(), run.out->result.mesh.triangles.size(),
                                      run.out->result.mesh.area(), 4.0 * std::numbers::pi * sphere_radius * sphere_radius));
        return o;
    }

    Outcome sdf_properties(const SphereRun& run)
    {
        if (!run.ran) return {false, "reconstruction failed: " + run.error, {}};
        const ReconstructedSdf f = run.out->result.sdf();
        const PointCloud probe = testing::sphere_cloud(100, sphere_radius, 4242);
        bool all_ok = true;
        std::string detail;
        for (double dt : {0.01, 0.02, 0.05}) {
            std::size_t good = 0;
            for (std::size_t i = 0; i < probe.size(); ++i) {
                const Vec3& p = probe.points[i];
                const Vec3& n = (*probe.normals)[i];
                good += std::abs(f(p - n * dt) + f(p + n * dt)) <= 0.25 * dt ? 1 : 0;
            }
            const bool ok = good >= 90;
            all_ok = all_ok && ok;
            detail += fmt::format("dt {}: {}/100 [{}]; ", dt, good, mark(ok));
        }
        double min_grad = std::numeric_limits<double>::infinity();
        for (const Vec3& p : probe.points) min_grad = std::min(min_grad, f.gradient(p).norm());
        const bool grad_ok = min_grad >= 0.1;
        Outcome o;
        o.pass = all_ok && grad_ok;
        o.detail = detail + fmt::format("min |grad f| {:.4f} (>= 0.1) [{}]", min_grad, mark(grad_ok));
        return o;
    }

    Outcome ablations(const SphereRun& run)
    {
        if (!run.ran) return {false, "reconstruction failed: " + run.error, {}};
        const SphereMetrics base = score(run.out->result.mesh, run.gt, run.cfg.seed);
        Outcome o;
        auto variant = [&](const std::string& knob, const std::string& value) {
            RunConfig cfg = run.cfg;
            apply_knob(cfg, knob, value);
            const auto start = Clock::now();
            SphereMetrics m;
            try {
                m = score(reconstruct(run.cloud, cfg).mesh, run.gt, cfg.seed);
            } catch (const TrainingError& e) {
                o.notes.push_back(fmt::format("{}={} diverged: {}", knob, value, e.what()));
            }
            o.notes.push_back(fmt::format("{}={}: L2-CDx100 {:.6f}{} ({:.0f}s)", knob, value, m.cd_x100,
                                          m.empty ? " (no surface)" : "", seconds_since(start)));
            return m.cd_x100;
        };
        o.notes.push_back(fmt::format("baseline (geometric init, surface-local, sigma x1): L2-CDx100 {:.6f}", base.cd_x100));
        const double random_init = variant("init_mode", "random");
        const double space = variant("placement", "space_uniform");
        const double narrow = variant("sigma_scale", "0.25");
        const double wide = variant("sigma_scale", "4");

        const bool a = base.cd_x100 <= random_init;
        const bool b = base.cd_x100 <= space;
        const bool c = narrow > base.cd_x100 && wide > base.cd_x100;
        o.pass = a && b && c;
        o.detail = fmt::format("(a) geometric {:.6f} <= random {:.6f} [{}]; (b) surface-local {:.6f} <= space {:.6f} [{}]; "
                               "(c) sigma 0.25/1/4 = {:.6f}/{:.6f}/{:.6f}, minimum at 1 [{}]",
                               base.cd_x100, random_init, mark(a), base.cd_x100, space, mark(b), narrow, base.cd_x100,
                               wide, mark(c));
        return o;
    }

    Outcome metric_oracle()
    {
        std::size_t pairs_ok = 0;
        for (std::uint64_t s = 0; s < 50; ++s) {
            const PointCloud a = testing::random_cloud(100, 1000 + 2 * s, true);
            const PointCloud b = testing::random_cloud(100, 1001 + 2 * s, true);
            bool ok = chamfer(a, b, ChamferNorm::l2) == oracle::chamfer(a, b, true)
                   && chamfer(a, b, ChamferNorm::l1) == oracle::chamfer(a, b, false)
                   && normal_consistency(a, b) == oracle::normal_consistency(a, b);
            for (double tau : {0.05, 0.1, 0.2}) ok = ok && fscore(a, b, tau) == oracle::fscore(a, b, tau);
            pairs_ok += ok ? 1 : 0;
        }
        return {pairs_ok == 50, fmt::format("{}/50 pairs identical on L2-CD, L1-CD, NC and F at 3 thresholds", pairs_ok), {}};
    }

    Outcome marching_cubes_sphere()
    {
        const testing::SphereSdf s{sphere_radius};
        const Bounds box{Vec3::Constant(-0.5), Vec3::Constant(0.5)};
        const TriangleMesh m = marching_cubes(sample_grid([&](const Vec3& p) { return s(p); }, box, {64, 64, 64}));
        std::map<std::pair<std::uint32_t, std::uint32_t>, int> use;
        for (const auto& t : m.triangles) {
            for (int e = 0; e < 3; ++e) {
                std::uint32_t a = t[e], b = t[(e + 1) % 3];
                if (a > b) std::swap(a, b);
                ++use[{a, b}];
            }
        }
        std::size_t bad_edges = 0;
        for (const auto& [edge, n] : use) bad_edges += n == 2 ? 0 : 1;
        const double exact = 4.0 * std::numbers::pi * sphere_radius * sphere_radius;
        const double err = std::abs(m.area() - exact) / exact;
        const bool watertight = bad_edges == 0 && !m.empty();
        return {watertight && err <= 0.02,
                fmt::format("{} triangles, {} edges, {} not shared by exactly 2 [{}]; area error {:.3f}% (<= 2%) [{}]",
                            m.triangles.size(), use.size(), bad_edges, mark(watertight), 100.0 * err, mark(err <= 0.02)),
                {}};
    }

    Outcome circle_demo(const fs::path& work)
    {
        RunConfig cfg = preset_config("desk");
        cfg.out_dir = (work / "demo2d").string();
        const auto start = Clock::now();
        const DemoOutputs out = cmd_demo2d(cfg);
        const double secs = seconds_since(start);
        const CircleDemoResult& r = out.result;
        const double frac = fraction_on_circle(r.pulled, r.config.radius, 0.02);
        const Field2D& field = r.field;
        const std::size_t last = field.resolution[0] - 1, top = field.resolution[1] - 1;
        const bool center = r.network.eval(Vec2(0.0, 0.0)) < 0.0;
        const bool corners = field.sign[field.flat(0, 0)] > 0 && field.sign[field.flat(last, 0)] > 0
                          && field.sign[field.flat(0, top)] > 0 && field.sign[field.flat(last, top)] > 0;
        std::size_t degenerate = 0;
        for (const PulledQuery& p : r.pulled) degenerate += p.degenerate ? 1 : 0;
        Outcome o;
        o.pass = frac >= 0.95 && center && corners && secs <= 120.0;
        o.detail = fmt::format("{:.2f}% of {} pulled queries within 0.02 (>= 95%) [{}]; centre negative [{}]; "
                               "corners positive [{}]; {:.0f}s (<= 120s) [{}]",
                               100.0 * frac, r.pulled.size() - degenerate, mark(frac >= 0.95), mark(center),
                               mark(corners), secs, mark(secs <= 120.0));
        o.notes.push_back("artifacts in " + cfg.out_dir);
        return o;
    }

    Outcome determinism(const SphereRun& run, const fs::path& work)
    {
        if (!run.ran) return {false, "reconstruction failed: " + run.error, {}};
        RunConfig cfg = run.cfg;
        cfg.out_dir = (work / "sphere_b").string();
        const ReconstructOutputs b = cmd_reconstruct(cfg);
        const bool ckpt = read_file(run.out->checkpoint_file) == read_file(b.checkpoint_file);
        const bool mesh = read_file(run.out->mesh_file) == read_file(b.mesh_file);
        return {ckpt && mesh,
                fmt::format("checkpoint bytes identical [{}]; mesh bytes identical [{}]", mark(ckpt), mark(mesh)),
                {}};
    }
}

int main(int argc, char** argv)
{
    CLI::App app("Acceptance checks");
    std::string work_dir = (fs::temp_directory_path() / "npull_acceptance").string();
    std::vector<int> only;
    app.add_option("--work-dir", work_dir, "Directory for run artifacts");
    app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 9));
    CLI11_PARSE(app, argc, argv);
    const std::set<int> selected(only.begin(), only.end());
    auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

    const fs::path work(work_dir);
    fs::create_directories(work);

    SphereRun sphere;
    if (wanted(3) || wanted(4) || wanted(5) || wanted(9)) {
        sphere.cfg = preset_config("desk");
        sphere.cloud = testing::sphere_cloud(2000, sphere_radius, 1);
        sphere.gt = testing::sphere_cloud(eval_samples, sphere_radius, 2);
        const std::string input = (work / "sphere.xyz").string();
        write_cloud(input, sphere.cloud);
        sphere.cloud = read_cloud(input);
        sphere.cfg.input = input;
        sphere.cfg.out_dir = (work / "sphere_a").string();
    }
    auto ensure_sphere = [&] {
        if (sphere.ran || !sphere.error.empty()) return;
        const auto start = Clock::now();
        try {
            sphere.out.emplace(cmd_reconstruct(sphere.cfg));
            sphere.ran = true;
        } catch (const std::exception& e) {
            sphere.error = e.what();
        }
        sphere.seconds = seconds_since(start);
    };

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradients},
        {"pull oracle", pull_oracle},
        {"end-to-end sphere", [&] { ensure_sphere(); return end_to_end(sphere); }},
        {"SDF properties", [&] { ensure_sphere(); return sdf_properties(sphere); }},
        {"ablation directions", [&] { ensure_sphere(); return ablations(sphere); }},
        {"metric oracle", metric_oracle},
        {"marching cubes sphere", marching_cubes_sphere},
        {"circle demo", [&] { return circle_demo(work); }},
        {"determinism", [&] { ensure_sphere(); return determinism(sphere, work); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!wanted(n)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what(), {}};
        }
        failures += o.pass ? 0 : 1;
        std::cout << fmt::format("{} {}. {}: {}\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail);
        for (const std::string& note : o.notes) std::cout << "       " << note << '\n';
        std::cout.flush();
    }
    std::cout << (failures == 0 ? "all criteria passed\n" : fmt::format("{} criteria failed\n", failures));
    return failures == 0 ? 0 : 1;
}
