#include "npull/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "npull/error.hpp"

namespace npull
{
    namespace
    {
        void require_points(const PointCloud& c, const char* what)
        {
            if (c.empty()) throw ConfigError(std::string(what) + ": point cloud is empty");
        }

        void require_normals(const PointCloud& c, const char* which)
        {
            if (!c.has_normals()) {
                throw ConfigError(std::string("normal consistency requires normals on the ") + which + " cloud");
            }
        }

        /// Nearest neighbour in `to` for every point of `from`.
        std::vector<Neighbor> match(const PointCloud& from, const KdIndex& to)
        {
            std::vector<Neighbor> out(from.size());
            for (std::size_t i = 0; i < from.size(); ++i) out[i] = to.nearest(from.points[i]);
            return out;
        }

        double mean_distance(const std::vector<Neighbor>& nn, ChamferNorm norm)
        {
            double sum = 0.0;
            for (const Neighbor& n : nn) {
                sum += norm == ChamferNorm::l2 ? n.squared_distance : std::sqrt(n.squared_distance);
            }
            return sum / static_cast<double>(nn.size());
        }

        double mean_alignment(const PointCloud& from, const PointCloud& to, const std::vector<Neighbor>& nn)
        {
            double sum = 0.0;
            for (std::size_t i = 0; i < nn.size(); ++i) {
                sum += std::abs((*from.normals)[i].dot((*to.normals)[nn[i].index]));
            }
            return sum / static_cast<double>(nn.size());
        }

        double fraction_within(const std::vector<Neighbor>& nn, double threshold)
        {
            const double t2 = threshold * threshold;
            std::size_t hits = 0;
            for (const Neighbor& n : nn) hits += n.squared_distance <= t2 ? 1 : 0;
            return static_cast<double>(hits) / static_cast<double>(nn.size());
        }

        double harmonic(double precision, double recall)
        {
            return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        }
    }

    PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, CounterRng& rng)
    {
        PointCloud out;
        out.normals.emplace();
        if (n == 0) return out;
        if (mesh.empty()) throw ConfigError("sample_surface: mesh is empty");
        mesh.validate();

        std::vector<double> cumulative(mesh.triangles.size());
        std::vector<Vec3> face_normals(mesh.triangles.size());
        double total = 0.0;
        for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
            const auto& t = mesh.triangles[f];
            const Vec3 cross = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
            const double len = cross.norm();
            total += 0.5 * len;
            cumulative[f] = total;
            face_normals[f] = len > 0.0 ? Vec3(cross / len) : Vec3(0.0, 0.0, 1.0);
        }
        if (!(total > 0.0)) throw ConfigError("sample_surface: mesh has zero area");

        out.points.reserve(n);
        out.normals->reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double pick = rng.uniform() * total;
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
            if (it == cumulative.end()) --it;
            const auto f = static_cast<std::size_t>(it - cumulative.begin());
            const auto& t = mesh.triangles[f];
            const double r1 = std::sqrt(rng.uniform());
            const double r2 = rng.uniform();
            out.points.push_back((1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]]
                                 + r1 * r2 * mesh.vertices[t[2]]);
            out.normals->push_back(face_normals[f]);
        }
        return out;
    }

    double chamfer(const PointCloud& a, const PointCloud& b, ChamferNorm norm)
    {
        require_points(a, "chamfer");
        require_points(b, "chamfer");
        const KdIndex ia(a), ib(b);
        return 0.5 * mean_distance(match(a, ib), norm) + 0.5 * mean_distance(match(b, ia), norm);
    }

    double normal_consistency(const PointCloud& a, const PointCloud& b)
    {
        require_points(a, "normal_consistency");
        require_points(b, "normal_consistency");
        require_normals(a, "first");
        require_normals(b, "second");
        const KdIndex ia(a), ib(b);
        return 0.5 * mean_alignment(a, b, match(a, ib)) + 0.5 * mean_alignment(b, a, match(b, ia));
    }

    double fscore(const PointCloud& recon, const PointCloud& gt, double threshold)
    {
        require_points(recon, "fscore");
        require_points(gt, "fscore");
        if (!(threshold > 0.0)) throw ConfigError("fscore: threshold must be > 0");
        const KdIndex ir(recon), ig(gt);
        return harmonic(fraction_within(match(recon, ig), threshold), fraction_within(match(gt, ir), threshold));
    }

    MetricsReport evaluate(const PointCloud& recon, const PointCloud& gt, double mu, bool need_normals)
    {
        require_points(recon, "evaluate");
        require_points(gt, "evaluate");
        if (!(mu > 0.0)) throw ConfigError("evaluate: threshold must be > 0");
        if (need_normals) {
            require_normals(recon, "reconstructed");
            require_normals(gt, "ground-truth");
        }
        const KdIndex ir(recon), ig(gt);
        const auto forward = match(recon, ig);
        const auto backward = match(gt, ir);

        MetricsReport r;
        r.mu = mu;
        r.recon_samples = recon.size();
        r.gt_samples = gt.size();
        r.l2_cd_x100 = 100.0 * (0.5 * mean_distance(forward, ChamferNorm::l2)
                                + 0.5 * mean_distance(backward, ChamferNorm::l2));
        r.l1_cd = 0.5 * mean_distance(forward, ChamferNorm::l1) + 0.5 * mean_distance(backward, ChamferNorm::l1);
        if (recon.has_normals() && gt.has_normals()) {
            r.normal_consistency = 0.5 * mean_alignment(recon, gt, forward) + 0.5 * mean_alignment(gt, recon, backward);
        }
        r.fscore_mu = harmonic(fraction_within(forward, mu), fraction_within(backward, mu));
        r.fscore_2mu = harmonic(fraction_within(forward, 2.0 * mu), fraction_within(backward, 2.0 * mu));
        return r;
    }

    std::string MetricsReport::to_json() const
    {
        nlohmann::ordered_json j;
        j["l2_cd_x100"] = l2_cd_x100;
        j["l1_cd"] = l1_cd;
        j["normal_consistency"] = normal_consistency ? nlohmann::ordered_json(*normal_consistency) : nullptr;
        j["fscore_mu"] = fscore_mu;
        j["fscore_2mu"] = fscore_2mu;
        j["mu"] = mu;
        j["recon_samples"] = recon_samples;
        j["gt_samples"] = gt_samples;
        return j.dump(2);
    }

    std::string MetricsReport::csv_header()
    {
        return "l2_cd_x100,l1_cd,normal_consistency,fscore_mu,fscore_2mu,mu,recon_samples,gt_samples";
    }

    std::string MetricsReport::csv_row() const
    {
        return fmt::format("{:.9g},{:.9g},{},{:.9g},{:.9g},{:.9g},{},{}", l2_cd_x100, l1_cd,
                           normal_consistency ? fmt::format("{:.9g}", *normal_consistency) : std::string(),
                           fscore_mu, fscore_2mu, mu, recon_samples, gt_samples);
    }
}
