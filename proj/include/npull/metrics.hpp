#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "npull/mesher.hpp"
#include "npull/random.hpp"
#include "npull/spatial.hpp"

namespace npull
{
    /// `n` points uniformly distributed over the mesh area, each carrying the
    /// unit normal of the triangle it was drawn from. Throws ConfigError for
    /// an empty mesh when n > 0.
    PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, CounterRng& rng);

    enum class ChamferNorm
    {
        l1,  // mean Euclidean nearest-neighbour distance
        l2,  // mean squared Euclidean nearest-neighbour distance
    };

    /// 0.5 * mean over A of d(a, NN_B(a)) + 0.5 * mean over B of d(b, NN_A(b)).
    double chamfer(const PointCloud& a, const PointCloud& b, ChamferNorm norm);

    /// Symmetric mean of |n_a . n_NN(a)|. Throws ConfigError without normals.
    double normal_consistency(const PointCloud& a, const PointCloud& b);

    /// Harmonic mean of precision (recon points within `threshold` of
    /// gt) and recall (gt points within `threshold` of recon).
    double fscore(const PointCloud& recon, const PointCloud& gt, double threshold);

    struct MetricsReport
    {
        double l2_cd_x100 = 0.0;
        double l1_cd = 0.0;
        std::optional<double> normal_consistency;
        double fscore_mu = 0.0;
        double fscore_2mu = 0.0;
        double mu = 0.002;
        std::size_t recon_samples = 0;
        std::size_t gt_samples = 0;

        std::string to_json() const;
        static std::string csv_header();
        std::string csv_row() const;
    };

    /// All metrics in one pass. When `require_normals` is set and either
    /// cloud lacks normals, throws ConfigError; otherwise normal consistency
    /// is left empty in that case.
    MetricsReport evaluate(const PointCloud& recon, const PointCloud& gt, double mu = 0.002,
                           bool require_normals = false);
}
