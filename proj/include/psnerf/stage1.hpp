#pragma once

#include "psnerf/prior.hpp"
#include "psnerf/volume.hpp"

namespace psnerf {

struct Stage1Config {
    // loss weights for L' = a1 L'_c + a2 L'_n + a3 L'_ns
    double alpha1 = 1.0;
    double alpha2 = 0.05;
    double alpha3 = 0.005;
    double learning_rate = 1e-4;
    long iterations = 3000;  // full-scale runs use 100K; desk-scale default
    int rays_per_batch = 128;
    long normal_loss_start = 1000;  // L'_n joins after this many iterations
    int samples_per_ray = 32;
    ShrinkSchedule shrink{1.0, 0.06, 600.0};
    double smooth_eps_stddev = 0.01;  // perturbation for L'_ns
    double fd_step = 1e-3;            // derived-normal finite-difference step
    enum class Target { LightMean, PerLight };
    Target target = Target::LightMean;
    RadianceFieldSpec field_spec;
    std::uint64_t seed = 0;
    std::filesystem::path loss_csv;  // empty: no curve written

    void validate() const;
};

// One training batch, fully precomputed (deterministic given the seed).
struct Stage1Batch {
    Mat3X origins;            // 3 x B
    Mat3X dirs;               // 3 x B unit
    Eigen::ArrayXXd ts;       // K x B sorted sample depths
    Eigen::ArrayXXd deltas;   // K x B segment lengths
    Eigen::ArrayXXd target_rgb;  // 3 x B
    Mat3X guidance;           // 3 x B world-frame unit normals (where flagged)
    std::vector<char> has_guidance;
    Mat3X eps;                // 3 x B smoothness perturbations

    int size() const { return static_cast<int>(origins.cols()); }
    void validate() const;
};

struct Stage1Loss {
    ad::Var total;
    ad::Var lc;
    ad::Var ln;
    ad::Var lns;
};

// On-tape derived normals via central differences of the density along each
// axis: keeps the normal differentiable in the network weights without
// second-order tape support. Centers are treated as constants (the expected
// depth point is detached).
ad::Var fd_derived_normal(ad::Tape& t, const RadianceFieldSpec& spec, const MlpTapeParams& trunk,
                          const Mat3X& centers, double h);

// Eq. 3-6 composite loss on the tape. Normal terms attach at surface points
// (expected depth, detached) of rays whose accumulated opacity exceeds 0.5.
Stage1Loss loss_stage1(ad::Tape& t, const RadianceFieldSpec& spec, const MlpTapeParams& trunk,
                       const MlpTapeParams& head, const Stage1Batch& batch,
                       const Stage1Config& cfg, bool include_normal_loss);

struct Stage1State {
    RadianceField field;
    long iteration = 0;
    // per-iteration {total, Lc, Ln, Lns}
    std::vector<std::array<double, 4>> history;
};

Stage1State train_stage1(const MultiLightDataset& dataset, const GuidancePrior& prior,
                         const Stage1Config& cfg);

}  // namespace psnerf
