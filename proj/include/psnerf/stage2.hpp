#pragma once

#include "psnerf/prior.hpp"
#include "psnerf/renderer.hpp"
#include "psnerf/stage1.hpp"

namespace psnerf {

// Network shapes for the decomposition MLPs. Defaults are the full-scale
// sizes; small runs shrink widths/depths through the config.
struct Stage2Spec {
    int pe_x = 10;
    int pe_d = 10;  // light-direction encoding for f_v
    int normal_width = 128;
    int normal_layers = 4;
    int normal_skip = 2;
    int albedo_width = 128;
    int albedo_layers = 4;
    int albedo_skip = 2;
    int specular_width = 64;
    int specular_layers = 2;
    int visibility_width = 256;
    int visibility_layers = 8;
    int visibility_skip = 4;
    SGBasisSpec basis = SGBasisSpec::log_spaced();

    MlpSpec normal_spec() const;
    MlpSpec albedo_spec() const;
    MlpSpec specular_spec() const;
    MlpSpec visibility_spec() const;
    void validate() const;
};

// Neural decomposition surface: f_n, f_a, f_s over gamma(x), f_v over
// (gamma(x), gamma(w_i)). Implements the renderer-facing interface.
class SceneDecomposition : public Decomposition {
public:
    SceneDecomposition(Stage2Spec spec, RngStream& rng);
    SceneDecomposition(Stage2Spec spec, MlpParams fn, MlpParams fa, MlpParams fs, MlpParams fv);

    const Stage2Spec& spec() const { return spec_; }
    MlpParams& normal_params() { return fn_; }
    MlpParams& albedo_params() { return fa_; }
    MlpParams& specular_params() { return fs_; }
    MlpParams& visibility_params() { return fv_; }
    const MlpParams& normal_params() const { return fn_; }
    const MlpParams& albedo_params() const { return fa_; }
    const MlpParams& specular_params() const { return fs_; }
    const MlpParams& visibility_params() const { return fv_; }

    Vec3 normal(const Vec3& x) const override;
    Vec3 albedo(const Vec3& x) const override;
    Eigen::ArrayXd specular_weights(const Vec3& x) const override;
    double visibility(const Vec3& x, const Vec3& w_i) const override;

    Mat3X normal_batch(const Mat3X& pts) const;
    Eigen::ArrayXXd albedo_batch(const Mat3X& pts) const;
    Eigen::ArrayXd visibility_batch(const Mat3X& pts, const Mat3X& dirs) const;

    void save(const std::filesystem::path& dir) const;
    static SceneDecomposition load(const std::filesystem::path& dir, const Stage2Spec& spec);

private:
    Stage2Spec spec_;
    MlpParams fn_, fa_, fs_, fv_;
};

struct Stage2Config {
    // L'' = b1 L''_c + b2 L''_n + b3 L''_v + b4 L''_as + b5 L''_ss
    double beta1 = 1.0;
    double beta2 = 1.0;
    double beta3 = 1.0;
    double beta4 = 0.05;
    double beta5 = 0.01;
    double learning_rate = 5e-4;
    long warmup_iterations = 5000;  // f_n / f_v regression only, lights frozen
    long iterations = 5000;         // joint phase
    int points_per_batch = 128;
    double smooth_eps_stddev = 0.01;
    bool learn_lights = true;
    double light_learning_rate = 1e-3;
    bool clamp_cosine = true;
    Stage2Spec spec;
    RaySampling surface_sampling{64, false};
    VisibilityConfig visibility;
    std::uint64_t seed = 0;
    std::filesystem::path loss_csv;

    void validate() const;
};

// Per-image light being refined; initialized from the prior estimates.
struct RefinedLight {
    int view_id = -1;
    int light_id = -1;
    Vec3 direction = Vec3::UnitZ();  // unit, surface-to-light, world frame
    double intensity = 1.0;
};

// Surface geometry frozen from Stage I: one entry per (train view, masked
// pixel with a surface hit), plus cached V_sigma per image light (evaluated at
// the initial light directions).
struct SurfaceCache {
    struct ViewCache {
        int view_index = -1;  // into dataset.views
        std::vector<int> px, py;
        Mat3X points;
        Mat3X normals;    // derived N_sigma, unit, world frame
        Mat3X view_dirs;  // unit, surface-to-camera
        // visibility(i, p): V_sigma at point p toward image i's light
        Eigen::ArrayXXd visibility;

        int count() const { return static_cast<int>(points.cols()); }
    };
    std::vector<ViewCache> views;
};

SurfaceCache build_surface_cache(const DensityField& field, const MultiLightDataset& dataset,
                                 const std::vector<RefinedLight>& lights,
                                 const Stage2Config& cfg);

std::vector<RefinedLight> initial_lights(const MultiLightDataset& dataset,
                                         const GuidancePrior& prior);

// One training batch against a single image (one view, one light).
struct Stage2Batch {
    Mat3X points;             // 3 x B surface points
    Mat3X normals_sigma;      // 3 x B regression targets for L''_n
    Mat3X view_dirs;          // 3 x B unit
    Eigen::ArrayXXd target_rgb;  // 3 x B observed pixels
    Eigen::ArrayXd vis_sigma;    // B, targets for L''_v
    Mat3X eps;                   // 3 x B smoothness perturbations

    int size() const { return static_cast<int>(points.cols()); }
    void validate() const;
};

struct Stage2TapeNets {
    MlpTapeParams fn, fa, fs, fv;
};

struct Stage2Loss {
    ad::Var total;
    ad::Var lc, ln, lv, las, lss;
};

// Full composite loss on the tape. light_dir_raw (3x1) is normalized on the
// tape so light gradients flow through the shading cosine, the half vector,
// and the f_v direction encoding; intensity is a 1x1 variable. With
// joint=false only the regression terms L''_n and L''_v are assembled
// (warmup).
Stage2Loss loss_stage2(ad::Tape& t, const Stage2Spec& spec, const Stage2TapeNets& nets,
                       const Stage2Batch& batch, ad::Var light_dir_raw, ad::Var intensity,
                       const Stage2Config& cfg, bool joint);

struct Stage2State {
    SceneDecomposition decomp;
    std::vector<RefinedLight> lights;
    long iteration = 0;
    // per-iteration {total, Lc, Ln, Lv, Las, Lss}
    std::vector<std::array<double, 6>> history;
};

Stage2State train_stage2(const MultiLightDataset& dataset, const DensityField& stage1_field,
                         const GuidancePrior& prior, const Stage2Config& cfg);

// Direction error (mean degrees) and intensity error (mean relative, after a
// global least-squares scale) of estimates against references matched by
// light id. Throws if an estimate names an unknown id.
struct LightErrorReport {
    double direction_mae_deg = 0.0;
    double intensity_rel_err = 0.0;
    int count = 0;
};

LightErrorReport light_error(const std::vector<RefinedLight>& estimate,
                             const std::vector<DirectionalLight>& reference);

void save_lights(const std::filesystem::path& path, const std::vector<RefinedLight>& lights);
std::vector<RefinedLight> load_lights(const std::filesystem::path& path);

}  // namespace psnerf
