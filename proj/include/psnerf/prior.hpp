#pragma once

#include "psnerf/rng.hpp"
#include "psnerf/scene.hpp"

namespace psnerf {

// Guidance source for both stages: per-view camera-frame normal maps and
// per-image light estimates, as an uncalibrated-PS tool would emit them.
struct GuidancePrior {
    struct ViewPrior {
        int view_id = -1;
        Image normal;  // 3-channel camera-frame unit normals
        Image valid;   // 1 where the normal is usable
    };
    struct LightEstimate {
        int view_id = -1;
        int light_id = -1;
        Vec3 direction = Vec3::UnitZ();  // world frame, surface-to-light
        double intensity = 1.0;
    };

    std::vector<ViewPrior> views;
    std::vector<LightEstimate> lights;

    const ViewPrior& view_by_id(int view_id) const;
    const LightEstimate& light_estimate(int view_id, int light_id) const;
};

// Layout: root/view_XX/normal.pfm + root/lights.json.
void save_prior(const std::filesystem::path& root, const GuidancePrior& prior);

// Loads and validates against the dataset (every dataset view present, map
// resolutions match, every light estimate names an existing image). Normals
// off unit length by more than 1e-3 are renormalized with a warning;
// zero-length pixels are marked invalid.
GuidancePrior load_prior(const std::filesystem::path& root, const MultiLightDataset& dataset);

// Synthetic stand-in for an uncalibrated-PS network: perturbs ground truth to
// a requested error level. Normals get random tangent-axis rotations with
// half-normal angles whose mean is target_mae_deg; each light direction is
// rotated by exactly light_perturb_deg about a random orthogonal axis;
// intensities get log-normal noise and are renormalized to mean 1.
// gt_normals_cam holds one camera-frame normal map per dataset view (zero
// pixels = invalid).
GuidancePrior synth_ups_oracle(const MultiLightDataset& dataset,
                               const std::vector<Image>& gt_normals_cam, double target_mae_deg,
                               double light_perturb_deg, RngStream& rng,
                               double intensity_sigma = 0.1);

}  // namespace psnerf
