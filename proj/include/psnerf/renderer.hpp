#pragma once

#include "psnerf/brdf.hpp"
#include "psnerf/volume.hpp"

namespace psnerf {

// Scene decomposition surface: per-point normal, albedo, specular weights,
// and per-(point, light-direction) visibility. MLP-backed during training,
// analytic for ground-truth cross-validation.
class Decomposition {
public:
    virtual ~Decomposition() = default;
    virtual Vec3 normal(const Vec3& x) const = 0;
    virtual Vec3 albedo(const Vec3& x) const = 0;
    virtual Eigen::ArrayXd specular_weights(const Vec3& x) const = 0;
    virtual double visibility(const Vec3& x, const Vec3& w_i) const = 0;
};

struct ShadingSample {
    Vec3 point;
    Vec3 normal;            // unit
    Vec3 albedo;            // [0,1]^3
    Eigen::ArrayXd omega;   // non-negative SG weights
    double visibility;      // [0,1]
    Vec3 light_dir;         // unit, surface-to-light
    double light_intensity; // > 0
    Vec3 view_dir;          // unit, surface-to-viewer
};

// I = v * L * f_r * max(w_i . n, 0). The cosine clamp is a config knob;
// unclamped reproduces the rendering equation literally.
Vec3 shade(const ShadingSample& sample, const SGBasisSpec& basis, bool clamp_cosine = true);

using HitFn = std::function<SurfaceHit(const Ray&)>;

HitFn make_field_hit_fn(const DensityField& field, const Vec3& bbox_min, const Vec3& bbox_max,
                        double level, const RaySampling& sampling);

// Surface at the expected depth of a full volume render (hit when the
// accumulated opacity exceeds min_opacity); robust for soft trained fields
// where no single sample's alpha crosses a fixed level. Normal from the
// density gradient at the expected-depth point, oriented toward the origin.
HitFn make_expected_depth_hit_fn(const DensityField& field, const Vec3& bbox_min,
                                 const Vec3& bbox_max, const RaySampling& sampling,
                                 double min_opacity = 0.5);

struct RenderedImage {
    Image image;           // 3-channel radiance
    Image hit_mask;        // 1 where a surface hit was found inside the object mask
    int masked_pixels = 0;
    int hit_pixels = 0;
};

RenderedImage render_image(const Decomposition& decomp, const SGBasisSpec& basis,
                           const View& view, const DirectionalLight& light, const HitFn& hits,
                           bool clamp_cosine = true);

// Mean over all per-light renders of the view (paper-style evaluation image).
RenderedImage light_averaged_image(const Decomposition& decomp, const SGBasisSpec& basis,
                                   const View& view, const std::vector<DirectionalLight>& lights,
                                   const HitFn& hits, bool clamp_cosine = true);

}  // namespace psnerf
