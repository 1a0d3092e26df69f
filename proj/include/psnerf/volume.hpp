#pragma once

#include <functional>
#include <optional>

#include "psnerf/field.hpp"

namespace psnerf {

struct RaySampling {
    int samples_per_ray = 64;
    bool stratified_jitter = true;

    void validate() const {
        if (samples_per_ray < 2)
            throw std::invalid_argument("RaySampling: need at least 2 samples per ray");
    }
};

// Exponentially decaying sampling-interval half-width with a floor.
struct ShrinkSchedule {
    double initial_half_width = 1.0;
    double floor_half_width = 0.05;
    double decay_iterations = 1000.0;  // e-folding constant

    // half_width(it) = floor + (initial - floor) * exp(-it / decay_iterations)
    double half_width(long iteration) const {
        if (iteration < 0) throw std::invalid_argument("shrink_schedule: negative iteration");
        return floor_half_width + (initial_half_width - floor_half_width) *
                                      std::exp(-static_cast<double>(iteration) / decay_iterations);
    }
};

// Sample depths: K stratified samples in [near, far); jitter from rng if given.
std::vector<double> stratified_depths(double near, double far, int k, RngStream* rng);

struct CompositeResult {
    Vec3 color = Vec3::Zero();
    double expected_depth = 0.0;
    double acc_opacity = 0.0;
    Eigen::ArrayXd weights;
    Eigen::ArrayXd transmittance;  // T_k before segment k
};

// Piecewise-constant compositing: weights w_k = T_k (1 - exp(-sigma_k delta_k)).
CompositeResult composite(const Eigen::ArrayXd& sigmas, const Eigen::ArrayXd& deltas,
                          const Eigen::ArrayXXd& colors, const Eigen::ArrayXd& ts);

struct VolumeRenderResult {
    Vec3 color;
    double expected_depth;
    double acc_opacity;
};

using ColorFn = std::function<Eigen::ArrayXXd(const Mat3X& pts, const Mat3X& dirs)>;

VolumeRenderResult volume_render(const DensityField& field, const ColorFn& color_fn,
                                 const Ray& ray, const RaySampling& sampling,
                                 RngStream* rng = nullptr);

struct DegenerateNormalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Outward unit normal: the density step increases toward the interior, so the
// outward direction is the negated density gradient. Throws on a vanishing
// gradient (caller skips the pixel).
Vec3 derived_normal(const DensityField& field, const Vec3& x, double gradient_floor = 1e-8);

struct SurfaceHit {
    bool hit = false;
    Vec3 point = Vec3::Zero();
    double t = 0.0;
    Vec3 normal = Vec3::UnitZ();
};

// Opacity proxy alpha(x) = 1 - exp(-sigma(x) * delta_ref), delta_ref the
// current sample spacing; first crossing of `level` refined by secant to
// |f| < 1e-6 or 16 iterations. Normal oriented toward the ray origin.
SurfaceHit find_surface(const DensityField& field, const Ray& ray, double level,
                        const RaySampling& sampling);

struct VisibilityConfig {
    int samples = 64;
    double t_max = 4.0;         // march length toward the light
    double offset_spacings = 2.0;  // launch offset in units of sample spacing
};

// exp(-accumulated density) from x toward the light along w_i; in [0, 1].
double ray_visibility(const DensityField& field, const Vec3& x, const Vec3& w_i,
                      const VisibilityConfig& cfg);

// Ray/bbox intersection with padding; nullopt if the ray misses the box.
std::optional<std::pair<double, double>> ray_bbox_range(const Ray& ray, const Vec3& bmin,
                                                        const Vec3& bmax, double pad_fraction = 0.05);

}  // namespace psnerf
