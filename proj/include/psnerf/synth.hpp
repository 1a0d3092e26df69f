#pragma once

#include "psnerf/renderer.hpp"
#include "psnerf/rng.hpp"

namespace psnerf {

// Ground-truth scene description for the synthetic data generator.
struct SyntheticSceneSpec {
    enum class Shape { Sphere, SphereBump, Torus };
    enum class AlbedoKind { Constant, Procedural };

    Shape shape = Shape::Sphere;
    double sphere_radius = 0.7;
    double bump_radius = 0.25;                 // SphereBump: small occluder sphere
    Vec3 bump_center = Vec3(0.55, 0.35, 0.3);  // on the upper surface
    double torus_major = 0.55;
    double torus_minor = 0.22;

    AlbedoKind albedo = AlbedoKind::Constant;
    Vec3 albedo_rgb = Vec3(0.6, 0.5, 0.4);

    SGBasisSpec basis = SGBasisSpec::log_spaced();
    Eigen::ArrayXd specular_weights;  // empty -> all zero (diffuse scene)

    int n_views = 5;          // upper-hemisphere cameras
    int n_lights = 8;         // per view, in a cone around the view direction
    int n_holdout_lights = 2; // extra per-view lights kept out of the dataset
    int resolution = 64;
    double camera_distance = 3.0;
    double focal_factor = 2.2;     // focal = factor * resolution
    double light_cone_deg = 35.0;  // light directions within this angle of the view axis
    double light_intensity = 1.0;  // identical for every light
    std::uint64_t seed = 0;

    void validate() const;
    AnalyticField make_field(double max_density = 40.0, double sharpness = 200.0) const;
    Vec3 albedo_at(const Vec3& x) const;
    Eigen::ArrayXd omega() const;  // specular weights sized to the basis

    std::string to_json() const;
    static SyntheticSceneSpec from_json(const std::string& text);
};

// Exact sphere-traced hit on the analytic SDF (machine-precision surface
// points; normal flipped toward the ray origin).
HitFn make_sdf_hit_fn(const AnalyticField& field);

// Ground-truth decomposition over the analytic scene: SDF normals, the spec's
// albedo/specular, and ray-traced binary shadow visibility.
class AnalyticDecomposition : public Decomposition {
public:
    explicit AnalyticDecomposition(const SyntheticSceneSpec& spec);

    Vec3 normal(const Vec3& x) const override;
    Vec3 albedo(const Vec3& x) const override;
    Eigen::ArrayXd specular_weights(const Vec3& x) const override;
    double visibility(const Vec3& x, const Vec3& w_i) const override;

    const AnalyticField& field() const { return field_; }

private:
    SyntheticSceneSpec spec_;
    AnalyticField field_;
};

// Renders the full dataset through the generator's own forward path (sphere
// tracing + shadow rays, independent of the engine renderer) and writes the
// dataset layout plus the gt/ sidecar (normal and albedo maps, mesh, lights
// including the held-out ones, and the scene spec itself).
void generate_scene(const SyntheticSceneSpec& spec, const std::filesystem::path& root);

// The generator's standalone image former, exposed for cross-validation:
// renders one view under one light. Returns linear radiance; pixels off the
// object are zero.
Image generator_render(const SyntheticSceneSpec& spec, const Camera& camera,
                       const DirectionalLight& light);

// Camera/light layout helpers (deterministic given the spec).
std::vector<Camera> generator_cameras(const SyntheticSceneSpec& spec);
// All lights for one view: first n_lights are dataset lights, then
// n_holdout_lights held out. Ids are view*(n_lights+n_holdout)+index.
std::vector<DirectionalLight> generator_lights(const SyntheticSceneSpec& spec, int view_index,
                                               const Camera& camera);

}  // namespace psnerf
