#include "psnerf/synth.hpp"

#include <fstream>

#include <json.hpp>

#include "psnerf/mesh.hpp"

namespace psnerf {

using nlohmann::json;

void SyntheticSceneSpec::validate() const {
    if (n_views < 1) throw std::invalid_argument("scene spec: need at least one view");
    if (n_lights < 1) throw std::invalid_argument("scene spec: need at least one light");
    if (n_holdout_lights < 0) throw std::invalid_argument("scene spec: negative holdout count");
    if (resolution < 16) throw std::invalid_argument("scene spec: resolution must be >= 16");
    if (sphere_radius <= 0 || bump_radius <= 0 || torus_major <= 0 || torus_minor <= 0)
        throw std::invalid_argument("scene spec: shape radii must be positive");
    if (light_intensity <= 0) throw std::invalid_argument("scene spec: non-positive intensity");
    basis.validate();
    if (specular_weights.size() != 0 && specular_weights.size() != basis.lambdas.size())
        throw std::invalid_argument("scene spec: specular weight count mismatch");
}

AnalyticField SyntheticSceneSpec::make_field(double max_density, double sharpness) const {
    switch (shape) {
        case Shape::Sphere:
            return AnalyticField({{Vec3::Zero(), sphere_radius}}, max_density, sharpness);
        case Shape::SphereBump:
            return AnalyticField({{Vec3::Zero(), sphere_radius}, {bump_center, bump_radius}},
                                 max_density, sharpness);
        case Shape::Torus:
            return AnalyticField(torus_major, torus_minor, max_density, sharpness);
    }
    throw std::logic_error("scene spec: unknown shape");
}

Vec3 SyntheticSceneSpec::albedo_at(const Vec3& x) const {
    if (albedo == AlbedoKind::Constant) return albedo_rgb;
    // smooth positive modulation, range factor [0.4, 1.0]
    double m = 0.7 + 0.3 * std::sin(4.0 * x.x()) * std::sin(4.0 * x.y()) * std::cos(4.0 * x.z());
    return albedo_rgb * m;
}

Eigen::ArrayXd SyntheticSceneSpec::omega() const {
    if (specular_weights.size() == 0) return Eigen::ArrayXd::Zero(basis.lambdas.size());
    return specular_weights;
}

std::string SyntheticSceneSpec::to_json() const {
    json j;
    j["shape"] = shape == Shape::Sphere ? "sphere" : shape == Shape::SphereBump ? "sphere_bump"
                                                                                : "torus";
    j["sphere_radius"] = sphere_radius;
    j["bump_radius"] = bump_radius;
    j["bump_center"] = {bump_center.x(), bump_center.y(), bump_center.z()};
    j["torus_major"] = torus_major;
    j["torus_minor"] = torus_minor;
    j["albedo"] = albedo == AlbedoKind::Constant ? "constant" : "procedural";
    j["albedo_rgb"] = {albedo_rgb.x(), albedo_rgb.y(), albedo_rgb.z()};
    j["basis_lambdas"] = std::vector<double>(basis.lambdas.data(),
                                             basis.lambdas.data() + basis.lambdas.size());
    Eigen::ArrayXd w = omega();
    j["specular_weights"] = std::vector<double>(w.data(), w.data() + w.size());
    j["n_views"] = n_views;
    j["n_lights"] = n_lights;
    j["n_holdout_lights"] = n_holdout_lights;
    j["resolution"] = resolution;
    j["camera_distance"] = camera_distance;
    j["focal_factor"] = focal_factor;
    j["light_cone_deg"] = light_cone_deg;
    j["light_intensity"] = light_intensity;
    j["seed"] = seed;
    return j.dump(2);
}

SyntheticSceneSpec SyntheticSceneSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    SyntheticSceneSpec s;
    std::string shape = j.at("shape").get<std::string>();
    if (shape == "sphere")
        s.shape = Shape::Sphere;
    else if (shape == "sphere_bump")
        s.shape = Shape::SphereBump;
    else if (shape == "torus")
        s.shape = Shape::Torus;
    else
        throw std::runtime_error("scene spec: unknown shape '" + shape + "'");
    s.sphere_radius = j.at("sphere_radius").get<double>();
    s.bump_radius = j.at("bump_radius").get<double>();
    auto bc = j.at("bump_center");
    s.bump_center = Vec3(bc.at(0).get<double>(), bc.at(1).get<double>(), bc.at(2).get<double>());
    s.torus_major = j.at("torus_major").get<double>();
    s.torus_minor = j.at("torus_minor").get<double>();
    s.albedo = j.at("albedo").get<std::string>() == "constant" ? AlbedoKind::Constant
                                                               : AlbedoKind::Procedural;
    auto ar = j.at("albedo_rgb");
    s.albedo_rgb = Vec3(ar.at(0).get<double>(), ar.at(1).get<double>(), ar.at(2).get<double>());
    auto bl = j.at("basis_lambdas").get<std::vector<double>>();
    s.basis.lambdas = Eigen::Map<const Eigen::ArrayXd>(bl.data(), bl.size());
    auto sw = j.at("specular_weights").get<std::vector<double>>();
    s.specular_weights = Eigen::Map<const Eigen::ArrayXd>(sw.data(), sw.size());
    s.n_views = j.at("n_views").get<int>();
    s.n_lights = j.at("n_lights").get<int>();
    s.n_holdout_lights = j.at("n_holdout_lights").get<int>();
    s.resolution = j.at("resolution").get<int>();
    s.camera_distance = j.at("camera_distance").get<double>();
    s.focal_factor = j.at("focal_factor").get<double>();
    s.light_cone_deg = j.at("light_cone_deg").get<double>();
    s.light_intensity = j.at("light_intensity").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
}

namespace {

// Exact root along the ray by sphere tracing the SDF.
struct TraceHit {
    bool hit = false;
    double t = 0;
    Vec3 point = Vec3::Zero();
};

TraceHit sphere_trace(const AnalyticField& field, const Vec3& origin, const Vec3& dir,
                      double t_min, double t_max) {
    double t = t_min;
    for (int i = 0; i < 512 && t < t_max; ++i) {
        Vec3 p = origin + t * dir;
        double d = field.sdf(p);
        if (d < 1e-11) return {true, t, p};
        t += d;
    }
    return {};
}

}  // namespace

HitFn make_sdf_hit_fn(const AnalyticField& field) {
    return [&field](const Ray& ray) {
        double t_max = ray.far > ray.near ? ray.far : 100.0;  // unset range: trace far
        TraceHit th = sphere_trace(field, ray.origin, ray.direction, ray.near, t_max);
        SurfaceHit hit;
        if (!th.hit) return hit;
        hit.hit = true;
        hit.t = th.t;
        hit.point = th.point;
        hit.normal = field.sdf_gradient(th.point).normalized();
        if (hit.normal.dot(ray.direction) > 0) hit.normal = -hit.normal;
        return hit;
    };
}

AnalyticDecomposition::AnalyticDecomposition(const SyntheticSceneSpec& spec)
    : spec_(spec), field_(spec.make_field()) {
    spec_.validate();
}

Vec3 AnalyticDecomposition::normal(const Vec3& x) const {
    return field_.sdf_gradient(x).normalized();
}

Vec3 AnalyticDecomposition::albedo(const Vec3& x) const { return spec_.albedo_at(x); }

Eigen::ArrayXd AnalyticDecomposition::specular_weights(const Vec3&) const { return spec_.omega(); }

double AnalyticDecomposition::visibility(const Vec3& x, const Vec3& w_i) const {
    // shadow ray with a small normal-offset start to leave the surface
    Vec3 start = x + 1e-4 * w_i + 1e-4 * normal(x);
    double t = 0;
    for (int i = 0; i < 512 && t < 4.0; ++i) {
        Vec3 p = start + t * w_i;
        double d = field_.sdf(p);
        if (d < 1e-7) return 0.0;
        t += std::max(d, 1e-5);
    }
    return 1.0;
}

std::vector<Camera> generator_cameras(const SyntheticSceneSpec& spec) {
    std::vector<Camera> cams;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < spec.n_views; ++i) {
        double azim = golden * i;
        double elev = (25.0 + 35.0 * (spec.n_views == 1 ? 0.5
                                                        : static_cast<double>(i) /
                                                              (spec.n_views - 1))) *
                      M_PI / 180.0;
        Vec3 eye = spec.camera_distance *
                   Vec3(std::cos(elev) * std::cos(azim), std::sin(elev),
                        std::cos(elev) * std::sin(azim));
        cams.push_back(make_lookat_camera(eye, Vec3::Zero(), Vec3::UnitY(),
                                          spec.focal_factor * spec.resolution, spec.resolution,
                                          spec.resolution));
    }
    return cams;
}

std::vector<DirectionalLight> generator_lights(const SyntheticSceneSpec& spec, int view_index,
                                               const Camera& camera) {
    // directions in a cone around the view axis (lights sit near the camera,
    // the DiLiGenT capture pattern); deterministic in (seed, view)
    RngStream rng = RngStream(spec.seed).fork(0x300 + static_cast<std::uint64_t>(view_index));
    Vec3 axis = camera.center().normalized();
    Vec3 u = axis.cross(std::abs(axis.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX()).normalized();
    Vec3 v = axis.cross(u);

    std::vector<DirectionalLight> lights;
    const int total = spec.n_lights + spec.n_holdout_lights;
    const double cos_cone = std::cos(spec.light_cone_deg * M_PI / 180.0);
    for (int j = 0; j < total; ++j) {
        double c = cos_cone + (1.0 - cos_cone) * rng.next_uniform();
        double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        double phi = 2.0 * M_PI * rng.next_uniform();
        DirectionalLight l;
        l.id = view_index * total + j;
        l.direction = (c * axis + s * (std::cos(phi) * u + std::sin(phi) * v)).normalized();
        l.intensity = spec.light_intensity;  // identical for every light
        lights.push_back(l);
    }
    return lights;
}

Image generator_render(const SyntheticSceneSpec& spec, const Camera& camera,
                       const DirectionalLight& light) {
    // Standalone forward path: sphere tracing, SDF normals, shadow rays, and
    // the shading formula written out directly.
    AnalyticField field = spec.make_field();
    Eigen::ArrayXd w = spec.omega();
    Image img(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            Ray ray = pixel_to_ray(camera, x + 0.5, y + 0.5);
            TraceHit th = sphere_trace(field, ray.origin, ray.direction,
                                       spec.camera_distance - 1.5, spec.camera_distance + 1.5);
            if (!th.hit) continue;
            Vec3 n = field.sdf_gradient(th.point).normalized();
            Vec3 l = light.direction;
            double cosine = n.dot(l);
            if (cosine <= 0) continue;

            // shadow ray
            double vis = 1.0;
            Vec3 start = th.point + 1e-4 * l + 1e-4 * n;
            double t = 0;
            for (int i = 0; i < 512 && t < 4.0; ++i) {
                double d = field.sdf(start + t * l);
                if (d < 1e-7) {
                    vis = 0.0;
                    break;
                }
                t += std::max(d, 1e-5);
            }
            if (vis == 0.0) continue;

            Vec3 view_dir = -ray.direction;
            Vec3 h = (l + view_dir).normalized();
            double rho_s = (w * (spec.basis.lambdas * (h.dot(n) - 1.0)).exp()).sum();
            Vec3 rho = spec.albedo_at(th.point) + Vec3::Constant(rho_s);
            Vec3 c = vis * light.intensity * cosine * rho;
            for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = static_cast<float>(c[ch]);
        }
    return img;
}

void generate_scene(const SyntheticSceneSpec& spec, const std::filesystem::path& root) {
    spec.validate();
    AnalyticField field = spec.make_field();
    std::vector<Camera> cams = generator_cameras(spec);

    std::filesystem::create_directories(root / "gt");

    json manifest;
    manifest["bbox"] = {{"min", {-1.0, -1.0, -1.0}}, {"max", {1.0, 1.0, 1.0}}};
    manifest["lights"] = json::array();
    manifest["views"] = json::array();
    json gt_lights = json::array();

    for (int v = 0; v < spec.n_views; ++v) {
        const Camera& cam = cams[v];
        char dirname[16];
        std::snprintf(dirname, sizeof(dirname), "view_%02d", v);
        auto vdir = root / dirname;
        std::filesystem::create_directories(vdir);
        std::filesystem::create_directories(root / "gt" / dirname);

        std::vector<DirectionalLight> lights = generator_lights(spec, v, cam);

        // mask + gt maps from one tracing pass
        Image mask(cam.width, cam.height, 1);
        Image normal_cam(cam.width, cam.height, 3);
        Image albedo_map(cam.width, cam.height, 3);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                Ray ray = pixel_to_ray(cam, x + 0.5, y + 0.5);
                TraceHit th = sphere_trace(field, ray.origin, ray.direction,
                                           spec.camera_distance - 1.5, spec.camera_distance + 1.5);
                if (!th.hit) continue;
                mask.at(x, y) = 1.f;
                Vec3 n = normal_world_to_camera(cam, field.sdf_gradient(th.point).normalized());
                Vec3 a = spec.albedo_at(th.point);
                for (int c = 0; c < 3; ++c) {
                    normal_cam.at(x, y, c) = static_cast<float>(n[c]);
                    albedo_map.at(x, y, c) = static_cast<float>(a[c]);
                }
            }
        write_png(vdir / "mask.png", mask);
        write_pfm(root / "gt" / dirname / "normal.pfm", normal_cam);
        write_pfm(root / "gt" / dirname / "albedo.pfm", albedo_map);

        json jview;
        jview["id"] = v;
        jview["dir"] = dirname;
        jview["split"] = "train";
        json jcam;
        jcam["fx"] = cam.fx;
        jcam["fy"] = cam.fy;
        jcam["cx"] = cam.cx;
        jcam["cy"] = cam.cy;
        jcam["width"] = cam.width;
        jcam["height"] = cam.height;
        std::vector<double> rot(9);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) rot[r * 3 + c] = cam.rotation(r, c);
        jcam["rotation"] = rot;
        jcam["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
        jview["camera"] = jcam;
        jview["images"] = json::array();

        for (int j = 0; j < static_cast<int>(lights.size()); ++j) {
            const DirectionalLight& light = lights[j];
            bool holdout = j >= spec.n_lights;
            json jl;
            jl["id"] = light.id;
            jl["view"] = v;
            jl["direction"] = {light.direction.x(), light.direction.y(), light.direction.z()};
            jl["intensity"] = light.intensity;
            jl["holdout"] = holdout;
            gt_lights.push_back(jl);
            if (holdout) continue;

            char fname[16];
            std::snprintf(fname, sizeof(fname), "L_%03d.pfm", j);
            write_pfm(vdir / fname, generator_render(spec, cam, light));
            manifest["lights"].push_back(
                {{"id", light.id},
                 {"direction", {light.direction.x(), light.direction.y(), light.direction.z()}},
                 {"intensity", light.intensity}});
            jview["images"].push_back({{"file", fname}, {"light_id", light.id}});
        }
        manifest["views"].push_back(jview);
    }

    {
        std::ofstream f(root / "params.json");
        if (!f) throw std::runtime_error("generate_scene: cannot write " +
                                         (root / "params.json").string());
        f << manifest.dump(2) << "\n";
    }
    {
        std::ofstream f(root / "gt" / "lights.json");
        f << json({{"lights", gt_lights}}).dump(2) << "\n";
    }
    {
        std::ofstream f(root / "gt" / "scene.json");
        f << spec.to_json() << "\n";
    }
    save_obj(root / "gt" / "mesh.obj",
             extract_mesh(field, Vec3::Constant(-1), Vec3::Constant(1), 96));
}

}  // namespace psnerf
