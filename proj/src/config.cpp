#include "psnerf/config.hpp"

#include <fstream>
#include <json.hpp>

namespace psnerf {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + section + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + section);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
    }
}

Vec3 get_vec3(const json& j, const char* key, const Vec3& fallback) {
    if (!j.contains(key)) return fallback;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw ConfigError("config: '" + std::string(key) + "' must be a 3-element array");
    return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
}

json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

SyntheticSceneSpec parse_synth(const json& j) {
    check_keys(j, "synth",
               {"shape", "sphere_radius", "bump_radius", "bump_center", "torus_major",
                "torus_minor", "albedo", "albedo_rgb", "basis_lambdas", "specular_weights",
                "n_views", "n_lights", "n_holdout_lights", "resolution", "camera_distance",
                "focal_factor", "light_cone_deg", "light_intensity", "seed"});
    SyntheticSceneSpec s;
    std::string shape = get_or<std::string>(j, "shape", "sphere");
    if (shape == "sphere")
        s.shape = SyntheticSceneSpec::Shape::Sphere;
    else if (shape == "sphere_bump")
        s.shape = SyntheticSceneSpec::Shape::SphereBump;
    else if (shape == "torus")
        s.shape = SyntheticSceneSpec::Shape::Torus;
    else
        throw ConfigError("config: unknown synth shape '" + shape + "'");
    s.sphere_radius = get_or(j, "sphere_radius", s.sphere_radius);
    s.bump_radius = get_or(j, "bump_radius", s.bump_radius);
    s.bump_center = get_vec3(j, "bump_center", s.bump_center);
    s.torus_major = get_or(j, "torus_major", s.torus_major);
    s.torus_minor = get_or(j, "torus_minor", s.torus_minor);
    std::string albedo = get_or<std::string>(j, "albedo", "constant");
    if (albedo == "constant")
        s.albedo = SyntheticSceneSpec::AlbedoKind::Constant;
    else if (albedo == "procedural")
        s.albedo = SyntheticSceneSpec::AlbedoKind::Procedural;
    else
        throw ConfigError("config: unknown synth albedo '" + albedo + "'");
    s.albedo_rgb = get_vec3(j, "albedo_rgb", s.albedo_rgb);
    if (j.contains("basis_lambdas")) {
        auto bl = j.at("basis_lambdas").get<std::vector<double>>();
        s.basis.lambdas = Eigen::Map<const Eigen::ArrayXd>(bl.data(),
                                                           static_cast<Eigen::Index>(bl.size()));
    }
    if (j.contains("specular_weights")) {
        auto sw = j.at("specular_weights").get<std::vector<double>>();
        s.specular_weights =
            Eigen::Map<const Eigen::ArrayXd>(sw.data(), static_cast<Eigen::Index>(sw.size()));
    }
    s.n_views = get_or(j, "n_views", s.n_views);
    s.n_lights = get_or(j, "n_lights", s.n_lights);
    s.n_holdout_lights = get_or(j, "n_holdout_lights", s.n_holdout_lights);
    s.resolution = get_or(j, "resolution", s.resolution);
    s.camera_distance = get_or(j, "camera_distance", s.camera_distance);
    s.focal_factor = get_or(j, "focal_factor", s.focal_factor);
    s.light_cone_deg = get_or(j, "light_cone_deg", s.light_cone_deg);
    s.light_intensity = get_or(j, "light_intensity", s.light_intensity);
    s.seed = get_or(j, "seed", s.seed);
    return s;
}

json dump_synth(const SyntheticSceneSpec& s) { return json::parse(s.to_json()); }

PriorConfig parse_prior(const json& j) {
    check_keys(j, "prior",
               {"source", "path", "normal_noise_deg", "light_noise_deg", "intensity_sigma"});
    PriorConfig p;
    std::string src = get_or<std::string>(j, "source", "oracle");
    if (src == "oracle")
        p.source = PriorConfig::Source::Oracle;
    else if (src == "files")
        p.source = PriorConfig::Source::Files;
    else
        throw ConfigError("config: unknown prior source '" + src + "'");
    p.path = get_or<std::string>(j, "path", "");
    p.normal_noise_deg = get_or(j, "normal_noise_deg", p.normal_noise_deg);
    p.light_noise_deg = get_or(j, "light_noise_deg", p.light_noise_deg);
    p.intensity_sigma = get_or(j, "intensity_sigma", p.intensity_sigma);
    if (p.source == PriorConfig::Source::Files && p.path.empty())
        throw ConfigError("config: prior source 'files' requires 'path'");
    return p;
}

json dump_prior(const PriorConfig& p) {
    json j;
    j["source"] = p.source == PriorConfig::Source::Oracle ? "oracle" : "files";
    j["path"] = p.path.string();
    j["normal_noise_deg"] = p.normal_noise_deg;
    j["light_noise_deg"] = p.light_noise_deg;
    j["intensity_sigma"] = p.intensity_sigma;
    return j;
}

RadianceFieldSpec parse_field_spec(const json& j) {
    check_keys(j, "stage1.field",
               {"pe_x", "pe_d", "use_viewdir", "width", "n_layers", "skip_layers", "feature_dim",
                "head_layers", "head_width"});
    RadianceFieldSpec s;
    s.pe_x = get_or(j, "pe_x", s.pe_x);
    s.pe_d = get_or(j, "pe_d", s.pe_d);
    s.use_viewdir = get_or(j, "use_viewdir", s.use_viewdir);
    s.width = get_or(j, "width", s.width);
    s.n_layers = get_or(j, "n_layers", s.n_layers);
    if (j.contains("skip_layers")) {
        s.skip_layers.clear();
        for (int v : j.at("skip_layers").get<std::vector<int>>()) s.skip_layers.insert(v);
    }
    s.feature_dim = get_or(j, "feature_dim", s.feature_dim);
    s.head_layers = get_or(j, "head_layers", s.head_layers);
    s.head_width = get_or(j, "head_width", s.head_width);
    return s;
}

json dump_field_spec(const RadianceFieldSpec& s) {
    json j;
    j["pe_x"] = s.pe_x;
    j["pe_d"] = s.pe_d;
    j["use_viewdir"] = s.use_viewdir;
    j["width"] = s.width;
    j["n_layers"] = s.n_layers;
    j["skip_layers"] = std::vector<int>(s.skip_layers.begin(), s.skip_layers.end());
    j["feature_dim"] = s.feature_dim;
    j["head_layers"] = s.head_layers;
    j["head_width"] = s.head_width;
    return j;
}

Stage1Config parse_stage1(const json& j) {
    check_keys(j, "stage1",
               {"alpha1", "alpha2", "alpha3", "learning_rate", "iterations", "rays_per_batch",
                "normal_loss_start", "samples_per_ray", "shrink_initial", "shrink_floor",
                "shrink_decay", "smooth_eps_stddev", "fd_step", "target", "field"});
    Stage1Config c;
    c.alpha1 = get_or(j, "alpha1", c.alpha1);
    c.alpha2 = get_or(j, "alpha2", c.alpha2);
    c.alpha3 = get_or(j, "alpha3", c.alpha3);
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.iterations = get_or(j, "iterations", c.iterations);
    c.rays_per_batch = get_or(j, "rays_per_batch", c.rays_per_batch);
    c.normal_loss_start = get_or(j, "normal_loss_start", c.normal_loss_start);
    c.samples_per_ray = get_or(j, "samples_per_ray", c.samples_per_ray);
    c.shrink.initial_half_width = get_or(j, "shrink_initial", c.shrink.initial_half_width);
    c.shrink.floor_half_width = get_or(j, "shrink_floor", c.shrink.floor_half_width);
    c.shrink.decay_iterations = get_or(j, "shrink_decay", c.shrink.decay_iterations);
    c.smooth_eps_stddev = get_or(j, "smooth_eps_stddev", c.smooth_eps_stddev);
    c.fd_step = get_or(j, "fd_step", c.fd_step);
    std::string target = get_or<std::string>(j, "target", "light_mean");
    if (target == "light_mean")
        c.target = Stage1Config::Target::LightMean;
    else if (target == "per_light")
        c.target = Stage1Config::Target::PerLight;
    else
        throw ConfigError("config: unknown stage1 target '" + target + "'");
    if (j.contains("field")) c.field_spec = parse_field_spec(j.at("field"));
    return c;
}

json dump_stage1(const Stage1Config& c) {
    json j;
    j["alpha1"] = c.alpha1;
    j["alpha2"] = c.alpha2;
    j["alpha3"] = c.alpha3;
    j["learning_rate"] = c.learning_rate;
    j["iterations"] = c.iterations;
    j["rays_per_batch"] = c.rays_per_batch;
    j["normal_loss_start"] = c.normal_loss_start;
    j["samples_per_ray"] = c.samples_per_ray;
    j["shrink_initial"] = c.shrink.initial_half_width;
    j["shrink_floor"] = c.shrink.floor_half_width;
    j["shrink_decay"] = c.shrink.decay_iterations;
    j["smooth_eps_stddev"] = c.smooth_eps_stddev;
    j["fd_step"] = c.fd_step;
    j["target"] = c.target == Stage1Config::Target::LightMean ? "light_mean" : "per_light";
    j["field"] = dump_field_spec(c.field_spec);
    return j;
}

Stage2Spec parse_stage2_spec(const json& j) {
    check_keys(j, "stage2.networks",
               {"pe_x", "pe_d", "normal_width", "normal_layers", "normal_skip", "albedo_width",
                "albedo_layers", "albedo_skip", "specular_width", "specular_layers",
                "visibility_width", "visibility_layers", "visibility_skip", "basis_lambdas"});
    Stage2Spec s;
    s.pe_x = get_or(j, "pe_x", s.pe_x);
    s.pe_d = get_or(j, "pe_d", s.pe_d);
    s.normal_width = get_or(j, "normal_width", s.normal_width);
    s.normal_layers = get_or(j, "normal_layers", s.normal_layers);
    s.normal_skip = get_or(j, "normal_skip", s.normal_skip);
    s.albedo_width = get_or(j, "albedo_width", s.albedo_width);
    s.albedo_layers = get_or(j, "albedo_layers", s.albedo_layers);
    s.albedo_skip = get_or(j, "albedo_skip", s.albedo_skip);
    s.specular_width = get_or(j, "specular_width", s.specular_width);
    s.specular_layers = get_or(j, "specular_layers", s.specular_layers);
    s.visibility_width = get_or(j, "visibility_width", s.visibility_width);
    s.visibility_layers = get_or(j, "visibility_layers", s.visibility_layers);
    s.visibility_skip = get_or(j, "visibility_skip", s.visibility_skip);
    if (j.contains("basis_lambdas")) {
        auto bl = j.at("basis_lambdas").get<std::vector<double>>();
        s.basis.lambdas = Eigen::Map<const Eigen::ArrayXd>(bl.data(),
                                                           static_cast<Eigen::Index>(bl.size()));
    }
    return s;
}

json dump_stage2_spec(const Stage2Spec& s) {
    json j;
    j["pe_x"] = s.pe_x;
    j["pe_d"] = s.pe_d;
    j["normal_width"] = s.normal_width;
    j["normal_layers"] = s.normal_layers;
    j["normal_skip"] = s.normal_skip;
    j["albedo_width"] = s.albedo_width;
    j["albedo_layers"] = s.albedo_layers;
    j["albedo_skip"] = s.albedo_skip;
    j["specular_width"] = s.specular_width;
    j["specular_layers"] = s.specular_layers;
    j["visibility_width"] = s.visibility_width;
    j["visibility_layers"] = s.visibility_layers;
    j["visibility_skip"] = s.visibility_skip;
    j["basis_lambdas"] = std::vector<double>(s.basis.lambdas.data(),
                                             s.basis.lambdas.data() + s.basis.lambdas.size());
    return j;
}

Stage2Config parse_stage2(const json& j) {
    check_keys(j, "stage2",
               {"beta1", "beta2", "beta3", "beta4", "beta5", "learning_rate", "warmup_iterations",
                "iterations", "points_per_batch", "smooth_eps_stddev", "learn_lights",
                "light_learning_rate", "clamp_cosine", "networks", "surface_samples",
                "visibility_samples", "visibility_t_max"});
    Stage2Config c;
    c.beta1 = get_or(j, "beta1", c.beta1);
    c.beta2 = get_or(j, "beta2", c.beta2);
    c.beta3 = get_or(j, "beta3", c.beta3);
    c.beta4 = get_or(j, "beta4", c.beta4);
    c.beta5 = get_or(j, "beta5", c.beta5);
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.warmup_iterations = get_or(j, "warmup_iterations", c.warmup_iterations);
    c.iterations = get_or(j, "iterations", c.iterations);
    c.points_per_batch = get_or(j, "points_per_batch", c.points_per_batch);
    c.smooth_eps_stddev = get_or(j, "smooth_eps_stddev", c.smooth_eps_stddev);
    c.learn_lights = get_or(j, "learn_lights", c.learn_lights);
    c.light_learning_rate = get_or(j, "light_learning_rate", c.light_learning_rate);
    c.clamp_cosine = get_or(j, "clamp_cosine", c.clamp_cosine);
    if (j.contains("networks")) c.spec = parse_stage2_spec(j.at("networks"));
    c.surface_sampling.samples_per_ray = get_or(j, "surface_samples",
                                                c.surface_sampling.samples_per_ray);
    c.visibility.samples = get_or(j, "visibility_samples", c.visibility.samples);
    c.visibility.t_max = get_or(j, "visibility_t_max", c.visibility.t_max);
    return c;
}

json dump_stage2(const Stage2Config& c) {
    json j;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["beta3"] = c.beta3;
    j["beta4"] = c.beta4;
    j["beta5"] = c.beta5;
    j["learning_rate"] = c.learning_rate;
    j["warmup_iterations"] = c.warmup_iterations;
    j["iterations"] = c.iterations;
    j["points_per_batch"] = c.points_per_batch;
    j["smooth_eps_stddev"] = c.smooth_eps_stddev;
    j["learn_lights"] = c.learn_lights;
    j["light_learning_rate"] = c.light_learning_rate;
    j["clamp_cosine"] = c.clamp_cosine;
    j["networks"] = dump_stage2_spec(c.spec);
    j["surface_samples"] = c.surface_sampling.samples_per_ray;
    j["visibility_samples"] = c.visibility.samples;
    j["visibility_t_max"] = c.visibility.t_max;
    return j;
}

RenderConfig parse_render(const json& j) {
    check_keys(j, "render", {"view", "light_id"});
    RenderConfig c;
    c.view = get_or(j, "view", c.view);
    c.light_id = get_or(j, "light_id", c.light_id);
    return c;
}

RelightConfig parse_relight(const json& j) {
    check_keys(j, "relight", {"view", "lights", "albedo_override", "specular_override"});
    RelightConfig c;
    c.view = get_or(j, "view", c.view);
    if (j.contains("lights")) {
        for (const auto& l : j.at("lights")) {
            check_keys(l, "relight.lights[]", {"direction", "intensity"});
            RelightLight rl;
            rl.direction = get_vec3(l, "direction", rl.direction);
            if (rl.direction.norm() < 1e-12)
                throw ConfigError("config: relight light direction must be nonzero");
            rl.direction.normalize();
            rl.intensity = get_or(l, "intensity", rl.intensity);
            if (rl.intensity <= 0) throw ConfigError("config: relight intensity must be positive");
            c.lights.push_back(rl);
        }
    }
    c.albedo_override = get_or<std::string>(j, "albedo_override", "");
    c.specular_override = get_or<std::string>(j, "specular_override", "");
    return c;
}

json dump_relight(const RelightConfig& c) {
    json j;
    j["view"] = c.view;
    j["lights"] = json::array();
    for (const auto& l : c.lights)
        j["lights"].push_back({{"direction", vec3_json(l.direction)}, {"intensity", l.intensity}});
    j["albedo_override"] = c.albedo_override.string();
    j["specular_override"] = c.specular_override.string();
    return j;
}

MeshConfig parse_mesh(const json& j) {
    check_keys(j, "mesh", {"resolution", "level"});
    MeshConfig c;
    c.resolution = get_or(j, "resolution", c.resolution);
    c.level = get_or(j, "level", c.level);
    return c;
}

EvalConfig parse_eval(const json& j) {
    check_keys(j, "eval", {"source", "mesh_resolution", "chamfer_samples"});
    EvalConfig c;
    std::string src = get_or<std::string>(j, "source", "stage2");
    if (src == "stage2")
        c.source = EvalConfig::Source::Stage2;
    else if (src == "gt")
        c.source = EvalConfig::Source::Gt;
    else
        throw ConfigError("config: unknown eval source '" + src + "'");
    c.mesh_resolution = get_or(j, "mesh_resolution", c.mesh_resolution);
    c.chamfer_samples = get_or(j, "chamfer_samples", c.chamfer_samples);
    return c;
}

}  // namespace

void RunConfig::validate() const {
    if (schema_version != 1)
        throw ConfigError("config: unsupported schema_version " + std::to_string(schema_version));
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    try {
        if (synth) synth->validate();
        stage1.validate();
        stage2.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (mesh.resolution < 8) throw ConfigError("config: mesh resolution must be >= 8");
    if (eval.mesh_resolution < 8) throw ConfigError("config: eval mesh resolution must be >= 8");
    if (eval.chamfer_samples < 1) throw ConfigError("config: chamfer_samples must be >= 1");
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "config root",
               {"schema_version", "dataset", "output", "seed", "workers", "synth", "prior",
                "stage1", "stage2", "render", "relight", "mesh", "eval"});
    RunConfig c;
    c.schema_version = get_or(j, "schema_version", 1);
    c.dataset = get_or<std::string>(j, "dataset", "");
    c.output = get_or<std::string>(j, "output", "");
    c.seed = get_or(j, "seed", c.seed);
    c.workers = get_or(j, "workers", c.workers);
    if (j.contains("synth")) c.synth = parse_synth(j.at("synth"));
    if (j.contains("prior")) c.prior = parse_prior(j.at("prior"));
    if (j.contains("stage1")) c.stage1 = parse_stage1(j.at("stage1"));
    if (j.contains("stage2")) c.stage2 = parse_stage2(j.at("stage2"));
    if (j.contains("render")) c.render = parse_render(j.at("render"));
    if (j.contains("relight")) c.relight = parse_relight(j.at("relight"));
    if (j.contains("mesh")) c.mesh = parse_mesh(j.at("mesh"));
    if (j.contains("eval")) c.eval = parse_eval(j.at("eval"));
    c.validate();
    return c;
}

std::string RunConfig::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["dataset"] = dataset.string();
    j["output"] = output.string();
    j["seed"] = seed;
    j["workers"] = workers;
    if (synth) j["synth"] = dump_synth(*synth);
    j["prior"] = dump_prior(prior);
    j["stage1"] = dump_stage1(stage1);
    j["stage2"] = dump_stage2(stage2);
    j["render"] = {{"view", render.view}, {"light_id", render.light_id}};
    j["relight"] = dump_relight(relight);
    j["mesh"] = {{"resolution", mesh.resolution}, {"level", mesh.level}};
    j["eval"] = {{"source", eval.source == EvalConfig::Source::Stage2 ? "stage2" : "gt"},
                 {"mesh_resolution", eval.mesh_resolution},
                 {"chamfer_samples", eval.chamfer_samples}};
    return j.dump(2);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return RunConfig::from_json(text);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path.string() + " for writing");
    f << cfg.to_json() << "\n";
}

}  // namespace psnerf
