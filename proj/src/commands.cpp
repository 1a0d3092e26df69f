#include "psnerf/commands.hpp"

#include <fstream>
#include <iostream>
#include <json.hpp>

#include "psnerf/mesh.hpp"

namespace psnerf {

using nlohmann::json;

namespace {

MultiLightDataset require_dataset(const RunConfig& cfg) {
    if (cfg.dataset.empty()) throw ConfigError("config: 'dataset' is required for this command");
    if (!std::filesystem::exists(cfg.dataset / "params.json"))
        throw UpstreamError("dataset not found at " + cfg.dataset.string() +
                            " (run `psnerf synth` or point 'dataset' at an existing scene)");
    return load_dataset(cfg.dataset);
}

std::filesystem::path require_output(const RunConfig& cfg) {
    if (cfg.output.empty()) throw ConfigError("config: 'output' is required for this command");
    std::filesystem::create_directories(cfg.output);
    return cfg.output;
}

RadianceField require_stage1_field(const RunConfig& cfg) {
    auto dir = cfg.output / "stage1";
    if (!std::filesystem::exists(dir / "trunk.ckpt"))
        throw UpstreamError("stage-1 checkpoint missing at " + dir.string() +
                            " (run `psnerf stage1` first)");
    return RadianceField::load(dir, cfg.stage1.field_spec);
}

SceneDecomposition require_stage2_decomp(const RunConfig& cfg) {
    auto dir = cfg.output / "stage2";
    if (!std::filesystem::exists(dir / "fn.bin"))
        throw UpstreamError("stage-2 checkpoint missing at " + dir.string() +
                            " (run `psnerf stage2` first)");
    return SceneDecomposition::load(dir, cfg.stage2.spec);
}

std::string view_dir_name(int view_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%02d", view_id);
    return buf;
}

const View& view_by_id(const MultiLightDataset& ds, int view_id) {
    for (const View& v : ds.views)
        if (v.id == view_id) return v;
    throw ConfigError("config: no view with id " + std::to_string(view_id));
}

void write_image_pair(const std::filesystem::path& base, const Image& img) {
    write_pfm(base.string() + ".pfm", img);
    write_png_preview(base.string() + ".png", img);
}

// Material editing: replaces albedo / specular weights with view-space maps,
// sampled at the surface point's projection into the view camera.
class OverrideDecomposition : public Decomposition {
public:
    OverrideDecomposition(const Decomposition& base, const Camera& camera,
                          std::optional<Image> albedo, std::optional<Image> specular)
        : base_(base), camera_(camera), albedo_(std::move(albedo)),
          specular_(std::move(specular)) {}

    Vec3 normal(const Vec3& x) const override { return base_.normal(x); }
    double visibility(const Vec3& x, const Vec3& w_i) const override {
        return base_.visibility(x, w_i);
    }
    Vec3 albedo(const Vec3& x) const override {
        if (!albedo_) return base_.albedo(x);
        auto [px, py] = pixel_of(x, *albedo_);
        return Vec3(albedo_->at(px, py, 0), albedo_->at(px, py, 1),
                    albedo_->at(px, py, std::min(2, albedo_->channels - 1)));
    }
    Eigen::ArrayXd specular_weights(const Vec3& x) const override {
        if (!specular_) return base_.specular_weights(x);
        auto [px, py] = pixel_of(x, *specular_);
        Eigen::ArrayXd w(specular_->channels);
        for (int c = 0; c < specular_->channels; ++c) w[c] = specular_->at(px, py, c);
        return w;
    }

private:
    std::pair<int, int> pixel_of(const Vec3& x, const Image& map) const {
        Eigen::Vector2d uv = project(camera_, x);
        int px = std::clamp(static_cast<int>(std::floor(uv.x())), 0, map.width - 1);
        int py = std::clamp(static_cast<int>(std::floor(uv.y())), 0, map.height - 1);
        return {px, py};
    }

    const Decomposition& base_;
    Camera camera_;
    std::optional<Image> albedo_;
    std::optional<Image> specular_;
};

std::vector<DirectionalLight> gt_lights(const std::filesystem::path& dataset_root,
                                        bool include_holdout) {
    auto path = dataset_root / "gt" / "lights.json";
    std::ifstream f(path);
    if (!f)
        throw UpstreamError("ground-truth sidecar missing at " + path.string() +
                            " (only generator-made datasets carry one)");
    json j = json::parse(f);
    std::vector<DirectionalLight> out;
    for (const auto& e : j.at("lights")) {
        if (!include_holdout && e.at("holdout").get<bool>()) continue;
        DirectionalLight l;
        l.id = e.at("id").get<int>();
        auto d = e.at("direction");
        l.direction = Vec3(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
        l.intensity = e.at("intensity").get<double>();
        out.push_back(l);
    }
    return out;
}

}  // namespace

GuidancePrior make_prior(const RunConfig& cfg, const MultiLightDataset& dataset) {
    if (cfg.prior.source == PriorConfig::Source::Files) {
        if (!std::filesystem::exists(cfg.prior.path / "lights.json"))
            throw UpstreamError("prior not found at " + cfg.prior.path.string());
        return load_prior(cfg.prior.path, dataset);
    }
    std::vector<Image> gt_normals;
    for (const View& v : dataset.views) {
        auto path = cfg.dataset / "gt" / view_dir_name(v.id) / "normal.pfm";
        if (!std::filesystem::exists(path))
            throw UpstreamError("oracle prior needs ground-truth normals at " + path.string() +
                                " (run `psnerf synth`, or use prior source 'files')");
        gt_normals.push_back(read_pfm(path));
    }
    RngStream rng = RngStream(cfg.seed).fork(0x500);
    return synth_ups_oracle(dataset, gt_normals, cfg.prior.normal_noise_deg,
                            cfg.prior.light_noise_deg, rng, cfg.prior.intensity_sigma);
}

void cmd_synth(const RunConfig& cfg) {
    if (!cfg.synth) throw ConfigError("config: 'synth' section is required for `psnerf synth`");
    auto out = require_output(cfg);
    SyntheticSceneSpec spec = *cfg.synth;
    spec.seed = cfg.seed;  // the run seed is the single source of randomness
    generate_scene(spec, out);
}

void cmd_stage1(const RunConfig& cfg) {
    MultiLightDataset ds = require_dataset(cfg);
    auto out = require_output(cfg);
    GuidancePrior prior = make_prior(cfg, ds);
    save_prior(out / "prior", prior);

    Stage1Config c = cfg.stage1;
    c.seed = cfg.seed;
    std::filesystem::create_directories(out / "stage1");
    c.loss_csv = out / "stage1" / "loss.csv";
    Stage1State state = train_stage1(ds, prior, c);
    state.field.save(out / "stage1");
}

void cmd_stage2(const RunConfig& cfg) {
    MultiLightDataset ds = require_dataset(cfg);
    auto out = require_output(cfg);
    RadianceField field = require_stage1_field(cfg);
    if (!std::filesystem::exists(out / "prior" / "lights.json"))
        throw UpstreamError("prior missing at " + (out / "prior").string() +
                            " (run `psnerf stage1` first)");
    GuidancePrior prior = load_prior(out / "prior", ds);

    Stage2Config c = cfg.stage2;
    c.seed = cfg.seed;
    std::filesystem::create_directories(out / "stage2");
    c.loss_csv = out / "stage2" / "loss.csv";
    Stage2State state = train_stage2(ds, field, prior, c);
    state.decomp.save(out / "stage2");
    save_lights(out / "stage2" / "lights_refined.json", state.lights);
}

void cmd_render(const RunConfig& cfg) {
    MultiLightDataset ds = require_dataset(cfg);
    auto out = require_output(cfg);
    RadianceField field = require_stage1_field(cfg);
    SceneDecomposition decomp = require_stage2_decomp(cfg);
    const View& view = view_by_id(ds, cfg.render.view);
    HitFn hits = make_expected_depth_hit_fn(field, ds.bbox_min, ds.bbox_max,
                                   cfg.stage2.surface_sampling);

    std::filesystem::create_directories(out / "render");
    RenderedImage r;
    std::string name = view_dir_name(view.id);
    if (cfg.render.light_id >= 0) {
        const DirectionalLight& light = ds.light_by_id(cfg.render.light_id);
        r = render_image(decomp, cfg.stage2.spec.basis, view, light, hits,
                         cfg.stage2.clamp_cosine);
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "_L%03d", cfg.render.light_id);
        name += suffix;
    } else {
        std::vector<DirectionalLight> lights;
        for (const ViewImage& img : view.images) lights.push_back(ds.light_by_id(img.light_id));
        r = light_averaged_image(decomp, cfg.stage2.spec.basis, view, lights, hits,
                                 cfg.stage2.clamp_cosine);
    }
    write_image_pair(out / "render" / name, r.image);
}

void cmd_relight(const RunConfig& cfg) {
    MultiLightDataset ds = require_dataset(cfg);
    auto out = require_output(cfg);
    RadianceField field = require_stage1_field(cfg);
    SceneDecomposition decomp = require_stage2_decomp(cfg);
    if (cfg.relight.lights.empty())
        throw ConfigError("config: `psnerf relight` needs at least one light in 'relight.lights'");
    const View& view = view_by_id(ds, cfg.relight.view);
    HitFn hits = make_expected_depth_hit_fn(field, ds.bbox_min, ds.bbox_max,
                                   cfg.stage2.surface_sampling);

    std::optional<Image> albedo_map, specular_map;
    auto load_override = [&](const std::filesystem::path& p, const char* what) {
        if (p.empty()) return std::optional<Image>();
        if (!std::filesystem::exists(p))
            throw UpstreamError(std::string(what) + " override map missing at " + p.string());
        Image m = read_pfm(p);
        if (m.width != view.camera.width || m.height != view.camera.height)
            throw ConfigError(std::string(what) + " override map must match the view resolution");
        return std::optional<Image>(std::move(m));
    };
    albedo_map = load_override(cfg.relight.albedo_override, "albedo");
    specular_map = load_override(cfg.relight.specular_override, "specular");
    OverrideDecomposition shaded(decomp, view.camera, albedo_map, specular_map);

    std::vector<DirectionalLight> lights;
    for (const RelightLight& l : cfg.relight.lights) {
        DirectionalLight dl;
        dl.direction = l.direction;
        dl.intensity = l.intensity;
        lights.push_back(dl);
    }
    RenderedImage r =
        lights.size() == 1
            ? render_image(shaded, cfg.stage2.spec.basis, view, lights[0], hits,
                           cfg.stage2.clamp_cosine)
            : light_averaged_image(shaded, cfg.stage2.spec.basis, view, lights, hits,
                                   cfg.stage2.clamp_cosine);
    std::filesystem::create_directories(out / "relight");
    write_image_pair(out / "relight" / view_dir_name(view.id), r.image);
}

void cmd_extract_mesh(const RunConfig& cfg) {
    MultiLightDataset ds = require_dataset(cfg);
    auto out = require_output(cfg);
    RadianceField field = require_stage1_field(cfg);
    TriangleMesh mesh =
        extract_mesh(field, ds.bbox_min, ds.bbox_max, cfg.mesh.resolution, cfg.mesh.level);
    std::filesystem::create_directories(out / "mesh");
    save_obj(out / "mesh" / "mesh.obj", mesh);
}

void cmd_eval(const RunConfig& cfg) {
    MultiLightDataset ds = require_dataset(cfg);
    auto out = require_output(cfg);

    json report;
    report["views"] = json::array();
    double mae_acc = 0, psnr_acc = 0, ssim_acc = 0;
    long mae_pixels = 0;
    int n_views = 0;

    TriangleMesh gt_mesh = load_obj(cfg.dataset / "gt" / "mesh.obj");
    std::vector<DirectionalLight> gt = gt_lights(cfg.dataset, false);

    if (cfg.eval.source == EvalConfig::Source::Gt) {
        // self-evaluation of the generator sidecar: fixes the metric zero point
        for (const View& v : ds.views) {
            Image normal = read_pfm(cfg.dataset / "gt" / view_dir_name(v.id) / "normal.pfm");
            Image valid(normal.width, normal.height, 1);
            for (int y = 0; y < normal.height; ++y)
                for (int x = 0; x < normal.width; ++x)
                    valid.at(x, y) = Vec3(normal.at(x, y, 0), normal.at(x, y, 1),
                                          normal.at(x, y, 2)).norm() > 0.5f
                                         ? 1.f
                                         : 0.f;
            double mae = normal_mae(normal, normal, valid, valid);
            Image target = ds.light_averaged_target(static_cast<int>(&v - ds.views.data()));
            double psnr = scale_invariant_psnr(target, target, v.mask);
            double s = ssim(target, target);
            report["views"].push_back(
                {{"view", v.id}, {"normal_mae_deg", mae}, {"psnr_db", psnr}, {"ssim", s}});
            mae_acc += mae;
            psnr_acc += psnr;
            ssim_acc += s;
            ++n_views;
        }
        RngStream rng = RngStream(cfg.seed).fork(0x600);
        report["chamfer_mm"] =
            chamfer(gt_mesh, gt_mesh, static_cast<int>(cfg.eval.chamfer_samples), rng);
        std::vector<RefinedLight> self;
        for (const auto& l : gt) {
            RefinedLight r;
            r.light_id = l.id;
            r.direction = l.direction;
            r.intensity = l.intensity;
            self.push_back(r);
        }
        LightErrorReport ler = light_error(self, gt);
        report["light_direction_mae_deg"] = ler.direction_mae_deg;
        report["light_intensity_rel_err"] = ler.intensity_rel_err;
    } else {
        RadianceField field = require_stage1_field(cfg);
        SceneDecomposition decomp = require_stage2_decomp(cfg);
        std::vector<RefinedLight> lights = load_lights(cfg.output / "stage2" /
                                                       "lights_refined.json");
        HitFn hits = make_expected_depth_hit_fn(field, ds.bbox_min, ds.bbox_max,
                                       cfg.stage2.surface_sampling);
        std::filesystem::create_directories(out / "eval");

        for (std::size_t vi = 0; vi < ds.views.size(); ++vi) {
            const View& v = ds.views[vi];
            Image gt_normal = read_pfm(cfg.dataset / "gt" / view_dir_name(v.id) / "normal.pfm");
            Image pred_normal(v.camera.width, v.camera.height, 3);
            Image pred_valid(v.camera.width, v.camera.height, 1);
            Image gt_valid(gt_normal.width, gt_normal.height, 1);
            for (int y = 0; y < v.camera.height; ++y)
                for (int x = 0; x < v.camera.width; ++x) {
                    gt_valid.at(x, y) = Vec3(gt_normal.at(x, y, 0), gt_normal.at(x, y, 1),
                                             gt_normal.at(x, y, 2)).norm() > 0.5f
                                            ? 1.f
                                            : 0.f;
                    if (!v.mask_at(x, y)) continue;
                    Ray ray = pixel_to_ray(v.camera, x + 0.5, y + 0.5);
                    SurfaceHit hit = hits(ray);
                    if (!hit.hit) continue;
                    Vec3 n_cam = normal_world_to_camera(v.camera, decomp.normal(hit.point));
                    for (int c = 0; c < 3; ++c)
                        pred_normal.at(x, y, c) = static_cast<float>(n_cam[c]);
                    pred_valid.at(x, y) = 1.f;
                }
            write_pfm(out / "eval" / (view_dir_name(v.id) + "_normal.pfm"), pred_normal);
            double mae = normal_mae(pred_normal, gt_normal, pred_valid, gt_valid);

            std::vector<DirectionalLight> view_lights;
            for (const ViewImage& img : v.images) view_lights.push_back(ds.light_by_id(img.light_id));
            RenderedImage render = light_averaged_image(decomp, cfg.stage2.spec.basis, v,
                                                        view_lights, hits,
                                                        cfg.stage2.clamp_cosine);
            write_image_pair(out / "eval" / (view_dir_name(v.id) + "_render"), render.image);
            Image target = ds.light_averaged_target(static_cast<int>(vi));
            double psnr = scale_invariant_psnr(render.image, target, render.hit_mask);
            double s = ssim(render.image, target);
            report["views"].push_back(
                {{"view", v.id}, {"normal_mae_deg", mae}, {"psnr_db", psnr}, {"ssim", s}});
            mae_acc += mae;
            psnr_acc += psnr;
            ssim_acc += s;
            mae_pixels += 1;
            ++n_views;
        }

        TriangleMesh pred_mesh =
            extract_mesh(field, ds.bbox_min, ds.bbox_max, cfg.eval.mesh_resolution,
                         cfg.mesh.level);
        save_obj(out / "eval" / "mesh.obj", pred_mesh);
        RngStream rng = RngStream(cfg.seed).fork(0x600);
        report["chamfer_mm"] =
            chamfer(pred_mesh, gt_mesh, static_cast<int>(cfg.eval.chamfer_samples), rng);
        LightErrorReport ler = light_error(lights, gt);
        report["light_direction_mae_deg"] = ler.direction_mae_deg;
        report["light_intensity_rel_err"] = ler.intensity_rel_err;
    }

    report["normal_mae_deg"] = mae_acc / n_views;
    report["psnr_db"] = psnr_acc / n_views;
    report["ssim"] = ssim_acc / n_views;
    MetricReport conventions;
    report["mask_convention"] = conventions.mask_convention;
    report["chamfer_convention"] = conventions.chamfer_convention;

    std::filesystem::create_directories(out / "eval");
    std::ofstream f(out / "eval" / "report.json");
    if (!f)
        throw std::runtime_error("cmd_eval: cannot write " +
                                 (out / "eval" / "report.json").string());
    f << report.dump(2) << "\n";
}

void run_command(const std::string& name, const RunConfig& cfg) {
    if (name == "synth")
        cmd_synth(cfg);
    else if (name == "stage1")
        cmd_stage1(cfg);
    else if (name == "stage2")
        cmd_stage2(cfg);
    else if (name == "render")
        cmd_render(cfg);
    else if (name == "relight")
        cmd_relight(cfg);
    else if (name == "eval")
        cmd_eval(cfg);
    else if (name == "extract-mesh")
        cmd_extract_mesh(cfg);
    else
        throw ConfigError("unknown command '" + name + "'");
}

}  // namespace psnerf
