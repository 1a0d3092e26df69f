#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "psnerf/commands.hpp"
#include "psnerf/mesh.hpp"

using namespace psnerf;

namespace {

RunConfig tiny_run_config(const std::filesystem::path& root) {
    RunConfig cfg;
    cfg.dataset = root / "data";
    cfg.output = root / "out";
    cfg.seed = 3;

    SyntheticSceneSpec synth;
    synth.shape = SyntheticSceneSpec::Shape::Sphere;
    synth.n_views = 2;
    synth.n_lights = 3;
    synth.n_holdout_lights = 1;
    synth.resolution = 20;
    cfg.synth = synth;

    cfg.stage1.field_spec.pe_x = 4;
    cfg.stage1.field_spec.pe_d = 2;
    cfg.stage1.field_spec.width = 24;
    cfg.stage1.field_spec.n_layers = 2;
    cfg.stage1.field_spec.feature_dim = 8;
    cfg.stage1.field_spec.head_layers = 2;
    cfg.stage1.field_spec.head_width = 16;
    cfg.stage1.iterations = 1500;
    cfg.stage1.normal_loss_start = 800;
    cfg.stage1.rays_per_batch = 32;
    cfg.stage1.samples_per_ray = 16;
    cfg.stage1.learning_rate = 5e-3;  // hot but adequate at this toy scale

    cfg.stage2.spec.pe_x = 4;
    cfg.stage2.spec.pe_d = 2;
    cfg.stage2.spec.normal_width = 8;
    cfg.stage2.spec.normal_layers = 2;
    cfg.stage2.spec.normal_skip = 0;
    cfg.stage2.spec.albedo_width = 8;
    cfg.stage2.spec.albedo_layers = 2;
    cfg.stage2.spec.albedo_skip = 0;
    cfg.stage2.spec.specular_width = 8;
    cfg.stage2.spec.specular_layers = 2;
    cfg.stage2.spec.visibility_width = 8;
    cfg.stage2.spec.visibility_layers = 2;
    cfg.stage2.spec.visibility_skip = 0;
    cfg.stage2.spec.basis = SGBasisSpec::log_spaced(3, 4.0, 64.0);
    cfg.stage2.warmup_iterations = 8;
    cfg.stage2.iterations = 12;
    cfg.stage2.points_per_batch = 24;
    cfg.stage2.surface_sampling.samples_per_ray = 24;
    cfg.stage2.visibility.samples = 24;

    cfg.eval.mesh_resolution = 24;
    cfg.eval.chamfer_samples = 2000;
    cfg.mesh.resolution = 24;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("run config round-trips and rejects malformed input") {
    TempDir tmp("psnerf_cfg");
    RunConfig cfg = tiny_run_config(tmp.path);
    std::string once = cfg.to_json();
    RunConfig back = RunConfig::from_json(once);
    CHECK(back.to_json() == once);
    CHECK(back.dataset == cfg.dataset);
    CHECK(back.stage1.iterations == 1500);
    CHECK(back.stage2.spec.visibility_width == 8);
    CHECK(back.synth.has_value());
    CHECK(back.synth->n_lights == 3);

    CHECK_THROWS_WITH_AS(RunConfig::from_json("{\"schema_version\": 2}"),
                         doctest::Contains("schema_version"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json("{\"surprise\": 1}"),
                         doctest::Contains("surprise"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json("{\"stage1\": {\"alpha9\": 1}}"),
                         doctest::Contains("alpha9"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json("not json"), ConfigError);
    CHECK_THROWS_AS(
        RunConfig::from_json("{\"relight\": {\"lights\": [{\"direction\": [0, 0, 0]}]}}"),
        ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json("{\"workers\": 0}"), doctest::Contains("workers"),
                         ConfigError);
}

TEST_CASE("synth writes the full dataset layout with equal light intensities") {
    TempDir tmp("psnerf_cmd_synth");
    RunConfig cfg = tiny_run_config(tmp.path);
    cfg.output = cfg.dataset;  // generator writes the dataset itself
    cmd_synth(cfg);

    MultiLightDataset ds = load_dataset(cfg.dataset);
    REQUIRE(ds.views.size() == 2);
    int images = 0;
    for (const View& v : ds.views) {
        images += static_cast<int>(v.images.size());
        CHECK(v.mask.width == 20);
    }
    CHECK(images == 2 * 3);
    for (const auto& l : ds.lights) CHECK(l.intensity == doctest::Approx(1.0));
    CHECK(std::filesystem::exists(cfg.dataset / "gt" / "mesh.obj"));
    CHECK(std::filesystem::exists(cfg.dataset / "gt" / "lights.json"));
    CHECK(std::filesystem::exists(cfg.dataset / "gt" / "view_00" / "normal.pfm"));

    // idempotence: a second run is byte-identical
    std::string manifest = slurp(cfg.dataset / "params.json");
    std::string pfm = slurp(cfg.dataset / "view_00" / "L_000.pfm");
    cmd_synth(cfg);
    CHECK(slurp(cfg.dataset / "params.json") == manifest);
    CHECK(slurp(cfg.dataset / "view_00" / "L_000.pfm") == pfm);
}

TEST_CASE("generator shadows: a bump-occluded pixel goes dark under a grazing light") {
    SyntheticSceneSpec spec;
    spec.shape = SyntheticSceneSpec::Shape::SphereBump;
    spec.resolution = 48;
    AnalyticDecomposition gt(spec);
    HitFn hits = make_sdf_hit_fn(gt.field());
    Camera cam = make_lookat_camera(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(),
                                    2.2 * spec.resolution, spec.resolution, spec.resolution);

    bool found = false;
    const Vec3 candidates[] = {Vec3(1.2, 0.8, 0.4), Vec3(1.0, 0.2, 0.3), Vec3(0.5, 1.2, 0.2),
                               Vec3(-1.0, 0.9, 0.5)};
    for (const Vec3& raw : candidates) {
        DirectionalLight light;
        light.direction = raw.normalized();
        Image img = generator_render(spec, cam, light);
        double occluded = -1, lit = -1;
        for (int y = 0; y < spec.resolution; ++y)
            for (int x = 0; x < spec.resolution; ++x) {
                Ray ray = pixel_to_ray(cam, x + 0.5, y + 0.5);
                SurfaceHit hit = hits(ray);
                if (!hit.hit) continue;
                double cosine = hit.normal.dot(light.direction);
                if (cosine < 0.2) continue;
                double vis = gt.visibility(hit.point, light.direction);
                double value = img.at(x, y, 0);
                if (vis < 0.5)
                    occluded = std::max(occluded, value);
                else
                    lit = std::max(lit, value);
            }
        if (occluded >= 0 && lit > 0) {
            found = true;
            CHECK(occluded < 1e-9);  // binary shadow: no direct light at all
            CHECK(lit > 1e-3);
            CHECK(occluded < lit);
        }
    }
    CHECK(found);
}

TEST_CASE("full pipeline: stage1 -> stage2 -> render/relight/eval/extract-mesh"
          * doctest::timeout(500)) {
    TempDir tmp("psnerf_pipeline");
    RunConfig cfg = tiny_run_config(tmp.path);
    {
        RunConfig synth_cfg = cfg;
        synth_cfg.output = cfg.dataset;
        cmd_synth(synth_cfg);
    }

    // upstream guards fire before any artifacts exist
    CHECK_THROWS_AS(cmd_stage2(cfg), UpstreamError);
    CHECK_THROWS_AS(cmd_render(cfg), UpstreamError);

    cmd_stage1(cfg);
    CHECK(std::filesystem::exists(cfg.output / "stage1" / "trunk.ckpt"));
    CHECK(std::filesystem::exists(cfg.output / "stage1" / "loss.csv"));
    CHECK(std::filesystem::exists(cfg.output / "prior" / "lights.json"));

    cmd_stage2(cfg);
    CHECK(std::filesystem::exists(cfg.output / "stage2" / "fn.bin"));
    CHECK(std::filesystem::exists(cfg.output / "stage2" / "lights_refined.json"));

    // render under one dataset light, then relight with that same light:
    // identical code path, byte-identical image
    MultiLightDataset ds = load_dataset(cfg.dataset);
    const int light_id = ds.views[0].images[0].light_id;
    RunConfig render_cfg = cfg;
    render_cfg.render.view = ds.views[0].id;
    render_cfg.render.light_id = light_id;
    cmd_render(render_cfg);
    auto render_pfm = cfg.output / "render" /
                      ("view_00_L" + std::string(light_id < 10 ? "00" : "0") +
                       std::to_string(light_id) + ".pfm");
    REQUIRE(std::filesystem::exists(render_pfm));

    RunConfig relight_cfg = cfg;
    relight_cfg.relight.view = ds.views[0].id;
    RelightLight rl;
    rl.direction = ds.light_by_id(light_id).direction;
    rl.intensity = ds.light_by_id(light_id).intensity;
    relight_cfg.relight.lights = {rl};
    cmd_relight(relight_cfg);
    CHECK(slurp(cfg.output / "relight" / "view_00.pfm") == slurp(render_pfm));

    // light-averaged render variant
    RunConfig mean_cfg = cfg;
    mean_cfg.render.view = ds.views[0].id;
    mean_cfg.render.light_id = -1;
    cmd_render(mean_cfg);
    CHECK(std::filesystem::exists(cfg.output / "render" / "view_00.pfm"));

    cmd_extract_mesh(cfg);
    TriangleMesh mesh = load_obj(cfg.output / "mesh" / "mesh.obj");
    CHECK(mesh.vertices.size() > 0);
    CHECK(mesh.triangles.size() > 0);

    cmd_eval(cfg);
    auto report_path = cfg.output / "eval" / "report.json";
    REQUIRE(std::filesystem::exists(report_path));
    auto report = nlohmann::json::parse(slurp(report_path));
    CHECK(std::isfinite(report.at("normal_mae_deg").get<double>()));
    CHECK(std::isfinite(report.at("chamfer_mm").get<double>()));
    CHECK(std::isfinite(report.at("psnr_db").get<double>()));
    CHECK(report.at("views").size() == 2);
    CHECK(report.contains("chamfer_convention"));

    // determinism: rerunning stage1 reproduces the checkpoint byte for byte
    std::string trunk = slurp(cfg.output / "stage1" / "trunk.ckpt");
    cmd_stage1(cfg);
    CHECK(slurp(cfg.output / "stage1" / "trunk.ckpt") == trunk);
}

TEST_CASE("eval of the gt sidecar against itself is exact") {
    TempDir tmp("psnerf_selfeval");
    RunConfig cfg = tiny_run_config(tmp.path);
    {
        RunConfig synth_cfg = cfg;
        synth_cfg.output = cfg.dataset;
        cmd_synth(synth_cfg);
    }
    cfg.eval.source = EvalConfig::Source::Gt;
    cmd_eval(cfg);
    auto report = nlohmann::json::parse(slurp(cfg.output / "eval" / "report.json"));
    CHECK(report.at("normal_mae_deg").get<double>() == 0.0);
    CHECK(report.at("chamfer_mm").get<double>() == 0.0);
    CHECK(report.at("psnr_db").get<double>() == 99.0);
    CHECK(report.at("ssim").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.at("light_direction_mae_deg").get<double>() == 0.0);
}

#ifdef PSNERF_BIN
TEST_CASE("binary exit codes follow the contract" * doctest::timeout(300)) {
    TempDir tmp("psnerf_exitcodes");
    RunConfig cfg = tiny_run_config(tmp.path);
    cfg.output = cfg.dataset;
    auto cfg_path = tmp.path / "run.json";
    save_run_config(cfg_path, cfg);

    auto run = [&](const std::string& args) {
        int rc = std::system((std::string(PSNERF_BIN) + " " + args + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(rc);
    };

    CHECK(run("synth --config " + cfg_path.string()) == 0);
    CHECK(run("stage2 --config " + cfg_path.string()) == 3);  // no stage1 checkpoint yet
    CHECK(run("synth --config " + (tmp.path / "missing.json").string()) == 2);
    CHECK(run("transmogrify --config " + cfg_path.string()) == 2);

    std::ofstream bad(tmp.path / "bad.json");
    bad << "{\"no_such_key\": true}";
    bad.close();
    CHECK(run("synth --config " + (tmp.path / "bad.json").string()) == 2);

    // PSNERF_OUT redirects the output root
    auto alt = tmp.path / "alt_out";
    int rc = std::system(("PSNERF_OUT=" + alt.string() + " " + PSNERF_BIN + " synth --config " +
                          cfg_path.string() + " >/dev/null 2>&1")
                             .c_str());
    CHECK(WEXITSTATUS(rc) == 0);
    CHECK(std::filesystem::exists(alt / "params.json"));
}
#endif
