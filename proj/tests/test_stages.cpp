#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "psnerf/stage1.hpp"
#include "psnerf/stage2.hpp"
#include "psnerf/synth.hpp"
#include "test_util.hpp"

using namespace psnerf;

namespace {

RadianceFieldSpec tiny_field_spec() {
    RadianceFieldSpec s;
    s.pe_x = 2;
    s.pe_d = 2;
    s.width = 16;
    s.n_layers = 2;
    s.feature_dim = 8;
    s.head_layers = 2;
    s.head_width = 16;
    return s;
}

Stage1Batch random_batch(RngStream& rng, int b, int k) {
    Stage1Batch batch;
    batch.origins.resize(3, b);
    batch.dirs.resize(3, b);
    batch.ts.resize(k, b);
    batch.deltas.resize(k, b);
    batch.target_rgb.resize(3, b);
    batch.guidance.resize(3, b);
    batch.has_guidance.assign(static_cast<std::size_t>(b), 1);
    batch.eps.resize(3, b);
    for (int r = 0; r < b; ++r) {
        Vec3 o(0, 0, 2.5);
        Vec3 target(0.3 * rng.next_normal(), 0.3 * rng.next_normal(), 0.3 * rng.next_normal());
        Vec3 d = (target - o).normalized();
        batch.origins.col(r) = o;
        batch.dirs.col(r) = d;
        double near = 1.0, far = 4.0;
        for (int i = 0; i < k; ++i) {
            batch.ts(i, r) = near + (far - near) * (i + 0.5) / k;
            batch.deltas(i, r) = (far - near) / k;
        }
        for (int c = 0; c < 3; ++c) batch.target_rgb(c, r) = 0.5 + 0.1 * rng.next_normal();
        batch.guidance.col(r) =
            Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal()).normalized();
        for (int c = 0; c < 3; ++c) batch.eps(c, r) = 0.01 * rng.next_normal();
    }
    return batch;
}

// Writes a tiny analytic scene and loads it together with its oracle inputs.
struct TinyScene {
    std::filesystem::path root;
    MultiLightDataset ds;
    std::vector<Image> gt_normals;
    SyntheticSceneSpec spec;

    explicit TinyScene(const std::string& name, int res = 24, int views = 2, int lights = 3) {
        spec.shape = SyntheticSceneSpec::Shape::Sphere;
        spec.n_views = views;
        spec.n_lights = lights;
        spec.n_holdout_lights = 1;
        spec.resolution = res;
        spec.seed = 5;
        root = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(root);
        generate_scene(spec, root);
        ds = load_dataset(root);
        for (const View& v : ds.views) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "view_%02d", v.id);
            gt_normals.push_back(read_pfm(root / "gt" / buf / "normal.pfm"));
        }
    }
    ~TinyScene() { std::filesystem::remove_all(root); }
};

}  // namespace

TEST_CASE("stage1 defaults follow the published weighting") {
    Stage1Config cfg;
    CHECK(cfg.alpha1 == 1.0);
    CHECK(cfg.alpha2 == 0.05);
    CHECK(cfg.alpha3 == 0.005);
    CHECK(cfg.learning_rate == 1e-4);
    CHECK(cfg.normal_loss_start == 1000);
    cfg.validate();
    cfg.iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("stage1 color-term gradient matches finite differences") {
    RadianceFieldSpec spec = tiny_field_spec();
    RngStream rng(11);
    RadianceField field(spec, rng);
    Stage1Batch batch = random_batch(rng, 3, 6);
    Stage1Config cfg;
    cfg.field_spec = spec;
    cfg.alpha2 = 0.0;  // normal terms attach at detached surface points;
    cfg.alpha3 = 0.0;  // the color path is checked end to end here

    auto eval = [&](const MlpParams& trunk, const MlpParams& head) {
        ad::Tape t;
        MlpTapeParams tt = mlp_register(t, trunk);
        MlpTapeParams th = mlp_register(t, head);
        Stage1Loss l = loss_stage1(t, spec, tt, th, batch, cfg, true);
        return t.scalar(l.total);
    };

    ad::Tape t;
    MlpTapeParams tt = mlp_register(t, field.trunk_params());
    MlpTapeParams th = mlp_register(t, field.head_params());
    Stage1Loss l = loss_stage1(t, spec, tt, th, batch, cfg, true);
    t.backward(l.total);
    MlpParams g_trunk = mlp_collect_grads(t, tt, field.trunk_params());
    MlpParams g_head = mlp_collect_grads(t, th, field.head_params());

    auto f_trunk = [&](const Eigen::VectorXd& x) {
        return eval(testutil::unflatten(x, field.trunk_params()), field.head_params());
    };
    auto f_head = [&](const Eigen::VectorXd& x) {
        return eval(field.trunk_params(), testutil::unflatten(x, field.head_params()));
    };
    CHECK(testutil::grad_rel_err_vs_fd(f_trunk, testutil::flatten(field.trunk_params()),
                                       testutil::flatten(g_trunk)) < 1e-4);
    CHECK(testutil::grad_rel_err_vs_fd(f_head, testutil::flatten(field.head_params()),
                                       testutil::flatten(g_head)) < 1e-4);
}

TEST_CASE("derived-normal gradient at fixed centers matches finite differences") {
    RadianceFieldSpec spec = tiny_field_spec();
    RngStream rng(12);
    RadianceField field(spec, rng);
    Mat3X centers(3, 3);
    for (int i = 0; i < 3; ++i)
        centers.col(i) = Vec3(0.3 * rng.next_normal(), 0.3 * rng.next_normal(),
                              0.3 * rng.next_normal());
    Mat3X targets(3, 3);
    for (int i = 0; i < 3; ++i)
        targets.col(i) = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal()).normalized();

    auto eval = [&](const MlpParams& trunk) {
        ad::Tape t;
        MlpTapeParams tt = mlp_register(t, trunk);
        ad::Var n = fd_derived_normal(t, spec, tt, centers, 1e-3);
        ad::Var l = ad::sum(t, ad::square(t, ad::sub(t, n, t.input(targets.array()))));
        return t.scalar(l);
    };

    ad::Tape t;
    MlpTapeParams tt = mlp_register(t, field.trunk_params());
    ad::Var n = fd_derived_normal(t, spec, tt, centers, 1e-3);
    for (int i = 0; i < 3; ++i)
        CHECK(Vec3(t.value(n).col(i)).norm() == doctest::Approx(1.0).epsilon(1e-9));
    ad::Var l = ad::sum(t, ad::square(t, ad::sub(t, n, t.input(targets.array()))));
    t.backward(l);
    MlpParams g = mlp_collect_grads(t, tt, field.trunk_params());

    auto f = [&](const Eigen::VectorXd& x) {
        return eval(testutil::unflatten(x, field.trunk_params()));
    };
    CHECK(testutil::grad_rel_err_vs_fd(f, testutil::flatten(field.trunk_params()),
                                       testutil::flatten(g)) < 1e-4);
}

TEST_CASE("stage1 loss composition and component behavior") {
    RadianceFieldSpec spec = tiny_field_spec();
    RngStream rng(13);
    RadianceField field(spec, rng);
    Stage1Batch batch = random_batch(rng, 4, 8);
    Stage1Config cfg;
    cfg.field_spec = spec;

    ad::Tape t;
    MlpTapeParams tt = mlp_register(t, field.trunk_params());
    MlpTapeParams th = mlp_register(t, field.head_params());
    Stage1Loss l = loss_stage1(t, spec, tt, th, batch, cfg, true);
    double lc = t.scalar(l.lc), ln = t.scalar(l.ln), lns = t.scalar(l.lns);
    CHECK(lc >= 0.0);
    CHECK(ln >= 0.0);
    CHECK(lns >= 0.0);
    CHECK(t.scalar(l.total) ==
          doctest::Approx(cfg.alpha1 * lc + cfg.alpha2 * ln + cfg.alpha3 * lns).epsilon(1e-12));

    // zero perturbation: both smoothness normals coincide exactly
    Stage1Batch still = batch;
    still.eps.setZero();
    ad::Tape t2;
    Stage1Loss l2 = loss_stage1(t2, spec, mlp_register(t2, field.trunk_params()),
                                mlp_register(t2, field.head_params()), still, cfg, true);
    CHECK(t2.scalar(l2.lns) == 0.0);

    // before the normal loss starts, guidance must not influence anything
    ad::Tape t3;
    MlpTapeParams tt3 = mlp_register(t3, field.trunk_params());
    MlpTapeParams th3 = mlp_register(t3, field.head_params());
    Stage1Loss l3 = loss_stage1(t3, spec, tt3, th3, batch, cfg, false);
    CHECK(t3.scalar(l3.ln) == 0.0);
    t3.backward(l3.total);
    MlpParams g3 = mlp_collect_grads(t3, tt3, field.trunk_params());

    Stage1Config cfg_nonorm = cfg;
    cfg_nonorm.alpha2 = 0.0;
    ad::Tape t4;
    MlpTapeParams tt4 = mlp_register(t4, field.trunk_params());
    Stage1Loss l4 = loss_stage1(t4, spec, tt4, mlp_register(t4, field.head_params()), batch,
                                cfg_nonorm, true);
    t4.backward(l4.total);
    MlpParams g4 = mlp_collect_grads(t4, tt4, field.trunk_params());
    CHECK(testutil::flatten(g3) == testutil::flatten(g4));
}

TEST_CASE("stage1 training is finite, deterministic, and guidance-free before the start"
          * doctest::timeout(300)) {
    TinyScene scene("psnerf_stage1_smoke");
    RngStream orng(3);
    GuidancePrior prior = synth_ups_oracle(scene.ds, scene.gt_normals, 8.0, 0.0, orng);

    Stage1Config cfg;
    cfg.field_spec = tiny_field_spec();
    cfg.field_spec.pe_x = 4;
    cfg.iterations = 30;
    cfg.normal_loss_start = 20;
    cfg.rays_per_batch = 24;
    cfg.samples_per_ray = 12;
    cfg.seed = 42;

    Stage1State a = train_stage1(scene.ds, prior, cfg);
    CHECK(a.iteration == 30);
    REQUIRE(a.history.size() == 30);
    for (const auto& e : a.history)
        for (double v : e) CHECK(std::isfinite(v));

    Stage1State b = train_stage1(scene.ds, prior, cfg);
    CHECK(testutil::flatten(a.field.trunk_params()) == testutil::flatten(b.field.trunk_params()));
    CHECK(testutil::flatten(a.field.head_params()) == testutil::flatten(b.field.head_params()));

    // up to the normal-loss start the guidance weight is inert bit for bit
    Stage1Config pre = cfg;
    pre.iterations = cfg.normal_loss_start;
    Stage1Config pre0 = pre;
    pre0.alpha2 = 0.0;
    Stage1State c = train_stage1(scene.ds, prior, pre);
    Stage1State d = train_stage1(scene.ds, prior, pre0);
    CHECK(testutil::flatten(c.field.trunk_params()) == testutil::flatten(d.field.trunk_params()));
}

// ---- stage 2 ----

namespace {

Stage2Spec tiny_stage2_spec() {
    Stage2Spec s;
    s.pe_x = 2;
    s.pe_d = 2;
    s.normal_width = 8;
    s.normal_layers = 2;
    s.normal_skip = 0;
    s.albedo_width = 8;
    s.albedo_layers = 2;
    s.albedo_skip = 0;
    s.specular_width = 8;
    s.specular_layers = 2;
    s.visibility_width = 8;
    s.visibility_layers = 2;
    s.visibility_skip = 0;
    s.basis = SGBasisSpec::log_spaced(3, 4.0, 64.0);
    return s;
}

Stage2Batch random_stage2_batch(RngStream& rng, int b) {
    Stage2Batch batch;
    batch.points.resize(3, b);
    batch.normals_sigma.resize(3, b);
    batch.view_dirs.resize(3, b);
    batch.target_rgb.resize(3, b);
    batch.vis_sigma.resize(b);
    batch.eps.resize(3, b);
    for (int i = 0; i < b; ++i) {
        batch.points.col(i) =
            Vec3(0.4 * rng.next_normal(), 0.4 * rng.next_normal(), 0.4 * rng.next_normal());
        batch.normals_sigma.col(i) =
            Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal()).normalized();
        batch.view_dirs.col(i) =
            Vec3(0.3 * rng.next_normal(), 0.3 * rng.next_normal(), 1.0).normalized();
        for (int c = 0; c < 3; ++c) batch.target_rgb(c, i) = 0.4 + 0.2 * rng.next_uniform();
        batch.vis_sigma[i] = rng.next_uniform();
        for (int c = 0; c < 3; ++c) batch.eps(c, i) = 0.01 * rng.next_normal();
    }
    return batch;
}

struct Stage2Fixture {
    Stage2Spec spec = tiny_stage2_spec();
    Stage2Config cfg;
    SceneDecomposition decomp;
    Stage2Batch batch;
    Vec3 dir = Vec3(0.3, 0.4, 1.0).normalized();
    double intensity = 1.3;

    Stage2Fixture()
        : decomp([&] {
              RngStream r(21);
              return SceneDecomposition(tiny_stage2_spec(), r);
          }()) {
        cfg.spec = spec;
        RngStream rng(22);
        batch = random_stage2_batch(rng, 4);
    }

    double eval(const MlpParams& fn, const MlpParams& fa, const MlpParams& fs,
                const MlpParams& fv, const Vec3& d, double li, bool joint) const {
        ad::Tape t;
        Stage2TapeNets nets{mlp_register(t, fn), mlp_register(t, fa), mlp_register(t, fs),
                            mlp_register(t, fv)};
        Eigen::ArrayXXd da(3, 1);
        da.col(0) = d.array();
        ad::Var dv = t.input(da);
        ad::Var iv = t.input(Eigen::ArrayXXd::Constant(1, 1, li));
        Stage2Loss l = loss_stage2(t, spec, nets, batch, dv, iv, cfg, joint);
        return t.scalar(l.total);
    }
};

}  // namespace

TEST_CASE("stage2 defaults follow the published weighting") {
    Stage2Config cfg;
    CHECK(cfg.beta1 == 1.0);
    CHECK(cfg.beta2 == 1.0);
    CHECK(cfg.beta3 == 1.0);
    CHECK(cfg.beta4 == 0.05);
    CHECK(cfg.beta5 == 0.01);
    CHECK(cfg.learning_rate == 5e-4);
    CHECK(cfg.warmup_iterations == 5000);
    Stage2Spec spec;
    CHECK(spec.pe_x == 10);
    CHECK(spec.normal_spec().hidden_width == 128);
    CHECK(spec.albedo_spec().hidden_width == 128);
    CHECK(spec.specular_spec().n_layers == 2);
    CHECK(spec.specular_spec().hidden_width == 64);
    CHECK(spec.visibility_spec().hidden_width == 256);
    CHECK(spec.visibility_spec().n_layers == 8);
    CHECK(spec.visibility_spec().skip_layers == std::set<int>{4});
    CHECK(spec.visibility_spec().input_dim == 120);
}

TEST_CASE("stage2 joint-loss gradients match finite differences for every network") {
    Stage2Fixture fx;
    ad::Tape t;
    Stage2TapeNets nets{mlp_register(t, fx.decomp.normal_params()),
                        mlp_register(t, fx.decomp.albedo_params()),
                        mlp_register(t, fx.decomp.specular_params()),
                        mlp_register(t, fx.decomp.visibility_params())};
    Eigen::ArrayXXd da(3, 1);
    da.col(0) = fx.dir.array();
    ad::Var dv = t.input(da);
    ad::Var iv = t.input(Eigen::ArrayXXd::Constant(1, 1, fx.intensity));
    Stage2Loss l = loss_stage2(t, fx.spec, nets, fx.batch, dv, iv, fx.cfg, true);
    t.backward(l.total);

    const MlpParams& fn = fx.decomp.normal_params();
    const MlpParams& fa = fx.decomp.albedo_params();
    const MlpParams& fs = fx.decomp.specular_params();
    const MlpParams& fv = fx.decomp.visibility_params();

    auto check_net = [&](const MlpParams& base, const MlpTapeParams& tp,
                         const std::function<double(const MlpParams&)>& f) {
        MlpParams g = mlp_collect_grads(t, tp, base);
        auto wrapped = [&](const Eigen::VectorXd& x) { return f(testutil::unflatten(x, base)); };
        CHECK(testutil::grad_rel_err_vs_fd(wrapped, testutil::flatten(base),
                                           testutil::flatten(g)) < 1e-4);
    };
    check_net(fn, nets.fn,
              [&](const MlpParams& p) { return fx.eval(p, fa, fs, fv, fx.dir, fx.intensity, true); });
    check_net(fa, nets.fa,
              [&](const MlpParams& p) { return fx.eval(fn, p, fs, fv, fx.dir, fx.intensity, true); });
    check_net(fs, nets.fs,
              [&](const MlpParams& p) { return fx.eval(fn, fa, p, fv, fx.dir, fx.intensity, true); });
    check_net(fv, nets.fv,
              [&](const MlpParams& p) { return fx.eval(fn, fa, fs, p, fx.dir, fx.intensity, true); });
}

TEST_CASE("stage2 light gradients match finite differences") {
    Stage2Fixture fx;
    ad::Tape t;
    Stage2TapeNets nets{mlp_register(t, fx.decomp.normal_params()),
                        mlp_register(t, fx.decomp.albedo_params()),
                        mlp_register(t, fx.decomp.specular_params()),
                        mlp_register(t, fx.decomp.visibility_params())};
    Eigen::ArrayXXd da(3, 1);
    da.col(0) = fx.dir.array();
    ad::Var dv = t.input(da);
    ad::Var iv = t.input(Eigen::ArrayXXd::Constant(1, 1, fx.intensity));
    Stage2Loss l = loss_stage2(t, fx.spec, nets, fx.batch, dv, iv, fx.cfg, true);
    t.backward(l.total);

    const MlpParams& fn = fx.decomp.normal_params();
    const MlpParams& fa = fx.decomp.albedo_params();
    const MlpParams& fs = fx.decomp.specular_params();
    const MlpParams& fv = fx.decomp.visibility_params();

    Eigen::VectorXd g_dir(3);
    for (int i = 0; i < 3; ++i) g_dir[i] = t.grad(dv)(i, 0);
    auto f_dir = [&](const Eigen::VectorXd& x) {
        return fx.eval(fn, fa, fs, fv, Vec3(x[0], x[1], x[2]), fx.intensity, true);
    };
    Eigen::VectorXd x0 = fx.dir;
    CHECK(testutil::grad_rel_err_vs_fd(f_dir, x0, g_dir) < 1e-3);

    auto f_int = [&](double li) { return fx.eval(fn, fa, fs, fv, fx.dir, li, true); };
    double fd = testutil::central_diff(f_int, fx.intensity);
    CHECK(testutil::rel_err(fd, t.grad(iv)(0, 0)) < 1e-4);

    // the raw-direction gradient has no radial component (unit normalization)
    CHECK(std::abs(g_dir.dot(fx.dir)) < 1e-10 * std::max(1.0, g_dir.norm()));
}

TEST_CASE("stage2 warmup loss ignores the appearance networks") {
    Stage2Fixture fx;
    ad::Tape t;
    Stage2TapeNets nets{mlp_register(t, fx.decomp.normal_params()),
                        mlp_register(t, fx.decomp.albedo_params()),
                        mlp_register(t, fx.decomp.specular_params()),
                        mlp_register(t, fx.decomp.visibility_params())};
    Eigen::ArrayXXd da(3, 1);
    da.col(0) = fx.dir.array();
    ad::Var dv = t.input(da);
    ad::Var iv = t.input(Eigen::ArrayXXd::Constant(1, 1, fx.intensity));
    Stage2Loss l = loss_stage2(t, fx.spec, nets, fx.batch, dv, iv, fx.cfg, false);
    CHECK(t.scalar(l.lc) == 0.0);
    CHECK(t.scalar(l.las) == 0.0);
    CHECK(t.scalar(l.lss) == 0.0);
    CHECK(t.scalar(l.total) ==
          doctest::Approx(fx.cfg.beta2 * t.scalar(l.ln) + fx.cfg.beta3 * t.scalar(l.lv))
              .epsilon(1e-12));
    t.backward(l.total);
    MlpParams ga = mlp_collect_grads(t, nets.fa, fx.decomp.albedo_params());
    CHECK(testutil::flatten(ga).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stage2 training refines lights and stays deterministic" * doctest::timeout(300)) {
    TinyScene scene("psnerf_stage2_smoke");
    RngStream orng(8);
    GuidancePrior prior = synth_ups_oracle(scene.ds, scene.gt_normals, 5.0, 10.0, orng, 0.0);
    AnalyticField field = scene.spec.make_field();

    Stage2Config cfg;
    cfg.spec = tiny_stage2_spec();
    cfg.spec.pe_x = 4;
    cfg.spec.pe_d = 2;
    cfg.warmup_iterations = 10;
    cfg.iterations = 20;
    cfg.points_per_batch = 32;
    cfg.surface_sampling.samples_per_ray = 24;
    cfg.seed = 7;

    Stage2State a = train_stage2(scene.ds, field, prior, cfg);
    CHECK(a.iteration == 30);
    REQUIRE(a.history.size() == 30);
    for (const auto& e : a.history)
        for (double v : e) CHECK(std::isfinite(v));

    std::vector<RefinedLight> init = initial_lights(scene.ds, prior);
    REQUIRE(a.lights.size() == init.size());
    double moved = 0;
    for (std::size_t i = 0; i < init.size(); ++i) {
        CHECK(std::abs(a.lights[i].direction.norm() - 1.0) < 1e-12);
        moved += (a.lights[i].direction - init[i].direction).norm();
    }
    CHECK(moved > 0.0);

    Stage2State b = train_stage2(scene.ds, field, prior, cfg);
    CHECK(testutil::flatten(a.decomp.normal_params()) ==
          testutil::flatten(b.decomp.normal_params()));
    for (std::size_t i = 0; i < a.lights.size(); ++i)
        CHECK((a.lights[i].direction - b.lights[i].direction).norm() == 0.0);
}

TEST_CASE("stage2 checkpoints and light files round-trip") {
    RngStream rng(31);
    SceneDecomposition d(tiny_stage2_spec(), rng);
    auto dir = std::filesystem::temp_directory_path() / "psnerf_stage2_ckpt";
    std::filesystem::remove_all(dir);
    d.save(dir);
    SceneDecomposition back = SceneDecomposition::load(dir, d.spec());
    Vec3 x(0.2, -0.1, 0.3), w(0.3, 0.4, 1.0);
    w.normalize();
    CHECK((back.normal(x) - d.normal(x)).norm() == 0.0);
    CHECK((back.albedo(x) - d.albedo(x)).norm() == 0.0);
    CHECK(back.visibility(x, w) == d.visibility(x, w));

    std::vector<RefinedLight> lights;
    for (int i = 0; i < 3; ++i) {
        RefinedLight l;
        l.view_id = i / 2;
        l.light_id = i;
        l.direction = Vec3(0.1 * i, 0.2, 1.0).normalized();
        l.intensity = 0.9 + 0.1 * i;
        lights.push_back(l);
    }
    save_lights(dir / "lights_refined.json", lights);
    auto back_lights = load_lights(dir / "lights_refined.json");
    REQUIRE(back_lights.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK((back_lights[i].direction - lights[i].direction).norm() < 1e-12);
        CHECK(back_lights[i].intensity == doctest::Approx(lights[i].intensity));
        CHECK(back_lights[i].light_id == lights[i].light_id);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("light error report: exact rotation angle and scale-free intensities") {
    std::vector<DirectionalLight> ref;
    std::vector<RefinedLight> est;
    RngStream rng(41);
    for (int i = 0; i < 6; ++i) {
        DirectionalLight g;
        g.id = i;
        g.direction = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal()).normalized();
        g.intensity = 0.8 + 0.1 * i;
        ref.push_back(g);

        Vec3 axis = g.direction.cross(Vec3::UnitX());
        if (axis.norm() < 1e-6) axis = g.direction.cross(Vec3::UnitY());
        axis.normalize();
        RefinedLight e;
        e.view_id = 0;
        e.light_id = i;
        e.direction = Eigen::AngleAxisd(7.0 * M_PI / 180.0, axis) * g.direction;
        e.intensity = 2.5 * g.intensity;  // common scale: should not count as error
        est.push_back(e);
    }
    LightErrorReport rep = light_error(est, ref);
    CHECK(rep.count == 6);
    CHECK(rep.direction_mae_deg == doctest::Approx(7.0).epsilon(1e-9));
    CHECK(rep.intensity_rel_err < 1e-12);

    est[0].light_id = 77;
    CHECK_THROWS_WITH_AS(light_error(est, ref), doctest::Contains("77"), std::runtime_error);
}
