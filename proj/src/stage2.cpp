#include "psnerf/stage2.hpp"

#include <fstream>
#include <json.hpp>

namespace psnerf {

using nlohmann::json;

MlpSpec Stage2Spec::normal_spec() const {
    MlpSpec s;
    s.input_dim = 6 * pe_x;
    s.hidden_width = normal_width;
    s.n_layers = normal_layers;
    if (normal_skip > 0 && normal_skip < normal_layers) s.skip_layers = {normal_skip};
    s.output_dim = 3;
    s.output_activation = OutputActivation::UnitNormalize;
    return s;
}

MlpSpec Stage2Spec::albedo_spec() const {
    MlpSpec s;
    s.input_dim = 6 * pe_x;
    s.hidden_width = albedo_width;
    s.n_layers = albedo_layers;
    if (albedo_skip > 0 && albedo_skip < albedo_layers) s.skip_layers = {albedo_skip};
    s.output_dim = 3;
    s.output_activation = OutputActivation::Sigmoid;
    return s;
}

MlpSpec Stage2Spec::specular_spec() const {
    MlpSpec s;
    s.input_dim = 6 * pe_x;
    s.hidden_width = specular_width;
    s.n_layers = specular_layers;
    s.output_dim = basis.lobe_count();
    s.output_activation = OutputActivation::Softplus;
    return s;
}

MlpSpec Stage2Spec::visibility_spec() const {
    MlpSpec s;
    s.input_dim = 6 * pe_x + 6 * pe_d;
    s.hidden_width = visibility_width;
    s.n_layers = visibility_layers;
    if (visibility_skip > 0 && visibility_skip < visibility_layers)
        s.skip_layers = {visibility_skip};
    s.output_dim = 1;
    s.output_activation = OutputActivation::Sigmoid;
    return s;
}

void Stage2Spec::validate() const {
    basis.validate();
    normal_spec().validate();
    albedo_spec().validate();
    specular_spec().validate();
    visibility_spec().validate();
}

void Stage2Config::validate() const {
    if (beta1 < 0 || beta2 < 0 || beta3 < 0 || beta4 < 0 || beta5 < 0)
        throw std::invalid_argument("stage2: loss weights must be non-negative");
    if (learning_rate <= 0 || light_learning_rate <= 0)
        throw std::invalid_argument("stage2: learning rates must be positive");
    if (warmup_iterations < 0 || iterations < 0)
        throw std::invalid_argument("stage2: negative iteration count");
    if (points_per_batch < 1) throw std::invalid_argument("stage2: empty point batch");
    if (smooth_eps_stddev < 0) throw std::invalid_argument("stage2: negative smoothness stddev");
    spec.validate();
    surface_sampling.validate();
}

SceneDecomposition::SceneDecomposition(Stage2Spec spec, RngStream& rng) : spec_(std::move(spec)) {
    spec_.validate();
    RngStream r0 = rng.fork(10), r1 = rng.fork(11), r2 = rng.fork(12), r3 = rng.fork(13);
    fn_ = mlp_init(spec_.normal_spec(), r0);
    fa_ = mlp_init(spec_.albedo_spec(), r1);
    fs_ = mlp_init(spec_.specular_spec(), r2);
    fv_ = mlp_init(spec_.visibility_spec(), r3);
}

SceneDecomposition::SceneDecomposition(Stage2Spec spec, MlpParams fn, MlpParams fa, MlpParams fs,
                                       MlpParams fv)
    : spec_(std::move(spec)),
      fn_(std::move(fn)),
      fa_(std::move(fa)),
      fs_(std::move(fs)),
      fv_(std::move(fv)) {}

namespace {

Eigen::ArrayXXd encode_points(const Mat3X& pts, int n_freq) {
    return ad::positional_encode(pts.array(), n_freq);
}

}  // namespace

Vec3 SceneDecomposition::normal(const Vec3& x) const {
    return normal_batch(x).col(0);
}

Vec3 SceneDecomposition::albedo(const Vec3& x) const {
    Eigen::ArrayXXd a = albedo_batch(x);
    return Vec3(a(0, 0), a(1, 0), a(2, 0));
}

Eigen::ArrayXd SceneDecomposition::specular_weights(const Vec3& x) const {
    Eigen::ArrayXXd out = mlp_eval(spec_.specular_spec(), fs_, encode_points(x, spec_.pe_x));
    return out.col(0);
}

double SceneDecomposition::visibility(const Vec3& x, const Vec3& w_i) const {
    return visibility_batch(x, w_i)[0];
}

Mat3X SceneDecomposition::normal_batch(const Mat3X& pts) const {
    Eigen::ArrayXXd out = mlp_eval(spec_.normal_spec(), fn_, encode_points(pts, spec_.pe_x));
    return out.matrix();
}

Eigen::ArrayXXd SceneDecomposition::albedo_batch(const Mat3X& pts) const {
    return mlp_eval(spec_.albedo_spec(), fa_, encode_points(pts, spec_.pe_x));
}

Eigen::ArrayXd SceneDecomposition::visibility_batch(const Mat3X& pts, const Mat3X& dirs) const {
    if (pts.cols() != dirs.cols())
        throw std::invalid_argument("visibility_batch: point/direction count mismatch");
    Eigen::ArrayXXd in(6 * spec_.pe_x + 6 * spec_.pe_d, pts.cols());
    in.topRows(6 * spec_.pe_x) = encode_points(pts, spec_.pe_x);
    in.bottomRows(6 * spec_.pe_d) = encode_points(dirs, spec_.pe_d);
    Eigen::ArrayXXd out = mlp_eval(spec_.visibility_spec(), fv_, in);
    return out.row(0).transpose();
}

void SceneDecomposition::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    mlp_save(dir / "fn.bin", spec_.normal_spec(), fn_);
    mlp_save(dir / "fa.bin", spec_.albedo_spec(), fa_);
    mlp_save(dir / "fs.bin", spec_.specular_spec(), fs_);
    mlp_save(dir / "fv.bin", spec_.visibility_spec(), fv_);
}

SceneDecomposition SceneDecomposition::load(const std::filesystem::path& dir,
                                            const Stage2Spec& spec) {
    auto check = [&](const char* name, const MlpSpec& want) {
        auto [got, params] = mlp_load(dir / name);
        if (got.input_dim != want.input_dim || got.hidden_width != want.hidden_width ||
            got.n_layers != want.n_layers || got.output_dim != want.output_dim)
            throw std::runtime_error(std::string("SceneDecomposition::load: ") + name +
                                     " does not match the requested shapes");
        return params;
    };
    return SceneDecomposition(spec, check("fn.bin", spec.normal_spec()),
                              check("fa.bin", spec.albedo_spec()),
                              check("fs.bin", spec.specular_spec()),
                              check("fv.bin", spec.visibility_spec()));
}

std::vector<RefinedLight> initial_lights(const MultiLightDataset& dataset,
                                         const GuidancePrior& prior) {
    std::vector<RefinedLight> out;
    for (int vi : dataset.train_view_indices()) {
        const View& view = dataset.views[static_cast<std::size_t>(vi)];
        for (const ViewImage& img : view.images) {
            const auto& est = prior.light_estimate(view.id, img.light_id);
            RefinedLight l;
            l.view_id = view.id;
            l.light_id = img.light_id;
            l.direction = est.direction.normalized();
            l.intensity = est.intensity;
            out.push_back(l);
        }
    }
    return out;
}

namespace {

const RefinedLight& light_for(const std::vector<RefinedLight>& lights, int view_id,
                              int light_id) {
    for (const auto& l : lights)
        if (l.view_id == view_id && l.light_id == light_id) return l;
    throw std::runtime_error("stage2: no light estimate for view " + std::to_string(view_id) +
                             " light " + std::to_string(light_id));
}

}  // namespace

SurfaceCache build_surface_cache(const DensityField& field, const MultiLightDataset& dataset,
                                 const std::vector<RefinedLight>& lights,
                                 const Stage2Config& cfg) {
    SurfaceCache cache;
    HitFn hits = make_expected_depth_hit_fn(field, dataset.bbox_min, dataset.bbox_max,
                                            cfg.surface_sampling);
    for (int vi : dataset.train_view_indices()) {
        const View& view = dataset.views[static_cast<std::size_t>(vi)];
        SurfaceCache::ViewCache vc;
        vc.view_index = vi;
        std::vector<Vec3> pts, normals, vdirs;
        for (int y = 0; y < view.camera.height; ++y)
            for (int x = 0; x < view.camera.width; ++x) {
                if (!view.mask_at(x, y)) continue;
                Ray ray = pixel_to_ray(view.camera, x + 0.5, y + 0.5);
                SurfaceHit hit = hits(ray);
                if (!hit.hit) continue;
                vc.px.push_back(x);
                vc.py.push_back(y);
                pts.push_back(hit.point);
                normals.push_back(hit.normal);
                vdirs.push_back((view.camera.center() - hit.point).normalized());
            }
        const int n = static_cast<int>(pts.size());
        vc.points.resize(3, n);
        vc.normals.resize(3, n);
        vc.view_dirs.resize(3, n);
        for (int i = 0; i < n; ++i) {
            vc.points.col(i) = pts[static_cast<std::size_t>(i)];
            vc.normals.col(i) = normals[static_cast<std::size_t>(i)];
            vc.view_dirs.col(i) = vdirs[static_cast<std::size_t>(i)];
        }
        vc.visibility.resize(static_cast<Eigen::Index>(view.images.size()), n);
        for (std::size_t ii = 0; ii < view.images.size(); ++ii) {
            const Vec3 dir = light_for(lights, view.id, view.images[ii].light_id).direction;
            for (int i = 0; i < n; ++i)
                vc.visibility(static_cast<Eigen::Index>(ii), i) =
                    ray_visibility(field, vc.points.col(i), dir, cfg.visibility);
        }
        cache.views.push_back(std::move(vc));
    }
    return cache;
}

void Stage2Batch::validate() const {
    const int b = size();
    if (b == 0) throw std::invalid_argument("stage2 batch: empty");
    if (normals_sigma.cols() != b || view_dirs.cols() != b || target_rgb.cols() != b ||
        vis_sigma.size() != b || eps.cols() != b)
        throw std::invalid_argument("stage2 batch: inconsistent shapes");
}

Stage2Loss loss_stage2(ad::Tape& t, const Stage2Spec& spec, const Stage2TapeNets& nets,
                       const Stage2Batch& batch, ad::Var light_dir_raw, ad::Var intensity,
                       const Stage2Config& cfg, bool joint) {
    batch.validate();
    const int B = batch.size();
    const double inv_b = 1.0 / B;

    ad::Var enc_x = t.input(encode_points(batch.points, spec.pe_x));
    ad::Var n = mlp_eval(t, spec.normal_spec(), nets.fn, enc_x);
    ad::Var ln = ad::cmul(
        t, ad::sum(t, ad::square(t, ad::sub(t, n, t.input(batch.normals_sigma.array())))), inv_b);

    ad::Var wi = ad::normalize_cols(t, light_dir_raw, 1e-12);                // 3 x 1
    ad::Var wi_b = ad::matmul(t, wi, t.input(Eigen::ArrayXXd::Ones(1, B)));  // 3 x B
    ad::Var vis_in = ad::concat_rows(t, enc_x, ad::positional_encode(t, wi_b, spec.pe_d));
    ad::Var v = mlp_eval(t, spec.visibility_spec(), nets.fv, vis_in);  // 1 x B
    Eigen::ArrayXXd vis_target(1, B);
    vis_target.row(0) = batch.vis_sigma.transpose();
    ad::Var lv =
        ad::cmul(t, ad::sum(t, ad::square(t, ad::sub(t, v, t.input(vis_target)))), inv_b);

    ad::Var zero = t.input(Eigen::ArrayXXd::Zero(1, 1));
    Stage2Loss loss;
    loss.ln = ln;
    loss.lv = lv;
    loss.lc = zero;
    loss.las = zero;
    loss.lss = zero;

    if (!joint) {
        loss.total = ad::add(t, ad::cmul(t, ln, cfg.beta2), ad::cmul(t, lv, cfg.beta3));
        return loss;
    }

    ad::Var rho_d = mlp_eval(t, spec.albedo_spec(), nets.fa, enc_x);    // 3 x B
    ad::Var omega = mlp_eval(t, spec.specular_spec(), nets.fs, enc_x);  // k x B

    ad::Var h = ad::normalize_cols(t, ad::add(t, wi_b, t.input(batch.view_dirs.array())), 1e-12);
    ad::Var f_r = brdf_eval_tape(t, rho_d, omega, spec.basis, h, n);  // 3 x B

    ad::Var cosine = ad::dot_cols(t, wi_b, n);  // 1 x B
    if (cfg.clamp_cosine) cosine = ad::relu(t, cosine);
    ad::Var scale = ad::mul(t, ad::mul(t, v, cosine), intensity);  // 1 x B
    ad::Var pred = ad::mul(t, f_r, scale);                         // 3 x B (row broadcast)
    loss.lc = ad::cmul(t, ad::sum(t, ad::square(t, ad::sub(t, pred, t.input(batch.target_rgb)))),
                       inv_b);

    Mat3X shifted = batch.points + batch.eps;
    ad::Var enc_s = t.input(encode_points(shifted, spec.pe_x));
    ad::Var rho_s = mlp_eval(t, spec.albedo_spec(), nets.fa, enc_s);
    ad::Var omega_s = mlp_eval(t, spec.specular_spec(), nets.fs, enc_s);
    loss.las = ad::cmul(t, ad::sum(t, ad::square(t, ad::sub(t, rho_d, rho_s))), inv_b);
    loss.lss = ad::cmul(t, ad::sum(t, ad::square(t, ad::sub(t, omega, omega_s))), inv_b);

    loss.total = ad::add(
        t, ad::cmul(t, loss.lc, cfg.beta1),
        ad::add(t, ad::cmul(t, ln, cfg.beta2),
                ad::add(t, ad::cmul(t, lv, cfg.beta3),
                        ad::add(t, ad::cmul(t, loss.las, cfg.beta4),
                                ad::cmul(t, loss.lss, cfg.beta5)))));
    return loss;
}

Stage2State train_stage2(const MultiLightDataset& dataset, const DensityField& stage1_field,
                         const GuidancePrior& prior, const Stage2Config& cfg) {
    cfg.validate();
    RngStream root_rng(cfg.seed);
    RngStream init_rng = root_rng.fork(2);
    Stage2State state{SceneDecomposition(cfg.spec, init_rng)};
    state.lights = initial_lights(dataset, prior);

    SurfaceCache cache = build_surface_cache(stage1_field, dataset, state.lights, cfg);
    std::size_t usable = 0;
    for (const auto& vc : cache.views) usable += static_cast<std::size_t>(vc.count());
    if (usable == 0) throw std::runtime_error("stage2: no surface points found");

    AdamConfig net_cfg;
    net_cfg.learning_rate = cfg.learning_rate;
    AdamState adam_fn(state.decomp.normal_params(), net_cfg);
    AdamState adam_fa(state.decomp.albedo_params(), net_cfg);
    AdamState adam_fs(state.decomp.specular_params(), net_cfg);
    AdamState adam_fv(state.decomp.visibility_params(), net_cfg);
    AdamConfig light_cfg;
    light_cfg.learning_rate = cfg.light_learning_rate;
    std::vector<AdamVecState> adam_lights(state.lights.size(), AdamVecState(4, light_cfg));

    std::ofstream csv;
    if (!cfg.loss_csv.empty()) {
        csv.open(cfg.loss_csv);
        if (!csv) throw std::runtime_error("stage2: cannot open " + cfg.loss_csv.string());
        csv << "iter,phase,total,Lc,Ln,Lv,Las,Lss\n";
    }

    ad::Tape tape;
    const long total_iters = cfg.warmup_iterations + cfg.iterations;
    for (long it = 0; it < total_iters; ++it) {
        const bool joint = it >= cfg.warmup_iterations;
        RngStream rng = root_rng.fork(2000 + static_cast<std::uint64_t>(it));
        const auto& vc = cache.views[static_cast<std::size_t>(it) % cache.views.size()];
        const View& view = dataset.views[static_cast<std::size_t>(vc.view_index)];
        const std::size_t img_i = rng.next_index(view.images.size());
        const ViewImage& img = view.images[img_i];

        std::size_t light_index = 0;
        for (std::size_t i = 0; i < state.lights.size(); ++i)
            if (state.lights[i].view_id == view.id && state.lights[i].light_id == img.light_id)
                light_index = i;
        RefinedLight& light = state.lights[light_index];

        const int B = std::min(cfg.points_per_batch, vc.count());
        Stage2Batch batch;
        batch.points.resize(3, B);
        batch.normals_sigma.resize(3, B);
        batch.view_dirs.resize(3, B);
        batch.target_rgb.resize(3, B);
        batch.vis_sigma.resize(B);
        batch.eps.resize(3, B);
        for (int i = 0; i < B; ++i) {
            const int p = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(vc.count())));
            batch.points.col(i) = vc.points.col(p);
            batch.normals_sigma.col(i) = vc.normals.col(p);
            batch.view_dirs.col(i) = vc.view_dirs.col(p);
            for (int c = 0; c < 3; ++c)
                batch.target_rgb(c, i) = img.image.at(vc.px[static_cast<std::size_t>(p)],
                                                      vc.py[static_cast<std::size_t>(p)], c);
            batch.vis_sigma[i] = vc.visibility(static_cast<Eigen::Index>(img_i), p);
            for (int c = 0; c < 3; ++c)
                batch.eps(c, i) = cfg.smooth_eps_stddev == 0.0
                                      ? 0.0
                                      : cfg.smooth_eps_stddev * rng.next_normal();
        }

        tape.clear();
        Stage2TapeNets nets{mlp_register(tape, state.decomp.normal_params()),
                            mlp_register(tape, state.decomp.albedo_params()),
                            mlp_register(tape, state.decomp.specular_params()),
                            mlp_register(tape, state.decomp.visibility_params())};
        Eigen::ArrayXXd dir_arr(3, 1);
        dir_arr.col(0) = light.direction.array();
        ad::Var dir_var = tape.input(dir_arr);
        ad::Var intensity_var = tape.input(Eigen::ArrayXXd::Constant(1, 1, light.intensity));

        Stage2Loss loss = loss_stage2(tape, cfg.spec, nets, batch, dir_var, intensity_var, cfg,
                                      joint);
        tape.backward(loss.total);

        std::array<double, 6> entry = {tape.scalar(loss.total), tape.scalar(loss.lc),
                                       tape.scalar(loss.ln),    tape.scalar(loss.lv),
                                       tape.scalar(loss.las),   tape.scalar(loss.lss)};
        if (!std::isfinite(entry[0]))
            throw std::runtime_error("stage2: non-finite loss at iteration " + std::to_string(it) +
                                     " (view " + std::to_string(view.id) + ", light " +
                                     std::to_string(img.light_id) + ")");
        state.history.push_back(entry);
        if (csv.is_open()) {
            csv << it << "," << (joint ? "joint" : "warmup");
            for (double e : entry) csv << "," << e;
            csv << "\n";
        }

        adam_fn.step(state.decomp.normal_params(),
                     mlp_collect_grads(tape, nets.fn, state.decomp.normal_params()));
        adam_fv.step(state.decomp.visibility_params(),
                     mlp_collect_grads(tape, nets.fv, state.decomp.visibility_params()));
        if (joint) {
            adam_fa.step(state.decomp.albedo_params(),
                         mlp_collect_grads(tape, nets.fa, state.decomp.albedo_params()));
            adam_fs.step(state.decomp.specular_params(),
                         mlp_collect_grads(tape, nets.fs, state.decomp.specular_params()));
            if (cfg.learn_lights) {
                Eigen::ArrayXd lp(4), lg(4);
                lp.head(3) = light.direction.array();
                lp[3] = light.intensity;
                lg.setZero();
                if (tape.has_grad(dir_var)) lg.head(3) = tape.grad(dir_var).col(0);
                if (tape.has_grad(intensity_var)) lg[3] = tape.grad(intensity_var)(0, 0);
                adam_lights[light_index].step(lp, lg);
                Vec3 d(lp[0], lp[1], lp[2]);
                if (d.norm() > 1e-12) light.direction = d.normalized();
                light.intensity = std::max(lp[3], 1e-3);
            }
        }
        state.iteration = it + 1;
    }
    return state;
}

LightErrorReport light_error(const std::vector<RefinedLight>& estimate,
                             const std::vector<DirectionalLight>& reference) {
    LightErrorReport rep;
    double angle_acc = 0, ee = 0, eg = 0;
    std::vector<std::pair<double, double>> intensities;  // (estimate, reference)
    for (const auto& est : estimate) {
        const DirectionalLight* ref = nullptr;
        for (const auto& r : reference)
            if (r.id == est.light_id) ref = &r;
        if (!ref)
            throw std::runtime_error("light_error: no reference light with id " +
                                     std::to_string(est.light_id));
        double c = std::clamp(est.direction.normalized().dot(ref->direction.normalized()), -1.0,
                              1.0);
        angle_acc += std::acos(c) * 180.0 / M_PI;
        intensities.emplace_back(est.intensity, ref->intensity);
        ee += est.intensity * est.intensity;
        eg += est.intensity * ref->intensity;
        ++rep.count;
    }
    if (rep.count == 0) throw std::invalid_argument("light_error: empty estimate");
    rep.direction_mae_deg = angle_acc / rep.count;
    const double scale = ee > 0 ? eg / ee : 1.0;
    double rel = 0;
    for (auto [e, g] : intensities) rel += std::abs(scale * e - g) / std::max(g, 1e-12);
    rep.intensity_rel_err = rel / rep.count;
    return rep;
}

void save_lights(const std::filesystem::path& path, const std::vector<RefinedLight>& lights) {
    json j;
    j["lights"] = json::array();
    for (const auto& l : lights)
        j["lights"].push_back({{"view", l.view_id},
                               {"light_id", l.light_id},
                               {"direction", {l.direction.x(), l.direction.y(), l.direction.z()}},
                               {"intensity", l.intensity}});
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_lights: cannot open " + path.string());
    f << j.dump(2) << "\n";
}

std::vector<RefinedLight> load_lights(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_lights: cannot open " + path.string());
    json j = json::parse(f);
    std::vector<RefinedLight> out;
    for (const auto& e : j.at("lights")) {
        RefinedLight l;
        l.view_id = e.at("view").get<int>();
        l.light_id = e.at("light_id").get<int>();
        auto d = e.at("direction");
        l.direction = Vec3(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
        l.intensity = e.at("intensity").get<double>();
        out.push_back(l);
    }
    return out;
}

}  // namespace psnerf
