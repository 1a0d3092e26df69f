#include "psnerf/stage1.hpp"

#include <fstream>
#include <iostream>

namespace psnerf {

void Stage1Config::validate() const {
    if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0)
        throw std::invalid_argument("stage1: loss weights must be non-negative");
    if (learning_rate <= 0) throw std::invalid_argument("stage1: learning rate must be positive");
    if (iterations < 1) throw std::invalid_argument("stage1: need at least one iteration");
    if (normal_loss_start < 0) throw std::invalid_argument("stage1: negative normal_loss_start");
    if (rays_per_batch < 1) throw std::invalid_argument("stage1: empty ray batch");
    if (samples_per_ray < 2) throw std::invalid_argument("stage1: need >= 2 samples per ray");
    if (fd_step <= 0) throw std::invalid_argument("stage1: fd_step must be positive");
    if (smooth_eps_stddev < 0) throw std::invalid_argument("stage1: negative smoothness stddev");
}

void Stage1Batch::validate() const {
    const int b = size();
    if (b == 0) throw std::invalid_argument("stage1 batch: empty");
    if (dirs.cols() != b || target_rgb.cols() != b || guidance.cols() != b ||
        static_cast<int>(has_guidance.size()) != b || eps.cols() != b || ts.cols() != b ||
        deltas.cols() != b || ts.rows() != deltas.rows())
        throw std::invalid_argument("stage1 batch: inconsistent shapes");
}

ad::Var fd_derived_normal(ad::Tape& t, const RadianceFieldSpec& spec, const MlpTapeParams& trunk,
                          const Mat3X& centers, double h) {
    const Eigen::Index m = centers.cols();
    Eigen::ArrayXXd pts(3, 6 * m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 step = h * Vec3::Unit(axis);
            pts.col(i * 6 + 2 * axis + 0) = (centers.col(i) + step).array();
            pts.col(i * 6 + 2 * axis + 1) = (centers.col(i) - step).array();
        }
    ad::Var enc = t.input(ad::positional_encode(pts, spec.pe_x));
    ad::Var out = mlp_eval(t, spec.trunk_spec(), trunk, enc);
    ad::Var sigma = ad::softplus(t, ad::slice_rows(t, out, 0, 1));  // 1 x 6m
    ad::Var per_center = ad::reshape(t, sigma, 6, m);               // row = offset index
    const double scale = 1.0 / (2.0 * h);
    ad::Var gx = ad::cmul(t, ad::sub(t, ad::slice_rows(t, per_center, 0, 1),
                                     ad::slice_rows(t, per_center, 1, 1)), scale);
    ad::Var gy = ad::cmul(t, ad::sub(t, ad::slice_rows(t, per_center, 2, 1),
                                     ad::slice_rows(t, per_center, 3, 1)), scale);
    ad::Var gz = ad::cmul(t, ad::sub(t, ad::slice_rows(t, per_center, 4, 1),
                                     ad::slice_rows(t, per_center, 5, 1)), scale);
    ad::Var g = ad::concat_rows(t, gx, ad::concat_rows(t, gy, gz));
    // outward normal: density increases toward the interior
    return ad::normalize_cols(t, ad::neg(t, g), 1e-12);
}

Stage1Loss loss_stage1(ad::Tape& t, const RadianceFieldSpec& spec, const MlpTapeParams& trunk,
                       const MlpTapeParams& head, const Stage1Batch& batch,
                       const Stage1Config& cfg, bool include_normal_loss) {
    batch.validate();
    const int B = batch.size();
    const int K = static_cast<int>(batch.ts.rows());

    // sample points and per-sample view directions, ray-major columns
    Eigen::ArrayXXd pts(3, static_cast<Eigen::Index>(B) * K);
    Mat3X dirs_flat(3, static_cast<Eigen::Index>(B) * K);
    Eigen::ArrayXXd deltas_flat(1, static_cast<Eigen::Index>(B) * K);
    for (int r = 0; r < B; ++r)
        for (int k = 0; k < K; ++k) {
            pts.col(r * K + k) = (batch.origins.col(r) + batch.ts(k, r) * batch.dirs.col(r)).array();
            dirs_flat.col(r * K + k) = batch.dirs.col(r);
            deltas_flat(0, r * K + k) = batch.deltas(k, r);
        }

    ad::Var enc = t.input(ad::positional_encode(pts, spec.pe_x));
    ad::Var out = mlp_eval(t, spec.trunk_spec(), trunk, enc);
    ad::Var sigma = ad::softplus(t, ad::slice_rows(t, out, 0, 1));  // 1 x BK
    ad::Var sigdelta = ad::cmul(t, sigma, deltas_flat);
    ad::Var sd = ad::reshape(t, sigdelta, K, B);
    ad::Var transmittance = ad::exp(t, ad::neg(t, ad::cumsum_cols_exclusive(t, sd)));
    ad::Var alpha = ad::csub_const_minus(t, 1.0, ad::exp(t, ad::neg(t, sd)));
    ad::Var w = ad::mul(t, transmittance, alpha);  // K x B

    ad::Var feat = ad::slice_rows(t, out, 1, spec.feature_dim);
    ad::Var head_in = feat;
    if (spec.use_viewdir) {
        ad::Var enc_d = t.input(ad::positional_encode(dirs_flat.array(), spec.pe_d));
        head_in = ad::concat_rows(t, feat, enc_d);
    }
    ad::Var rgb = mlp_eval(t, spec.head_spec(), head, head_in);  // 3 x BK
    ad::Var w_row = ad::reshape(t, w, 1, static_cast<Eigen::Index>(B) * K);
    ad::Var color = ad::group_sum_cols(t, ad::mul(t, rgb, w_row), K);  // 3 x B

    ad::Var lc = ad::cmul(t, ad::sum(t, ad::square(t, ad::sub(t, color, t.input(batch.target_rgb)))),
                          1.0 / B);

    // detached surface points from the current weights (expected depth)
    const Eigen::ArrayXXd w_val = t.value(w);
    std::vector<int> surface_rays;
    Mat3X surface_pts(3, B);
    for (int r = 0; r < B; ++r) {
        double acc = w_val.col(r).sum();
        if (acc <= 0.5) continue;
        double depth = (w_val.col(r) * batch.ts.col(r)).sum() / acc;
        surface_pts.col(static_cast<Eigen::Index>(surface_rays.size())) =
            batch.origins.col(r) + depth * batch.dirs.col(r);
        surface_rays.push_back(r);
    }
    const int S = static_cast<int>(surface_rays.size());

    ad::Var zero = t.input(Eigen::ArrayXXd::Zero(1, 1));
    ad::Var ln = zero;
    ad::Var lns = zero;

    if (S > 0) {
        Mat3X centers = surface_pts.leftCols(S);

        if (include_normal_loss && cfg.alpha2 > 0) {
            std::vector<int> guided;
            for (int i = 0; i < S; ++i)
                if (batch.has_guidance[static_cast<std::size_t>(surface_rays[i])]) guided.push_back(i);
            if (!guided.empty()) {
                Mat3X gc(3, static_cast<Eigen::Index>(guided.size()));
                Eigen::ArrayXXd gn(3, static_cast<Eigen::Index>(guided.size()));
                for (std::size_t i = 0; i < guided.size(); ++i) {
                    gc.col(static_cast<Eigen::Index>(i)) = centers.col(guided[i]);
                    gn.col(static_cast<Eigen::Index>(i)) =
                        batch.guidance.col(surface_rays[static_cast<std::size_t>(guided[i])]).array();
                }
                ad::Var n_sigma = fd_derived_normal(t, spec, trunk, gc, cfg.fd_step);
                ln = ad::cmul(t, ad::sum(t, ad::square(t, ad::sub(t, n_sigma, t.input(gn)))),
                              1.0 / static_cast<double>(guided.size()));
            }
        }

        if (cfg.alpha3 > 0) {
            Mat3X shifted = centers;
            for (int i = 0; i < S; ++i)
                shifted.col(i) += batch.eps.col(surface_rays[static_cast<std::size_t>(i)]);
            ad::Var n0 = fd_derived_normal(t, spec, trunk, centers, cfg.fd_step);
            ad::Var n1 = fd_derived_normal(t, spec, trunk, shifted, cfg.fd_step);
            lns = ad::cmul(t, ad::sum(t, ad::square(t, ad::sub(t, n0, n1))), 1.0 / S);
        }
    }

    Stage1Loss loss;
    loss.lc = lc;
    loss.ln = ln;
    loss.lns = lns;
    loss.total = ad::add(t, ad::cmul(t, lc, cfg.alpha1),
                         ad::add(t, ad::cmul(t, ln, cfg.alpha2), ad::cmul(t, lns, cfg.alpha3)));
    return loss;
}

namespace {

struct PixelList {
    std::vector<std::pair<int, int>> pixels;  // masked (x, y)
};

// Batched plain (non-AD) coarse pass: expected depth and opacity per ray.
void coarse_pass(const RadianceField& field, const Mat3X& origins, const Mat3X& dirs,
                 const Eigen::ArrayXd& near, const Eigen::ArrayXd& far, int k,
                 Eigen::ArrayXd& depth_out, Eigen::ArrayXd& acc_out) {
    const int B = static_cast<int>(origins.cols());
    Eigen::ArrayXXd ts(k, B);
    Mat3X pts(3, static_cast<Eigen::Index>(B) * k);
    for (int r = 0; r < B; ++r) {
        double step = (far[r] - near[r]) / k;
        for (int j = 0; j < k; ++j) {
            ts(j, r) = near[r] + (j + 0.5) * step;
            pts.col(r * k + j) = origins.col(r) + ts(j, r) * dirs.col(r);
        }
    }
    Eigen::ArrayXd sigma = field.density_batch(pts);
    depth_out.resize(B);
    acc_out.resize(B);
    for (int r = 0; r < B; ++r) {
        double step = (far[r] - near[r]) / k;
        double log_t = 0, acc = 0, depth = 0;
        for (int j = 0; j < k; ++j) {
            double sd = sigma[r * k + j] * step;
            double wj = std::exp(log_t) * (1.0 - std::exp(-sd));
            acc += wj;
            depth += wj * ts(j, r);
            log_t -= sd;
        }
        acc_out[r] = acc;
        depth_out[r] = acc > 1e-12 ? depth / acc : 0.5 * (near[r] + far[r]);
    }
}

}  // namespace

Stage1State train_stage1(const MultiLightDataset& dataset, const GuidancePrior& prior,
                         const Stage1Config& cfg) {
    cfg.validate();
    std::vector<int> train_views = dataset.train_view_indices();
    if (train_views.empty()) throw std::invalid_argument("stage1: no training views");

    RngStream root_rng(cfg.seed);
    RngStream init_rng = root_rng.fork(1);
    Stage1State state{RadianceField(cfg.field_spec, init_rng)};

    AdamConfig adam_cfg;
    adam_cfg.learning_rate = cfg.learning_rate;
    AdamState adam_trunk(state.field.trunk_params(), adam_cfg);
    AdamState adam_head(state.field.head_params(), adam_cfg);

    // per-view targets and masked pixel lists
    std::vector<Image> targets;
    std::vector<PixelList> pixel_lists;
    for (int vi : train_views) {
        targets.push_back(dataset.light_averaged_target(vi));
        PixelList pl;
        const View& view = dataset.views[static_cast<std::size_t>(vi)];
        for (int y = 0; y < view.camera.height; ++y)
            for (int x = 0; x < view.camera.width; ++x)
                if (view.mask_at(x, y)) pl.pixels.emplace_back(x, y);
        if (pl.pixels.empty())
            throw std::invalid_argument("stage1: view " + std::to_string(view.id) +
                                        " has an empty mask");
        pixel_lists.push_back(std::move(pl));
    }

    std::ofstream csv;
    if (!cfg.loss_csv.empty()) {
        csv.open(cfg.loss_csv);
        if (!csv) throw std::runtime_error("stage1: cannot open " + cfg.loss_csv.string());
        csv << "iter,total,Lc,Ln,Lns\n";
    }

    const int K = cfg.samples_per_ray;
    ad::Tape tape;
    for (long it = 0; it < cfg.iterations; ++it) {
        RngStream rng = root_rng.fork(1000 + static_cast<std::uint64_t>(it));
        const std::size_t v = static_cast<std::size_t>(it) % train_views.size();
        const View& view = dataset.views[static_cast<std::size_t>(train_views[v])];
        const PixelList& pl = pixel_lists[v];
        const Image& target = targets[v];
        const GuidancePrior::ViewPrior* vp = nullptr;
        for (const auto& p : prior.views)
            if (p.view_id == view.id) vp = &p;

        const int B = cfg.rays_per_batch;
        Stage1Batch batch;
        batch.origins.resize(3, B);
        batch.dirs.resize(3, B);
        batch.ts.resize(K, B);
        batch.deltas.resize(K, B);
        batch.target_rgb.resize(3, B);
        batch.guidance = Mat3X::Zero(3, B);
        batch.has_guidance.assign(static_cast<std::size_t>(B), 0);
        batch.eps.resize(3, B);

        Eigen::ArrayXd near(B), far(B);
        for (int r = 0; r < B; ++r) {
            auto [px, py] = pl.pixels[rng.next_index(pl.pixels.size())];
            Ray ray = pixel_to_ray(view.camera, px + 0.5, py + 0.5);
            auto range = ray_bbox_range(ray, dataset.bbox_min, dataset.bbox_max);
            if (!range) {  // masked pixel grazing past the bbox: fall back to a default range
                range = std::make_pair(0.5, 2.0 * (view.camera.center().norm() + 1.0));
            }
            batch.origins.col(r) = ray.origin;
            batch.dirs.col(r) = ray.direction;
            near[r] = range->first;
            far[r] = range->second;
            for (int c = 0; c < 3; ++c) batch.target_rgb(c, r) = target.at(px, py, c);
            if (vp && vp->valid.at(px, py) > 0.5f) {
                Vec3 n_cam(vp->normal.at(px, py, 0), vp->normal.at(px, py, 1),
                           vp->normal.at(px, py, 2));
                batch.guidance.col(r) = normal_camera_to_world(view.camera, n_cam.normalized());
                batch.has_guidance[static_cast<std::size_t>(r)] = 1;
            }
            for (int c = 0; c < 3; ++c)
                batch.eps(c, r) = cfg.smooth_eps_stddev == 0.0
                                      ? 0.0
                                      : cfg.smooth_eps_stddev * rng.next_normal();
        }

        // shrink the sampling interval around the current surface estimate
        Eigen::ArrayXd coarse_depth, coarse_acc;
        coarse_pass(state.field, batch.origins, batch.dirs, near, far, K, coarse_depth,
                    coarse_acc);
        const double hw = cfg.shrink.half_width(it);
        for (int r = 0; r < B; ++r) {
            double lo = near[r], hi = far[r];
            if (coarse_acc[r] > 0.5) {
                lo = std::max(lo, coarse_depth[r] - hw);
                hi = std::min(hi, coarse_depth[r] + hw);
                if (hi - lo < 1e-6) {
                    lo = near[r];
                    hi = far[r];
                }
            }
            std::vector<double> ts = stratified_depths(lo, hi, K, &rng);
            for (int k = 0; k < K; ++k) {
                batch.ts(k, r) = ts[static_cast<std::size_t>(k)];
                batch.deltas(k, r) =
                    k + 1 < K ? ts[static_cast<std::size_t>(k) + 1] - ts[static_cast<std::size_t>(k)]
                              : (hi - lo) / K;
            }
        }

        tape.clear();
        MlpTapeParams t_trunk = mlp_register(tape, state.field.trunk_params());
        MlpTapeParams t_head = mlp_register(tape, state.field.head_params());
        Stage1Loss loss = loss_stage1(tape, cfg.field_spec, t_trunk, t_head, batch, cfg,
                                      it >= cfg.normal_loss_start);
        tape.backward(loss.total);

        std::array<double, 4> entry = {tape.scalar(loss.total), tape.scalar(loss.lc),
                                       tape.scalar(loss.ln), tape.scalar(loss.lns)};
        if (!std::isfinite(entry[0]))
            throw std::runtime_error("stage1: non-finite loss at iteration " + std::to_string(it) +
                                     " (view " + std::to_string(view.id) + ")");
        state.history.push_back(entry);
        if (csv.is_open())
            csv << it << "," << entry[0] << "," << entry[1] << "," << entry[2] << "," << entry[3]
                << "\n";

        adam_trunk.step(state.field.trunk_params(), mlp_collect_grads(tape, t_trunk,
                                                                      state.field.trunk_params()));
        adam_head.step(state.field.head_params(),
                       mlp_collect_grads(tape, t_head, state.field.head_params()));
        state.iteration = it + 1;
    }
    return state;
}

}  // namespace psnerf
