#include "psnerf/volume.hpp"

namespace psnerf {

std::vector<double> stratified_depths(double near, double far, int k, RngStream* rng) {
    if (k < 2) throw std::invalid_argument("stratified_depths: need k >= 2");
    if (!(near < far)) throw std::invalid_argument("stratified_depths: near must be < far");
    std::vector<double> ts(static_cast<std::size_t>(k));
    double step = (far - near) / k;
    for (int i = 0; i < k; ++i) {
        double u = rng ? rng->next_uniform() : 0.5;
        ts[static_cast<std::size_t>(i)] = near + (i + u) * step;
    }
    return ts;
}

CompositeResult composite(const Eigen::ArrayXd& sigmas, const Eigen::ArrayXd& deltas,
                          const Eigen::ArrayXXd& colors, const Eigen::ArrayXd& ts) {
    Eigen::Index k = sigmas.size();
    if (deltas.size() != k || ts.size() != k || colors.cols() != k)
        throw std::invalid_argument("composite: inconsistent sample counts");
    CompositeResult res;
    res.weights.resize(k);
    res.transmittance.resize(k);
    double t_i = 1.0;  // running product keeps the telescoping identity exact
    for (Eigen::Index i = 0; i < k; ++i) {
        res.transmittance[i] = t_i;
        double seg = std::exp(-sigmas[i] * deltas[i]);
        res.weights[i] = t_i * (1.0 - seg);
        t_i *= seg;
    }
    res.acc_opacity = res.weights.sum();
    res.color = (colors.rowwise() * res.weights.transpose()).rowwise().sum().matrix();
    double wt = (res.weights * ts).sum();
    res.expected_depth = res.acc_opacity > 1e-12 ? wt / res.acc_opacity : 0.0;
    return res;
}

VolumeRenderResult volume_render(const DensityField& field, const ColorFn& color_fn,
                                 const Ray& ray, const RaySampling& sampling,
                                 RngStream* rng) {
    sampling.validate();
    auto ts = stratified_depths(ray.near, ray.far, sampling.samples_per_ray,
                                sampling.stratified_jitter ? rng : nullptr);
    Eigen::Index k = static_cast<Eigen::Index>(ts.size());
    Mat3X pts(3, k);
    Mat3X dirs(3, k);
    Eigen::ArrayXd tarr(k), deltas(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        tarr[i] = ts[static_cast<std::size_t>(i)];
        pts.col(i) = ray.origin + tarr[i] * ray.direction;
        dirs.col(i) = ray.direction;
    }
    for (Eigen::Index i = 0; i < k - 1; ++i) deltas[i] = tarr[i + 1] - tarr[i];
    deltas[k - 1] = ray.far - tarr[k - 1];
    Eigen::ArrayXd sigmas = field.density_batch(pts);
    Eigen::ArrayXXd colors =
        color_fn ? color_fn(pts, dirs) : Eigen::ArrayXXd(Eigen::ArrayXXd::Zero(3, k));
    CompositeResult c = composite(sigmas, deltas, colors, tarr);
    return {c.color, c.expected_depth, c.acc_opacity};
}

Vec3 derived_normal(const DensityField& field, const Vec3& x, double gradient_floor) {
    Vec3 g = field.density_gradient(x);
    double n = g.norm();
    if (n < gradient_floor)
        throw DegenerateNormalError("derived_normal: vanishing density gradient");
    return -g / n;
}

SurfaceHit find_surface(const DensityField& field, const Ray& ray, double level,
                        const RaySampling& sampling) {
    if (level <= 0.0) throw std::invalid_argument("find_surface: level must be positive");
    sampling.validate();
    int k = sampling.samples_per_ray;
    double delta_ref = (ray.far - ray.near) / k;
    auto alpha = [&](double t) {
        return 1.0 - std::exp(-field.density(ray.origin + t * ray.direction) * delta_ref);
    };
    SurfaceHit hit;
    double t_prev = ray.near;
    double f_prev = alpha(t_prev) - level;
    if (f_prev > 0.0) {  // already inside at near
        hit.hit = true;
        hit.t = ray.near;
    } else {
        for (int i = 1; i <= k && !hit.hit; ++i) {
            double t_cur = ray.near + (ray.far - ray.near) * i / k;
            double f_cur = alpha(t_cur) - level;
            if (f_cur > 0.0) {
                // secant refinement inside [t_prev, t_cur]
                double a = t_prev, b = t_cur, fa = f_prev, fb = f_cur, t_root = t_cur;
                for (int it = 0; it < 16; ++it) {
                    t_root = b - fb * (b - a) / (fb - fa);
                    if (!(t_root > a && t_root < b)) t_root = 0.5 * (a + b);
                    double fr = alpha(t_root) - level;
                    if (std::abs(fr) < 1e-6) break;
                    if (fr > 0.0) {
                        b = t_root;
                        fb = fr;
                    } else {
                        a = t_root;
                        fa = fr;
                    }
                }
                hit.hit = true;
                hit.t = t_root;
            }
            t_prev = t_cur;
            f_prev = f_cur;
        }
    }
    if (!hit.hit) return hit;
    hit.point = ray.origin + hit.t * ray.direction;
    try {
        hit.normal = derived_normal(field, hit.point);
    } catch (const DegenerateNormalError&) {
        hit.hit = false;
        return hit;
    }
    if (hit.normal.dot(-ray.direction) < 0.0) hit.normal = -hit.normal;
    return hit;
}

double ray_visibility(const DensityField& field, const Vec3& x, const Vec3& w_i,
                      const VisibilityConfig& cfg) {
    double spacing = cfg.t_max / cfg.samples;
    double t0 = cfg.offset_spacings * spacing;
    Mat3X pts(3, cfg.samples);
    for (int i = 0; i < cfg.samples; ++i)
        pts.col(i) = x + (t0 + (i + 0.5) * spacing) * w_i;
    Eigen::ArrayXd sigmas = field.density_batch(pts);
    return std::exp(-(sigmas * spacing).sum());
}

std::optional<std::pair<double, double>> ray_bbox_range(const Ray& ray, const Vec3& bmin,
                                                        const Vec3& bmax, double pad_fraction) {
    Vec3 half = 0.5 * (bmax - bmin);
    Vec3 center = 0.5 * (bmax + bmin);
    Vec3 lo = center - (1.0 + pad_fraction) * half;
    Vec3 hi = center + (1.0 + pad_fraction) * half;
    double tmin = 0.0, tmax = std::numeric_limits<double>::max();
    for (int a = 0; a < 3; ++a) {
        double d = ray.direction[a];
        if (std::abs(d) < 1e-12) {
            if (ray.origin[a] < lo[a] || ray.origin[a] > hi[a]) return std::nullopt;
            continue;
        }
        double t1 = (lo[a] - ray.origin[a]) / d;
        double t2 = (hi[a] - ray.origin[a]) / d;
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
    }
    if (tmin >= tmax) return std::nullopt;
    return std::make_pair(tmin, tmax);
}

}  // namespace psnerf
