#include "psnerf/renderer.hpp"

namespace psnerf {

Vec3 shade(const ShadingSample& s, const SGBasisSpec& basis, bool clamp_cosine) {
    double cosine = s.light_dir.dot(s.normal);
    if (clamp_cosine) cosine = std::max(cosine, 0.0);
    Vec3 fr = brdf_eval(s.albedo, s.omega, basis, s.light_dir, s.view_dir, s.normal);
    return s.visibility * s.light_intensity * cosine * fr;
}

HitFn make_field_hit_fn(const DensityField& field, const Vec3& bbox_min, const Vec3& bbox_max,
                        double level, const RaySampling& sampling) {
    return [&field, bbox_min, bbox_max, level, sampling](const Ray& ray) {
        Ray r = ray;
        auto range = ray_bbox_range(r, bbox_min, bbox_max);
        if (!range) return SurfaceHit{};
        r.near = range->first;
        r.far = range->second;
        return find_surface(field, r, level, sampling);
    };
}

HitFn make_expected_depth_hit_fn(const DensityField& field, const Vec3& bbox_min,
                                 const Vec3& bbox_max, const RaySampling& sampling,
                                 double min_opacity) {
    sampling.validate();
    return [&field, bbox_min, bbox_max, sampling, min_opacity](const Ray& ray) {
        Ray r = ray;
        auto range = ray_bbox_range(r, bbox_min, bbox_max);
        if (!range) return SurfaceHit{};
        r.near = range->first;
        r.far = range->second;
        RaySampling fixed = sampling;
        fixed.stratified_jitter = false;  // deterministic surface
        VolumeRenderResult res = volume_render(field, nullptr, r, fixed);
        if (res.acc_opacity <= min_opacity) return SurfaceHit{};
        SurfaceHit hit;
        hit.hit = true;
        hit.t = res.expected_depth;
        hit.point = r.origin + hit.t * r.direction;
        try {
            hit.normal = derived_normal(field, hit.point);
        } catch (const DegenerateNormalError&) {
            return SurfaceHit{};
        }
        if (hit.normal.dot(r.direction) > 0) hit.normal = -hit.normal;
        return hit;
    };
}

RenderedImage render_image(const Decomposition& decomp, const SGBasisSpec& basis,
                           const View& view, const DirectionalLight& light, const HitFn& hits,
                           bool clamp_cosine) {
    const Camera& cam = view.camera;
    RenderedImage out;
    out.image = Image(cam.width, cam.height, 3);
    out.hit_mask = Image(cam.width, cam.height, 1);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            if (!view.mask_at(x, y)) continue;
            ++out.masked_pixels;
            Ray ray = pixel_to_ray(cam, x + 0.5, y + 0.5);
            SurfaceHit hit = hits(ray);
            if (!hit.hit) continue;  // no-hit pixels inside the mask stay zero, flagged off
            ++out.hit_pixels;
            out.hit_mask.at(x, y) = 1.f;
            ShadingSample s;
            s.point = hit.point;
            s.normal = decomp.normal(hit.point);
            s.albedo = decomp.albedo(hit.point);
            s.omega = decomp.specular_weights(hit.point);
            s.visibility = decomp.visibility(hit.point, light.direction);
            s.light_dir = light.direction;
            s.light_intensity = light.intensity;
            s.view_dir = -ray.direction;
            Vec3 c = shade(s, basis, clamp_cosine);
            for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = static_cast<float>(c[ch]);
        }
    }
    return out;
}

RenderedImage light_averaged_image(const Decomposition& decomp, const SGBasisSpec& basis,
                                   const View& view, const std::vector<DirectionalLight>& lights,
                                   const HitFn& hits, bool clamp_cosine) {
    if (lights.empty()) throw std::invalid_argument("light_averaged_image: no lights");
    RenderedImage acc;
    bool first = true;
    for (const auto& light : lights) {
        RenderedImage r = render_image(decomp, basis, view, light, hits, clamp_cosine);
        if (first) {
            acc = std::move(r);
            first = false;
        } else {
            for (std::size_t i = 0; i < acc.image.data.size(); ++i)
                acc.image.data[i] += r.image.data[i];
        }
    }
    for (auto& v : acc.image.data) v /= static_cast<float>(lights.size());
    return acc;
}

}  // namespace psnerf
