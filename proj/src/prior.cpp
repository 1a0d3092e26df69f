#include "psnerf/prior.hpp"

#include <fstream>
#include <iostream>

#include <json.hpp>

namespace psnerf {

namespace {

std::string view_dir_name(int view_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "view_%02d", view_id);
    return buf;
}

// Unit vector orthogonal to d.
Vec3 orthogonal_axis(const Vec3& d, RngStream& rng) {
    for (;;) {
        Vec3 r(rng.next_normal(), rng.next_normal(), rng.next_normal());
        Vec3 a = d.cross(r);
        if (a.norm() > 1e-6) return a.normalized();
    }
}

}  // namespace

const GuidancePrior::ViewPrior& GuidancePrior::view_by_id(int view_id) const {
    for (const auto& v : views)
        if (v.view_id == view_id) return v;
    throw std::invalid_argument("GuidancePrior: no view " + std::to_string(view_id));
}

const GuidancePrior::LightEstimate& GuidancePrior::light_estimate(int view_id,
                                                                  int light_id) const {
    for (const auto& l : lights)
        if (l.view_id == view_id && l.light_id == light_id) return l;
    throw std::invalid_argument("GuidancePrior: no light estimate for view " +
                                std::to_string(view_id) + " light " + std::to_string(light_id));
}

void save_prior(const std::filesystem::path& root, const GuidancePrior& prior) {
    for (const auto& v : prior.views) {
        auto dir = root / view_dir_name(v.view_id);
        std::filesystem::create_directories(dir);
        write_pfm(dir / "normal.pfm", v.normal);
    }
    nlohmann::json j;
    j["lights"] = nlohmann::json::array();
    for (const auto& l : prior.lights)
        j["lights"].push_back({{"view", l.view_id},
                               {"light_id", l.light_id},
                               {"direction", {l.direction.x(), l.direction.y(), l.direction.z()}},
                               {"intensity", l.intensity}});
    std::ofstream f(root / "lights.json");
    if (!f) throw std::runtime_error("save_prior: cannot open " + (root / "lights.json").string());
    f << j.dump(2) << "\n";
}

GuidancePrior load_prior(const std::filesystem::path& root, const MultiLightDataset& dataset) {
    GuidancePrior prior;
    for (const auto& view : dataset.views) {
        auto path = root / view_dir_name(view.id) / "normal.pfm";
        if (!std::filesystem::exists(path))
            throw std::runtime_error("load_prior: missing normal map for view " +
                                     std::to_string(view.id) + " (" + path.string() + ")");
        GuidancePrior::ViewPrior vp;
        vp.view_id = view.id;
        vp.normal = read_pfm(path);
        if (vp.normal.channels != 3)
            throw std::runtime_error("load_prior: " + path.string() + " is not a 3-channel map");
        if (vp.normal.width != view.camera.width || vp.normal.height != view.camera.height)
            throw std::runtime_error("load_prior: resolution mismatch for view " +
                                     std::to_string(view.id));
        vp.valid = Image(vp.normal.width, vp.normal.height, 1);
        bool warned = false;
        for (int y = 0; y < vp.normal.height; ++y)
            for (int x = 0; x < vp.normal.width; ++x) {
                Vec3 n(vp.normal.at(x, y, 0), vp.normal.at(x, y, 1), vp.normal.at(x, y, 2));
                double len = n.norm();
                if (len < 1e-6) continue;  // invalid pixel
                if (std::abs(len - 1.0) > 1e-3 && !warned) {
                    std::cerr << "load_prior: renormalizing off-unit normals in " << path.string()
                              << "\n";
                    warned = true;
                }
                n /= len;
                for (int c = 0; c < 3; ++c) vp.normal.at(x, y, c) = static_cast<float>(n[c]);
                vp.valid.at(x, y) = 1.f;
            }
        prior.views.push_back(std::move(vp));
    }

    auto lights_path = root / "lights.json";
    std::ifstream f(lights_path);
    if (!f) throw std::runtime_error("load_prior: missing " + lights_path.string());
    nlohmann::json j = nlohmann::json::parse(f);
    for (const auto& jl : j.at("lights")) {
        GuidancePrior::LightEstimate le;
        le.view_id = jl.at("view").get<int>();
        le.light_id = jl.at("light_id").get<int>();
        auto d = jl.at("direction");
        le.direction = Vec3(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>())
                           .normalized();
        le.intensity = jl.at("intensity").get<double>();
        if (le.intensity <= 0)
            throw std::runtime_error("load_prior: non-positive intensity for view " +
                                     std::to_string(le.view_id) + " light " +
                                     std::to_string(le.light_id));
        // the estimate must name an existing dataset image
        bool found = false;
        for (const auto& view : dataset.views) {
            if (view.id != le.view_id) continue;
            for (const auto& img : view.images)
                if (img.light_id == le.light_id) found = true;
        }
        if (!found)
            throw std::runtime_error("load_prior: light estimate for nonexistent image (view " +
                                     std::to_string(le.view_id) + ", light " +
                                     std::to_string(le.light_id) + ")");
        prior.lights.push_back(le);
    }
    return prior;
}

GuidancePrior synth_ups_oracle(const MultiLightDataset& dataset,
                               const std::vector<Image>& gt_normals_cam, double target_mae_deg,
                               double light_perturb_deg, RngStream& rng, double intensity_sigma) {
    if (target_mae_deg < 0 || light_perturb_deg < 0)
        throw std::invalid_argument("synth_ups_oracle: negative error target");
    if (gt_normals_cam.size() != dataset.views.size())
        throw std::invalid_argument("synth_ups_oracle: one ground-truth map per view required");

    GuidancePrior prior;
    // half-normal |N(0,s)| has mean s*sqrt(2/pi); pick s for the target mean
    const double s_rad = target_mae_deg * M_PI / 180.0 * std::sqrt(M_PI / 2.0);

    for (std::size_t vi = 0; vi < dataset.views.size(); ++vi) {
        const View& view = dataset.views[vi];
        const Image& gt = gt_normals_cam[vi];
        if (gt.channels != 3 || gt.width != view.camera.width || gt.height != view.camera.height)
            throw std::invalid_argument("synth_ups_oracle: ground-truth map mismatch for view " +
                                        std::to_string(view.id));
        GuidancePrior::ViewPrior vp;
        vp.view_id = view.id;
        vp.normal = gt;
        vp.valid = Image(gt.width, gt.height, 1);
        RngStream vrng = rng.fork(0x100 + static_cast<std::uint64_t>(view.id));
        for (int y = 0; y < gt.height; ++y)
            for (int x = 0; x < gt.width; ++x) {
                Vec3 n(gt.at(x, y, 0), gt.at(x, y, 1), gt.at(x, y, 2));
                if (n.norm() < 1e-6) continue;
                n.normalize();
                vp.valid.at(x, y) = 1.f;
                if (target_mae_deg > 0) {
                    Vec3 axis = orthogonal_axis(n, vrng);
                    double angle = std::abs(s_rad * vrng.next_normal());
                    n = Eigen::AngleAxisd(angle, axis) * n;
                }
                for (int c = 0; c < 3; ++c) vp.normal.at(x, y, c) = static_cast<float>(n[c]);
            }
        prior.views.push_back(std::move(vp));
    }

    // per-image light estimates from the dataset's (shared) light set
    RngStream lrng = rng.fork(0x200);
    std::vector<double> intensities;
    for (const auto& view : dataset.views)
        for (const auto& img : view.images) {
            const DirectionalLight& gt_light = dataset.light_by_id(img.light_id);
            GuidancePrior::LightEstimate le;
            le.view_id = view.id;
            le.light_id = img.light_id;
            le.direction = gt_light.direction;
            if (light_perturb_deg > 0) {
                Vec3 axis = orthogonal_axis(le.direction, lrng);
                le.direction =
                    Eigen::AngleAxisd(light_perturb_deg * M_PI / 180.0, axis) * le.direction;
            }
            le.intensity = gt_light.intensity *
                           (intensity_sigma > 0
                                ? std::exp(intensity_sigma * lrng.next_normal())
                                : 1.0);
            intensities.push_back(le.intensity);
            prior.lights.push_back(le);
        }
    // renormalize estimated intensities to mean 1 (scale is unobservable)
    double mean = 0;
    for (double v : intensities) mean += v;
    mean /= static_cast<double>(intensities.size());
    for (auto& l : prior.lights) l.intensity /= mean;
    return prior;
}

}  // namespace psnerf
