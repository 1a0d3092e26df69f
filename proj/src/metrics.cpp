#include "psnerf/metrics.hpp"

#include <fstream>

#include <json.hpp>

namespace psnerf {

namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument(std::string(what) + ": resolution mismatch");
}

}  // namespace

double normal_mae(const Image& pred, const Image& gt, const Image& mask_pred,
                  const Image& mask_gt) {
    require_same_size(pred, gt, "normal_mae");
    require_same_size(pred, mask_pred, "normal_mae");
    require_same_size(pred, mask_gt, "normal_mae");
    if (pred.channels != 3 || gt.channels != 3)
        throw std::invalid_argument("normal_mae: normal maps must have 3 channels");

    double acc = 0;
    long count = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (mask_pred.at(x, y) <= 0.5f || mask_gt.at(x, y) <= 0.5f) continue;
            Vec3 p(pred.at(x, y, 0), pred.at(x, y, 1), pred.at(x, y, 2));
            Vec3 g(gt.at(x, y, 0), gt.at(x, y, 1), gt.at(x, y, 2));
            double pn = p.norm(), gn = g.norm();
            if (pn < 1e-9 || gn < 1e-9)
                throw MetricError("normal_mae: zero-length normal inside the mask intersection");
            // half-chord form: exact zero for identical normals, stable near 0 and pi
            double chord = (p / pn - g / gn).norm();
            acc += 2.0 * std::asin(std::min(0.5 * chord, 1.0));
            ++count;
        }
    if (count == 0) throw MetricError("normal_mae: empty mask intersection");
    return acc / count * 180.0 / M_PI;
}

double scale_invariant_psnr(const Image& pred, const Image& gt, const Image& mask) {
    require_same_size(pred, gt, "scale_invariant_psnr");
    require_same_size(pred, mask, "scale_invariant_psnr");
    if (pred.channels != gt.channels)
        throw std::invalid_argument("scale_invariant_psnr: channel mismatch");

    double pg = 0, pp = 0;
    long count = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (mask.at(x, y) <= 0.5f) continue;
            ++count;
            for (int c = 0; c < pred.channels; ++c) {
                double p = pred.at(x, y, c), g = gt.at(x, y, c);
                pg += p * g;
                pp += p * p;
            }
        }
    if (count == 0) throw MetricError("scale_invariant_psnr: empty mask");
    if (pp <= 0) throw MetricError("scale_invariant_psnr: all-zero prediction");
    double alpha = pg / pp;

    double mse = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (mask.at(x, y) <= 0.5f) continue;
            for (int c = 0; c < pred.channels; ++c) {
                double d = alpha * pred.at(x, y, c) - gt.at(x, y, c);
                mse += d * d;
            }
        }
    mse /= static_cast<double>(count) * pred.channels;
    if (mse <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& pred, const Image& gt) {
    require_same_size(pred, gt, "ssim");
    if (pred.channels != gt.channels) throw std::invalid_argument("ssim: channel mismatch");

    constexpr int R = 5;  // 11x11 window
    constexpr double sigma = 1.5;
    double w[2 * R + 1][2 * R + 1];
    double wsum = 0;
    for (int dy = -R; dy <= R; ++dy)
        for (int dx = -R; dx <= R; ++dx) {
            w[dy + R][dx + R] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            wsum += w[dy + R][dx + R];
        }
    for (auto& row : w)
        for (auto& v : row) v /= wsum;

    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double acc = 0;
    long count = 0;
    for (int c = 0; c < pred.channels; ++c)
        for (int y = R; y < pred.height - R; ++y)
            for (int x = R; x < pred.width - R; ++x) {
                double mp = 0, mg = 0, vp = 0, vg = 0, cov = 0;
                for (int dy = -R; dy <= R; ++dy)
                    for (int dx = -R; dx <= R; ++dx) {
                        double wk = w[dy + R][dx + R];
                        mp += wk * pred.at(x + dx, y + dy, c);
                        mg += wk * gt.at(x + dx, y + dy, c);
                    }
                for (int dy = -R; dy <= R; ++dy)
                    for (int dx = -R; dx <= R; ++dx) {
                        double wk = w[dy + R][dx + R];
                        double dp = pred.at(x + dx, y + dy, c) - mp;
                        double dg = gt.at(x + dx, y + dy, c) - mg;
                        vp += wk * dp * dp;
                        vg += wk * dg * dg;
                        cov += wk * dp * dg;
                    }
                acc += (2 * mp * mg + C1) * (2 * cov + C2) /
                       ((mp * mp + mg * mg + C1) * (vp + vg + C2));
                ++count;
            }
    if (count == 0) throw MetricError("ssim: image smaller than the 11x11 window");
    return acc / count;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    auto put = [&j](const char* key, double v) {
        if (std::isfinite(v)) j[key] = v;
    };
    put("normal_mae_deg", normal_mae_deg);
    put("chamfer_mm", chamfer_mm);
    put("psnr_db", psnr_db);
    put("ssim", ssim);
    j["pixel_count"] = pixel_count;
    j["point_count"] = point_count;
    j["mask_convention"] = mask_convention;
    j["chamfer_convention"] = chamfer_convention;
    return j.dump(2);
}

void MetricReport::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("MetricReport::save: cannot open " + path.string());
    f << to_json() << "\n";
}

}  // namespace psnerf
