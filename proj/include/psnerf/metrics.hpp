#pragma once

#include "psnerf/scene.hpp"

namespace psnerf {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mean angular error in degrees over the intersection of the two masks.
// Maps are 3-channel world- or camera-frame normals; zero-norm pixels inside
// the intersection are invalid and rejected.
double normal_mae(const Image& pred, const Image& gt, const Image& mask_pred,
                  const Image& mask_gt);

// PSNR (peak 1.0, capped at 99 dB) of alpha* . pred vs gt over the mask,
// with the least-squares scale alpha* = <pred,gt> / <pred,pred>.
double scale_invariant_psnr(const Image& pred, const Image& gt, const Image& mask);

// Mean SSIM over channels; 11x11 Gaussian window, sigma 1.5, standard
// constants C1 = 0.01^2, C2 = 0.03^2 at unit peak.
double ssim(const Image& pred, const Image& gt);

struct MetricReport {
    double normal_mae_deg = std::numeric_limits<double>::quiet_NaN();
    double chamfer_mm = std::numeric_limits<double>::quiet_NaN();
    double psnr_db = std::numeric_limits<double>::quiet_NaN();
    double ssim = std::numeric_limits<double>::quiet_NaN();
    long pixel_count = 0;
    long point_count = 0;
    std::string mask_convention = "intersection(input mask, predicted mask)";
    std::string chamfer_convention = "gt bbox rescaled to [-1,1]; 1 unit = 500 mm";

    std::string to_json() const;
    void save(const std::filesystem::path& path) const;
};

}  // namespace psnerf
