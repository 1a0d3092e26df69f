#pragma once

#include <memory>

#include "psnerf/mlp.hpp"
#include "psnerf/scene.hpp"

namespace psnerf {

using Mat3X = Eigen::Matrix3Xd;

// Differentiable map x -> sigma(x) >= 0 with spatial gradients.
class DensityField {
public:
    virtual ~DensityField() = default;
    virtual double density(const Vec3& x) const = 0;
    virtual Vec3 density_gradient(const Vec3& x) const = 0;

    virtual Eigen::ArrayXd density_batch(const Mat3X& pts) const {
        Eigen::ArrayXd out(pts.cols());
        for (Eigen::Index i = 0; i < pts.cols(); ++i) out[i] = density(pts.col(i));
        return out;
    }
    virtual Mat3X density_gradient_batch(const Mat3X& pts) const {
        Mat3X out(3, pts.cols());
        for (Eigen::Index i = 0; i < pts.cols(); ++i) out.col(i) = density_gradient(pts.col(i));
        return out;
    }
};

// Closed-form test fields: logistic density step across a signed distance,
// sigma(x) = A / (1 + exp(k * d(x))), high inside the surface.
class AnalyticField : public DensityField {
public:
    enum class Kind { Sphere, Torus, UnionOfSpheres };

    struct SphereParams {
        Vec3 center = Vec3::Zero();
        double radius = 1.0;
    };

    // Sphere / union-of-spheres
    AnalyticField(std::vector<SphereParams> spheres, double max_density, double sharpness);
    // Torus in the xz-plane: major radius R, tube radius r
    AnalyticField(double torus_major, double torus_minor, double max_density, double sharpness);

    double sdf(const Vec3& x) const;
    Vec3 sdf_gradient(const Vec3& x) const;
    double density(const Vec3& x) const override;
    Vec3 density_gradient(const Vec3& x) const override;

    double max_density() const { return max_density_; }
    double sharpness() const { return sharpness_; }
    Kind kind() const { return kind_; }
    const std::vector<SphereParams>& spheres() const { return spheres_; }

private:
    Kind kind_;
    std::vector<SphereParams> spheres_;
    double torus_major_ = 0, torus_minor_ = 0;
    double max_density_;
    double sharpness_;
};

// Stage-I radiance field: trunk MLP gamma(x) -> (sigma_raw, feature), color
// head (feature, gamma(d)) -> rgb. Density is softplus(sigma_raw) so it never
// depends on the view direction.
struct RadianceFieldSpec {
    int pe_x = 6;
    int pe_d = 4;
    bool use_viewdir = true;
    int width = 64;
    int n_layers = 4;
    std::set<int> skip_layers;
    int feature_dim = 32;
    int head_layers = 2;
    int head_width = 32;

    MlpSpec trunk_spec() const;
    MlpSpec head_spec() const;
};

class RadianceField : public DensityField {
public:
    RadianceField(RadianceFieldSpec spec, RngStream& rng);
    RadianceField(RadianceFieldSpec spec, MlpParams trunk, MlpParams head);

    const RadianceFieldSpec& spec() const { return spec_; }
    MlpParams& trunk_params() { return trunk_; }
    MlpParams& head_params() { return head_; }
    const MlpParams& trunk_params() const { return trunk_; }
    const MlpParams& head_params() const { return head_; }

    double density(const Vec3& x) const override;
    Vec3 density_gradient(const Vec3& x) const override;
    Eigen::ArrayXd density_batch(const Mat3X& pts) const override;
    Mat3X density_gradient_batch(const Mat3X& pts) const override;

    // rgb columns for sample points under one view direction per point.
    Eigen::ArrayXXd color_batch(const Mat3X& pts, const Mat3X& dirs) const;

    void save(const std::filesystem::path& dir) const;
    static RadianceField load(const std::filesystem::path& dir, const RadianceFieldSpec& spec);

private:
    RadianceFieldSpec spec_;
    MlpParams trunk_;
    MlpParams head_;
};

}  // namespace psnerf
