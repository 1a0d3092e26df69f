#include "psnerf/field.hpp"

namespace psnerf {

AnalyticField::AnalyticField(std::vector<SphereParams> spheres, double max_density,
                             double sharpness)
    : kind_(spheres.size() == 1 ? Kind::Sphere : Kind::UnionOfSpheres),
      spheres_(std::move(spheres)),
      max_density_(max_density),
      sharpness_(sharpness) {
    if (spheres_.empty()) throw std::invalid_argument("AnalyticField: no spheres");
}

AnalyticField::AnalyticField(double torus_major, double torus_minor, double max_density,
                             double sharpness)
    : kind_(Kind::Torus),
      torus_major_(torus_major),
      torus_minor_(torus_minor),
      max_density_(max_density),
      sharpness_(sharpness) {}

double AnalyticField::sdf(const Vec3& x) const {
    if (kind_ == Kind::Torus) {
        double q = std::hypot(std::hypot(x.x(), x.z()) - torus_major_, x.y());
        return q - torus_minor_;
    }
    double d = std::numeric_limits<double>::max();
    for (const auto& s : spheres_) d = std::min(d, (x - s.center).norm() - s.radius);
    return d;
}

Vec3 AnalyticField::sdf_gradient(const Vec3& x) const {
    if (kind_ == Kind::Torus) {
        double lxz = std::hypot(x.x(), x.z());
        double q = std::hypot(lxz - torus_major_, x.y());
        if (q < 1e-12 || lxz < 1e-12) return Vec3::UnitY();
        Vec3 g;
        g.x() = (lxz - torus_major_) / q * x.x() / lxz;
        g.y() = x.y() / q;
        g.z() = (lxz - torus_major_) / q * x.z() / lxz;
        return g;
    }
    double best = std::numeric_limits<double>::max();
    Vec3 g = Vec3::UnitY();
    for (const auto& s : spheres_) {
        double d = (x - s.center).norm() - s.radius;
        if (d < best) {
            best = d;
            double n = (x - s.center).norm();
            g = n < 1e-12 ? Vec3::UnitY() : Vec3((x - s.center) / n);
        }
    }
    return g;
}

double AnalyticField::density(const Vec3& x) const {
    double z = sharpness_ * sdf(x);
    // stable logistic
    if (z >= 0) return max_density_ * std::exp(-z) / (1.0 + std::exp(-z));
    return max_density_ / (1.0 + std::exp(z));
}

Vec3 AnalyticField::density_gradient(const Vec3& x) const {
    double z = sharpness_ * sdf(x);
    double ez = std::exp(-std::abs(z));
    double sig_prime = ez / ((1.0 + ez) * (1.0 + ez));  // logistic'(|z|), symmetric
    return -max_density_ * sharpness_ * sig_prime * sdf_gradient(x);
}

MlpSpec RadianceFieldSpec::trunk_spec() const {
    MlpSpec s;
    s.input_dim = 3 * 2 * pe_x;
    s.hidden_width = width;
    s.n_layers = n_layers;
    s.skip_layers = skip_layers;
    s.output_dim = 1 + feature_dim;
    s.output_activation = OutputActivation::Linear;
    return s;
}

MlpSpec RadianceFieldSpec::head_spec() const {
    MlpSpec s;
    s.input_dim = feature_dim + (use_viewdir ? 3 * 2 * pe_d : 0);
    s.hidden_width = head_width;
    s.n_layers = head_layers;
    s.output_dim = 3;
    s.output_activation = OutputActivation::Sigmoid;
    return s;
}

RadianceField::RadianceField(RadianceFieldSpec spec, RngStream& rng) : spec_(spec) {
    RngStream r1 = rng.fork(101), r2 = rng.fork(102);
    trunk_ = mlp_init(spec_.trunk_spec(), r1);
    head_ = mlp_init(spec_.head_spec(), r2);
}

RadianceField::RadianceField(RadianceFieldSpec spec, MlpParams trunk, MlpParams head)
    : spec_(spec), trunk_(std::move(trunk)), head_(std::move(head)) {}

Eigen::ArrayXd RadianceField::density_batch(const Mat3X& pts) const {
    Eigen::ArrayXXd enc = ad::positional_encode(pts.array(), spec_.pe_x);
    Eigen::ArrayXXd out = mlp_eval(spec_.trunk_spec(), trunk_, enc);
    Eigen::ArrayXd raw = out.row(0).transpose();
    return raw.max(0.0) + (1.0 + (-raw.abs()).exp()).log();  // softplus
}

double RadianceField::density(const Vec3& x) const {
    Mat3X pts(3, 1);
    pts.col(0) = x;
    return density_batch(pts)[0];
}

Mat3X RadianceField::density_gradient_batch(const Mat3X& pts) const {
    // Exact gradient via one tape backward from sum(sigma): each sample's
    // sigma depends only on its own column.
    ad::Tape tape;
    ad::Var x = tape.input(pts.array());
    ad::Var enc = ad::positional_encode(tape, x, spec_.pe_x);
    MlpTapeParams tp = mlp_register(tape, trunk_);
    ad::Var out = mlp_eval(tape, spec_.trunk_spec(), tp, enc);
    ad::Var sigma = ad::softplus(tape, ad::slice_rows(tape, out, 0, 1));
    tape.backward(ad::sum(tape, sigma));
    return tape.grad(x).matrix();
}

Vec3 RadianceField::density_gradient(const Vec3& x) const {
    Mat3X pts(3, 1);
    pts.col(0) = x;
    return density_gradient_batch(pts).col(0);
}

Eigen::ArrayXXd RadianceField::color_batch(const Mat3X& pts, const Mat3X& dirs) const {
    Eigen::ArrayXXd enc = ad::positional_encode(pts.array(), spec_.pe_x);
    Eigen::ArrayXXd trunk_out = mlp_eval(spec_.trunk_spec(), trunk_, enc);
    Eigen::ArrayXXd feat = trunk_out.bottomRows(spec_.feature_dim);
    Eigen::ArrayXXd head_in;
    if (spec_.use_viewdir) {
        Eigen::ArrayXXd enc_d = ad::positional_encode(dirs.array(), spec_.pe_d);
        head_in.resize(feat.rows() + enc_d.rows(), feat.cols());
        head_in.topRows(feat.rows()) = feat;
        head_in.bottomRows(enc_d.rows()) = enc_d;
    } else {
        head_in = feat;
    }
    return mlp_eval(spec_.head_spec(), head_, head_in);
}

void RadianceField::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    mlp_save(dir / "trunk.ckpt", spec_.trunk_spec(), trunk_);
    mlp_save(dir / "head.ckpt", spec_.head_spec(), head_);
}

RadianceField RadianceField::load(const std::filesystem::path& dir,
                                  const RadianceFieldSpec& spec) {
    auto [tspec, tparams] = mlp_load(dir / "trunk.ckpt");
    auto [hspec, hparams] = mlp_load(dir / "head.ckpt");
    if (tspec.input_dim != spec.trunk_spec().input_dim ||
        hspec.input_dim != spec.head_spec().input_dim)
        throw std::runtime_error("RadianceField: checkpoint does not match spec");
    return RadianceField(spec, std::move(tparams), std::move(hparams));
}

}  // namespace psnerf
