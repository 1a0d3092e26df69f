#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "psnerf/field.hpp"
#include "psnerf/renderer.hpp"
#include "test_util.hpp"

using namespace psnerf;

TEST_CASE("sg basis: aligned half vector saturates every lobe") {
    SGBasisSpec spec = SGBasisSpec::log_spaced();
    Vec3 n = Vec3::UnitZ();
    Eigen::ArrayXd v = sg_basis_eval(spec, n, n);
    CHECK(v.size() == 9);
    CHECK((v - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("sg basis: hand-evaluated lobe and sharpness ordering") {
    SGBasisSpec spec;
    spec.lambdas.resize(1);
    spec.lambdas[0] = std::log(2.0);
    // h.n = 0 -> exp(-ln 2) = 1/2
    CHECK(sg_basis_eval(spec, Vec3::UnitX(), Vec3::UnitZ())[0] == doctest::Approx(0.5));

    SGBasisSpec many = SGBasisSpec::log_spaced();
    Vec3 h = Vec3(0.2, 0, 1).normalized();
    Eigen::ArrayXd v = sg_basis_eval(many, h, Vec3::UnitZ());
    for (int i = 1; i < v.size(); ++i) CHECK(v[i] < v[i - 1]);  // sharper falls faster
}

TEST_CASE("log-spaced basis spans [2, 512] and bad specs are rejected") {
    SGBasisSpec spec = SGBasisSpec::log_spaced();
    CHECK(spec.lambdas[0] == doctest::Approx(2.0));
    CHECK(spec.lambdas[8] == doctest::Approx(512.0));
    for (int i = 1; i < 9; ++i) CHECK(spec.lambdas[i] > spec.lambdas[i - 1]);

    SGBasisSpec bad;
    bad.lambdas.resize(2);
    bad.lambdas << 3.0, 3.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.lambdas << -1.0, 2.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    SGBasisSpec empty;
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
}

TEST_CASE("half vector: bisector, coincident, and antiparallel cases") {
    Vec3 h = half_vector(Vec3::UnitX(), Vec3::UnitY());
    CHECK((h - Vec3(std::sqrt(2.0) / 2, std::sqrt(2.0) / 2, 0)).norm() < 1e-15);

    Vec3 v = Vec3(0.3, -0.2, 0.9).normalized();
    CHECK((half_vector(v, v) - v).norm() < 1e-15);

    CHECK_THROWS_AS(half_vector(Vec3::UnitZ(), -Vec3::UnitZ()), DegenerateHalfVectorError);
}

TEST_CASE("brdf: zero specular weights reduce to the diffuse albedo") {
    SGBasisSpec spec = SGBasisSpec::log_spaced();
    Vec3 rho_d(0.4, 0.5, 0.6);
    Eigen::ArrayXd omega = Eigen::ArrayXd::Zero(9);
    Vec3 fr = brdf_eval(rho_d, omega, spec, Vec3::UnitZ(), Vec3::UnitZ(), Vec3::UnitZ());
    CHECK((fr - rho_d).norm() < 1e-15);

    Eigen::ArrayXd wrong = Eigen::ArrayXd::Zero(3);
    CHECK_THROWS_AS(brdf_eval(rho_d, wrong, spec, Vec3::UnitZ(), Vec3::UnitZ(), Vec3::UnitZ()),
                    std::invalid_argument);
}

TEST_CASE("brdf: specular term is achromatic and matches the direct sum") {
    SGBasisSpec spec = SGBasisSpec::log_spaced();
    RngStream rng(21);
    Eigen::ArrayXd omega(9);
    for (int i = 0; i < 9; ++i) omega[i] = 0.05 * (i + 1);
    Vec3 w_i = Vec3(0.3, 0.4, 1).normalized();
    Vec3 w_o = Vec3(-0.2, 0.1, 1).normalized();
    Vec3 n = Vec3(0.05, -0.02, 1).normalized();
    Vec3 rho_d(0.2, 0.3, 0.4);
    Vec3 fr = brdf_eval(rho_d, omega, spec, w_i, w_o, n);
    double rho_s = (omega * sg_basis_eval(spec, half_vector(w_i, w_o), n)).sum();
    for (int c = 0; c < 3; ++c) CHECK(fr[c] == doctest::Approx(rho_d[c] + rho_s).epsilon(1e-14));
    // same specular offset on every channel
    CHECK(fr[0] - rho_d[0] == doctest::Approx(fr[2] - rho_d[2]).epsilon(1e-14));
}

TEST_CASE("brdf tape path matches the plain path and finite differences") {
    SGBasisSpec spec = SGBasisSpec::log_spaced(5, 2.0, 64.0);
    RngStream rng(22);
    const int B = 4;
    Eigen::ArrayXXd rho(3, B), omega(5, B), h(3, B), n(3, B);
    for (int c = 0; c < B; ++c) {
        Eigen::Vector3d hv(rng.next_normal(), rng.next_normal(), rng.next_normal());
        Eigen::Vector3d nv(rng.next_normal(), rng.next_normal(), rng.next_normal());
        h.col(c) = hv.normalized().array();
        n.col(c) = nv.normalized().array();
        for (int r = 0; r < 3; ++r) rho(r, c) = 0.2 + 0.1 * rng.next_uniform();
        for (int r = 0; r < 5; ++r) omega(r, c) = 0.1 * rng.next_uniform();
    }

    ad::Tape t;
    ad::Var vr = t.input(rho), vo = t.input(omega), vh = t.input(h), vn = t.input(n);
    ad::Var fr = brdf_eval_tape(t, vr, vo, spec, vh, vn);
    for (int c = 0; c < B; ++c) {
        Vec3 plain = brdf_eval(rho.col(c).matrix(), omega.col(c), spec,
                               // h is passed directly: reconstruct w_i = w_o = h
                               h.col(c).matrix(), h.col(c).matrix(), n.col(c).matrix());
        for (int r = 0; r < 3; ++r) CHECK(t.value(fr)(r, c) == doctest::Approx(plain[r]).epsilon(1e-12));
    }

    t.backward(ad::sum(t, ad::square(t, fr)));
    auto loss = [&](const Eigen::ArrayXXd& o) {
        double s = 0;
        for (int c = 0; c < B; ++c) {
            Vec3 f = brdf_eval(rho.col(c).matrix(), o.col(c), spec, h.col(c).matrix(),
                               h.col(c).matrix(), n.col(c).matrix());
            s += f.squaredNorm();
        }
        return s;
    };
    Eigen::VectorXd o0 = Eigen::Map<const Eigen::VectorXd>(omega.data(), omega.size());
    Eigen::VectorXd got = Eigen::Map<const Eigen::VectorXd>(t.grad(vo).data(), omega.size());
    CHECK(testutil::grad_rel_err_vs_fd(
              [&](const Eigen::VectorXd& v) {
                  Eigen::ArrayXXd o(5, B);
                  Eigen::Map<Eigen::VectorXd>(o.data(), o.size()) = v;
                  return loss(o);
              },
              o0, got) < 1e-4);
}

TEST_CASE("shade: Lambertian head-on illumination gives the albedo back") {
    SGBasisSpec basis = SGBasisSpec::log_spaced();
    ShadingSample s;
    s.point = Vec3::Zero();
    s.normal = Vec3::UnitZ();
    s.albedo = Vec3(1, 1, 1);
    s.omega = Eigen::ArrayXd::Zero(9);
    s.visibility = 1.0;
    s.light_dir = Vec3::UnitZ();
    s.light_intensity = 1.0;
    s.view_dir = Vec3::UnitZ();
    CHECK((shade(s, basis) - Vec3(1, 1, 1)).norm() < 1e-15);

    s.visibility = 0.0;  // fully shadowed
    CHECK(shade(s, basis).norm() == 0.0);
}

TEST_CASE("shade: cosine clamp on back-facing light, literal form without it") {
    SGBasisSpec basis = SGBasisSpec::log_spaced();
    ShadingSample s;
    s.point = Vec3::Zero();
    s.normal = Vec3::UnitZ();
    s.albedo = Vec3(0.5, 0.5, 0.5);
    s.omega = Eigen::ArrayXd::Zero(9);
    s.visibility = 1.0;
    s.light_dir = Vec3(0.1, 0, -1).normalized();
    s.light_intensity = 1.0;
    s.view_dir = Vec3::UnitZ();
    CHECK(shade(s, basis, true).norm() == 0.0);
    CHECK(shade(s, basis, false)[0] == doctest::Approx(0.5 * s.light_dir.z()));
}

TEST_CASE("shade is homogeneous in light intensity and visibility") {
    SGBasisSpec basis = SGBasisSpec::log_spaced();
    RngStream rng(23);
    ShadingSample s;
    s.point = Vec3::Zero();
    s.normal = Vec3(0.1, 0.2, 1).normalized();
    s.albedo = Vec3(0.3, 0.6, 0.2);
    s.omega = Eigen::ArrayXd::Constant(9, 0.02);
    s.visibility = 0.7;
    s.light_dir = Vec3(0.3, -0.1, 1).normalized();
    s.light_intensity = 1.0;
    s.view_dir = Vec3(-0.2, 0.4, 1).normalized();
    Vec3 base = shade(s, basis);
    s.light_intensity = 3.5;
    CHECK((shade(s, basis) - 3.5 * base).norm() < 1e-14);
    s.light_intensity = 1.0;
    s.visibility = 0.35;
    CHECK((shade(s, basis) - 0.5 * base).norm() < 1e-14);
}

namespace {

// Exact decomposition of a diffuse unit sphere (normal from geometry).
struct SphereDecomp : Decomposition {
    Vec3 rho{0.6, 0.4, 0.3};
    Vec3 normal(const Vec3& x) const override { return x.normalized(); }
    Vec3 albedo(const Vec3&) const override { return rho; }
    Eigen::ArrayXd specular_weights(const Vec3&) const override {
        return Eigen::ArrayXd::Zero(9);
    }
    double visibility(const Vec3&, const Vec3&) const override { return 1.0; }
};

View sphere_view(int res) {
    View v;
    v.camera = make_lookat_camera({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 1.2 * res, res, res);
    v.mask = Image(res, res, 1, 1.f);
    return v;
}

}  // namespace

TEST_CASE("render_image matches the per-pixel closed form on a diffuse sphere") {
    AnalyticField field({{Vec3::Zero(), 1.0}}, 40.0, 200.0);
    SphereDecomp decomp;
    SGBasisSpec basis = SGBasisSpec::log_spaced();
    RaySampling sampling;
    sampling.samples_per_ray = 96;
    sampling.stratified_jitter = false;
    HitFn hits = make_field_hit_fn(field, Vec3::Constant(-1.2), Vec3::Constant(1.2), 0.5, sampling);

    const int res = 24;
    View view = sphere_view(res);
    DirectionalLight light;
    light.direction = Vec3(0.4, 0.5, 1).normalized();
    light.intensity = 1.7;

    RenderedImage r = render_image(decomp, basis, view, light, hits);
    CHECK(r.masked_pixels == res * res);
    CHECK(r.hit_pixels > 0);
    CHECK(r.hit_pixels < r.masked_pixels);  // corners miss the sphere

    int checked = 0;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            if (r.hit_mask.at(x, y) < 0.5f) {
                CHECK(r.image.at(x, y, 0) == 0.f);
                continue;
            }
            Ray ray = pixel_to_ray(view.camera, x + 0.5, y + 0.5);
            SurfaceHit hit = hits(ray);
            Vec3 n = hit.point.normalized();
            double cosine = std::max(light.direction.dot(n), 0.0);
            for (int c = 0; c < 3; ++c)
                CHECK(r.image.at(x, y, c) ==
                      doctest::Approx(light.intensity * cosine * decomp.rho[c]).epsilon(1e-5));
            ++checked;
        }
    CHECK(checked == r.hit_pixels);
}

TEST_CASE("render_image honors the object mask") {
    AnalyticField field({{Vec3::Zero(), 1.0}}, 40.0, 200.0);
    SphereDecomp decomp;
    SGBasisSpec basis = SGBasisSpec::log_spaced();
    RaySampling sampling;
    sampling.samples_per_ray = 64;
    sampling.stratified_jitter = false;
    HitFn hits = make_field_hit_fn(field, Vec3::Constant(-1.2), Vec3::Constant(1.2), 0.5, sampling);

    View view = sphere_view(16);
    view.mask = Image(16, 16, 1, 0.f);
    view.mask.at(8, 8) = 1.f;
    DirectionalLight light;
    RenderedImage r = render_image(decomp, basis, view, light, hits);
    CHECK(r.masked_pixels == 1);
    CHECK(r.hit_pixels == 1);
    CHECK(r.image.at(0, 0, 0) == 0.f);
    CHECK(r.image.at(8, 8, 0) > 0.f);
}

TEST_CASE("light_averaged_image is the mean of the per-light renders") {
    AnalyticField field({{Vec3::Zero(), 1.0}}, 40.0, 200.0);
    SphereDecomp decomp;
    SGBasisSpec basis = SGBasisSpec::log_spaced();
    RaySampling sampling;
    sampling.samples_per_ray = 64;
    sampling.stratified_jitter = false;
    HitFn hits = make_field_hit_fn(field, Vec3::Constant(-1.2), Vec3::Constant(1.2), 0.5, sampling);

    View view = sphere_view(12);
    std::vector<DirectionalLight> lights(2);
    lights[0].direction = Vec3(0.3, 0.2, 1).normalized();
    lights[0].intensity = 1.5;
    lights[1].direction = Vec3(-0.4, 0.1, 1).normalized();
    lights[1].intensity = 0.5;

    RenderedImage avg = light_averaged_image(decomp, basis, view, lights, hits);
    RenderedImage a = render_image(decomp, basis, view, lights[0], hits);
    RenderedImage b = render_image(decomp, basis, view, lights[1], hits);
    for (std::size_t i = 0; i < avg.image.data.size(); ++i)
        CHECK(avg.image.data[i] == doctest::Approx(0.5 * (a.image.data[i] + b.image.data[i]))
                                       .epsilon(1e-6));

    CHECK_THROWS_AS(light_averaged_image(decomp, basis, view, {}, hits), std::invalid_argument);
}
