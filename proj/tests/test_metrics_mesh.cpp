#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "psnerf/mesh.hpp"
#include "psnerf/metrics.hpp"

using namespace psnerf;

namespace {

Image normal_map(int res, const Vec3& n) {
    Image img(res, res, 3);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(n[c]);
    return img;
}

Image full_mask(int res) { return Image(res, res, 1, 1.f); }

}  // namespace

TEST_CASE("normal_mae: identical, rotated, and antipodal maps") {
    const int res = 8;
    Vec3 n = Vec3(0.2, 0.3, 1).normalized();
    Image a = normal_map(res, n);
    Image m = full_mask(res);
    CHECK(normal_mae(a, a, m, m) == doctest::Approx(0.0));

    Vec3 axis = n.cross(Vec3::UnitX()).normalized();
    Vec3 rot = Eigen::AngleAxisd(10.0 * M_PI / 180.0, axis) * n;
    // float32 map storage bounds the achievable precision
    CHECK(normal_mae(a, normal_map(res, rot), m, m) == doctest::Approx(10.0).epsilon(1e-5));

    CHECK(normal_mae(a, normal_map(res, -n), m, m) == doctest::Approx(180.0));
}

TEST_CASE("normal_mae uses the mask intersection") {
    const int res = 4;
    Image a = normal_map(res, Vec3::UnitZ());
    Image b = normal_map(res, Vec3::UnitX());  // 90 degrees off everywhere
    // overwrite one pixel of b to agree with a; only that pixel is shared
    b.at(1, 1, 0) = 0;
    b.at(1, 1, 2) = 1;
    Image mp(res, res, 1, 0.f), mg(res, res, 1, 0.f);
    mp.at(1, 1) = 1.f;
    mp.at(2, 2) = 1.f;
    mg.at(1, 1) = 1.f;
    mg.at(3, 3) = 1.f;
    CHECK(normal_mae(a, b, mp, mg) == doctest::Approx(0.0));

    Image empty(res, res, 1, 0.f);
    CHECK_THROWS_AS(normal_mae(a, b, mp, empty), MetricError);
}

TEST_CASE("normal_mae is invariant under a global rotation") {
    const int res = 6;
    RngStream rng(31);
    Image a(res, res, 3), b(res, res, 3);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            Vec3 u = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal()).normalized();
            Vec3 v = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal()).normalized();
            for (int c = 0; c < 3; ++c) {
                a.at(x, y, c) = static_cast<float>(u[c]);
                b.at(x, y, c) = static_cast<float>(v[c]);
            }
        }
    Image m = full_mask(res);
    double base = normal_mae(a, b, m, m);
    Mat3 R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    Image ar(res, res, 3), br(res, res, 3);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            Vec3 u(a.at(x, y, 0), a.at(x, y, 1), a.at(x, y, 2));
            Vec3 v(b.at(x, y, 0), b.at(x, y, 1), b.at(x, y, 2));
            Vec3 ru = R * u, rv = R * v;
            for (int c = 0; c < 3; ++c) {
                ar.at(x, y, c) = static_cast<float>(ru[c]);
                br.at(x, y, c) = static_cast<float>(rv[c]);
            }
        }
    CHECK(normal_mae(ar, br, m, m) == doctest::Approx(base).epsilon(1e-5));
}

TEST_CASE("scale-invariant psnr: identity cap, scale invariance, known noise level") {
    const int res = 16;
    RngStream rng(32);
    Image gt(res, res, 3);
    for (auto& v : gt.data) v = static_cast<float>(rng.next_uniform());
    Image m = full_mask(res);

    CHECK(scale_invariant_psnr(gt, gt, m) == doctest::Approx(99.0));

    Image doubled = gt;
    for (auto& v : doubled.data) v *= 2.f;
    CHECK(scale_invariant_psnr(doubled, gt, m) ==
          doctest::Approx(scale_invariant_psnr(gt, gt, m)));

    // pred = gt + 0.1: recompute the optimal alpha and the resulting MSE exactly
    Image off = gt;
    for (auto& v : off.data) v += 0.1f;
    double pg = 0, pp = 0;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        pg += static_cast<double>(off.data[i]) * gt.data[i];
        pp += static_cast<double>(off.data[i]) * off.data[i];
    }
    double alpha = pg / pp, mse = 0;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        double d = alpha * off.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(gt.data.size());
    CHECK(scale_invariant_psnr(off, gt, m) ==
          doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

    Image zeros(res, res, 3, 0.f);
    CHECK_THROWS_AS(scale_invariant_psnr(zeros, gt, m), MetricError);
}

TEST_CASE("ssim: identity is 1, corruption lowers it, range holds") {
    const int res = 24;
    RngStream rng(33);
    Image a(res, res, 1);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            a.at(x, y) = 0.5f + 0.4f * std::sin(0.7 * x) * static_cast<float>(std::cos(0.5 * y));
    CHECK(ssim(a, a) == doctest::Approx(1.0));

    Image b = a;
    for (auto& v : b.data) v = std::clamp(v + 0.2f * static_cast<float>(rng.next_normal()), 0.f, 1.f);
    double s = ssim(a, b);
    CHECK(s < 0.9);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
}

TEST_CASE("extract_mesh: sphere level set, convergence, empty field") {
    AnalyticField f({{Vec3::Zero(), 0.7}}, 40.0, 200.0);
    TriangleMesh m64 = extract_mesh(f, Vec3::Constant(-1), Vec3::Constant(1), 64);
    m64.validate();
    CHECK(m64.vertices.size() > 100);
    double err64 = 0;
    for (const auto& v : m64.vertices) err64 += std::abs(v.norm() - 0.7);
    err64 /= m64.vertices.size();
    CHECK(err64 < 2.0 / 64.0);

    TriangleMesh m32 = extract_mesh(f, Vec3::Constant(-1), Vec3::Constant(1), 32);
    double err32 = 0;
    for (const auto& v : m32.vertices) err32 += std::abs(v.norm() - 0.7);
    err32 /= m32.vertices.size();
    CHECK(err64 < err32);

    struct EmptyField : DensityField {
        double density(const Vec3&) const override { return 0.0; }
        Vec3 density_gradient(const Vec3&) const override { return Vec3::Zero(); }
    } empty;
    CHECK_THROWS_AS(extract_mesh(empty, Vec3::Constant(-1), Vec3::Constant(1), 16), EmptyMeshError);
    CHECK_THROWS_AS(extract_mesh(f, Vec3::Constant(-1), Vec3::Constant(1), 4),
                    std::invalid_argument);
}

TEST_CASE("extract_mesh area approximates the analytic sphere area") {
    AnalyticField f({{Vec3::Zero(), 0.7}}, 40.0, 200.0);
    TriangleMesh m = extract_mesh(f, Vec3::Constant(-1), Vec3::Constant(1), 48);
    double expect = 4 * M_PI * 0.7 * 0.7;
    CHECK(m.area() == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("obj round-trip preserves vertices and faces") {
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.25, 0.25, 1}};
    m.triangles = {{0, 1, 2}, {0, 1, 3}, {1, 2, 3}};
    auto p = std::filesystem::temp_directory_path() / "psnerf_t.obj";
    save_obj(p, m);
    TriangleMesh back = load_obj(p);
    REQUIRE(back.vertices.size() == 4);
    REQUIRE(back.triangles.size() == 3);
    for (int i = 0; i < 4; ++i) CHECK((back.vertices[i] - m.vertices[i]).norm() < 1e-9);
    CHECK(back.triangles == m.triangles);
    std::filesystem::remove(p);
}

TEST_CASE("chamfer: self-distance, offset squares, inflated sphere") {
    // self: near zero up to sampling noise
    AnalyticField f({{Vec3::Zero(), 0.7}}, 40.0, 200.0);
    TriangleMesh sphere = extract_mesh(f, Vec3::Constant(-1), Vec3::Constant(1), 48);
    RngStream r1(41);
    CHECK(chamfer(sphere, sphere, 100000, r1) < 0.1 * 500.0 / 1000.0 * 2);  // < 0.1 mm

    // two parallel unit squares offset by d along z
    auto square = [](double z) {
        TriangleMesh m;
        m.vertices = {{-1, -1, z}, {1, -1, z}, {1, 1, z}, {-1, 1, z}};
        m.triangles = {{0, 1, 2}, {0, 2, 3}};
        return m;
    };
    double d = 0.4;
    RngStream r2(42);
    // gt square spans [-1,1]^2 so the rescale is identity; d units -> d*500 mm
    double got = chamfer(square(d), square(0.0), 100000, r2);
    CHECK(got == doctest::Approx(d * 500.0).epsilon(0.01));

    // sphere vs 10%-inflated copy
    AnalyticField g({{Vec3::Zero(), 0.77}}, 40.0, 200.0);
    TriangleMesh inflated = extract_mesh(g, Vec3::Constant(-1), Vec3::Constant(1), 48);
    RngStream r3(43);
    double got_s = chamfer(inflated, sphere, 100000, r3);
    // gt radius 0.7 rescales to 1; offset 0.07 -> 0.1 rescaled units -> 50 mm
    CHECK(got_s == doctest::Approx(0.1 * 500.0).epsilon(0.02));

    TriangleMesh empty;
    RngStream r4(44);
    CHECK_THROWS_AS(chamfer(empty, sphere, 100, r4), EmptyMeshError);
}

TEST_CASE("chamfer is symmetric for fixed sample sets") {
    AnalyticField f({{Vec3::Zero(), 0.6}}, 40.0, 200.0);
    TriangleMesh a = extract_mesh(f, Vec3::Constant(-1), Vec3::Constant(1), 32);
    TriangleMesh b = a;
    for (auto& v : b.vertices) v += Vec3(0.1, 0, 0);
    // equal bounding scales (translation only), identical streams
    RngStream r1(45), r2(45);
    double ab = chamfer(a, b, 20000, r1);
    double ba = chamfer(b, a, 20000, r2);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
}

TEST_CASE("metric report serializes all fields") {
    MetricReport rep;
    rep.normal_mae_deg = 7.5;
    rep.psnr_db = 31.2;
    rep.ssim = 0.94;
    rep.pixel_count = 1234;
    rep.point_count = 100000;
    std::string j = rep.to_json();
    CHECK(j.find("normal_mae_deg") != std::string::npos);
    CHECK(j.find("7.5") != std::string::npos);
    CHECK(j.find("chamfer_mm") == std::string::npos);  // NaN fields omitted
    CHECK(j.find("mask_convention") != std::string::npos);

    auto p = std::filesystem::temp_directory_path() / "psnerf_report.json";
    rep.save(p);
    CHECK(std::filesystem::file_size(p) > 0);
    std::filesystem::remove(p);
}
