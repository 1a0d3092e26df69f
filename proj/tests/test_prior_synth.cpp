#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "psnerf/prior.hpp"

using namespace psnerf;

namespace {

// Minimal in-memory dataset: two views, three lights, random unit normals.
struct Fixture {
    MultiLightDataset ds;
    std::vector<Image> gt;

    explicit Fixture(int res = 64) {
        RngStream rng(7);
        for (int l = 0; l < 3; ++l) {
            DirectionalLight light;
            light.id = l;
            light.direction = Vec3(0.2 * l - 0.2, 0.3, 1).normalized();
            light.intensity = 1.0;
            ds.lights.push_back(light);
        }
        for (int v = 0; v < 2; ++v) {
            View view;
            view.id = v;
            view.camera = make_lookat_camera({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, res, res, res);
            view.mask = Image(res, res, 1, 1.f);
            for (int l = 0; l < 3; ++l) {
                ViewImage img;
                img.file = "L_" + std::to_string(l) + ".pfm";
                img.light_id = l;
                view.images.push_back(img);
            }
            ds.views.push_back(view);

            Image n(res, res, 3);
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    // a border of invalid pixels, random unit normals inside
                    if (x == 0 || y == 0) continue;
                    Vec3 u = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal())
                                 .normalized();
                    for (int c = 0; c < 3; ++c) n.at(x, y, c) = static_cast<float>(u[c]);
                }
            gt.push_back(n);
        }
    }
};

double map_mae_deg(const Image& a, const Image& b, const Image& valid, long* count = nullptr) {
    double acc = 0;
    long n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (valid.at(x, y) < 0.5f) continue;
            Vec3 u(a.at(x, y, 0), a.at(x, y, 1), a.at(x, y, 2));
            Vec3 v(b.at(x, y, 0), b.at(x, y, 1), b.at(x, y, 2));
            acc += std::acos(std::clamp(u.normalized().dot(v.normalized()), -1.0, 1.0));
            ++n;
        }
    if (count) *count = n;
    return acc / n * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("oracle with zero noise reproduces the ground truth") {
    Fixture fx(16);
    RngStream rng(1);
    GuidancePrior p = synth_ups_oracle(fx.ds, fx.gt, 0.0, 0.0, rng, 0.0);
    REQUIRE(p.views.size() == 2);
    for (int v = 0; v < 2; ++v) {
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                bool gt_valid = Vec3(fx.gt[v].at(x, y, 0), fx.gt[v].at(x, y, 1),
                                     fx.gt[v].at(x, y, 2))
                                    .norm() > 0.5;
                CHECK(static_cast<bool>(p.views[v].valid.at(x, y) > 0.5f) == gt_valid);
                for (int c = 0; c < 3; ++c)
                    CHECK(p.views[v].normal.at(x, y, c) ==
                          doctest::Approx(fx.gt[v].at(x, y, c)).epsilon(1e-6));
            }
    }
    for (const auto& le : p.lights) {
        CHECK((le.direction - fx.ds.light_by_id(le.light_id).direction).norm() < 1e-12);
        CHECK(le.intensity == doctest::Approx(1.0));
    }
}

TEST_CASE("oracle hits the requested normal error level") {
    Fixture fx(64);  // 2 * 63*63 valid pixels > 4096
    RngStream rng(2);
    GuidancePrior p = synth_ups_oracle(fx.ds, fx.gt, 8.0, 0.0, rng, 0.0);
    long total = 0;
    double acc = 0;
    for (int v = 0; v < 2; ++v) {
        long n = 0;
        double mae = map_mae_deg(p.views[v].normal, fx.gt[v], p.views[v].valid, &n);
        acc += mae * n;
        total += n;
    }
    CHECK(total >= 4096);
    double mae = acc / total;
    CHECK(mae > 6.5);
    CHECK(mae < 9.5);

    // outputs stay unit length
    for (int y = 1; y < 64; ++y)
        for (int x = 1; x < 64; ++x) {
            Vec3 n(p.views[0].normal.at(x, y, 0), p.views[0].normal.at(x, y, 1),
                   p.views[0].normal.at(x, y, 2));
            CHECK(std::abs(n.norm() - 1.0) < 1e-6);
        }
}

TEST_CASE("oracle rotates every light by exactly the requested angle") {
    Fixture fx(16);
    RngStream rng(3);
    GuidancePrior p = synth_ups_oracle(fx.ds, fx.gt, 0.0, 10.0, rng, 0.1);
    REQUIRE(p.lights.size() == 6);
    for (const auto& le : p.lights) {
        Vec3 gt_dir = fx.ds.light_by_id(le.light_id).direction;
        double angle = std::acos(std::clamp(le.direction.dot(gt_dir), -1.0, 1.0)) * 180.0 / M_PI;
        CHECK(angle == doctest::Approx(10.0).epsilon(1e-9));
    }
    // intensity noise is renormalized to mean 1
    double mean = 0;
    for (const auto& le : p.lights) {
        CHECK(le.intensity > 0);
        mean += le.intensity;
    }
    CHECK(mean / p.lights.size() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("oracle is deterministic given the seed") {
    Fixture fx(16);
    RngStream r1(9), r2(9);
    GuidancePrior a = synth_ups_oracle(fx.ds, fx.gt, 5.0, 7.0, r1);
    GuidancePrior b = synth_ups_oracle(fx.ds, fx.gt, 5.0, 7.0, r2);
    CHECK(a.views[0].normal.data == b.views[0].normal.data);
    for (std::size_t i = 0; i < a.lights.size(); ++i) {
        CHECK((a.lights[i].direction - b.lights[i].direction).norm() == 0.0);
        CHECK(a.lights[i].intensity == b.lights[i].intensity);
    }
}

TEST_CASE("prior round-trips through the on-disk layout") {
    Fixture fx(16);
    RngStream rng(4);
    GuidancePrior p = synth_ups_oracle(fx.ds, fx.gt, 6.0, 5.0, rng);
    auto root = std::filesystem::temp_directory_path() / "psnerf_prior";
    std::filesystem::remove_all(root);
    save_prior(root, p);
    GuidancePrior back = load_prior(root, fx.ds);
    REQUIRE(back.views.size() == p.views.size());
    for (std::size_t v = 0; v < p.views.size(); ++v) {
        for (std::size_t i = 0; i < p.views[v].normal.data.size(); ++i)
            CHECK(back.views[v].normal.data[i] ==
                  doctest::Approx(p.views[v].normal.data[i]).epsilon(1e-6));
        CHECK(back.views[v].valid.data == p.views[v].valid.data);
    }
    REQUIRE(back.lights.size() == p.lights.size());
    for (std::size_t i = 0; i < p.lights.size(); ++i) {
        CHECK((back.lights[i].direction - p.lights[i].direction).norm() < 1e-12);
        CHECK(back.lights[i].intensity == doctest::Approx(p.lights[i].intensity));
    }
    std::filesystem::remove_all(root);
}

TEST_CASE("loader validation: missing view and nonexistent image") {
    Fixture fx(16);
    RngStream rng(5);
    GuidancePrior p = synth_ups_oracle(fx.ds, fx.gt, 0.0, 0.0, rng, 0.0);
    auto root = std::filesystem::temp_directory_path() / "psnerf_prior_bad";

    std::filesystem::remove_all(root);
    save_prior(root, p);
    std::filesystem::remove_all(root / "view_01");
    CHECK_THROWS_WITH_AS(load_prior(root, fx.ds), doctest::Contains("view 1"),
                         std::runtime_error);

    std::filesystem::remove_all(root);
    GuidancePrior bad = p;
    bad.lights[0].light_id = 99;
    save_prior(root, bad);
    CHECK_THROWS_WITH_AS(load_prior(root, fx.ds), doctest::Contains("99"), std::runtime_error);
    std::filesystem::remove_all(root);
}
