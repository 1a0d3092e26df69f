#include "psnerf/scene.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

namespace psnerf {

using nlohmann::json;

void Camera::validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: bad resolution");
    if ((rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-6 ||
        rotation.determinant() < 0.0)
        throw std::invalid_argument("camera: rotation must be a proper orthonormal matrix");
}

Ray pixel_to_ray(const Camera& cam, double u, double v) {
    if (u < 0 || v < 0 || u > cam.width || v > cam.height)
        throw std::invalid_argument("pixel_to_ray: pixel out of bounds");
    Vec3 d_cam((u - cam.cx) / cam.fx, -(v - cam.cy) / cam.fy, -1.0);
    Ray r;
    r.origin = cam.center();
    r.direction = (cam.rotation * d_cam).normalized();
    return r;
}

Eigen::Vector2d project(const Camera& cam, const Vec3& x_world) {
    Vec3 xc = cam.rotation.transpose() * (x_world - cam.translation);
    double depth = -xc.z();
    if (depth <= 0) throw std::invalid_argument("project: point behind camera");
    return {cam.cx + cam.fx * xc.x() / depth, cam.cy - cam.fy * xc.y() / depth};
}

Vec3 normal_camera_to_world(const Camera& cam, const Vec3& n_cam) {
    if (std::abs(n_cam.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("normal_camera_to_world: input not unit length");
    return cam.rotation * n_cam;
}

Vec3 normal_world_to_camera(const Camera& cam, const Vec3& n_world) {
    return cam.rotation.transpose() * n_world;
}

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                          double focal_px, int width, int height) {
    Vec3 forward = (target - eye).normalized();  // camera -z
    Vec3 right = forward.cross(up).normalized();
    Vec3 cam_up = right.cross(forward);
    Camera cam;
    cam.rotation.col(0) = right;
    cam.rotation.col(1) = cam_up;
    cam.rotation.col(2) = -forward;
    cam.translation = eye;
    cam.fx = cam.fy = focal_px;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

const DirectionalLight& MultiLightDataset::light_by_id(int id) const {
    for (const auto& l : lights)
        if (l.id == id) return l;
    throw std::invalid_argument("dataset: unknown light id " + std::to_string(id));
}

std::vector<int> MultiLightDataset::train_view_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < views.size(); ++i)
        if (views[i].is_train) out.push_back(static_cast<int>(i));
    return out;
}

Image MultiLightDataset::light_averaged_target(int view_index) const {
    const View& v = views.at(static_cast<std::size_t>(view_index));
    if (v.images.empty()) throw std::invalid_argument("dataset: view has no images");
    Image avg(v.images[0].image.width, v.images[0].image.height, v.images[0].image.channels);
    for (const auto& im : v.images)
        for (std::size_t i = 0; i < avg.data.size(); ++i) avg.data[i] += im.image.data[i];
    for (auto& x : avg.data) x /= static_cast<float>(v.images.size());
    return avg;
}

namespace {

Vec3 json_vec3(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("dataset: expected 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Camera parse_camera(const json& j) {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    auto rot = j.at("rotation");
    if (rot.size() != 9) throw std::runtime_error("dataset: rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) c.rotation(r, col) = rot[r * 3 + col].get<double>();
    c.translation = json_vec3(j.at("translation"));
    c.validate();
    return c;
}

}  // namespace

MultiLightDataset load_dataset(const std::filesystem::path& root) {
    std::ifstream f(root / "params.json");
    if (!f) throw std::runtime_error("dataset: cannot open " + (root / "params.json").string());
    json doc = json::parse(f);

    MultiLightDataset ds;
    ds.root = root;
    if (doc.contains("bbox")) {
        ds.bbox_min = json_vec3(doc["bbox"].at("min"));
        ds.bbox_max = json_vec3(doc["bbox"].at("max"));
    }

    double intensity_sum = 0.0;
    for (const auto& lj : doc.at("lights")) {
        DirectionalLight l;
        l.id = lj.at("id").get<int>();
        l.direction = json_vec3(lj.at("direction"));
        if (std::abs(l.direction.norm() - 1.0) > 1e-6)
            throw std::runtime_error("dataset: light " + std::to_string(l.id) +
                                     " direction not unit length");
        l.intensity = lj.at("intensity").get<double>();
        if (l.intensity <= 0.0)
            throw std::runtime_error("dataset: light " + std::to_string(l.id) +
                                     " intensity must be positive");
        ds.lights.push_back(l);
    }
    if (ds.lights.empty()) throw std::runtime_error("dataset: no lights declared");
    for (const auto& l : ds.lights) intensity_sum += l.intensity;
    double mean_intensity = intensity_sum / static_cast<double>(ds.lights.size());

    // Views are parsed in manifest order; the manifest itself is the ordering
    // authority, so shuffled directory enumeration cannot change the result.
    for (const auto& vj : doc.at("views")) {
        View view;
        view.id = vj.at("id").get<int>();
        view.dir = vj.at("dir").get<std::string>();
        view.camera = parse_camera(vj.at("camera"));
        view.is_train = vj.value("split", "train") == "train";
        auto vdir = root / view.dir;

        Image mask = read_png(vdir / "mask.png");
        if (mask.channels != 1) {
            Image gray(mask.width, mask.height, 1);
            for (int y = 0; y < mask.height; ++y)
                for (int x = 0; x < mask.width; ++x) gray.at(x, y) = mask.at(x, y, 0);
            mask = std::move(gray);
        }
        if (mask.width != view.camera.width || mask.height != view.camera.height)
            throw std::runtime_error("dataset: mask resolution mismatch in view " +
                                     std::to_string(view.id));
        for (auto& m : mask.data) m = m > 0.5f ? 1.f : 0.f;
        view.mask = std::move(mask);

        for (const auto& ij : vj.at("images")) {
            ViewImage vi;
            vi.file = ij.at("file").get<std::string>();
            vi.light_id = ij.at("light_id").get<int>();
            const DirectionalLight& light = ds.light_by_id(vi.light_id);
            vi.image = read_pfm(vdir / vi.file);
            if (vi.image.width != view.camera.width || vi.image.height != view.camera.height)
                throw std::runtime_error("dataset: image resolution mismatch for " + vi.file +
                                         " in view " + std::to_string(view.id));
            float scale = static_cast<float>(mean_intensity / light.intensity);
            for (auto& px : vi.image.data) px *= scale;
            view.images.push_back(std::move(vi));
        }
        ds.views.push_back(std::move(view));
    }
    if (ds.views.empty()) throw std::runtime_error("dataset: no views declared");

    // Intensity scale is only known up to a global factor; normalize to mean 1.
    for (auto& l : ds.lights) l.intensity /= mean_intensity;
    return ds;
}

}  // namespace psnerf
