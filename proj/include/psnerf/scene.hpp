#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psnerf/image.hpp"

namespace psnerf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// World frame: right-handed, y-up. Camera frame: x right, y up, looking
// along -z. Pose is world-from-camera.
struct Camera {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 rotation = Mat3::Identity();   // world-from-camera
    Vec3 translation = Vec3::Zero();    // camera center in world

    void validate() const;
    Vec3 center() const { return translation; }
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit
    double near = 0.0;
    double far = 0.0;
};

// Direction points from the surface toward the light (n . direction > 0 means lit).
struct DirectionalLight {
    int id = -1;
    Vec3 direction = Vec3::UnitZ();
    double intensity = 1.0;
    bool learnable = false;
};

Ray pixel_to_ray(const Camera& cam, double u, double v);
// Returns pixel (u, v); throws if the point is behind the camera.
Eigen::Vector2d project(const Camera& cam, const Vec3& x_world);
Vec3 normal_camera_to_world(const Camera& cam, const Vec3& n_cam);
Vec3 normal_world_to_camera(const Camera& cam, const Vec3& n_world);

// Look-at helper (y-up); produces a world-from-camera pose.
Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                          double focal_px, int width, int height);

struct ViewImage {
    std::string file;
    int light_id = -1;
    Image image;  // intensity-normalized at load
};

struct View {
    int id = -1;
    std::string dir;
    Camera camera;
    Image mask;  // single channel, values 0/1 after binarization
    std::vector<ViewImage> images;
    bool is_train = true;

    bool mask_at(int x, int y) const { return mask.at(x, y) > 0.5f; }
};

struct MultiLightDataset {
    std::vector<View> views;
    std::vector<DirectionalLight> lights;
    Vec3 bbox_min = Vec3::Constant(-1.0);
    Vec3 bbox_max = Vec3::Constant(1.0);
    std::filesystem::path root;

    const DirectionalLight& light_by_id(int id) const;
    std::vector<int> train_view_indices() const;
    // Mean of the view's (normalized) per-light images.
    Image light_averaged_target(int view_index) const;
};

// Loads root/params.json plus per-view masks and PFM images. Images are
// divided by their light's declared intensity (relative to the mean), and
// intensities are renormalized to mean 1.
MultiLightDataset load_dataset(const std::filesystem::path& root);

}  // namespace psnerf
