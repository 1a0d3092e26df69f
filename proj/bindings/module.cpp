#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "psnerf/commands.hpp"
#include "psnerf/image.hpp"
#include "psnerf/mesh.hpp"

namespace py = pybind11;
using namespace psnerf;

namespace {

// (h, w) or (h, w, c) float array <-> channel-interleaved Image
Image image_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    auto buf = arr.request();
    if (buf.ndim != 2 && buf.ndim != 3)
        throw py::value_error("image array must have shape (h, w) or (h, w, c)");
    int h = static_cast<int>(buf.shape[0]);
    int w = static_cast<int>(buf.shape[1]);
    int c = buf.ndim == 3 ? static_cast<int>(buf.shape[2]) : 1;
    if (c != 1 && c != 3) throw py::value_error("image array must have 1 or 3 channels");
    Image img(w, h, c);
    std::copy_n(static_cast<const float*>(buf.ptr), img.data.size(), img.data.begin());
    return img;
}

py::array_t<float> image_to_array(const Image& img) {
    py::array_t<float> arr({img.height, img.width, img.channels});
    std::copy_n(img.data.data(), img.data.size(), arr.mutable_data());
    return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "neural inverse rendering for multi-view photometric stereo";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<UpstreamError>(m, "UpstreamError", PyExc_FileNotFoundError);

    m.def(
        "run_command",
        [](const std::string& name, const std::string& config_json) {
            RunConfig cfg = RunConfig::from_json(config_json);
            cfg.validate();
            run_command(name, cfg);
        },
        py::arg("name"), py::arg("config_json"),
        "Run one pipeline subcommand (synth/stage1/stage2/render/relight/eval/"
        "extract-mesh) from a JSON config string.");

    m.def(
        "load_config",
        [](const std::filesystem::path& path) { return load_run_config(path).to_json(); },
        py::arg("path"), "Load, validate and normalize a config file; returns its JSON.");

    m.def("default_config", [] { return RunConfig{}.to_json(); },
          "JSON for a default-constructed run configuration.");

    m.def(
        "read_pfm",
        [](const std::filesystem::path& path) { return image_to_array(read_pfm(path)); },
        py::arg("path"), "Read a PFM file as a float32 (h, w, c) array.");

    m.def(
        "write_pfm",
        [](const std::filesystem::path& path, py::array_t<float> arr) {
            write_pfm(path, image_from_array(arr));
        },
        py::arg("path"), py::arg("image"), "Write a float32 (h, w[, c]) array as PFM.");

    m.def(
        "normal_mae",
        [](py::array_t<float> pred, py::array_t<float> gt, py::array_t<float> mask_pred,
           py::array_t<float> mask_gt) {
            return normal_mae(image_from_array(pred), image_from_array(gt),
                              image_from_array(mask_pred), image_from_array(mask_gt));
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask_pred"), py::arg("mask_gt"),
        "Mean angular error in degrees over the mask intersection.");

    m.def(
        "scale_invariant_psnr",
        [](py::array_t<float> pred, py::array_t<float> gt, py::array_t<float> mask) {
            return scale_invariant_psnr(image_from_array(pred), image_from_array(gt),
                                        image_from_array(mask));
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"),
        "PSNR in dB after a least-squares global scale, capped at 99.");

    m.def(
        "ssim",
        [](py::array_t<float> pred, py::array_t<float> gt) {
            return ssim(image_from_array(pred), image_from_array(gt));
        },
        py::arg("pred"), py::arg("gt"), "Mean SSIM (11x11 Gaussian window, sigma 1.5).");

    m.def(
        "chamfer",
        [](const std::filesystem::path& pred_obj, const std::filesystem::path& gt_obj,
           int n_samples, std::uint64_t seed) {
            TriangleMesh pred = load_obj(pred_obj);
            TriangleMesh gt = load_obj(gt_obj);
            RngStream rng(seed);
            return chamfer(pred, gt, n_samples, rng);
        },
        py::arg("pred_obj"), py::arg("gt_obj"), py::arg("n_samples") = 20000,
        py::arg("seed") = 0,
        "Symmetric Chamfer distance in mm between two OBJ meshes "
        "(gt bbox rescaled to [-1,1]; 1 unit = 500 mm).");
}
