#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace psnerf {

// Row-major, top-down, channel-interleaved float image (linear radiance).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.f)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    float& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// PFM: "PF"/"Pf" header, rows bottom-to-top, little-endian (negative scale).
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);

// 8-bit PNG; grayscale or RGB. write_png_preview applies gamma 2.2.
void write_png(const std::filesystem::path& path, const Image& img);
void write_png_preview(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

}  // namespace psnerf
