#include "psnerf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace psnerf {

void write_pfm(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_pfm: channels must be 1 or 3");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pfm: cannot open " + path.string());
    f << (img.channels == 3 ? "PF" : "Pf") << "\n"
      << img.width << " " << img.height << "\n-1.0\n";
    // bottom-to-top scanlines
    for (int y = img.height - 1; y >= 0; --y)
        f.write(reinterpret_cast<const char*>(
                    &img.data[static_cast<std::size_t>(y) * img.width * img.channels]),
                static_cast<std::streamsize>(sizeof(float) * img.width * img.channels));
    if (!f) throw std::runtime_error("write_pfm: write failed for " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_pfm: cannot open " + path.string());
    std::string magic;
    f >> magic;
    int channels;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        throw std::runtime_error("read_pfm: bad magic in " + path.string());
    int w, h;
    double scale;
    f >> w >> h >> scale;
    f.get();  // single whitespace after header
    if (w <= 0 || h <= 0) throw std::runtime_error("read_pfm: bad dimensions in " + path.string());
    Image img(w, h, channels);
    std::vector<float> row(static_cast<std::size_t>(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(sizeof(float) * row.size()));
        if (!f) throw std::runtime_error("read_pfm: truncated file " + path.string());
        if (scale > 0)  // big-endian source
            for (float& v : row) {
                std::uint32_t u;
                std::memcpy(&u, &v, 4);
                u = __builtin_bswap32(u);
                std::memcpy(&v, &u, 4);
            }
        std::copy(row.begin(), row.end(),
                  img.data.begin() + static_cast<std::size_t>(y) * w * channels);
    }
    return img;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

void write_png_impl(const std::filesystem::path& path, const Image& img, bool gamma) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_png: channels must be 1 or 3");
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: libpng error for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width * img.channels; ++x) {
            float v = img.data[static_cast<std::size_t>(y) * img.width * img.channels + x];
            if (gamma) v = std::pow(std::max(0.f, v), 1.f / 2.2f);
            row[static_cast<std::size_t>(x)] =
                static_cast<png_byte>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
    write_png_impl(path, img, false);
}

void write_png_preview(const std::filesystem::path& path, const Image& img) {
    write_png_impl(path, img, true);
}

Image read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png: cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: libpng error for " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3)
        throw std::runtime_error("read_png: unsupported channel count in " + path.string());
    Image img(static_cast<int>(w), static_cast<int>(h), channels);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (std::size_t x = 0; x < row.size(); ++x)
            img.data[static_cast<std::size_t>(y) * w * channels + x] =
                static_cast<float>(row[x]) / 255.f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace psnerf
