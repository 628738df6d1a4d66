#pragma once

#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "xrx/errors.hpp"
#include "xrx/image.hpp"
#include "xrx/util.hpp"

namespace xrx {

// Reads any PNG as 8-bit grayscale (libpng handles the colour conversion and
// bit-depth reduction), producing an integer-regime image.
inline GrayImage read_png_gray(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("png: cannot read " + path + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("png: decode failed for " + path + ": " + image.message);
    }
    GrayImage img(image.height, image.width, Regime::Levels);
    for (std::size_t i = 0; i < img.size(); ++i) img.pix[i] = static_cast<float>(buffer[i]);
    return img;
}

inline void write_png_gray(const std::string& path, const GrayImage& img) {
    std::vector<std::uint8_t> buffer(img.size());
    const float scale = img.regime == Regime::Unit ? 255.0f : 1.0f;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int v = round_half_up(static_cast<double>(img.pix[i]) * scale);
        buffer[i] = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw IoError("png: cannot write " + path + ": " + image.message);
}

inline void write_png_rgb(const std::string& path, const RgbImage& img) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pix.data(), 0, nullptr))
        throw IoError("png: cannot write " + path + ": " + image.message);
}

}  // namespace xrx
