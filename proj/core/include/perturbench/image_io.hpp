#pragma once

#include <filesystem>

#include "perturbench/image.hpp"

namespace perturbench {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loads 8-bit PNG (gray, gray+alpha, RGB, RGBA; alpha dropped) or binary PPM/PGM.
/// Values are byte / 255.
Image load_image(const std::filesystem::path& path);

/// Writes round(value * 255) after clamping. The format follows the
/// extension: .png, .ppm (3 channels), .pgm (1 channel).
void save_image(const Image& image, const std::filesystem::path& path);

Image load_ppm(const std::filesystem::path& path);
void save_ppm(const Image& image, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);

std::uint8_t to_byte(double value);

}  // namespace perturbench
