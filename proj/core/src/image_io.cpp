#include "perturbench/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace perturbench {

namespace {

using FilePtr = std::unique_ptr<std::FILE, decltype(&std::fclose)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
    if (!f) throw ImageIoError("cannot open " + path.string());
    return f;
}

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

// Reads the next header token of a netpbm file, skipping comments.
std::string next_token(std::istream& in) {
    std::string token;
    char c = 0;
    while (in.get(c)) {
        if (c == '#') {
            std::string discard;
            std::getline(in, discard);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(c);
    }
    return token;
}

}  // namespace

std::uint8_t to_byte(double value) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
}

Image load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError("cannot open " + path.string());
    const std::string magic = next_token(in);
    int channels = 0;
    if (magic == "P6") {
        channels = 3;
    } else if (magic == "P5") {
        channels = 1;
    } else {
        throw ImageIoError(path.string() + ": not a binary PPM/PGM");
    }
    const int width = std::stoi(next_token(in));
    const int height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255 || width <= 0 || height <= 0) {
        throw ImageIoError(path.string() + ": only 8-bit netpbm is supported");
    }
    Image image(Shape{height, width, channels});
    std::vector<unsigned char> bytes(image.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw ImageIoError(path.string() + ": truncated pixel data");
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = bytes[i] / 255.0;
    return image;
}

void save_ppm(const Image& image, const std::filesystem::path& path) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw ImageIoError("netpbm output needs 1 or 3 channels");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError("cannot write " + path.string());
    out << (image.channels() == 3 ? "P6" : "P5") << "\n"
        << image.width() << " " << image.height() << "\n255\n";
    std::vector<unsigned char> bytes(image.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image load_png(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ImageIoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ImageIoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError(path.string() + ": malformed PNG");
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    const png_byte color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError(path.string() + ": unsupported channel count");
    }
    std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) {
        rows[static_cast<std::size_t>(r)] = bytes.data() + static_cast<std::size_t>(r) * width * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image image(Shape{height, width, channels});
    for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = bytes[i] / 255.0;
    return image;
}

void save_png(const Image& image, const std::filesystem::path& path) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw ImageIoError("PNG output needs 1 or 3 channels");
    }
    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ImageIoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ImageIoError("png_create_info_struct failed");
    }
    std::vector<unsigned char> bytes(image.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image[i]);
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
    const std::size_t stride = static_cast<std::size_t>(image.width()) * image.channels();
    for (int r = 0; r < image.height(); ++r) rows[static_cast<std::size_t>(r)] = bytes.data() + r * stride;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
                 static_cast<png_uint_32>(image.height()), 8,
                 image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image load_image(const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".png") return load_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return load_ppm(path);
    throw ImageIoError("unsupported image extension '" + ext + "'");
}

void save_image(const Image& image, const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".png") return save_png(image, path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return save_ppm(image, path);
    throw ImageIoError("unsupported image extension '" + ext + "'");
}

}  // namespace perturbench
