#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "laf/image.hpp"

namespace laf {

namespace {

struct FileCloser {
    FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw InvalidArgument("png writer supports 1 or 3 channels, got " + std::to_string(img.channels));
    namespace fs = std::filesystem;
    fs::path tmp = fs::path(path);
    tmp += ".tmp";

    FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw FormatError("cannot open " + tmp.string() + " for writing");
    FileCloser closer{f};

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("libpng error while writing " + path);
    }
    png_init_io(png, f);
    // Fixed settings keep the byte stream reproducible for identical pixels.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[static_cast<size_t>(x) * img.channels + c] = quantize8(img.at(y, x, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    closer.f = nullptr;

    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw FormatError("rename " + tmp.string() + ": " + ec.message());
}

Image read_png(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw FormatError("cannot open " + path);
    FileCloser closer{f};

    png_byte header[8];
    if (std::fread(header, 1, 8, f) != 8 || png_sig_cmp(header, 0, 8))
        throw FormatError(path + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng error while reading " + path);
    }
    png_init_io(png, f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    int h = static_cast<int>(png_get_image_height(png, info));
    int w = static_cast<int>(png_get_image_width(png, info));
    int ch = static_cast<int>(png_get_channels(png, info));
    if (ch != 1 && ch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path + ": unsupported channel count " + std::to_string(ch));
    }

    Image img(h, w, ch);
    std::vector<uint8_t> row(static_cast<size_t>(w) * ch);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                img.at(y, x, c) = row[static_cast<size_t>(x) * ch + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace laf
