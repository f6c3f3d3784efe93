#include "png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace cacgen {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t to_byte(double v) {
    double x = std::clamp(v, 0.0, 1.0) * 255.0;
    return uint8_t(std::lround(x));
}

void write_png(const std::string& path, int h, int w, int channels,
               const std::vector<uint8_t>& bytes) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write error for " + path);
    }
    png_init_io(png, f.get());
    // fixed settings keep the byte stream reproducible
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int r = 0; r < h; ++r)
        rows[size_t(r)] = const_cast<png_bytep>(&bytes[size_t(r) * w * channels]);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_rgb(const std::string& path, const std::vector<Grid>& rgb) {
    if (rgb.size() != 3) throw std::runtime_error("write_png_rgb: expected 3 channels");
    int h = rgb[0].height, w = rgb[0].width;
    std::vector<uint8_t> bytes(size_t(h) * w * 3);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                bytes[(size_t(r) * w + c) * 3 + ch] = to_byte(rgb[size_t(ch)].at(r, c));
    write_png(path, h, w, 3, bytes);
}

void write_png_gray(const std::string& path, const Grid& gray) {
    std::vector<uint8_t> bytes(size_t(gray.height) * gray.width);
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(gray.data[i]);
    write_png(path, gray.height, gray.width, 1, bytes);
}

void write_ppm_rgb(const std::string& path, const std::vector<Grid>& rgb) {
    if (rgb.size() != 3) throw std::runtime_error("write_ppm_rgb: expected 3 channels");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    int h = rgb[0].height, w = rgb[0].width;
    std::fprintf(f.get(), "P6\n%d %d\n255\n", w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            uint8_t px[3] = {to_byte(rgb[0].at(r, c)), to_byte(rgb[1].at(r, c)),
                             to_byte(rgb[2].at(r, c))};
            std::fwrite(px, 1, 3, f.get());
        }
}

namespace {

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FilePtr file;

    explicit PngReader(const std::string& path) : file(std::fopen(path.c_str(), "rb")) {
        if (!file) throw std::runtime_error("cannot open " + path);
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png_create_info_struct(png);
        if (!png || !info) throw std::runtime_error("libpng init failed");
        if (setjmp(png_jmpbuf(png))) throw std::runtime_error("png read error for " + path);
        png_init_io(png, file.get());
        png_read_info(png, info);
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

}  // namespace

std::vector<Grid> read_png_rgb(const std::string& path) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png read error for " + path);
    png_set_expand(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    if (png_get_bit_depth(r.png, r.info) == 16) png_set_strip_16(r.png);
    png_read_update_info(r.png, r.info);
    int h = int(png_get_image_height(r.png, r.info));
    int w = int(png_get_image_width(r.png, r.info));
    std::vector<uint8_t> row(size_t(w) * 3);
    std::vector<Grid> rgb(3, Grid(h, w));
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) rgb[size_t(c)].at(y, x) = row[size_t(x) * 3 + c] / 255.0;
    }
    return rgb;
}

std::vector<uint8_t> read_png_gray8(const std::string& path, int* out_h, int* out_w) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png read error for " + path);
    if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(r.png, r.info) != 8)
        throw std::runtime_error(path + ": expected 8-bit single-channel PNG");
    int h = int(png_get_image_height(r.png, r.info));
    int w = int(png_get_image_width(r.png, r.info));
    std::vector<uint8_t> out(size_t(h) * w);
    for (int y = 0; y < h; ++y) png_read_row(r.png, &out[size_t(y) * w], nullptr);
    *out_h = h;
    *out_w = w;
    return out;
}

}  // namespace cacgen
