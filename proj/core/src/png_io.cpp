#include "densetrf/png_io.h"

#include <csetjmp>
#include <cstdio>
#include <png.h>

#include "densetrf/errors.h"

namespace dtrf::png {

namespace {

struct FileCloser {
    FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

} // namespace

void write_png(const std::filesystem::path& path, const Image8& img) {
    if (img.width <= 0 || img.height <= 0 || (img.channels != 1 && img.channels != 3)) {
        throw Error("write_png: unsupported image geometry");
    }
    FileCloser fc{std::fopen(path.string().c_str(), "wb")};
    if (!fc.f) throw DataError("cannot open for writing: " + path.string());

    png_structp pp = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!pp) throw Error("png_create_write_struct failed");
    png_infop ip = png_create_info_struct(pp);
    if (!ip) {
        png_destroy_write_struct(&pp, nullptr);
        throw Error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(pp))) {
        png_destroy_write_struct(&pp, &ip);
        throw DataError("libpng error writing " + path.string());
    }
    png_init_io(pp, fc.f);
    int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(pp, ip, png_uint_32(img.width), png_uint_32(img.height), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(pp, ip);
    std::vector<png_bytep> rows(size_t(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[size_t(y)] = const_cast<png_bytep>(&img.pixels[size_t(y) * img.width * img.channels]);
    }
    png_write_image(pp, rows.data());
    png_write_end(pp, nullptr);
    png_destroy_write_struct(&pp, &ip);
}

Image8 read_png(const std::filesystem::path& path) {
    FileCloser fc{std::fopen(path.string().c_str(), "rb")};
    if (!fc.f) throw DataError("unreadable file: " + path.string());

    png_structp pp = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!pp) throw Error("png_create_read_struct failed");
    png_infop ip = png_create_info_struct(pp);
    if (!ip) {
        png_destroy_read_struct(&pp, nullptr, nullptr);
        throw Error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(pp))) {
        png_destroy_read_struct(&pp, &ip, nullptr);
        throw DataError("libpng error reading " + path.string());
    }
    png_init_io(pp, fc.f);
    png_read_info(pp, ip);

    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color = 0;
    png_get_IHDR(pp, ip, &w, &h, &bit_depth, &color, nullptr, nullptr, nullptr);

    // Normalize everything to 8-bit gray or RGB.
    if (bit_depth == 16) png_set_strip_16(pp);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(pp);
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(pp);
    if (png_get_valid(pp, ip, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(pp);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(pp);
    png_read_update_info(pp, ip);
    color = png_get_color_type(pp, ip);

    Image8 img;
    img.width = int(w);
    img.height = int(h);
    img.channels = (color == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
    img.pixels.resize(size_t(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(size_t(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[size_t(y)] = &img.pixels[size_t(y) * img.width * img.channels];
    }
    png_read_image(pp, rows.data());
    png_read_end(pp, nullptr);
    png_destroy_read_struct(&pp, &ip, nullptr);
    return img;
}

} // namespace dtrf::png
