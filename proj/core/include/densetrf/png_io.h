#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dtrf::png {

// 8-bit image buffers, row-major, top row first.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 = gray, 3 = rgb
    std::vector<uint8_t> pixels;

    uint8_t& at(int y, int x, int c) { return pixels[(size_t(y) * width + x) * channels + c]; }
    uint8_t at(int y, int x, int c) const { return pixels[(size_t(y) * width + x) * channels + c]; }
};

void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

} // namespace dtrf::png
