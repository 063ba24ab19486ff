#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tiseg {

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // H x W x 3, RGB, [0, 1]
};

// Reads 8- or 16-bit PNG/TIFF (grey or colour) into unit-interval RGB.
RgbImage load_rgb(const std::filesystem::path& path);
void save_rgb_png(const std::filesystem::path& path, int height, int width, const std::vector<double>& pixels);

// Masks are written as 1-bit PNGs; any non-zero pixel reads back as 1.
void save_mask_png(const std::filesystem::path& path, int height, int width, const std::vector<uint8_t>& mask);
std::vector<uint8_t> load_mask_png(const std::filesystem::path& path, int* height = nullptr, int* width = nullptr);

// Draws ground-truth (green) and predicted (red) contours over the tile.
void save_overlay_png(const std::filesystem::path& path, int height, int width, const std::vector<double>& pixels,
                      const std::vector<uint8_t>& gt, const std::vector<uint8_t>& pred);

}  // namespace tiseg
