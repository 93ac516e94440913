#ifndef LCGAN_IMAGE_IO_HPP
#define LCGAN_IMAGE_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace lcgan {

// 8-bit grayscale raster (images and label masks share the type; masks hold
// class indices 0..5).
struct Image8 {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> pixels;  // row-major

    uint8_t at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return pixels.size(); }
};

Image8 make_image(int height, int width, uint8_t fill = 0);

// Binary PGM (P5, maxval 255).
void write_pgm(const Image8& img, const std::string& path);
Image8 read_pgm(const std::string& path);

// Binary PPM (P6) from interleaved RGB.
void write_ppm(const std::vector<uint8_t>& rgb, int height, int width, const std::string& path);
std::vector<uint8_t> read_ppm(const std::string& path, int& height, int& width);

// Float helpers: images live in [0,1]; quantization is round-to-nearest.
std::vector<double> to_unit_floats(const Image8& img);
Image8 quantize_unit(const std::vector<double>& values, int height, int width);

// Separable Gaussian blur, radius 2 (sigma 1.0, truncated 5-tap kernel,
// clamp-to-edge borders). Shared by the augmentation pipeline and the
// blurriness checks.
std::vector<double> gaussian_blur_r2(const std::vector<double>& img, int height, int width);

// The normalized 5-tap kernel itself (exposed for tests).
const std::vector<double>& gaussian_kernel_r2();

}  // namespace lcgan

#endif
