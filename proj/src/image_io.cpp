#include "lcgan/image_io.hpp"

#include <cmath>
#include <fstream>

#include "lcgan/errors.hpp"

namespace lcgan {

Image8 make_image(int height, int width, uint8_t fill) {
    if (height <= 0 || width <= 0)
        throw ValueError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    Image8 img;
    img.height = height;
    img.width = width;
    img.pixels.assign(static_cast<size_t>(height) * width, fill);
    return img;
}

void write_pgm(const Image8& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw IoError("write failed: " + path);
}

namespace {

int read_pnm_int(std::istream& is, const std::string& path) {
    // skips whitespace and '#' comments
    int c = is.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            while (c != '\n' && c != EOF) c = is.get();
        }
        c = is.get();
    }
    if (c == EOF) throw IoError("truncated header: " + path);
    int v = 0;
    while (std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

}  // namespace

Image8 read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
    if (m0 != 'P' || m1 != '5') throw IoError("not a binary PGM (P5): " + path);
    const int w = read_pnm_int(is, path);
    const int h = read_pnm_int(is, path);
    const int maxval = read_pnm_int(is, path);
    if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + ": " + path);
    Image8 img = make_image(h, w);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
        throw IoError("truncated pixel data: " + path);
    return img;
}

void write_ppm(const std::vector<uint8_t>& rgb, int height, int width, const std::string& path) {
    if (rgb.size() != static_cast<size_t>(height) * width * 3)
        throw ShapeError("rgb buffer size mismatch for " + std::to_string(width) + "x" + std::to_string(height));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P6\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!os) throw IoError("write failed: " + path);
}

std::vector<uint8_t> read_ppm(const std::string& path, int& height, int& width) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
    if (m0 != 'P' || m1 != '6') throw IoError("not a binary PPM (P6): " + path);
    width = read_pnm_int(is, path);
    height = read_pnm_int(is, path);
    const int maxval = read_pnm_int(is, path);
    if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + ": " + path);
    std::vector<uint8_t> rgb(static_cast<size_t>(height) * width * 3);
    if (!is.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size())))
        throw IoError("truncated pixel data: " + path);
    return rgb;
}

std::vector<double> to_unit_floats(const Image8& img) {
    std::vector<double> out(img.pixels.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = img.pixels[i] / 255.0;
    return out;
}

Image8 quantize_unit(const std::vector<double>& values, int height, int width) {
    if (values.size() != static_cast<size_t>(height) * width)
        throw ShapeError("value buffer size mismatch for " + std::to_string(width) + "x" + std::to_string(height));
    Image8 img = make_image(height, width);
    for (size_t i = 0; i < values.size(); ++i) {
        double v = values[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        img.pixels[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

const std::vector<double>& gaussian_kernel_r2() {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(5);
        double s = 0.0;
        for (int i = 0; i < 5; ++i) {
            const double d = i - 2;
            k[static_cast<size_t>(i)] = std::exp(-0.5 * d * d);  // sigma 1.0
            s += k[static_cast<size_t>(i)];
        }
        for (double& v : k) v /= s;
        return k;
    }();
    return kernel;
}

std::vector<double> gaussian_blur_r2(const std::vector<double>& img, int height, int width) {
    if (img.size() != static_cast<size_t>(height) * width)
        throw ShapeError("image buffer size mismatch for " + std::to_string(width) + "x" + std::to_string(height));
    const auto& k = gaussian_kernel_r2();
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    std::vector<double> tmp(img.size()), out(img.size());
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double s = 0.0;
            for (int t = -2; t <= 2; ++t) s += k[static_cast<size_t>(t + 2)] * img[static_cast<size_t>(y) * width + clampi(x + t, 0, width - 1)];
            tmp[static_cast<size_t>(y) * width + x] = s;
        }
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double s = 0.0;
            for (int t = -2; t <= 2; ++t) s += k[static_cast<size_t>(t + 2)] * tmp[static_cast<size_t>(clampi(y + t, 0, height - 1)) * width + x];
            out[static_cast<size_t>(y) * width + x] = s;
        }
    return out;
}

}  // namespace lcgan
