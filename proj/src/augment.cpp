#include "lcgan/augment.hpp"

#include <cmath>

#include "lcgan/errors.hpp"

namespace lcgan {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

struct Affine2 {
    // row-major 2x2 + offset, y' = A y + b (pixel coordinates, y=(row,col))
    double a00, a01, a10, a11, b0, b1;

    Affine2 inverse() const {
        const double det = a00 * a11 - a01 * a10;
        Affine2 inv;
        inv.a00 = a11 / det;
        inv.a01 = -a01 / det;
        inv.a10 = -a10 / det;
        inv.a11 = a00 / det;
        inv.b0 = -(inv.a00 * b0 + inv.a01 * b1);
        inv.b1 = -(inv.a10 * b0 + inv.a11 * b1);
        return inv;
    }

    void apply(double r, double c, double& ro, double& co) const {
        ro = a00 * r + a01 * c + b0;
        co = a10 * r + a11 * c + b1;
    }
};

// shear ∘ scale ∘ rotation about the image center; the shear displaces
// columns horizontally by shear_px at the top/bottom rows.
Affine2 compose_about_center(int height, int width, double rotation_deg, double rescale_pct,
                             double shear_px) {
    const double cr = (height - 1) / 2.0;
    const double cc = (width - 1) / 2.0;
    const double th = rotation_deg * kPi / 180.0;
    const double s = 1.0 + rescale_pct / 100.0;
    const double k = shear_px / std::max(1.0, (height - 1) / 2.0);

    // rotation (rows grow downward; positive angle rotates image content
    // counterclockwise in the usual display orientation)
    const double r00 = std::cos(th), r01 = std::sin(th);
    const double r10 = -std::sin(th), r11 = std::cos(th);
    // scale
    const double m00 = s * r00, m01 = s * r01;
    const double m10 = s * r10, m11 = s * r11;
    // horizontal shear: col' = col + k * row
    Affine2 t;
    t.a00 = m00;
    t.a01 = m01;
    t.a10 = m10 + k * m00;
    t.a11 = m11 + k * m01;
    t.b0 = cr - (t.a00 * cr + t.a01 * cc);
    t.b1 = cc - (t.a10 * cr + t.a11 * cc);
    return t;
}

double bilinear_at(const Image8& img, double r, double c) {
    if (r < -0.5 || c < -0.5 || r > img.height - 0.5 || c > img.width - 0.5) return 0.0;
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0, fc = c - c0;
    auto px = [&](int rr, int cc) -> double {
        if (rr < 0 || cc < 0 || rr >= img.height || cc >= img.width) return 0.0;  // background fill
        return img.at(rr, cc) / 255.0;
    };
    return px(r0, c0) * (1 - fr) * (1 - fc) + px(r0, c0 + 1) * (1 - fr) * fc +
           px(r0 + 1, c0) * fr * (1 - fc) + px(r0 + 1, c0 + 1) * fr * fc;
}

}  // namespace

void affine_pair(const Image8& image, const Image8& mask, double rotation_deg, double rescale_pct,
                 double shear_px, Image8& image_out, Image8& mask_out) {
    if (image.height != mask.height || image.width != mask.width)
        throw ShapeError("affine_pair: image and mask dimensions differ");
    const bool test_angle = std::abs(std::abs(rotation_deg) - 180.0) < 1e-12;
    if ((std::abs(rotation_deg) > 25.0 && !test_angle) || std::abs(rescale_pct) > 15.0 ||
        std::abs(shear_px) > 10.0)
        throw ValueError("affine_pair: parameters outside policy ranges");

    // One shared transform drives both rasters (registration invariant).
    const Affine2 fwd = compose_about_center(image.height, image.width, rotation_deg, rescale_pct, shear_px);
    const Affine2 inv = fwd.inverse();

    image_out = make_image(image.height, image.width, 0);
    mask_out = make_image(mask.height, mask.width, 0);
    std::vector<double> vals(image.size());
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            double sr, sc;
            inv.apply(r, c, sr, sc);
            vals[static_cast<size_t>(r) * image.width + c] = bilinear_at(image, sr, sc);
            const int nr = static_cast<int>(std::lround(sr));
            const int nc = static_cast<int>(std::lround(sc));
            if (nr >= 0 && nc >= 0 && nr < mask.height && nc < mask.width)
                mask_out.at(r, c) = mask.at(nr, nc);
        }
    }
    image_out = quantize_unit(vals, image.height, image.width);
}

Image8 photometric(const Image8& image, bool blur, double contrast_gain) {
    if (contrast_gain < 0.0 || contrast_gain > 0.5)
        throw ValueError("contrast gain must be in [0,0.5], got " + std::to_string(contrast_gain));
    std::vector<double> vals = to_unit_floats(image);
    if (blur) vals = gaussian_blur_r2(vals, image.height, image.width);
    if (contrast_gain > 0.0) {
        const double g = 1.0 + contrast_gain;
        for (double& v : vals) v = std::min(1.0, v * g);
    }
    return quantize_unit(vals, image.height, image.width);
}

Dataset augment_dataset(const Dataset& ds, const AugmentPolicy& policy) {
    if (ds.empty()) throw ValueError("augment_dataset: empty dataset");
    Dataset out;
    out.image_size = ds.image_size;
    out.samples.reserve(ds.samples.size());
    Rng base(policy.seed);
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        Rng r = base.child(i);
        const double rot = r.uniform(-policy.rotation_deg_max, policy.rotation_deg_max);
        const double scale = r.uniform(-policy.rescale_pct_max, policy.rescale_pct_max);
        const double shear = r.uniform(-policy.shear_px_max, policy.shear_px_max);
        const bool blur = r.bernoulli(policy.blur_prob);
        const bool contrast = r.bernoulli(policy.contrast_prob);
        const double gain = contrast ? r.uniform(0.0, policy.contrast_gain_max) : 0.0;

        Sample s;
        s.patient_id = ds.samples[i].patient_id;
        s.slice_id = ds.samples[i].slice_id;
        affine_pair(ds.samples[i].image, ds.samples[i].mask, rot, scale, shear, s.image, s.mask);
        s.image = photometric(s.image, blur, gain);
        out.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace lcgan
