#ifndef LCGAN_AUGMENT_HPP
#define LCGAN_AUGMENT_HPP

#include "lcgan/dataset.hpp"
#include "lcgan/rng.hpp"

namespace lcgan {

// Transformation levels match the traditional-augmentation protocol:
// rotation -25..25 degrees, rescale -15..15 percent, horizontal shear
// -10..10 pixels, Gaussian blur (radius 2) and contrast gain up to +50%
// each applied with probability 0.5.
struct AugmentPolicy {
    double rotation_deg_max = 25.0;
    double rescale_pct_max = 15.0;
    double shear_px_max = 10.0;
    double blur_prob = 0.5;
    double contrast_prob = 0.5;
    double contrast_gain_max = 0.5;
    uint64_t seed = 0;
};

// One composite affine map (shear * scale * rotation about the image
// center) applied to both image and mask; the image samples bilinearly,
// the mask nearest-neighbor, out-of-frame fills with background. Output
// size is unchanged (rescaling crops/pads about the center).
void affine_pair(const Image8& image, const Image8& mask, double rotation_deg, double rescale_pct,
                 double shear_px, Image8& image_out, Image8& mask_out);

// Optional blur then multiplicative contrast gain (clamped to [0,1]).
// Masks are untouched by photometric changes.
Image8 photometric(const Image8& image, bool blur, double contrast_gain);

// Transforms every sample once with per-sample random levels drawn from the
// policy. Deterministic under policy.seed; patient ids preserved.
Dataset augment_dataset(const Dataset& ds, const AugmentPolicy& policy);

}  // namespace lcgan

#endif
