#ifndef LCGAN_DATASET_HPP
#define LCGAN_DATASET_HPP

#include <map>
#include <string>
#include <vector>

#include "lcgan/image_io.hpp"
#include "lcgan/tensor.hpp"

namespace lcgan {

constexpr int kNumClasses = 6;  // background + IPH, IVH, SAH, EDH, SDH

const char* lesion_class_name(int cls);  // 1..5 -> "iph".."sdh"

struct Sample {
    std::string patient_id;
    int slice_id = 0;
    Image8 image;  // grayscale
    Image8 mask;   // class indices 0..5
};

// Patient-grouped slice collection. Sample order is the on-disk manifest
// order and is part of the deterministic pipeline contract.
struct Dataset {
    int image_size = 0;
    std::vector<Sample> samples;

    // Unique patient ids in order of first appearance.
    std::vector<std::string> patient_ids() const;
    // Indices of all samples of one patient.
    std::vector<size_t> indices_of_patient(const std::string& id) const;
    bool empty() const { return samples.empty(); }
    size_t size() const { return samples.size(); }
};

// Directory layout: <root>/<split>/<patient>/<slice>.img.pgm + .mask.pgm,
// plus <root>/manifest.json listing patients, slices, seeds and the class
// inventory. The loader follows manifest order.
void save_dataset(const Dataset& train, const Dataset& test, uint64_t seed, const std::string& root,
                  const std::map<std::string, uint64_t>& patient_seeds = {});
Dataset load_dataset_split(const std::string& root, const std::string& split);

// Tensor builders. Images map to [0,1]; `signed_range` remaps to [-1,1]
// (the generator/discriminator boundary convention).
Tensor image_batch(const Dataset& ds, const std::vector<size_t>& idx, bool signed_range);
Tensor image_batch(const std::vector<const Image8*>& imgs, bool signed_range);
// One-hot masks [N,6,S,S] in {0,1}.
Tensor onehot_mask_batch(const Dataset& ds, const std::vector<size_t>& idx);
Tensor onehot_mask_batch(const std::vector<const Image8*>& masks);
// Class-index targets [N,S,S].
Tensor target_mask_batch(const Dataset& ds, const std::vector<size_t>& idx);

// [1,1,S,S] or [1,6,S,S] single-sample variants.
Tensor single_image(const Image8& img, bool signed_range);
Tensor single_onehot_mask(const Image8& mask);

// Generator output in [-1,1] -> quantized images.
std::vector<Image8> images_from_generator_output(const Tensor& out);

}  // namespace lcgan

#endif
