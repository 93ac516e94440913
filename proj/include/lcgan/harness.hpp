#ifndef LCGAN_HARNESS_HPP
#define LCGAN_HARNESS_HPP

#include <string>
#include <vector>

#include "lcgan/dataset.hpp"
#include "lcgan/train.hpp"

namespace lcgan {

// Full experiment: per seed and subset percent, train LcGAN checkpoints on
// the subset, score them (FCN score, two blurriness measures, classifier
// real-fraction), pick the best, generate accepted synthetic pairs, then
// train one segmenter per augmentation mode and evaluate on the test set.
struct ExperimentConfig {
    std::string dataset_root;
    std::string out_dir;
    std::vector<double> percents = {2.5, 10.0, 25.0};
    std::vector<uint64_t> seeds = {1};
    std::vector<std::string> modes = {"none", "gan", "traditional", "both"};

    std::vector<int> gan_epochs = {10, 50, 100, 200};  // checkpoint grid
    // optional per-percent grid overrides, parallel to `percents`
    std::vector<std::vector<int>> gan_epochs_per_percent;
    int gan_batch = 4;
    double lambda_l1 = 100.0;

    int ref_seg_epochs = 8;
    int seg_epochs = 30;
    int seg_batch = 4;

    int clf_epochs = 3;
    // The selector stays deliberately small and briefly trained: a large,
    // converged CNN separates phantom reals from synthetics perfectly and
    // the acceptance threshold stops doing anything.
    int clf_base_filters = 4;
    double clf_threshold = 0.1;  // acceptance threshold for generated images

    int base_filters = 16;
    int montage_rows = 6;
    int parallel_seeds = 2;  // independent seed pipelines side by side

    const std::vector<int>& grid_for_percent(size_t percent_index) const;
};

// Runs every stage, skipping the ones whose marker files exist. Returns the
// path of the final report CSV.
std::string run_pipeline(const ExperimentConfig& cfg);

// Qualitative grid: one row per triple, columns (color-coded mask, target,
// output). Class colors are bijective so the mask column decodes back.
void emit_montage(const std::vector<Image8>& masks, const std::vector<Image8>& targets,
                  const std::vector<Image8>& outputs, const std::string& path);

// Montage mask color codec.
void class_color(int cls, uint8_t rgb[3]);
int color_class(const uint8_t rgb[3]);

// Re-derives report.csv / quality_all.csv / improvement.csv from per-seed
// artifacts already on disk.
std::string rebuild_reports(const ExperimentConfig& cfg);

}  // namespace lcgan

#endif
