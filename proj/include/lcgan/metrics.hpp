#ifndef LCGAN_METRICS_HPP
#define LCGAN_METRICS_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lcgan/dataset.hpp"
#include "lcgan/nn.hpp"

namespace lcgan {

// Dice similarity 2|S∩G| / (|S|+|G|) over pixels whose class is in
// `class_set` (treated as binary foreground). Both restrictions empty
// -> 1.0 (no disagreement).
double dsc(const Image8& s, const Image8& g, const std::vector<int>& class_set);

// Argmax class map of the segmenter on one batch of images.
std::vector<Image8> segment_images(Network& seg, const std::vector<const Image8*>& images,
                                   int batch_size = 8);

struct SegEvalRow {
    std::string patient_id;
    int slice_id = 0;
    double foreground_dsc = 0.0;                      // classes 1..5 as one set
    std::array<std::optional<double>, 5> class_dsc;  // per class, when present in GT
};

struct SegEvalResult {
    std::array<std::optional<double>, 5> per_class_dsc;  // mean over images with the class in GT
    double mean_dsc = 0.0;                               // mean over images of foreground dsc
    std::vector<SegEvalRow> rows;
    std::vector<Image8> predictions;
};

// Background is excluded everywhere: per-image foreground DSC uses classes
// 1..5 as one binary set, per-class means average over images whose ground
// truth contains the class.
SegEvalResult evaluate_segmentation(Network& seg, const Dataset& eval_set);
SegEvalResult evaluate_predictions(const std::vector<Image8>& predictions, const Dataset& eval_set);

struct DetectionResult {
    int tp = 0, fp = 0, fn = 0;
    std::optional<double> precision;  // undefined when TP+FP == 0
    std::optional<double> recall;     // undefined when TP+FN == 0
};

// Per (image, class): ground truth present and DSC >= min_tp_dsc -> TP;
// present and below -> FN; absent with predicted area >= min_fp_area -> FP;
// absent below the area threshold -> ignored as noise.
DetectionResult detection_pr(const std::vector<Image8>& predictions, const std::vector<Image8>& ground_truths,
                             int min_fp_area = 200, double min_tp_dsc = 0.25);

// Mean foreground DSC of the reference segmenter's output on generated
// images against their conditioning masks.
double fcn_score(Network& reference_seg, const std::vector<Image8>& generated_images,
                 const std::vector<Image8>& condition_masks);

// Mean DFT magnitude over all non-DC frequency bins (sharper = larger).
double blur_fft(const Image8& image);
double blur_fft(const std::vector<double>& unit_image, int height, int width);

// Variance of the 3x3 Laplacian response over the valid interior region.
double blur_laplacian_var(const Image8& image);
double blur_laplacian_var(const std::vector<double>& unit_image, int height, int width);

struct AcceptanceResult {
    double fraction = 0.0;
    std::vector<bool> accepted;
};

// Accepts an image iff P(real) = sigmoid(classifier logit) >= threshold.
AcceptanceResult classifier_acceptance(const std::vector<Image8>& images, Network& classifier,
                                       double threshold, int batch_size = 16);

struct ModelQuality {
    std::string model_id;
    int epochs = 0;
    double fcn_score = 0.0;
    double blur_fft = 0.0;
    double blur_lapvar = 0.0;
    double clf_real_frac = 0.0;
};

// Descending FCN score; scores within 0.01 fall into one tie chain, broken
// by descending variance-of-Laplacian (sharper first), then descending
// classifier real fraction, then model id.
std::vector<ModelQuality> rank_models(std::vector<ModelQuality> reports);

}  // namespace lcgan

#endif
