#include "lcgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "lcgan/errors.hpp"

namespace lcgan {

namespace {

bool class_in_set(uint8_t v, const std::vector<int>& set) {
    for (int c : set)
        if (v == c) return true;
    return false;
}

const std::vector<int>& foreground_set() {
    static const std::vector<int> fg = {1, 2, 3, 4, 5};
    return fg;
}

}  // namespace

double dsc(const Image8& s, const Image8& g, const std::vector<int>& class_set) {
    if (s.height != g.height || s.width != g.width)
        throw ShapeError("dsc: mask shapes differ (" + std::to_string(s.height) + "x" + std::to_string(s.width) +
                         " vs " + std::to_string(g.height) + "x" + std::to_string(g.width) + ")");
    int64_t ns = 0, ng = 0, inter = 0;
    for (size_t i = 0; i < s.pixels.size(); ++i) {
        const bool in_s = class_in_set(s.pixels[i], class_set);
        const bool in_g = class_in_set(g.pixels[i], class_set);
        ns += in_s;
        ng += in_g;
        inter += (in_s && in_g);
    }
    if (ns + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ns + ng);
}

std::vector<Image8> segment_images(Network& seg, const std::vector<const Image8*>& images, int batch_size) {
    std::vector<Image8> out;
    out.reserve(images.size());
    for (size_t start = 0; start < images.size(); start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(images.size(), start + static_cast<size_t>(batch_size));
        std::vector<const Image8*> batch(images.begin() + static_cast<long>(start),
                                         images.begin() + static_cast<long>(stop));
        Tensor x = image_batch(batch, false);
        Tensor logits = segmenter_forward(seg, x, Mode::kEval);
        const int n = logits.dim(0), K = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
        const int64_t plane = static_cast<int64_t>(h) * w;
        const double* d = logits.data().data();
        for (int i = 0; i < n; ++i) {
            Image8 pred = make_image(h, w);
            for (int64_t p = 0; p < plane; ++p) {
                int best = 0;
                double bv = d[(static_cast<int64_t>(i) * K) * plane + p];
                for (int k = 1; k < K; ++k) {
                    const double v = d[(static_cast<int64_t>(i) * K + k) * plane + p];
                    if (v > bv) {
                        bv = v;
                        best = k;
                    }
                }
                pred.pixels[static_cast<size_t>(p)] = static_cast<uint8_t>(best);
            }
            out.push_back(std::move(pred));
        }
    }
    return out;
}

SegEvalResult evaluate_predictions(const std::vector<Image8>& predictions, const Dataset& eval_set) {
    if (eval_set.empty()) throw ValueError("evaluate_segmentation: empty dataset");
    if (predictions.size() != eval_set.samples.size())
        throw ShapeError("evaluate_predictions: prediction count mismatch");
    SegEvalResult res;
    std::array<double, 5> sums{};
    std::array<int, 5> counts{};
    double fg_sum = 0.0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const Image8& pred = predictions[i];
        const Image8& gt = eval_set.samples[i].mask;
        SegEvalRow row;
        row.patient_id = eval_set.samples[i].patient_id;
        row.slice_id = eval_set.samples[i].slice_id;
        row.foreground_dsc = dsc(pred, gt, foreground_set());
        fg_sum += row.foreground_dsc;
        for (int c = 1; c <= 5; ++c) {
            bool in_gt = false, in_pred = false;
            for (size_t p = 0; p < gt.pixels.size(); ++p) {
                in_gt = in_gt || gt.pixels[p] == c;
                in_pred = in_pred || pred.pixels[p] == c;
                if (in_gt && in_pred) break;
            }
            if (!in_gt && !in_pred) continue;
            const double v = dsc(pred, gt, {c});
            row.class_dsc[static_cast<size_t>(c - 1)] = v;
            if (in_gt) {  // per-class means cover images whose GT has the class
                sums[static_cast<size_t>(c - 1)] += v;
                counts[static_cast<size_t>(c - 1)] += 1;
            }
        }
        res.rows.push_back(std::move(row));
    }
    res.mean_dsc = fg_sum / static_cast<double>(predictions.size());
    for (int c = 0; c < 5; ++c)
        if (counts[static_cast<size_t>(c)] > 0)
            res.per_class_dsc[static_cast<size_t>(c)] = sums[static_cast<size_t>(c)] / counts[static_cast<size_t>(c)];
    return res;
}

SegEvalResult evaluate_segmentation(Network& seg, const Dataset& eval_set) {
    if (eval_set.empty()) throw ValueError("evaluate_segmentation: empty dataset");
    std::vector<const Image8*> imgs;
    imgs.reserve(eval_set.samples.size());
    for (const auto& s : eval_set.samples) imgs.push_back(&s.image);
    auto preds = segment_images(seg, imgs);
    SegEvalResult res = evaluate_predictions(preds, eval_set);
    res.predictions = std::move(preds);  // kept for downstream detection metrics
    return res;
}

DetectionResult detection_pr(const std::vector<Image8>& predictions, const std::vector<Image8>& ground_truths,
                             int min_fp_area, double min_tp_dsc) {
    if (predictions.size() != ground_truths.size())
        throw ShapeError("detection_pr: prediction/ground-truth count mismatch");
    DetectionResult res;
    for (size_t i = 0; i < predictions.size(); ++i) {
        for (int c = 1; c <= 5; ++c) {
            int64_t gt_area = 0, pred_area = 0;
            for (size_t p = 0; p < ground_truths[i].pixels.size(); ++p) {
                gt_area += ground_truths[i].pixels[p] == c;
                pred_area += predictions[i].pixels[p] == c;
            }
            if (gt_area > 0) {
                if (dsc(predictions[i], ground_truths[i], {c}) >= min_tp_dsc) res.tp += 1;
                else res.fn += 1;
            } else if (pred_area >= min_fp_area) {
                res.fp += 1;
            }  // small spurious detections are noise, ignored
        }
    }
    if (res.tp + res.fp > 0) res.precision = static_cast<double>(res.tp) / (res.tp + res.fp);
    if (res.tp + res.fn > 0) res.recall = static_cast<double>(res.tp) / (res.tp + res.fn);
    return res;
}

double fcn_score(Network& reference_seg, const std::vector<Image8>& generated_images,
                 const std::vector<Image8>& condition_masks) {
    if (generated_images.size() != condition_masks.size())
        throw ShapeError("fcn_score: image/mask count mismatch");
    if (generated_images.empty()) throw ValueError("fcn_score: empty image set");
    if (reference_seg.spec.image_size > 0 && generated_images[0].height != reference_seg.spec.image_size)
        throw ShapeError("fcn_score: image size " + std::to_string(generated_images[0].height) +
                         " does not match segmenter spec " + std::to_string(reference_seg.spec.image_size));
    std::vector<const Image8*> imgs;
    imgs.reserve(generated_images.size());
    for (const auto& im : generated_images) imgs.push_back(&im);
    const auto preds = segment_images(reference_seg, imgs);
    double sum = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) sum += dsc(preds[i], condition_masks[i], foreground_set());
    return sum / static_cast<double>(preds.size());
}

namespace {

// Iterative radix-2 FFT along one axis; falls back to a direct DFT for
// non-power-of-two extents (phantom sizes are powers of two).
void fft_1d(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n <= 1) return;
    if ((n & (n - 1)) != 0) {
        std::vector<std::complex<double>> out(n);
        for (size_t k = 0; k < n; ++k) {
            std::complex<double> s{0.0, 0.0};
            for (size_t t = 0; t < n; ++t) {
                const double ang = -2.0 * 3.141592653589793238462643383279502884 *
                                   static_cast<double>(k * t % n) / static_cast<double>(n);
                s += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            out[k] = s;
        }
        a = std::move(out);
        return;
    }
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.141592653589793238462643383279502884 / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

}  // namespace

double blur_fft(const std::vector<double>& unit_image, int height, int width) {
    if (height < 2 || width < 2)
        throw ValueError("blur_fft needs at least a 2x2 image, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    std::vector<std::complex<double>> grid(static_cast<size_t>(height) * width);
    for (size_t i = 0; i < grid.size(); ++i) grid[i] = unit_image[i];
    // rows
    std::vector<std::complex<double>> line(static_cast<size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) line[static_cast<size_t>(x)] = grid[static_cast<size_t>(y) * width + x];
        fft_1d(line);
        for (int x = 0; x < width; ++x) grid[static_cast<size_t>(y) * width + x] = line[static_cast<size_t>(x)];
    }
    // columns
    std::vector<std::complex<double>> col(static_cast<size_t>(height));
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) col[static_cast<size_t>(y)] = grid[static_cast<size_t>(y) * width + x];
        fft_1d(col);
        for (int y = 0; y < height; ++y) grid[static_cast<size_t>(y) * width + x] = col[static_cast<size_t>(y)];
    }
    double sum = 0.0;
    for (size_t i = 1; i < grid.size(); ++i) sum += std::abs(grid[i]);
    // grid[0] is the DC bin (row-major index 0 = zero frequency in both axes)
    return sum / static_cast<double>(grid.size() - 1);
}

double blur_fft(const Image8& image) { return blur_fft(to_unit_floats(image), image.height, image.width); }

double blur_laplacian_var(const std::vector<double>& unit_image, int height, int width) {
    if (height < 3 || width < 3)
        throw ValueError("blur_laplacian_var needs at least a 3x3 image, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    std::vector<double> resp;
    resp.reserve(static_cast<size_t>(height - 2) * (width - 2));
    for (int y = 1; y + 1 < height; ++y)
        for (int x = 1; x + 1 < width; ++x) {
            const double v = unit_image[static_cast<size_t>(y - 1) * width + x] +
                             unit_image[static_cast<size_t>(y + 1) * width + x] +
                             unit_image[static_cast<size_t>(y) * width + x - 1] +
                             unit_image[static_cast<size_t>(y) * width + x + 1] -
                             4.0 * unit_image[static_cast<size_t>(y) * width + x];
            resp.push_back(v);
        }
    double mean = 0.0;
    for (double v : resp) mean += v;
    mean /= static_cast<double>(resp.size());
    double var = 0.0;
    for (double v : resp) var += (v - mean) * (v - mean);
    return var / static_cast<double>(resp.size());
}

double blur_laplacian_var(const Image8& image) {
    return blur_laplacian_var(to_unit_floats(image), image.height, image.width);
}

AcceptanceResult classifier_acceptance(const std::vector<Image8>& images, Network& classifier,
                                       double threshold, int batch_size) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ValueError("acceptance threshold must be in (0,1), got " + std::to_string(threshold));
    AcceptanceResult res;
    res.accepted.reserve(images.size());
    size_t n_accepted = 0;
    for (size_t start = 0; start < images.size(); start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(images.size(), start + static_cast<size_t>(batch_size));
        std::vector<const Image8*> batch;
        for (size_t i = start; i < stop; ++i) batch.push_back(&images[i]);
        Tensor logits = classifier_forward(classifier, image_batch(batch, false), Mode::kEval);
        for (int i = 0; i < logits.dim(0); ++i) {
            const double p_real = 1.0 / (1.0 + std::exp(-logits.data()[static_cast<size_t>(i)]));
            const bool ok = p_real >= threshold;
            res.accepted.push_back(ok);
            n_accepted += ok;
        }
    }
    res.fraction = images.empty() ? 0.0 : static_cast<double>(n_accepted) / static_cast<double>(images.size());
    return res;
}

std::vector<ModelQuality> rank_models(std::vector<ModelQuality> reports) {
    if (reports.empty()) throw ValueError("rank_models: no reports");
    std::sort(reports.begin(), reports.end(), [](const ModelQuality& a, const ModelQuality& b) {
        if (a.fcn_score != b.fcn_score) return a.fcn_score > b.fcn_score;
        return a.model_id < b.model_id;
    });
    // chain ties: consecutive reports within 0.01 share a group
    size_t start = 0;
    while (start < reports.size()) {
        size_t stop = start + 1;
        while (stop < reports.size() && reports[stop - 1].fcn_score - reports[stop].fcn_score <= 0.01) ++stop;
        std::sort(reports.begin() + static_cast<long>(start), reports.begin() + static_cast<long>(stop),
                  [](const ModelQuality& a, const ModelQuality& b) {
                      if (a.blur_lapvar != b.blur_lapvar) return a.blur_lapvar > b.blur_lapvar;
                      if (a.clf_real_frac != b.clf_real_frac) return a.clf_real_frac > b.clf_real_frac;
                      return a.model_id < b.model_id;
                  });
        start = stop;
    }
    return reports;
}

}  // namespace lcgan
