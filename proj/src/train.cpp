#include "lcgan/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lcgan/errors.hpp"
#include "lcgan/metrics.hpp"

namespace lcgan {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::vector<size_t> epoch_order(size_t n, bool shuffle, Rng& rng) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) rng.shuffle(order);
    return order;
}

// Re-throws op failures with training-loop context.
[[noreturn]] void rethrow_with_context(const NonFiniteError& e, const char* loop, int epoch, size_t batch) {
    throw NonFiniteError(std::string(loop) + " aborted at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch) + ": " + e.what());
}

}  // namespace

TrainConfig segmenter_train_defaults() {
    TrainConfig cfg;
    cfg.adam.lr = 2e-3;
    cfg.class_weights = {0.1, 1.0, 1.0, 1.0, 1.0, 1.0};
    return cfg;
}

TrainConfig classifier_train_defaults() {
    TrainConfig cfg;
    cfg.adam.lr = 1e-3;
    cfg.batch_size = 8;
    return cfg;
}

void write_gan_history_csv(const GanHistory& h, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write history: " + path);
    os << "epoch,d_loss,g_gan_loss,g_l1_loss\n";
    for (const auto& r : h.rows)
        os << r.epoch << "," << fmt(r.d_loss) << "," << fmt(r.g_gan_loss) << "," << fmt(r.g_l1_loss) << "\n";
}

void write_seg_history_csv(const SegHistory& h, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write history: " + path);
    os << "epoch,train_ce,val_dsc\n";
    for (const auto& r : h.rows) {
        os << r.epoch << "," << fmt(r.train_ce) << ",";
        if (r.val_dsc) os << fmt(*r.val_dsc);
        else os << "nan";
        os << "\n";
    }
}

GanHistory train_lcgan(Network& gen, Network& disc, const Dataset& data, const TrainConfig& cfg,
                       const std::vector<int>& checkpoint_epochs,
                       const std::function<void(int, Network&)>& on_checkpoint) {
    if (data.empty()) throw ValueError("train_lcgan: empty dataset");
    if (cfg.lambda_l1 < 0.0) throw ValueError("train_lcgan: lambda_l1 must be >= 0");
    Adam opt_g(cfg.adam), opt_d(cfg.adam);
    Rng order_rng = Rng(cfg.seed).child(Rng::hash_str("gan-order"));
    Rng noise_rng = Rng(cfg.seed).child(Rng::hash_str("gan-noise"));
    GanHistory hist;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto order = epoch_order(data.size(), cfg.shuffle, order_rng);
        double d_sum = 0.0, gan_sum = 0.0, l1_sum = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                                    order.begin() + static_cast<long>(stop));
            try {
                Tensor cond = onehot_mask_batch(data, idx);
                Tensor real = image_batch(data, idx, /*signed_range=*/true);

                Tape tape_g;
                Tensor fake = generator_forward(gen, cond, Mode::kTrain, noise_rng);

                double d_loss_val;
                {
                    // Discriminator step: the fake is detached so no gradient
                    // reaches the generator.
                    disc.zero_grad();
                    Tape tape_d;
                    Tensor d_real = discriminator_forward(disc, cond, real, Mode::kTrain);
                    Tensor d_fake = discriminator_forward(disc, cond, fake.detach(), Mode::kTrain);
                    Tensor loss_d = add(bce_with_logits(d_real, Tensor::full(d_real.shape(), 1.0)),
                                        bce_with_logits(d_fake, Tensor::zeros(d_fake.shape())));
                    d_loss_val = loss_d.item();
                    tape_d.backward(loss_d);
                    opt_d.step(disc);
                }

                // Generator step against the updated discriminator, with the
                // discriminator frozen.
                gen.zero_grad();
                disc.set_requires_grad(false);
                Tensor d_fake2 = discriminator_forward(disc, cond, fake, Mode::kTrain);
                Tensor gan_loss = bce_with_logits(d_fake2, Tensor::full(d_fake2.shape(), 1.0));
                Tensor l1 = l1_loss(fake, real);
                Tensor loss_g = add(gan_loss, scale_shift(l1, cfg.lambda_l1, 0.0));
                tape_g.backward(loss_g);
                disc.set_requires_grad(true);
                opt_g.step(gen);

                d_sum += d_loss_val;
                gan_sum += gan_loss.item();
                l1_sum += l1.item();
                hist.step_d_loss.push_back(d_loss_val);
                hist.step_g_gan.push_back(gan_loss.item());
                hist.step_g_l1.push_back(l1.item());
                ++batches;
            } catch (const NonFiniteError& e) {
                rethrow_with_context(e, "lcgan training", epoch, batches);
            }
        }
        hist.rows.push_back({epoch, d_sum / static_cast<double>(batches), gan_sum / static_cast<double>(batches),
                             l1_sum / static_cast<double>(batches)});
        if (on_checkpoint &&
            std::find(checkpoint_epochs.begin(), checkpoint_epochs.end(), epoch) != checkpoint_epochs.end())
            on_checkpoint(epoch, gen);
    }
    return hist;
}

SegHistory train_segmenter(Network& seg, const Dataset& data, const Dataset* augmented,
                           const TrainConfig& cfg, const Dataset* val_set) {
    if (data.empty()) throw ValueError("train_segmenter: empty dataset");
    // concatenated view: originals then augmented
    std::vector<const Sample*> pool;
    for (const auto& s : data.samples) pool.push_back(&s);
    if (augmented != nullptr)
        for (const auto& s : augmented->samples) pool.push_back(&s);

    Adam opt(cfg.adam);
    Rng order_rng = Rng(cfg.seed).child(Rng::hash_str("seg-order"));
    SegHistory hist;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto order = epoch_order(pool.size(), cfg.shuffle, order_rng);
        double ce_sum = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            try {
                std::vector<const Image8*> imgs, masks;
                for (size_t i = start; i < stop; ++i) {
                    imgs.push_back(&pool[order[i]]->image);
                    masks.push_back(&pool[order[i]]->mask);
                }
                Tensor x = image_batch(imgs, false);
                Tensor targets = make_uninit({static_cast<int>(masks.size()), masks[0]->height, masks[0]->width});
                {
                    double* d = targets.mutable_data().data();
                    for (size_t n = 0; n < masks.size(); ++n)
                        for (size_t p = 0; p < masks[n]->size(); ++p) d[n * masks[n]->size() + p] = masks[n]->pixels[p];
                }
                seg.zero_grad();
                Tape tape;
                Tensor logits = segmenter_forward(seg, x, Mode::kTrain);
                Tensor loss = softmax_cross_entropy(logits, targets, cfg.class_weights);
                const double ce = loss.item();
                tape.backward(loss);
                opt.step(seg);
                ce_sum += ce;
                hist.step_ce.push_back(ce);
                ++batches;
            } catch (const NonFiniteError& e) {
                rethrow_with_context(e, "segmenter training", epoch, batches);
            }
        }
        SegEpochRow row;
        row.epoch = epoch;
        row.train_ce = ce_sum / static_cast<double>(batches);
        if (val_set != nullptr && !val_set->empty()) row.val_dsc = evaluate_segmentation(seg, *val_set).mean_dsc;
        hist.rows.push_back(row);
    }
    return hist;
}

ClassifierResult train_classifier(Network& clf, const std::vector<Image8>& real_images,
                                  const std::vector<Image8>& fake_images, const TrainConfig& cfg) {
    if (real_images.empty() || fake_images.empty())
        throw ValueError("train_classifier: both image sets must be non-empty");
    Rng rng = Rng(cfg.seed).child(Rng::hash_str("clf"));

    // seeded 20% holdout per side
    auto split = [&](size_t n) {
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx);
        const size_t hold = std::max<size_t>(1, n / 5);
        std::vector<size_t> holdout(idx.begin(), idx.begin() + static_cast<long>(hold));
        std::vector<size_t> train(idx.begin() + static_cast<long>(hold), idx.end());
        if (train.empty()) train = holdout;  // degenerate tiny sets
        return std::make_pair(train, holdout);
    };
    auto [real_train, real_hold] = split(real_images.size());
    auto [fake_train, fake_hold] = split(fake_images.size());

    Adam opt(cfg.adam);
    const int half = std::max(1, cfg.batch_size / 2);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // balanced batches: equal reals and fakes per step
        const size_t steps = (std::max(real_train.size(), fake_train.size()) + static_cast<size_t>(half) - 1) /
                             static_cast<size_t>(half);
        std::vector<size_t> rorder = real_train, forder = fake_train;
        rng.shuffle(rorder);
        rng.shuffle(forder);
        for (size_t s = 0; s < steps; ++s) {
            try {
                std::vector<const Image8*> batch;
                std::vector<double> labels;
                for (int i = 0; i < half; ++i) {
                    batch.push_back(&real_images[rorder[(s * half + i) % rorder.size()]]);
                    labels.push_back(1.0);
                }
                for (int i = 0; i < half; ++i) {
                    batch.push_back(&fake_images[forder[(s * half + i) % forder.size()]]);
                    labels.push_back(0.0);
                }
                Tensor x = image_batch(batch, false);
                clf.zero_grad();
                Tape tape;
                Tensor logits = classifier_forward(clf, x, Mode::kTrain);
                Tensor targets = Tensor::from_data({static_cast<int>(labels.size()), 1}, labels);
                Tensor loss = bce_with_logits(logits, targets);
                tape.backward(loss);
                opt.step(clf);
            } catch (const NonFiniteError& e) {
                rethrow_with_context(e, "classifier training", epoch, s);
            }
        }
    }

    // held-out accuracy at threshold 0.5
    ClassifierResult res;
    int correct = 0, total = 0;
    auto eval_side = [&](const std::vector<Image8>& imgs, const std::vector<size_t>& idx, bool is_real) {
        for (size_t start = 0; start < idx.size(); start += 16) {
            const size_t stop = std::min(idx.size(), start + 16);
            std::vector<const Image8*> batch;
            for (size_t i = start; i < stop; ++i) batch.push_back(&imgs[idx[i]]);
            Tensor logits = classifier_forward(clf, image_batch(batch, false), Mode::kEval);
            for (int i = 0; i < logits.dim(0); ++i) {
                const bool said_real = logits.data()[static_cast<size_t>(i)] >= 0.0;
                correct += said_real == is_real;
                ++total;
            }
        }
    };
    eval_side(real_images, real_hold, true);
    eval_side(fake_images, fake_hold, false);
    res.holdout_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
    res.holdout_size = total;
    return res;
}

}  // namespace lcgan
