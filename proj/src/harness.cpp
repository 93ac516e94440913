#include "lcgan/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>
#include <atomic>
#include <set>

#include "json.hpp"
#include "lcgan/augment.hpp"
#include "lcgan/errors.hpp"
#include "lcgan/metrics.hpp"
#include "lcgan/phantom.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lcgan {

const std::vector<int>& ExperimentConfig::grid_for_percent(size_t percent_index) const {
    if (percent_index < gan_epochs_per_percent.size() && !gan_epochs_per_percent[percent_index].empty())
        return gan_epochs_per_percent[percent_index];
    return gan_epochs;
}

namespace {

std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.8g", v);
    return buf;
}

std::string fmt_percent(double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", p);
    std::string s = buf;
    for (char& c : s)
        if (c == '.') c = '_';
    return s;
}

bool stage_done(const fs::path& marker) { return fs::exists(marker); }

void finish_stage(const fs::path& marker) {
    std::ofstream os(marker);
    os << "done\n";
}

template <typename Fn>
void run_stage(const fs::path& dir, const std::string& name, Fn&& fn) {
    const fs::path marker = dir / (".done." + name);
    if (stage_done(marker)) return;
    fs::create_directories(dir);
    fn();
    finish_stage(marker);
}

uint64_t stage_seed(uint64_t seed, const char* stage, uint64_t a = 0, uint64_t b = 0) {
    return Rng(seed).child(Rng::hash_str(stage)).child(a, b).seed();
}

struct SeedPaths {
    fs::path seed_dir;
    fs::path ref_seg_ckpt;

    fs::path pct_dir(const std::string& pk) const { return seed_dir / ("pct" + pk); }
};

std::string slice_name(const Sample& s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d", s.patient_id.c_str(), s.slice_id);
    return buf;
}

std::vector<Image8> generate_for_subset(Network& gen, const Dataset& subset, uint64_t rng_seed, int batch) {
    Rng noise(rng_seed);
    std::vector<Image8> out;
    out.reserve(subset.size());
    for (size_t start = 0; start < subset.size(); start += static_cast<size_t>(batch)) {
        const size_t stop = std::min(subset.size(), start + static_cast<size_t>(batch));
        std::vector<size_t> idx;
        for (size_t i = start; i < stop; ++i) idx.push_back(i);
        Tensor cond = onehot_mask_batch(subset, idx);
        Tensor fake = generator_forward(gen, cond, Mode::kGenerate, noise);
        for (auto& img : images_from_generator_output(fake)) out.push_back(std::move(img));
    }
    return out;
}

Dataset dataset_from_patients(const Dataset& ds, const std::vector<std::string>& patients) {
    Dataset out;
    out.image_size = ds.image_size;
    std::set<std::string> keep(patients.begin(), patients.end());
    for (const auto& s : ds.samples)
        if (keep.count(s.patient_id)) out.samples.push_back(s);
    return out;
}

json eval_json(const SegEvalResult& seg, const DetectionResult& det) {
    json per_class = json::array();
    for (int c = 0; c < 5; ++c) {
        if (seg.per_class_dsc[static_cast<size_t>(c)]) per_class.push_back(*seg.per_class_dsc[static_cast<size_t>(c)]);
        else per_class.push_back(nullptr);
    }
    json j = {{"mean_dsc", seg.mean_dsc},
              {"per_class_dsc", per_class},
              {"tp", det.tp},
              {"fp", det.fp},
              {"fn", det.fn}};
    j["precision"] = det.precision ? json(*det.precision) : json(nullptr);
    j["recall"] = det.recall ? json(*det.recall) : json(nullptr);
    return j;
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << j.dump(1) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    json j;
    is >> j;
    return j;
}

std::string csv_opt(const json& v) { return v.is_null() ? "nan" : fmt_num(v.get<double>()); }

// ---- per-seed pipeline ------------------------------------------------

void run_seed_pipeline(const ExperimentConfig& cfg, uint64_t seed, const Dataset& train, const Dataset& test) {
    SeedPaths paths;
    paths.seed_dir = fs::path(cfg.out_dir) / ("seed" + std::to_string(seed));
    paths.ref_seg_ckpt = paths.seed_dir / "ref_seg.ckpt";
    fs::create_directories(paths.seed_dir);

    // reference segmenter on the full training set (FCN-score yardstick)
    run_stage(paths.seed_dir, "ref_seg", [&] {
        TrainConfig tc = segmenter_train_defaults();
        tc.epochs = cfg.ref_seg_epochs;
        tc.batch_size = cfg.seg_batch;
        tc.seed = stage_seed(seed, "ref-seg");
        Rng init(stage_seed(seed, "ref-seg-init"));
        Network seg = build_segmenter(default_spec(NetKind::kSegmenter, train.image_size, cfg.base_filters), init);
        SegHistory h = train_segmenter(seg, train, nullptr, tc);
        save_checkpoint(seg, paths.ref_seg_ckpt.string());
        write_seg_history_csv(h, (paths.seed_dir / "ref_seg_history.csv").string());
        auto ref_eval = evaluate_segmentation(seg, test);
        write_json({{"mean_dsc", ref_eval.mean_dsc}}, paths.seed_dir / "ref_seg_eval.json");
    });

    for (size_t pi = 0; pi < cfg.percents.size(); ++pi) {
        const double percent = cfg.percents[pi];
        const std::string pk = fmt_percent(percent);
        const fs::path pdir = paths.pct_dir(pk);
        const std::vector<int>& grid = cfg.grid_for_percent(pi);
        const int max_epochs = *std::max_element(grid.begin(), grid.end());

        // patient-granular subset; one permutation per seed so subsets nest
        run_stage(pdir, "subset", [&] {
            Dataset subset = subset_by_patients(train, percent, stage_seed(seed, "subset"));
            write_json({{"percent", percent}, {"patients", subset.patient_ids()}, {"samples", subset.size()}},
                       pdir / "subset.json");
        });
        Dataset subset =
            dataset_from_patients(train, read_json(pdir / "subset.json")["patients"].get<std::vector<std::string>>());

        run_stage(pdir, "gan", [&] {
            fs::create_directories(pdir / "gan");
            TrainConfig tc;
            tc.epochs = max_epochs;
            tc.batch_size = cfg.gan_batch;
            tc.lambda_l1 = cfg.lambda_l1;
            tc.seed = stage_seed(seed, "gan", pi);
            Rng init(stage_seed(seed, "gan-init", pi));
            Network gen =
                build_generator(default_spec(NetKind::kGenerator, train.image_size, cfg.base_filters), init);
            Network disc =
                build_discriminator(default_spec(NetKind::kDiscriminator, train.image_size, cfg.base_filters), init);
            GanHistory h = train_lcgan(gen, disc, subset, tc, grid, [&](int epoch, Network& g) {
                save_checkpoint(g, (pdir / "gan" / ("g_ep" + std::to_string(epoch) + ".ckpt")).string());
            });
            write_gan_history_csv(h, (pdir / "gan" / "gan_history.csv").string());
        });

        // one synthetic image per subset mask, per checkpoint (scoring set)
        run_stage(pdir, "scoregen", [&] {
            for (int e : grid) {
                Network gen = load_checkpoint((pdir / "gan" / ("g_ep" + std::to_string(e) + ".ckpt")).string());
                auto imgs = generate_for_subset(gen, subset, stage_seed(seed, "scoregen", pi, static_cast<uint64_t>(e)),
                                                cfg.gan_batch);
                const fs::path edir = pdir / "scoregen" / ("ep" + std::to_string(e));
                fs::create_directories(edir);
                for (size_t i = 0; i < imgs.size(); ++i)
                    write_pgm(imgs[i], (edir / (slice_name(subset.samples[i]) + ".img.pgm")).string());
            }
        });
        auto load_scoregen = [&](int e) {
            std::vector<Image8> imgs;
            const fs::path edir = pdir / "scoregen" / ("ep" + std::to_string(e));
            imgs.reserve(subset.size());
            for (const auto& s : subset.samples)
                imgs.push_back(read_pgm((edir / (slice_name(s) + ".img.pgm")).string()));
            return imgs;
        };

        // real/fake selector trained on originals vs all checkpoints' fakes
        run_stage(pdir, "clf", [&] {
            std::vector<Image8> real;
            for (const auto& s : subset.samples) real.push_back(s.image);
            std::vector<Image8> fakes;
            for (int e : grid)
                for (auto& im : load_scoregen(e)) fakes.push_back(std::move(im));
            TrainConfig tc = classifier_train_defaults();
            tc.epochs = cfg.clf_epochs;
            tc.seed = stage_seed(seed, "clf", pi);
            Rng init(stage_seed(seed, "clf-init", pi));
            Network clf = build_classifier(
                default_spec(NetKind::kClassifier, train.image_size, cfg.clf_base_filters), init);
            auto res = train_classifier(clf, real, fakes, tc);
            save_checkpoint(clf, (pdir / "clf.ckpt").string());
            write_json({{"holdout_accuracy", res.holdout_accuracy}, {"holdout_size", res.holdout_size}},
                       pdir / "clf.json");
        });

        // three quality criteria per checkpoint, then the ranking
        run_stage(pdir, "quality", [&] {
            Network ref_seg = load_checkpoint(paths.ref_seg_ckpt.string());
            Network clf = load_checkpoint((pdir / "clf.ckpt").string());
            std::vector<Image8> masks;
            for (const auto& s : subset.samples) masks.push_back(s.mask);

            std::vector<ModelQuality> reports;
            json per_image_rows = json::array();
            for (int e : grid) {
                auto imgs = load_scoregen(e);
                ModelQuality q;
                q.model_id = "seed" + std::to_string(seed) + "_pct" + pk + "_ep" + std::to_string(e);
                q.epochs = e;
                q.fcn_score = fcn_score(ref_seg, imgs, masks);
                // per-image rows: segment once, keep each image's dice too
                std::vector<const Image8*> img_ptrs;
                for (const auto& im : imgs) img_ptrs.push_back(&im);
                auto preds = segment_images(ref_seg, img_ptrs);
                auto acc = classifier_acceptance(imgs, clf, 0.5);
                double fft_sum = 0.0, lap_sum = 0.0;
                for (size_t i = 0; i < imgs.size(); ++i) {
                    const double f = blur_fft(imgs[i]);
                    const double l = blur_laplacian_var(imgs[i]);
                    fft_sum += f;
                    lap_sum += l;
                    per_image_rows.push_back({{"model_id", q.model_id},
                                              {"image", slice_name(subset.samples[i])},
                                              {"fcn_dsc", dsc(preds[i], masks[i], {1, 2, 3, 4, 5})},
                                              {"blur_fft", f},
                                              {"blur_lapvar", l},
                                              {"judged_real", static_cast<bool>(acc.accepted[i])}});
                }
                q.blur_fft = fft_sum / static_cast<double>(imgs.size());
                q.blur_lapvar = lap_sum / static_cast<double>(imgs.size());
                q.clf_real_frac = acc.fraction;
                reports.push_back(q);
            }
            {
                std::ofstream os(pdir / "quality.csv");
                os << "model_id,epochs,fcn_score,blur_fft,blur_lapvar,clf_real_frac\n";
                for (const auto& q : reports)
                    os << q.model_id << "," << q.epochs << "," << fmt_num(q.fcn_score) << "," << fmt_num(q.blur_fft)
                       << "," << fmt_num(q.blur_lapvar) << "," << fmt_num(q.clf_real_frac) << "\n";
            }
            auto ranked = rank_models(reports);
            json jq = {{"per_image", per_image_rows}};
            jq["ranking"] = json::array();
            for (const auto& q : ranked) jq["ranking"].push_back(q.model_id);
            write_json(jq, pdir / "quality.json");
            write_json({{"model_id", ranked.front().model_id}, {"epochs", ranked.front().epochs}},
                       pdir / "chosen.json");
        });
        const int chosen_epoch = read_json(pdir / "chosen.json")["epochs"].get<int>();

        // augmentation images from the chosen model, filtered by the selector
        run_stage(pdir, "gen", [&] {
            Network gen =
                load_checkpoint((pdir / "gan" / ("g_ep" + std::to_string(chosen_epoch) + ".ckpt")).string());
            Network clf = load_checkpoint((pdir / "clf.ckpt").string());
            auto imgs = generate_for_subset(gen, subset, stage_seed(seed, "gen", pi), cfg.gan_batch);
            auto acc = classifier_acceptance(imgs, clf, cfg.clf_threshold);
            const fs::path gdir = pdir / "gen";
            fs::create_directories(gdir);
            json accepted = json::array();
            for (size_t i = 0; i < imgs.size(); ++i) {
                if (!acc.accepted[i]) continue;
                const std::string stem = slice_name(subset.samples[i]);
                write_pgm(imgs[i], (gdir / (stem + ".img.pgm")).string());
                write_pgm(subset.samples[i].mask, (gdir / (stem + ".mask.pgm")).string());
                accepted.push_back(stem);
            }
            write_json({{"accepted", accepted}, {"fraction", acc.fraction}, {"total", imgs.size()}},
                       pdir / "gen" / "accepted.json");

            const size_t rows = std::min<size_t>(static_cast<size_t>(cfg.montage_rows), imgs.size());
            std::vector<Image8> m, t, o;
            for (size_t i = 0; i < rows; ++i) {
                m.push_back(subset.samples[i].mask);
                t.push_back(subset.samples[i].image);
                o.push_back(imgs[i]);
            }
            emit_montage(m, t, o, (pdir / "montage.ppm").string());
        });

        // the four training sets and their segmenters
        for (const auto& mode : cfg.modes) {
            run_stage(pdir, "mode_" + mode, [&] {
                Dataset augmented;
                augmented.image_size = subset.image_size;
                if (mode == "gan" || mode == "both") {
                    json acc = read_json(pdir / "gen" / "accepted.json");
                    std::set<std::string> keep;
                    for (const auto& stem : acc["accepted"]) keep.insert(stem.get<std::string>());
                    for (const auto& s : subset.samples) {
                        const std::string stem = slice_name(s);
                        if (keep.count(stem) == 0) continue;
                        Sample gs;
                        gs.patient_id = s.patient_id;
                        gs.slice_id = s.slice_id;
                        gs.image = read_pgm((pdir / "gen" / (stem + ".img.pgm")).string());
                        gs.mask = s.mask;
                        augmented.samples.push_back(std::move(gs));
                    }
                }
                if (mode == "traditional" || mode == "both") {
                    AugmentPolicy pol;
                    pol.seed = stage_seed(seed, "trad-aug", pi);
                    Dataset trad = augment_dataset(subset, pol);
                    for (auto& s : trad.samples) augmented.samples.push_back(std::move(s));
                }

                TrainConfig tc = segmenter_train_defaults();
                tc.epochs = cfg.seg_epochs;
                tc.batch_size = cfg.seg_batch;
                tc.seed = stage_seed(seed, "seg", pi);  // shared across modes: paired runs
                Rng init(stage_seed(seed, "seg-init", pi));
                Network seg =
                    build_segmenter(default_spec(NetKind::kSegmenter, train.image_size, cfg.base_filters), init);
                SegHistory h =
                    train_segmenter(seg, subset, augmented.samples.empty() ? nullptr : &augmented, tc);
                save_checkpoint(seg, (pdir / ("seg_" + mode + ".ckpt")).string());
                write_seg_history_csv(h, (pdir / ("seg_" + mode + "_history.csv")).string());

                auto seg_eval = evaluate_segmentation(seg, test);
                std::vector<Image8> gts;
                for (const auto& s : test.samples) gts.push_back(s.mask);
                auto det = detection_pr(seg_eval.predictions, gts);
                json j = eval_json(seg_eval, det);
                j["train_size"] = subset.size() + augmented.size();
                write_json(j, pdir / ("eval_" + mode + ".json"));
            });
        }
    }
}

}  // namespace

void class_color(int cls, uint8_t rgb[3]) {
    static const uint8_t table[6][3] = {{0, 0, 0},     {220, 40, 40},  {40, 200, 40},
                                        {60, 90, 230}, {230, 220, 40}, {220, 60, 220}};
    rgb[0] = table[cls][0];
    rgb[1] = table[cls][1];
    rgb[2] = table[cls][2];
}

int color_class(const uint8_t rgb[3]) {
    for (int c = 0; c < 6; ++c) {
        uint8_t ref[3];
        class_color(c, ref);
        if (ref[0] == rgb[0] && ref[1] == rgb[1] && ref[2] == rgb[2]) return c;
    }
    return -1;
}

void emit_montage(const std::vector<Image8>& masks, const std::vector<Image8>& targets,
                  const std::vector<Image8>& outputs, const std::string& path) {
    if (masks.size() != targets.size() || masks.size() != outputs.size())
        throw ShapeError("emit_montage: column lists must have equal length");
    if (masks.empty()) throw ValueError("emit_montage: nothing to draw");
    const int h = masks[0].height, w = masks[0].width;
    const int rows = static_cast<int>(masks.size());
    std::vector<uint8_t> rgb(static_cast<size_t>(rows) * h * 3 * w * 3, 0);
    const int total_w = 3 * w;
    auto put_gray = [&](const Image8& im, int row, int col_block) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t o = ((static_cast<size_t>(row) * h + y) * total_w + col_block * w + x) * 3;
                rgb[o] = rgb[o + 1] = rgb[o + 2] = im.at(y, x);
            }
    };
    for (int r = 0; r < rows; ++r) {
        if (masks[static_cast<size_t>(r)].height != h || targets[static_cast<size_t>(r)].height != h ||
            outputs[static_cast<size_t>(r)].height != h)
            throw ShapeError("emit_montage: mixed image sizes");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                uint8_t c[3];
                class_color(masks[static_cast<size_t>(r)].at(y, x), c);
                const size_t o = ((static_cast<size_t>(r) * h + y) * total_w + x) * 3;
                rgb[o] = c[0];
                rgb[o + 1] = c[1];
                rgb[o + 2] = c[2];
            }
        put_gray(targets[static_cast<size_t>(r)], r, 1);
        put_gray(outputs[static_cast<size_t>(r)], r, 2);
    }
    write_ppm(rgb, rows * h, total_w, path);
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void build_reports(const ExperimentConfig& cfg) {
    const fs::path out = cfg.out_dir;
    std::ofstream report(out / "report.csv");
    report << "percent,mode,seed,mean_dsc,dsc_iph,dsc_ivh,dsc_sah,dsc_edh,dsc_sdh,precision,recall\n";
    for (size_t pi = 0; pi < cfg.percents.size(); ++pi) {
        const std::string pk = fmt_percent(cfg.percents[pi]);
        for (const auto& mode : cfg.modes) {
            for (uint64_t seed : cfg.seeds) {
                const fs::path p = out / ("seed" + std::to_string(seed)) / ("pct" + pk) / ("eval_" + mode + ".json");
                json j = read_json(p);
                report << fmt_num(cfg.percents[pi]) << "," << mode << "," << seed << "," << fmt_num(j["mean_dsc"].get<double>());
                for (int c = 0; c < 5; ++c) report << "," << csv_opt(j["per_class_dsc"][static_cast<size_t>(c)]);
                report << "," << csv_opt(j["precision"]) << "," << csv_opt(j["recall"]) << "\n";
            }
        }
    }
    report.close();

    std::ofstream qall(out / "quality_all.csv");
    qall << "model_id,epochs,fcn_score,blur_fft,blur_lapvar,clf_real_frac\n";
    for (uint64_t seed : cfg.seeds)
        for (size_t pi = 0; pi < cfg.percents.size(); ++pi) {
            const fs::path p =
                out / ("seed" + std::to_string(seed)) / ("pct" + fmt_percent(cfg.percents[pi])) / "quality.csv";
            std::ifstream is(p);
            if (!is) throw IoError("missing quality csv: " + p.string());
            std::string line;
            std::getline(is, line);  // header
            while (std::getline(is, line))
                if (!line.empty()) qall << line << "\n";
        }
    qall.close();

    // shrinking-gain analog: per percent and mode, the median over seeds of
    // the relative improvement vs the plain subset
    std::ofstream imp(out / "improvement.csv");
    imp << "percent,mode,median_rel_dsc_improvement,median_rel_precision_improvement,median_rel_recall_improvement\n";
    for (size_t pi = 0; pi < cfg.percents.size(); ++pi) {
        const std::string pk = fmt_percent(cfg.percents[pi]);
        for (const auto& mode : cfg.modes) {
            if (mode == "none") continue;
            std::vector<double> d_rel, p_rel, r_rel;
            for (uint64_t seed : cfg.seeds) {
                const fs::path base = out / ("seed" + std::to_string(seed)) / ("pct" + pk);
                json jm = read_json(base / ("eval_" + mode + ".json"));
                json jn = read_json(base / "eval_none.json");
                const double dn = jn["mean_dsc"].get<double>();
                if (dn > 0) d_rel.push_back((jm["mean_dsc"].get<double>() - dn) / dn);
                if (!jn["precision"].is_null() && !jm["precision"].is_null() && jn["precision"].get<double>() > 0)
                    p_rel.push_back((jm["precision"].get<double>() - jn["precision"].get<double>()) /
                                    jn["precision"].get<double>());
                if (!jn["recall"].is_null() && !jm["recall"].is_null() && jn["recall"].get<double>() > 0)
                    r_rel.push_back((jm["recall"].get<double>() - jn["recall"].get<double>()) /
                                    jn["recall"].get<double>());
            }
            imp << fmt_num(cfg.percents[pi]) << "," << mode << ","
                << (d_rel.empty() ? "nan" : fmt_num(median(d_rel))) << ","
                << (p_rel.empty() ? "nan" : fmt_num(median(p_rel))) << ","
                << (r_rel.empty() ? "nan" : fmt_num(median(r_rel))) << "\n";
        }
    }
}

}  // namespace

std::string run_pipeline(const ExperimentConfig& cfg) {
    if (cfg.percents.empty() || cfg.seeds.empty() || cfg.modes.empty())
        throw ValueError("experiment config needs at least one percent, seed and mode");
    for (double p : cfg.percents)
        if (p <= 0.0 || p > 100.0) throw ValueError("percent out of (0,100]: " + std::to_string(p));
    Dataset train = load_dataset_split(cfg.dataset_root, "train");
    Dataset test = load_dataset_split(cfg.dataset_root, "test");
    fs::create_directories(cfg.out_dir);

    // seeds are independent pipelines; run a few side by side
    const int workers = std::max(1, std::min<int>(cfg.parallel_seeds, static_cast<int>(cfg.seeds.size())));
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= cfg.seeds.size()) return;
                try {
                    run_seed_pipeline(cfg, cfg.seeds[i], train, test);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    run_stage(cfg.out_dir, "report", [&] { build_reports(cfg); });
    return (fs::path(cfg.out_dir) / "report.csv").string();
}

std::string rebuild_reports(const ExperimentConfig& cfg) {
    build_reports(cfg);
    return (fs::path(cfg.out_dir) / "report.csv").string();
}

}  // namespace lcgan
