// Command-line front end: phantom data generation, the three training
// loops, model scoring, generation, traditional augmentation, the full
// experiment pipeline, and report rebuilding.
//
// Every subcommand takes --config FILE (flat TOML-style key = value lines,
// arrays in brackets) plus flag overrides. All randomness flows from --seed.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "lcgan/augment.hpp"
#include "lcgan/config.hpp"
#include "lcgan/harness.hpp"
#include "lcgan/metrics.hpp"
#include "lcgan/phantom.hpp"
#include "lcgan/train.hpp"

namespace fs = std::filesystem;
using namespace lcgan;

namespace {

// Applies config-file values to every flag the command line left unset.
class ConfigBinder {
public:
    ConfigBinder(CLI::App* cmd, const std::string& path) : cmd_(cmd) {
        if (!path.empty()) {
            cf_ = ConfigFile::load(path);
            loaded_ = true;
        }
    }
    template <typename T, typename Getter>
    void bind(const char* flag, T& var, Getter get) const {
        if (!loaded_ || cmd_->count(flag) > 0) return;
        const std::string key = std::string(flag).substr(2);
        if (cf_.has(key)) var = get(cf_, key);
    }
    void num(const char* flag, double& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return c.number(k); }); }
    void num(const char* flag, int& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return static_cast<int>(c.integer(k)); }); }
    void num(const char* flag, uint64_t& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return static_cast<uint64_t>(c.integer(k)); }); }
    void str(const char* flag, std::string& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return c.str(k); }); }
    void nums(const char* flag, std::vector<double>& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return c.number_list(k); }); }
    void ints(const char* flag, std::vector<int>& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return c.int_list(k); }); }
    void uints(const char* flag, std::vector<uint64_t>& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return c.uint_list(k); }); }
    void strs(const char* flag, std::vector<std::string>& v) const { bind(flag, v, [](const ConfigFile& c, const std::string& k) { return c.str_list(k); }); }

private:
    CLI::App* cmd_;
    ConfigFile cf_;
    bool loaded_ = false;
};

void add_config_flag(CLI::App* cmd, std::string& var) {
    cmd->add_option("--config", var, "Config file with key = value defaults for these flags");
}

int cmd_phantom_gen(const std::string& out, int patients, int test_patients, int size, uint64_t seed) {
    PhantomDataset d = generate_dataset(patients, test_patients, size, seed);
    save_dataset(d.train, d.test, seed, out, d.patient_seeds);
    std::printf("wrote %zu train / %zu test slices to %s\n", d.train.size(), d.test.size(), out.c_str());
    return 0;
}

int cmd_train_seg(const std::string& data, const std::string& out, int epochs, uint64_t seed, double subset_pct,
                  const std::string& augmented_root, int base) {
    Dataset train = load_dataset_split(data, "train");
    if (subset_pct < 100.0) train = subset_by_patients(train, subset_pct, seed);
    Dataset aug;
    if (!augmented_root.empty()) aug = load_dataset_split(augmented_root, "train");
    TrainConfig cfg = segmenter_train_defaults();
    cfg.epochs = epochs;
    cfg.seed = seed;
    Rng init(Rng(seed).child(Rng::hash_str("seg-init")).seed());
    Network seg = build_segmenter(default_spec(NetKind::kSegmenter, train.image_size, base), init);
    SegHistory h = train_segmenter(seg, train, aug.empty() ? nullptr : &aug, cfg);
    save_checkpoint(seg, out);
    write_seg_history_csv(h, out + ".history.csv");
    std::printf("segmenter -> %s (final ce %.6f)\n", out.c_str(), h.rows.back().train_ce);
    return 0;
}

int cmd_train_gan(const std::string& data, const std::string& out, const std::vector<int>& epochs, uint64_t seed,
                  double subset_pct, double lambda_l1, int base, int batch) {
    Dataset train = load_dataset_split(data, "train");
    if (subset_pct < 100.0) train = subset_by_patients(train, subset_pct, seed);
    TrainConfig cfg;
    cfg.epochs = *std::max_element(epochs.begin(), epochs.end());
    cfg.batch_size = batch;
    cfg.lambda_l1 = lambda_l1;
    cfg.seed = seed;
    Rng init(Rng(seed).child(Rng::hash_str("gan-init")).seed());
    Network gen = build_generator(default_spec(NetKind::kGenerator, train.image_size, base), init);
    Network disc = build_discriminator(default_spec(NetKind::kDiscriminator, train.image_size, base), init);
    fs::create_directories(out);
    GanHistory h = train_lcgan(gen, disc, train, cfg, epochs, [&](int epoch, Network& g) {
        save_checkpoint(g, (fs::path(out) / ("g_ep" + std::to_string(epoch) + ".ckpt")).string());
    });
    write_gan_history_csv(h, (fs::path(out) / "gan_history.csv").string());
    std::printf("lcgan checkpoints -> %s\n", out.c_str());
    return 0;
}

std::vector<Image8> generate_batched(Network& gen, const Dataset& subset, uint64_t noise_seed) {
    Rng noise(noise_seed);
    std::vector<Image8> imgs;
    for (size_t start = 0; start < subset.size(); start += 8) {
        const size_t stop = std::min(subset.size(), start + 8);
        std::vector<size_t> idx;
        for (size_t i = start; i < stop; ++i) idx.push_back(i);
        Tensor fake = generator_forward(gen, onehot_mask_batch(subset, idx), Mode::kGenerate, noise);
        for (auto& im : images_from_generator_output(fake)) imgs.push_back(std::move(im));
    }
    return imgs;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lesion-conditional GAN augmentation toolkit"};
    app.require_subcommand(1);

    auto* pg = app.add_subcommand("phantom-gen", "Generate a phantom CT dataset");
    std::string pg_out = "phantom_data", pg_config;
    int pg_patients = 200, pg_test = 60, pg_size = 64;
    uint64_t pg_seed = 1;
    pg->add_option("--out", pg_out, "Output dataset directory");
    pg->add_option("--patients", pg_patients, "Training patients");
    pg->add_option("--test-patients", pg_test, "Test patients");
    pg->add_option("--size", pg_size, "Image size (power of two)");
    pg->add_option("--seed", pg_seed, "Master seed");
    add_config_flag(pg, pg_config);

    auto* ts = app.add_subcommand("train-seg", "Train the segmentation network");
    std::string ts_data, ts_out = "seg.ckpt", ts_aug, ts_config;
    int ts_epochs = 30, ts_base = 16;
    uint64_t ts_seed = 1;
    double ts_pct = 100.0;
    ts->add_option("--data", ts_data, "Dataset root")->required();
    ts->add_option("--out", ts_out, "Checkpoint path");
    ts->add_option("--epochs", ts_epochs, "Training epochs");
    ts->add_option("--seed", ts_seed, "Master seed");
    ts->add_option("--subset-pct", ts_pct, "Patient subset percent");
    ts->add_option("--augmented", ts_aug, "Extra dataset root concatenated for training");
    ts->add_option("--base-filters", ts_base, "Base filter count");
    add_config_flag(ts, ts_config);

    auto* tg = app.add_subcommand("train-gan", "Train the lesion-conditional GAN");
    std::string tg_data, tg_out = "gan_ckpts", tg_config;
    std::vector<int> tg_epochs = {10, 50, 100, 200};
    uint64_t tg_seed = 1;
    double tg_pct = 100.0, tg_lambda = 100.0;
    int tg_base = 16, tg_batch = 4;
    tg->add_option("--data", tg_data, "Dataset root")->required();
    tg->add_option("--out", tg_out, "Checkpoint directory");
    tg->add_option("--epochs", tg_epochs, "Checkpoint epoch grid")->expected(-1);
    tg->add_option("--seed", tg_seed, "Master seed");
    tg->add_option("--subset-pct", tg_pct, "Patient subset percent");
    tg->add_option("--lambda-l1", tg_lambda, "Weight of the L1 term");
    tg->add_option("--base-filters", tg_base, "Base filter count");
    tg->add_option("--batch", tg_batch, "Batch size");
    add_config_flag(tg, tg_config);

    auto* sm = app.add_subcommand("score-models", "Score generator checkpoints (FCN score, blur, selector)");
    std::string sm_data, sm_models, sm_ref, sm_out = "quality.csv", sm_config;
    uint64_t sm_seed = 1;
    double sm_pct = 100.0;
    int sm_clf_epochs = 8, sm_base = 16;
    sm->add_option("--data", sm_data, "Dataset root")->required();
    sm->add_option("--models", sm_models, "Directory of g_ep*.ckpt files")->required();
    sm->add_option("--ref-seg", sm_ref, "Reference segmenter checkpoint")->required();
    sm->add_option("--out", sm_out, "Quality CSV path");
    sm->add_option("--seed", sm_seed, "Master seed");
    sm->add_option("--subset-pct", sm_pct, "Patient subset percent used for scoring");
    sm->add_option("--clf-epochs", sm_clf_epochs, "Epochs for the real/fake selector");
    sm->add_option("--base-filters", sm_base, "Base filter count for the selector");
    add_config_flag(sm, sm_config);

    auto* gn = app.add_subcommand("generate", "Generate synthetic images from masks");
    std::string gn_data, gn_ckpt, gn_out = "generated", gn_clf, gn_config;
    uint64_t gn_seed = 1;
    double gn_pct = 100.0, gn_threshold = 0.1;
    gn->add_option("--data", gn_data, "Dataset root supplying condition masks")->required();
    gn->add_option("--gen", gn_ckpt, "Generator checkpoint")->required();
    gn->add_option("--out", gn_out, "Output directory");
    gn->add_option("--seed", gn_seed, "Master seed");
    gn->add_option("--subset-pct", gn_pct, "Patient subset percent");
    gn->add_option("--clf", gn_clf, "Real/fake selector checkpoint (filters outputs)");
    gn->add_option("--threshold", gn_threshold, "Acceptance threshold on P(real)");
    add_config_flag(gn, gn_config);

    auto* au = app.add_subcommand("augment", "Traditional augmentation of a dataset");
    std::string au_data, au_out = "augmented", au_config;
    uint64_t au_seed = 1;
    au->add_option("--data", au_data, "Dataset root")->required();
    au->add_option("--out", au_out, "Output dataset root");
    au->add_option("--seed", au_seed, "Master seed");
    add_config_flag(au, au_config);

    auto* ex = app.add_subcommand("experiment", "Run the full augmentation experiment");
    std::string ex_data, ex_out = "experiment_out", ex_config;
    std::vector<double> ex_percents = {2.5, 10.0, 25.0};
    std::vector<uint64_t> ex_seeds = {1};
    std::vector<std::string> ex_modes = {"none", "gan", "traditional", "both"};
    std::vector<int> ex_gan_epochs = {10, 50, 100, 200};
    std::vector<int> ex_grid_25, ex_grid_10, ex_grid_2_5;
    int ex_ref_epochs = 8, ex_seg_epochs = 30, ex_clf_epochs = 3, ex_clf_base = 4, ex_base = 16,
        ex_parallel = 2, ex_gan_batch = 4;
    double ex_lambda = 100.0, ex_threshold = 0.1;
    ex->add_option("--data", ex_data, "Dataset root")->required();
    ex->add_option("--out", ex_out, "Output directory");
    ex->add_option("--percents", ex_percents, "Subset percents")->expected(-1);
    ex->add_option("--seeds", ex_seeds, "Seeds (one pipeline each)")->expected(-1);
    ex->add_option("--modes", ex_modes, "Augmentation modes")->expected(-1);
    ex->add_option("--gan-epochs", ex_gan_epochs, "LcGAN checkpoint epoch grid")->expected(-1);
    ex->add_option("--gan-epochs-2-5", ex_grid_2_5, "Grid override for 2.5%")->expected(-1);
    ex->add_option("--gan-epochs-10", ex_grid_10, "Grid override for 10%")->expected(-1);
    ex->add_option("--gan-epochs-25", ex_grid_25, "Grid override for 25%")->expected(-1);
    ex->add_option("--gan-batch", ex_gan_batch, "GAN batch size");
    ex->add_option("--lambda-l1", ex_lambda, "Weight of the L1 term");
    ex->add_option("--ref-seg-epochs", ex_ref_epochs, "Reference segmenter epochs");
    ex->add_option("--seg-epochs", ex_seg_epochs, "Per-mode segmenter epochs");
    ex->add_option("--clf-epochs", ex_clf_epochs, "Selector epochs");
    ex->add_option("--clf-base-filters", ex_clf_base, "Selector base filter count");
    ex->add_option("--threshold", ex_threshold, "Acceptance threshold for generated images");
    ex->add_option("--base-filters", ex_base, "Base filter count");
    ex->add_option("--parallel-seeds", ex_parallel, "Seed pipelines run side by side");
    add_config_flag(ex, ex_config);

    auto* rp = app.add_subcommand("report", "Rebuild report CSVs from experiment artifacts");
    std::string rp_out, rp_config;
    std::vector<double> rp_percents = {2.5, 10.0, 25.0};
    std::vector<uint64_t> rp_seeds = {1};
    std::vector<std::string> rp_modes = {"none", "gan", "traditional", "both"};
    rp->add_option("--exp", rp_out, "Experiment output directory")->required();
    rp->add_option("--percents", rp_percents, "Subset percents")->expected(-1);
    rp->add_option("--seeds", rp_seeds, "Seeds")->expected(-1);
    rp->add_option("--modes", rp_modes, "Modes")->expected(-1);
    add_config_flag(rp, rp_config);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
    }

    try {
        if (pg->parsed()) {
            ConfigBinder b(pg, pg_config);
            b.str("--out", pg_out);
            b.num("--patients", pg_patients);
            b.num("--test-patients", pg_test);
            b.num("--size", pg_size);
            b.num("--seed", pg_seed);
            return cmd_phantom_gen(pg_out, pg_patients, pg_test, pg_size, pg_seed);
        }
        if (ts->parsed()) {
            ConfigBinder b(ts, ts_config);
            b.str("--out", ts_out);
            b.num("--epochs", ts_epochs);
            b.num("--seed", ts_seed);
            b.num("--subset-pct", ts_pct);
            b.str("--augmented", ts_aug);
            b.num("--base-filters", ts_base);
            return cmd_train_seg(ts_data, ts_out, ts_epochs, ts_seed, ts_pct, ts_aug, ts_base);
        }
        if (tg->parsed()) {
            ConfigBinder b(tg, tg_config);
            b.str("--out", tg_out);
            b.ints("--epochs", tg_epochs);
            b.num("--seed", tg_seed);
            b.num("--subset-pct", tg_pct);
            b.num("--lambda-l1", tg_lambda);
            b.num("--base-filters", tg_base);
            b.num("--batch", tg_batch);
            return cmd_train_gan(tg_data, tg_out, tg_epochs, tg_seed, tg_pct, tg_lambda, tg_base, tg_batch);
        }
        if (sm->parsed()) {
            ConfigBinder b(sm, sm_config);
            b.str("--out", sm_out);
            b.num("--seed", sm_seed);
            b.num("--subset-pct", sm_pct);
            b.num("--clf-epochs", sm_clf_epochs);
            b.num("--base-filters", sm_base);
            Dataset train = load_dataset_split(sm_data, "train");
            Dataset subset = sm_pct < 100.0 ? subset_by_patients(train, sm_pct, sm_seed) : train;
            Network ref = load_checkpoint(sm_ref);
            std::vector<Image8> masks, reals;
            for (const auto& s : subset.samples) {
                masks.push_back(s.mask);
                reals.push_back(s.image);
            }
            std::vector<std::pair<std::string, std::vector<Image8>>> per_model;
            for (const auto& entry : fs::directory_iterator(sm_models)) {
                const std::string name = entry.path().filename().string();
                if (name.rfind("g_ep", 0) == 0 && entry.path().extension() == ".ckpt")
                    per_model.emplace_back(name, std::vector<Image8>{});
            }
            std::sort(per_model.begin(), per_model.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (per_model.empty()) throw ValueError("no g_ep*.ckpt checkpoints in " + sm_models);
            std::vector<Image8> all_fakes;
            for (auto& [name, imgs] : per_model) {
                Network gen = load_checkpoint((fs::path(sm_models) / name).string());
                imgs = generate_batched(gen, subset, Rng(sm_seed).child(Rng::hash_str(name.c_str())).seed());
                for (const auto& im : imgs) all_fakes.push_back(im);
            }
            TrainConfig ccfg = classifier_train_defaults();
            ccfg.epochs = sm_clf_epochs;
            ccfg.seed = sm_seed;
            Rng cinit(Rng(sm_seed).child(Rng::hash_str("clf-init")).seed());
            Network clf = build_classifier(default_spec(NetKind::kClassifier, subset.image_size, sm_base), cinit);
            train_classifier(clf, reals, all_fakes, ccfg);
            std::ofstream os(sm_out);
            os << "model_id,epochs,fcn_score,blur_fft,blur_lapvar,clf_real_frac\n";
            for (auto& [name, imgs] : per_model) {
                const std::string model_id = name.substr(0, name.size() - 5);
                const int epochs = std::atoi(name.c_str() + 4);
                double f = 0.0, l = 0.0;
                for (const auto& im : imgs) {
                    f += blur_fft(im);
                    l += blur_laplacian_var(im);
                }
                char line[256];
                std::snprintf(line, sizeof(line), "%s,%d,%.8g,%.8g,%.8g,%.8g\n", model_id.c_str(), epochs,
                              fcn_score(ref, imgs, masks), f / static_cast<double>(imgs.size()),
                              l / static_cast<double>(imgs.size()),
                              classifier_acceptance(imgs, clf, 0.5).fraction);
                os << line;
            }
            std::printf("quality table -> %s\n", sm_out.c_str());
            return 0;
        }
        if (gn->parsed()) {
            ConfigBinder b(gn, gn_config);
            b.str("--out", gn_out);
            b.num("--seed", gn_seed);
            b.num("--subset-pct", gn_pct);
            b.str("--clf", gn_clf);
            b.num("--threshold", gn_threshold);
            Dataset train = load_dataset_split(gn_data, "train");
            Dataset subset = gn_pct < 100.0 ? subset_by_patients(train, gn_pct, gn_seed) : train;
            Network gen = load_checkpoint(gn_ckpt);
            auto imgs = generate_batched(gen, subset, Rng(gn_seed).child(Rng::hash_str("generate")).seed());
            std::vector<bool> keep(imgs.size(), true);
            if (!gn_clf.empty()) {
                Network clf = load_checkpoint(gn_clf);
                keep = classifier_acceptance(imgs, clf, gn_threshold).accepted;
            }
            fs::create_directories(gn_out);
            size_t written = 0;
            for (size_t i = 0; i < imgs.size(); ++i) {
                if (!keep[i]) continue;
                char stem[64];
                std::snprintf(stem, sizeof(stem), "%s_%04d", subset.samples[i].patient_id.c_str(),
                              subset.samples[i].slice_id);
                write_pgm(imgs[i], (fs::path(gn_out) / (std::string(stem) + ".img.pgm")).string());
                write_pgm(subset.samples[i].mask, (fs::path(gn_out) / (std::string(stem) + ".mask.pgm")).string());
                ++written;
            }
            std::printf("generated %zu/%zu accepted images -> %s\n", written, imgs.size(), gn_out.c_str());
            return 0;
        }
        if (au->parsed()) {
            ConfigBinder b(au, au_config);
            b.str("--out", au_out);
            b.num("--seed", au_seed);
            Dataset train = load_dataset_split(au_data, "train");
            Dataset test = load_dataset_split(au_data, "test");
            AugmentPolicy pol;
            pol.seed = au_seed;
            Dataset out = augment_dataset(train, pol);
            save_dataset(out, test, au_seed, au_out);
            std::printf("augmented dataset -> %s\n", au_out.c_str());
            return 0;
        }
        if (ex->parsed()) {
            ConfigBinder b(ex, ex_config);
            b.str("--out", ex_out);
            b.nums("--percents", ex_percents);
            b.uints("--seeds", ex_seeds);
            b.strs("--modes", ex_modes);
            b.ints("--gan-epochs", ex_gan_epochs);
            b.ints("--gan-epochs-2-5", ex_grid_2_5);
            b.ints("--gan-epochs-10", ex_grid_10);
            b.ints("--gan-epochs-25", ex_grid_25);
            b.num("--gan-batch", ex_gan_batch);
            b.num("--lambda-l1", ex_lambda);
            b.num("--ref-seg-epochs", ex_ref_epochs);
            b.num("--seg-epochs", ex_seg_epochs);
            b.num("--clf-epochs", ex_clf_epochs);
            b.num("--clf-base-filters", ex_clf_base);
            b.num("--threshold", ex_threshold);
            b.num("--base-filters", ex_base);
            b.num("--parallel-seeds", ex_parallel);
            ExperimentConfig cfg;
            cfg.dataset_root = ex_data;
            cfg.out_dir = ex_out;
            cfg.percents = ex_percents;
            cfg.seeds = ex_seeds;
            cfg.modes = ex_modes;
            cfg.gan_epochs = ex_gan_epochs;
            cfg.gan_epochs_per_percent.assign(ex_percents.size(), {});
            for (size_t i = 0; i < ex_percents.size(); ++i) {
                if (ex_percents[i] == 2.5 && !ex_grid_2_5.empty()) cfg.gan_epochs_per_percent[i] = ex_grid_2_5;
                if (ex_percents[i] == 10.0 && !ex_grid_10.empty()) cfg.gan_epochs_per_percent[i] = ex_grid_10;
                if (ex_percents[i] == 25.0 && !ex_grid_25.empty()) cfg.gan_epochs_per_percent[i] = ex_grid_25;
            }
            cfg.gan_batch = ex_gan_batch;
            cfg.lambda_l1 = ex_lambda;
            cfg.ref_seg_epochs = ex_ref_epochs;
            cfg.seg_epochs = ex_seg_epochs;
            cfg.clf_epochs = ex_clf_epochs;
            cfg.clf_base_filters = ex_clf_base;
            cfg.clf_threshold = ex_threshold;
            cfg.base_filters = ex_base;
            cfg.parallel_seeds = ex_parallel;
            const std::string report = run_pipeline(cfg);
            std::printf("experiment report -> %s\n", report.c_str());
            return 0;
        }
        if (rp->parsed()) {
            ConfigBinder b(rp, rp_config);
            b.nums("--percents", rp_percents);
            b.uints("--seeds", rp_seeds);
            b.strs("--modes", rp_modes);
            ExperimentConfig cfg;
            cfg.out_dir = rp_out;
            cfg.percents = rp_percents;
            cfg.seeds = rp_seeds;
            cfg.modes = rp_modes;
            rebuild_reports(cfg);
            std::printf("reports rebuilt under %s\n", rp_out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
