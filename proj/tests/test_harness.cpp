#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "lcgan/harness.hpp"
#include "lcgan/phantom.hpp"

using namespace lcgan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

json read_json_file(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    json j;
    is >> j;
    return j;
}

const fs::path kWork = fs::temp_directory_path() / "lcgan_harness_test";

ExperimentConfig tiny_config(const std::string& data_root, const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.dataset_root = data_root;
    cfg.out_dir = out_dir;
    cfg.percents = {25.0, 50.0};
    cfg.seeds = {1, 2};
    cfg.gan_epochs = {1, 3};
    cfg.ref_seg_epochs = 1;
    cfg.seg_epochs = 2;
    cfg.clf_epochs = 1;
    cfg.base_filters = 4;
    cfg.parallel_seeds = 2;
    cfg.montage_rows = 2;
    return cfg;
}

void make_tiny_dataset(const std::string& root) {
    if (fs::exists(fs::path(root) / "manifest.json")) return;
    PhantomDataset d = generate_dataset(8, 3, 32, 42);
    save_dataset(d.train, d.test, 42, root);
}

}  // namespace

TEST_CASE("run_pipeline: report schema, row coverage, augmentation bookkeeping") {
    fs::create_directories(kWork);
    const std::string data = (kWork / "data").string();
    make_tiny_dataset(data);
    ExperimentConfig cfg = tiny_config(data, (kWork / "run1").string());
    const std::string report_path = run_pipeline(cfg);

    std::ifstream report(report_path);
    REQUIRE(report.good());
    std::string header;
    std::getline(report, header);
    CHECK(header == "percent,mode,seed,mean_dsc,dsc_iph,dsc_ivh,dsc_sah,dsc_edh,dsc_sdh,precision,recall");
    int rows = 0;
    std::string line;
    while (std::getline(report, line))
        if (!line.empty()) ++rows;
    CHECK(rows == static_cast<int>(cfg.percents.size() * cfg.modes.size() * cfg.seeds.size()));

    // quality CSV header is pinned
    std::ifstream q(fs::path(cfg.out_dir) / "seed1" / "pct25" / "quality.csv");
    std::getline(q, header);
    CHECK(header == "model_id,epochs,fcn_score,blur_fft,blur_lapvar,clf_real_frac");

    // "+ GAN generated" training set is at most twofold the subset
    for (const auto& seed : {"seed1", "seed2"}) {
        for (const auto& pct : {"pct25", "pct50"}) {
            json none = read_json_file(fs::path(cfg.out_dir) / seed / pct / "eval_none.json");
            json gan = read_json_file(fs::path(cfg.out_dir) / seed / pct / "eval_gan.json");
            const auto subset_size = none["train_size"].get<int64_t>();
            CHECK(gan["train_size"].get<int64_t>() <= 2 * subset_size);
            CHECK(gan["train_size"].get<int64_t>() >= subset_size);
        }
    }

    // montage exists and decodes: column 0 colors map back to classes
    const fs::path montage = fs::path(cfg.out_dir) / "seed1" / "pct25" / "montage.ppm";
    REQUIRE(fs::exists(montage));
    int h = 0, w = 0;
    auto rgb = read_ppm(montage.string(), h, w);
    CHECK(w % 3 == 0);
    const int cell = w / 3;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < cell; ++x) {
            const uint8_t px[3] = {rgb[(static_cast<size_t>(y) * w + x) * 3],
                                   rgb[(static_cast<size_t>(y) * w + x) * 3 + 1],
                                   rgb[(static_cast<size_t>(y) * w + x) * 3 + 2]};
            CHECK(color_class(px) >= 0);
        }
}

TEST_CASE("run_pipeline: fresh rerun is byte-identical, resumed rerun skips stages") {
    const std::string data = (kWork / "data").string();
    make_tiny_dataset(data);
    ExperimentConfig cfg1 = tiny_config(data, (kWork / "run1").string());
    ExperimentConfig cfg2 = tiny_config(data, (kWork / "run2").string());
    run_pipeline(cfg1);  // no-op if the schema test already ran it
    run_pipeline(cfg2);
    for (const char* rel : {"report.csv", "improvement.csv", "quality_all.csv",
                            "seed1/pct25/quality.csv", "seed1/pct25/gan/gan_history.csv",
                            "seed2/pct50/seg_both_history.csv"}) {
        CHECK(slurp(fs::path(cfg1.out_dir) / rel) == slurp(fs::path(cfg2.out_dir) / rel));
    }

    // resumed rerun: stage markers short-circuit, artifacts unchanged
    const fs::path marker = fs::path(cfg1.out_dir) / "seed1" / ".done.ref_seg";
    REQUIRE(fs::exists(marker));
    const auto report_before = slurp(fs::path(cfg1.out_dir) / "report.csv");
    const auto mtime_before = fs::last_write_time(fs::path(cfg1.out_dir) / "seed1" / "ref_seg.ckpt");
    run_pipeline(cfg1);
    CHECK(slurp(fs::path(cfg1.out_dir) / "report.csv") == report_before);
    CHECK(fs::last_write_time(fs::path(cfg1.out_dir) / "seed1" / "ref_seg.ckpt") == mtime_before);
}

TEST_CASE("run_pipeline: percent 100 with mode none is plain full-data training") {
    const std::string data = (kWork / "data").string();
    make_tiny_dataset(data);
    ExperimentConfig cfg = tiny_config(data, (kWork / "run_full").string());
    cfg.percents = {100.0};
    cfg.seeds = {7};
    cfg.modes = {"none", "gan"};
    run_pipeline(cfg);
    json none = read_json_file(fs::path(cfg.out_dir) / "seed7" / "pct100" / "eval_none.json");
    Dataset train = load_dataset_split(data, "train");
    CHECK(none["train_size"].get<size_t>() == train.size());
    json subset = read_json_file(fs::path(cfg.out_dir) / "seed7" / "pct100" / "subset.json");
    CHECK(subset["patients"].size() == train.patient_ids().size());
}

TEST_CASE("emit_montage: layout, determinism, errors") {
    Image8 mask = make_image(8, 8, 0);
    mask.at(2, 2) = 3;
    Image8 target = make_image(8, 8, 100);
    Image8 output = make_image(8, 8, 200);
    const std::string p1 = (kWork / "m1.ppm").string();
    fs::create_directories(kWork);
    emit_montage({mask}, {target}, {output}, p1);
    int h = 0, w = 0;
    auto rgb = read_ppm(p1, h, w);
    CHECK(h == 8);
    CHECK(w == 24);
    // mask pixel color decodes back to its class
    const uint8_t px[3] = {rgb[(2 * 24 + 2) * 3], rgb[(2 * 24 + 2) * 3 + 1], rgb[(2 * 24 + 2) * 3 + 2]};
    CHECK(color_class(px) == 3);
    // target column is the gray value
    CHECK(rgb[(0 * 24 + 8) * 3] == 100);
    CHECK(rgb[(0 * 24 + 16) * 3] == 200);

    const std::string p2 = (kWork / "m2.ppm").string();
    emit_montage({mask, mask}, {target, target}, {output, output}, p2);
    read_ppm(p2, h, w);
    CHECK(h == 16);

    CHECK_THROWS_AS(emit_montage({mask}, {target, target}, {output}, p1), ShapeError);

    // color codec is bijective over all six classes
    std::set<int> seen;
    for (int c = 0; c < 6; ++c) {
        uint8_t col[3];
        class_color(c, col);
        CHECK(color_class(col) == c);
        seen.insert(col[0] << 16 | col[1] << 8 | col[2]);
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("cli: determinism, config files, exit codes" * doctest::skip(std::getenv("LCGAN_BIN") == nullptr)) {
    const std::string bin = std::getenv("LCGAN_BIN");
    const fs::path cwork = kWork / "cli";
    fs::remove_all(cwork);
    fs::create_directories(cwork);
    auto sh = [&](const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); };

    // phantom-gen twice -> byte-identical directory trees
    REQUIRE(sh(bin + " phantom-gen --patients 4 --test-patients 2 --size 32 --seed 7 --out " +
               (cwork / "d1").string()) == 0);
    REQUIRE(sh(bin + " phantom-gen --patients 4 --test-patients 2 --size 32 --seed 7 --out " +
               (cwork / "d2").string()) == 0);
    size_t files = 0;
    for (auto it = fs::recursive_directory_iterator(cwork / "d1"); it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        ++files;
        const fs::path rel = fs::relative(it->path(), cwork / "d1");
        CHECK(slurp(it->path()) == slurp(cwork / "d2" / rel));
    }
    CHECK(files > 8);

    // config file + flag overrides drive the experiment; three percents in,
    // three result groups out
    {
        std::ofstream conf(cwork / "exp.toml");
        conf << "percents = [25, 50, 100]\n"
             << "seeds = [3]\n"
             << "gan-epochs = [1, 2]\n"
             << "ref-seg-epochs = 1\n"
             << "seg-epochs = 1\n"
             << "clf-epochs = 1\n"
             << "base-filters = 4\n"
             << "modes = [\"none\", \"both\"]\n";
    }
    REQUIRE(sh(bin + " experiment --data " + (cwork / "d1").string() + " --out " + (cwork / "exp").string() +
               " --config " + (cwork / "exp.toml").string()) == 0);
    std::ifstream rep(cwork / "exp" / "report.csv");
    REQUIRE(rep.good());
    std::string line;
    std::getline(rep, line);
    std::set<std::string> percents;
    while (std::getline(rep, line))
        if (!line.empty()) percents.insert(line.substr(0, line.find(',')));
    CHECK(percents == std::set<std::string>{"25", "50", "100"});

    // exit codes: usage 1, runtime 2
    CHECK(WEXITSTATUS(sh(bin + " no-such-command")) == 1);
    CHECK(WEXITSTATUS(sh(bin + " experiment --data /does/not/exist --out " + (cwork / "x").string())) == 2);
}
