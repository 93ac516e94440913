#include <cmath>

#include "doctest.h"
#include "lcgan/augment.hpp"
#include "lcgan/metrics.hpp"
#include "lcgan/phantom.hpp"

using namespace lcgan;

namespace {

Image8 mask_from(const std::vector<uint8_t>& px, int h, int w) {
    Image8 m = make_image(h, w);
    m.pixels = px;
    return m;
}

// Brute-force pixel-count oracle, written independently of dsc().
double dsc_oracle(const Image8& s, const Image8& g, int cls) {
    int64_t cs = 0, cg = 0, ci = 0;
    for (size_t i = 0; i < s.pixels.size(); ++i) {
        if (s.pixels[i] == cls) ++cs;
        if (g.pixels[i] == cls) ++cg;
        if (s.pixels[i] == cls && g.pixels[i] == cls) ++ci;
    }
    if (cs + cg == 0) return 1.0;
    return 2.0 * static_cast<double>(ci) / static_cast<double>(cs + cg);
}

}  // namespace

TEST_CASE("dsc: point cases") {
    Image8 a = mask_from({1, 1, 0, 0}, 2, 2);
    Image8 b = mask_from({1, 1, 0, 0}, 2, 2);
    CHECK(dsc(a, b, {1}) == 1.0);
    Image8 c = mask_from({0, 0, 1, 1}, 2, 2);
    CHECK(dsc(a, c, {1}) == 0.0);
    // |S|=4, |G|=4, overlap 2 -> 0.5
    Image8 s4 = mask_from({1, 1, 1, 1, 0, 0, 0, 0, 0}, 3, 3);
    Image8 g4 = mask_from({1, 1, 0, 0, 1, 1, 0, 0, 0}, 3, 3);
    CHECK(dsc(s4, g4, {1}) == 0.5);
    // both empty after restriction -> 1.0
    CHECK(dsc(a, b, {4}) == 1.0);
    Image8 odd = make_image(2, 3);
    CHECK_THROWS_AS(dsc(a, odd, {1}), ShapeError);
}

TEST_CASE("dsc: symmetry, range, and brute-force oracle on 1000 random pairs") {
    Rng rng(71);
    for (int trial = 0; trial < 1000; ++trial) {
        Image8 s = make_image(16, 16), g = make_image(16, 16);
        for (size_t i = 0; i < s.pixels.size(); ++i) {
            s.pixels[i] = static_cast<uint8_t>(rng.uniform_int(3) == 0 ? rng.uniform_int(6) : 0);
            g.pixels[i] = static_cast<uint8_t>(rng.uniform_int(3) == 0 ? rng.uniform_int(6) : 0);
        }
        const int cls = 1 + static_cast<int>(rng.uniform_int(5));
        const double d1 = dsc(s, g, {cls});
        CHECK(d1 == dsc_oracle(s, g, cls));
        CHECK(d1 == dsc(g, s, {cls}));
        CHECK(d1 >= 0.0);
        CHECK(d1 <= 1.0);
    }
}

TEST_CASE("evaluate_predictions: exact and all-background models") {
    Dataset ds;
    ds.image_size = 4;
    for (int i = 0; i < 3; ++i) {
        Sample s;
        s.patient_id = "p";
        s.slice_id = i;
        s.image = make_image(4, 4, 100);
        s.mask = mask_from({0, 1, 1, 0, 0, 2, 2, 0, 0, 0, 0, 0, 5, 5, 0, 0}, 4, 4);
        ds.samples.push_back(s);
    }
    std::vector<Image8> exact;
    for (const auto& s : ds.samples) exact.push_back(s.mask);
    auto res = evaluate_predictions(exact, ds);
    CHECK(res.mean_dsc == 1.0);
    CHECK(*res.per_class_dsc[0] == 1.0);
    CHECK(*res.per_class_dsc[1] == 1.0);
    CHECK(*res.per_class_dsc[4] == 1.0);
    CHECK(!res.per_class_dsc[2].has_value());  // SAH absent everywhere

    std::vector<Image8> blank(3, make_image(4, 4, 0));
    auto res0 = evaluate_predictions(blank, ds);
    CHECK(res0.mean_dsc == 0.0);
    CHECK(*res0.per_class_dsc[0] == 0.0);
    CHECK(*res0.per_class_dsc[1] == 0.0);
    CHECK(*res0.per_class_dsc[4] == 0.0);
}

TEST_CASE("evaluate_predictions: hand-computed three-image confusion table") {
    // image 0: GT has 4 px of class 1; prediction covers 2 of them plus 2 px
    //          of class 2 where GT is background.
    // image 1: GT has 2 px of class 2; prediction matches exactly.
    // image 2: GT has 4 px of class 1; prediction paints them all class 2.
    Dataset ds;
    ds.image_size = 4;
    std::vector<Image8> preds;
    {
        Sample s;
        s.patient_id = "p";
        s.slice_id = 0;
        s.image = make_image(4, 4, 0);
        s.mask = mask_from({1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 4, 4);
        ds.samples.push_back(s);
        preds.push_back(mask_from({1, 1, 0, 0, 0, 0, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0}, 4, 4));
    }
    {
        Sample s;
        s.patient_id = "p";
        s.slice_id = 1;
        s.image = make_image(4, 4, 0);
        s.mask = mask_from({2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 4, 4);
        ds.samples.push_back(s);
        preds.push_back(s.mask);
    }
    {
        Sample s;
        s.patient_id = "p";
        s.slice_id = 2;
        s.image = make_image(4, 4, 0);
        s.mask = mask_from({1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 4, 4);
        ds.samples.push_back(s);
        preds.push_back(mask_from({2, 2, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 4, 4));
    }
    auto res = evaluate_predictions(preds, ds);
    // class 1 means over images 0 and 2: image 0 dsc = 2*2/(2+4) = 2/3,
    // image 2 dsc = 0 -> mean 1/3
    CHECK(*res.per_class_dsc[0] == doctest::Approx((2.0 / 3.0 + 0.0) / 2.0).epsilon(1e-12));
    // class 2 means over image 1 only (GT present there): exact -> 1.0;
    // spurious class-2 detections on images 0/2 do not enter the class mean
    CHECK(*res.per_class_dsc[1] == 1.0);
    // foreground union per image: img0: |S|=4,|G|=4,inter=2 -> 0.5;
    // img1: 1.0; img2: |S|=4,|G|=4,inter=4 (classes collapse) -> 1.0
    CHECK(res.mean_dsc == doctest::Approx((0.5 + 1.0 + 1.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("detection_pr: threshold boundary semantics") {
    SUBCASE("perfect predictions") {
        Image8 gt = make_image(64, 64, 0);
        for (int i = 0; i < 300; ++i) gt.pixels[static_cast<size_t>(i)] = 1;
        auto res = detection_pr({gt}, {gt});
        CHECK(res.tp == 1);
        CHECK(*res.precision == 1.0);
        CHECK(*res.recall == 1.0);
    }
    SUBCASE("199 predicted pixels with empty GT are noise, 200 are a false positive") {
        Image8 gt = make_image(64, 64, 0);
        gt.pixels[4095] = 2;  // class 2 present so recall is defined
        Image8 pred199 = make_image(64, 64, 0);
        pred199.pixels[4095] = 2;
        for (int i = 0; i < 199; ++i) pred199.pixels[static_cast<size_t>(i)] = 1;
        auto r199 = detection_pr({pred199}, {gt});
        CHECK(r199.fp == 0);
        CHECK(*r199.precision == 1.0);
        Image8 pred200 = pred199;
        pred200.pixels[199] = 1;
        auto r200 = detection_pr({pred200}, {gt});
        CHECK(r200.fp == 1);
        CHECK(*r200.precision == 0.5);
        CHECK(*r200.recall == 1.0);
    }
    SUBCASE("DSC 0.24 is a miss, 0.26 is a hit") {
        // |G| = 100; prediction of 100 px overlapping k gives dsc = k/100
        Image8 gt = make_image(64, 64, 0);
        for (int i = 0; i < 100; ++i) gt.pixels[static_cast<size_t>(i)] = 3;
        auto pred_overlap = [&](int k) {
            Image8 p = make_image(64, 64, 0);
            for (int i = 0; i < k; ++i) p.pixels[static_cast<size_t>(i)] = 3;
            for (int i = 0; i < 100 - k; ++i) p.pixels[static_cast<size_t>(200 + i)] = 3;
            return p;
        };
        auto r24 = detection_pr({pred_overlap(24)}, {gt});
        CHECK(r24.fn == 1);
        CHECK(r24.tp == 0);
        auto r26 = detection_pr({pred_overlap(26)}, {gt});
        CHECK(r26.tp == 1);
        CHECK(r26.fn == 0);
    }
    SUBCASE("undefined ratios are reported as absent, not zero") {
        Image8 empty = make_image(8, 8, 0);
        auto res = detection_pr({empty}, {empty});
        CHECK(!res.precision.has_value());
        CHECK(!res.recall.has_value());
    }
}

TEST_CASE("detection_pr: counting properties on random masks") {
    Rng rng(73);
    std::vector<Image8> preds, gts;
    int gt_present_pairs = 0;
    for (int i = 0; i < 20; ++i) {
        Image8 p = make_image(32, 32, 0), g = make_image(32, 32, 0);
        for (size_t q = 0; q < p.pixels.size(); ++q) {
            if (rng.uniform() < 0.3) p.pixels[q] = static_cast<uint8_t>(rng.uniform_int(6));
            if (rng.uniform() < 0.3) g.pixels[q] = static_cast<uint8_t>(rng.uniform_int(6));
        }
        for (int c = 1; c <= 5; ++c) {
            bool present = false;
            for (uint8_t v : g.pixels) present = present || v == c;
            gt_present_pairs += present;
        }
        preds.push_back(p);
        gts.push_back(g);
    }
    auto r = detection_pr(preds, gts);
    CHECK(r.tp + r.fn == gt_present_pairs);
    auto r0 = detection_pr(preds, gts, 0);
    CHECK(r0.recall == r.recall);
    if (r.precision && r0.precision) CHECK(*r0.precision <= *r.precision);
}

TEST_CASE("fcn_score: equals real-data mean DSC when generated==real, order-invariant") {
    Rng rng(79);
    Network seg = build_segmenter(default_spec(NetKind::kSegmenter, 32, 4), rng);
    PhantomDataset ph = generate_dataset(2, 1, 32, 99);
    std::vector<Image8> imgs, masks;
    for (const auto& s : ph.train.samples) {
        imgs.push_back(s.image);
        masks.push_back(s.mask);
    }
    const double f = fcn_score(seg, imgs, masks);
    auto res = evaluate_segmentation(seg, ph.train);
    CHECK(f == doctest::Approx(res.mean_dsc).epsilon(1e-12));
    // order invariance
    std::vector<Image8> rimgs(imgs.rbegin(), imgs.rend());
    std::vector<Image8> rmasks(masks.rbegin(), masks.rend());
    CHECK(fcn_score(seg, rimgs, rmasks) == doctest::Approx(f).epsilon(1e-12));
}

TEST_CASE("blur_fft: constant zero, impulse flat spectrum, blur decreases it") {
    std::vector<double> flat(64 * 64, 0.37);
    CHECK(blur_fft(flat, 64, 64) == 0.0);
    std::vector<double> impulse(32 * 32, 0.0);
    impulse[5 * 32 + 7] = 1.0;
    CHECK(blur_fft(impulse, 32, 32) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(blur_fft(std::vector<double>{1.0}, 1, 1), ValueError);

    PhantomDataset ph = generate_dataset(1, 1, 64, 4242);
    const auto& img = ph.train.samples[0].image;
    auto unit = to_unit_floats(img);
    auto blurred = gaussian_blur_r2(unit, 64, 64);
    CHECK(blur_fft(blurred, 64, 64) < blur_fft(unit, 64, 64));
}

TEST_CASE("blur_laplacian_var: constant, ramp, checkerboard against direct conv oracle") {
    std::vector<double> flat(16 * 16, 0.5);
    CHECK(blur_laplacian_var(flat, 16, 16) == 0.0);
    std::vector<double> ramp(16 * 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) ramp[static_cast<size_t>(y) * 16 + x] = 0.01 * y + 0.02 * x;
    CHECK(blur_laplacian_var(ramp, 16, 16) < 1e-24);

    // checkerboard of {0,1}: direct 3x3 convolution oracle gives responses
    // of +-4 alternating over the valid region, variance 16
    std::vector<double> board(8 * 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) board[static_cast<size_t>(y) * 8 + x] = (x + y) % 2;
    std::vector<double> oracle_resp;
    for (int y = 1; y < 7; ++y)
        for (int x = 1; x < 7; ++x) {
            const double r = board[static_cast<size_t>(y - 1) * 8 + x] + board[static_cast<size_t>(y + 1) * 8 + x] +
                             board[static_cast<size_t>(y) * 8 + x - 1] + board[static_cast<size_t>(y) * 8 + x + 1] -
                             4.0 * board[static_cast<size_t>(y) * 8 + x];
            oracle_resp.push_back(r);
            CHECK(std::abs(r) == 4.0);
        }
    double m = 0.0;
    for (double r : oracle_resp) m += r;
    m /= static_cast<double>(oracle_resp.size());
    double var = 0.0;
    for (double r : oracle_resp) var += (r - m) * (r - m);
    var /= static_cast<double>(oracle_resp.size());
    CHECK(var == 16.0);
    CHECK(blur_laplacian_var(board, 8, 8) == var);
    CHECK_THROWS_AS(blur_laplacian_var(std::vector<double>(4, 0.0), 2, 2), ValueError);
}

TEST_CASE("classifier_acceptance: monotone in threshold, tiny threshold accepts all") {
    Rng rng(83);
    Network clf = build_classifier(default_spec(NetKind::kClassifier, 32, 4), rng);
    std::vector<Image8> imgs;
    for (int i = 0; i < 24; ++i) {
        Image8 im = make_image(32, 32);
        for (auto& p : im.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
        imgs.push_back(std::move(im));
    }
    CHECK(classifier_acceptance(imgs, clf, 1e-12).fraction == 1.0);
    double prev = 1.0;
    for (double th : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const double f = classifier_acceptance(imgs, clf, th).fraction;
        CHECK(f <= prev);
        prev = f;
    }
    CHECK_THROWS_AS(classifier_acceptance(imgs, clf, 0.0), ValueError);
}

TEST_CASE("rank_models: dominance and both tie-breakers") {
    ModelQuality a{"a", 10, 0.80, 1.0, 5.0, 0.2};
    SUBCASE("single") {
        auto r = rank_models({a});
        CHECK(r.size() == 1);
        CHECK(r[0].model_id == "a");
    }
    SUBCASE("fcn dominates") {
        ModelQuality b{"b", 50, 0.60, 9.0, 9.0, 0.9};
        auto r = rank_models({b, a});
        CHECK(r[0].model_id == "a");
    }
    SUBCASE("hand-built chain: lapvar then classifier fraction") {
        // all fcn scores within 0.01 of a chain; b is sharper; a and c tie
        // on sharpness so the classifier fraction decides; d trails on fcn.
        ModelQuality m1{"a", 10, 0.700, 1.0, 4.0, 0.50};
        ModelQuality m2{"b", 50, 0.695, 1.0, 6.0, 0.10};
        ModelQuality m3{"c", 100, 0.690, 1.0, 4.0, 0.80};
        ModelQuality m4{"d", 200, 0.600, 1.0, 9.0, 0.99};
        auto r = rank_models({m1, m2, m3, m4});
        CHECK(r[0].model_id == "b");   // sharpest within the tie chain
        CHECK(r[1].model_id == "c");   // same lapvar as a, higher clf fraction
        CHECK(r[2].model_id == "a");
        CHECK(r[3].model_id == "d");   // outside the chain, lower fcn
    }
}
