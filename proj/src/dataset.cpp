#include "lcgan/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "lcgan/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lcgan {

const char* lesion_class_name(int cls) {
    switch (cls) {
        case 1: return "iph";
        case 2: return "ivh";
        case 3: return "sah";
        case 4: return "edh";
        case 5: return "sdh";
    }
    return "bg";
}

std::vector<std::string> Dataset::patient_ids() const {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& s : samples)
        if (seen.insert(s.patient_id).second) ids.push_back(s.patient_id);
    return ids;
}

std::vector<size_t> Dataset::indices_of_patient(const std::string& id) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < samples.size(); ++i)
        if (samples[i].patient_id == id) out.push_back(i);
    return out;
}

namespace {

std::string slice_stem(int slice_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", slice_id);
    return buf;
}

json split_manifest(const Dataset& ds, const std::map<std::string, uint64_t>& patient_seeds) {
    json patients = json::array();
    for (const auto& pid : ds.patient_ids()) {
        json slices = json::array();
        std::set<int> classes;
        for (size_t i : ds.indices_of_patient(pid)) {
            slices.push_back(ds.samples[i].slice_id);
            for (uint8_t v : ds.samples[i].mask.pixels)
                if (v > 0) classes.insert(v);
        }
        json pj = {{"patient", pid}, {"slices", slices}, {"classes", json(classes)}};
        if (auto it = patient_seeds.find(pid); it != patient_seeds.end()) pj["seed"] = it->second;
        patients.push_back(pj);
    }
    return patients;
}

void write_split(const Dataset& ds, const fs::path& root, const std::string& split) {
    for (const auto& s : ds.samples) {
        fs::path dir = root / split / s.patient_id;
        fs::create_directories(dir);
        write_pgm(s.image, (dir / (slice_stem(s.slice_id) + ".img.pgm")).string());
        write_pgm(s.mask, (dir / (slice_stem(s.slice_id) + ".mask.pgm")).string());
    }
}

}  // namespace

void save_dataset(const Dataset& train, const Dataset& test, uint64_t seed, const std::string& root,
                  const std::map<std::string, uint64_t>& patient_seeds) {
    fs::create_directories(root);
    write_split(train, root, "train");
    write_split(test, root, "test");
    json manifest = {
        {"seed", seed},
        {"image_size", train.image_size},
        {"splits",
         {{"train", split_manifest(train, patient_seeds)}, {"test", split_manifest(test, patient_seeds)}}},
    };
    std::ofstream os(fs::path(root) / "manifest.json");
    if (!os) throw IoError("cannot write manifest: " + root);
    os << manifest.dump(1) << "\n";
}

Dataset load_dataset_split(const std::string& root, const std::string& split) {
    const fs::path manifest_path = fs::path(root) / "manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw IoError("missing dataset manifest: " + manifest_path.string());
    json manifest;
    is >> manifest;
    if (!manifest["splits"].contains(split)) throw IoError("manifest has no split '" + split + "': " + root);
    Dataset ds;
    ds.image_size = manifest["image_size"].get<int>();
    for (const auto& pj : manifest["splits"][split]) {
        const std::string pid = pj["patient"].get<std::string>();
        for (const auto& sj : pj["slices"]) {
            Sample s;
            s.patient_id = pid;
            s.slice_id = sj.get<int>();
            fs::path dir = fs::path(root) / split / pid;
            s.image = read_pgm((dir / (slice_stem(s.slice_id) + ".img.pgm")).string());
            s.mask = read_pgm((dir / (slice_stem(s.slice_id) + ".mask.pgm")).string());
            if (s.image.height != ds.image_size || s.image.width != ds.image_size)
                throw IoError("image size mismatch for patient " + pid + " in " + root);
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

namespace {

void fill_image_plane(const Image8& img, bool signed_range, double* dst) {
    const size_t n = img.size();
    for (size_t i = 0; i < n; ++i) {
        const double u = img.pixels[i] / 255.0;
        dst[i] = signed_range ? 2.0 * u - 1.0 : u;
    }
}

}  // namespace

Tensor image_batch(const Dataset& ds, const std::vector<size_t>& idx, bool signed_range) {
    std::vector<const Image8*> imgs;
    imgs.reserve(idx.size());
    for (size_t i : idx) imgs.push_back(&ds.samples[i].image);
    return image_batch(imgs, signed_range);
}

Tensor image_batch(const std::vector<const Image8*>& imgs, bool signed_range) {
    if (imgs.empty()) throw ValueError("image_batch: empty batch");
    const int h = imgs[0]->height, w = imgs[0]->width;
    Tensor t = make_uninit({static_cast<int>(imgs.size()), 1, h, w});
    double* d = t.mutable_data().data();
    for (size_t n = 0; n < imgs.size(); ++n) {
        if (imgs[n]->height != h || imgs[n]->width != w) throw ShapeError("image_batch: mixed sizes");
        fill_image_plane(*imgs[n], signed_range, d + n * static_cast<size_t>(h) * w);
    }
    return t;
}

Tensor onehot_mask_batch(const Dataset& ds, const std::vector<size_t>& idx) {
    std::vector<const Image8*> masks;
    masks.reserve(idx.size());
    for (size_t i : idx) masks.push_back(&ds.samples[i].mask);
    return onehot_mask_batch(masks);
}

Tensor onehot_mask_batch(const std::vector<const Image8*>& masks) {
    if (masks.empty()) throw ValueError("onehot_mask_batch: empty batch");
    const int h = masks[0]->height, w = masks[0]->width;
    const int64_t plane = static_cast<int64_t>(h) * w;
    Tensor t = Tensor::zeros({static_cast<int>(masks.size()), kNumClasses, h, w});
    double* d = t.mutable_data().data();
    for (size_t n = 0; n < masks.size(); ++n) {
        if (masks[n]->height != h || masks[n]->width != w) throw ShapeError("onehot_mask_batch: mixed sizes");
        for (int64_t i = 0; i < plane; ++i) {
            const uint8_t c = masks[n]->pixels[static_cast<size_t>(i)];
            if (c >= kNumClasses) throw ValueError("mask class " + std::to_string(c) + " out of range");
            d[(static_cast<int64_t>(n) * kNumClasses + c) * plane + i] = 1.0;
        }
    }
    return t;
}

Tensor target_mask_batch(const Dataset& ds, const std::vector<size_t>& idx) {
    if (idx.empty()) throw ValueError("target_mask_batch: empty batch");
    const int h = ds.samples[idx[0]].mask.height, w = ds.samples[idx[0]].mask.width;
    Tensor t = make_uninit({static_cast<int>(idx.size()), h, w});
    double* d = t.mutable_data().data();
    for (size_t n = 0; n < idx.size(); ++n) {
        const auto& m = ds.samples[idx[n]].mask;
        for (size_t i = 0; i < m.size(); ++i) d[n * m.size() + i] = m.pixels[i];
    }
    return t;
}

Tensor single_image(const Image8& img, bool signed_range) { return image_batch({&img}, signed_range); }

Tensor single_onehot_mask(const Image8& mask) { return onehot_mask_batch({&mask}); }

std::vector<Image8> images_from_generator_output(const Tensor& out) {
    if (out.rank() != 4 || out.dim(1) != 1)
        throw ShapeError("generator output must be [N,1,H,W], got " + shape_str(out.shape()));
    const int n = out.dim(0), h = out.dim(2), w = out.dim(3);
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<Image8> imgs;
    imgs.reserve(static_cast<size_t>(n));
    const double* d = out.data().data();
    for (int i = 0; i < n; ++i) {
        std::vector<double> unit(static_cast<size_t>(plane));
        for (int64_t p = 0; p < plane; ++p) unit[static_cast<size_t>(p)] = 0.5 * (d[i * plane + p] + 1.0);
        imgs.push_back(quantize_unit(unit, h, w));
    }
    return imgs;
}

}  // namespace lcgan
