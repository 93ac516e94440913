#include "lcgan/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace lcgan {

namespace {

constexpr double kInitStddev = 0.02;
constexpr double kDropoutRate = 0.5;

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

int ilog2(int x) {
    int r = 0;
    while (x > 1) {
        x >>= 1;
        ++r;
    }
    return r;
}

// Encoder filter ladder: base * min(2^(i-1), 8).
int ladder(int base, int level) { return base * std::min(1 << (level - 1), 8); }

void add_conv(Network& net, Rng& rng, const std::string& name, int out_ch, int in_ch, int k) {
    net.params.emplace(name + ".w", Tensor::randn({out_ch, in_ch, k, k}, rng, kInitStddev, true));
    net.params.emplace(name + ".b", Tensor::zeros({out_ch}, true));
}

void add_convT(Network& net, Rng& rng, const std::string& name, int in_ch, int out_ch, int k) {
    net.params.emplace(name + ".w", Tensor::randn({in_ch, out_ch, k, k}, rng, kInitStddev, true));
    net.params.emplace(name + ".b", Tensor::zeros({out_ch}, true));
}

void add_bn(Network& net, const std::string& name, int ch) {
    net.params.emplace(name + ".gamma", Tensor::full({ch}, 1.0, true));
    net.params.emplace(name + ".beta", Tensor::zeros({ch}, true));
    net.stats.emplace("rs." + name + ".mean", Tensor::zeros({ch}));
    net.stats.emplace("rs." + name + ".var", Tensor::full({ch}, 1.0));
}

bool has_bn(const Network& net, const std::string& name) {
    return net.params.count(name + ".gamma") > 0;
}

Tensor apply_bn(Network& net, const std::string& name, const Tensor& h, bool train) {
    BatchNormOpts opts;
    opts.train = train;
    return batch_norm(h, net.param(name + ".gamma"), net.param(name + ".beta"),
                      net.stat("rs." + name + ".mean"), net.stat("rs." + name + ".var"), opts);
}

Tensor conv_block(Network& net, const std::string& name, const Tensor& x, int stride, int pad) {
    Tensor h = conv2d(x, net.param(name + ".w"), stride, pad);
    return bias_add(h, net.param(name + ".b"));
}

Tensor convT_block(Network& net, const std::string& name, const Tensor& x, int stride, int pad) {
    Tensor h = conv2d_transpose(x, net.param(name + ".w"), stride, pad);
    return bias_add(h, net.param(name + ".b"));
}

int generator_depth(int image_size) { return ilog2(image_size) - 1; }

void validate_spec(const NetworkSpec& spec) {
    if (!is_power_of_two(spec.image_size))
        throw ValueError("image_size must be a power of two, got " + std::to_string(spec.image_size));
    if (spec.base_filters < 1) throw ValueError("base_filters must be >= 1");
    if (spec.in_channels < 1 || spec.out_channels < 1) throw ValueError("channel counts must be >= 1");
    if (spec.kind == NetKind::kGenerator && spec.image_size < 4)
        throw ValueError("generator needs image_size >= 4");
}

}  // namespace

const char* net_kind_name(NetKind k) {
    switch (k) {
        case NetKind::kGenerator: return "generator";
        case NetKind::kDiscriminator: return "discriminator";
        case NetKind::kSegmenter: return "segmenter";
        case NetKind::kClassifier: return "classifier";
    }
    return "?";
}

NetworkSpec default_spec(NetKind kind, int image_size, int base_filters) {
    NetworkSpec s;
    s.kind = kind;
    s.image_size = image_size;
    s.base_filters = base_filters;
    switch (kind) {
        case NetKind::kGenerator:
            s.in_channels = 6;  // one-hot background + 5 lesion classes
            s.out_channels = 1;
            break;
        case NetKind::kDiscriminator:
            s.in_channels = 7;  // condition mask channels + image
            s.out_channels = 1;
            break;
        case NetKind::kSegmenter:
            s.in_channels = 1;
            s.out_channels = 6;
            break;
        case NetKind::kClassifier:
            s.in_channels = 1;
            s.out_channels = 1;
            break;
    }
    return s;
}

Tensor& Network::param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ValueError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& Network::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ValueError("unknown parameter '" + name + "'");
    return it->second;
}

Tensor& Network::stat(const std::string& name) {
    auto it = stats.find(name);
    if (it == stats.end()) throw ValueError("unknown running stat '" + name + "'");
    return it->second;
}

std::vector<std::pair<std::string, Tensor>> Network::trainable() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.emplace_back(name, t);
    return out;
}

void Network::set_requires_grad(bool v) {
    for (auto& [name, t] : params) t.set_requires_grad(v);
}

void Network::zero_grad() {
    for (auto& [name, t] : params) t.zero_grad();
}

int64_t Network::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

Network build_generator(const NetworkSpec& spec, Rng& rng) {
    if (spec.kind != NetKind::kGenerator) throw ValueError("build_generator: spec.kind mismatch");
    validate_spec(spec);
    Network net;
    net.spec = spec;
    const int depth = generator_depth(spec.image_size);
    int prev = spec.in_channels;
    for (int i = 1; i <= depth; ++i) {
        const int f = ladder(spec.base_filters, i);
        const std::string name = "enc" + std::to_string(i);
        add_conv(net, rng, name, f, prev, 4);
        if (i >= 2) add_bn(net, name, f);
        prev = f;
    }
    for (int j = depth; j >= 1; --j) {
        const int in_ch = (j == depth) ? ladder(spec.base_filters, depth) : 2 * ladder(spec.base_filters, j);
        const int out_ch = (j > 1) ? ladder(spec.base_filters, j - 1) : spec.out_channels;
        const std::string name = "dec" + std::to_string(j);
        add_convT(net, rng, name, in_ch, out_ch, 4);
        if (j >= 2) add_bn(net, name, out_ch);
    }
    return net;
}

Network build_discriminator(const NetworkSpec& spec, Rng& rng) {
    if (spec.kind != NetKind::kDiscriminator) throw ValueError("build_discriminator: spec.kind mismatch");
    validate_spec(spec);
    Network net;
    net.spec = spec;
    const int b = spec.base_filters;
    const int filters[5] = {b, 2 * b, 4 * b, 8 * b, spec.out_channels};
    int prev = spec.in_channels;
    for (int i = 1; i <= 5; ++i) {
        const std::string name = "c" + std::to_string(i);
        add_conv(net, rng, name, filters[i - 1], prev, 4);
        if (i >= 2 && i <= 4) add_bn(net, name, filters[i - 1]);
        prev = filters[i - 1];
    }
    return net;
}

Network build_segmenter(const NetworkSpec& spec, Rng& rng) {
    if (spec.kind != NetKind::kSegmenter) throw ValueError("build_segmenter: spec.kind mismatch");
    validate_spec(spec);
    Network net;
    net.spec = spec;
    const int b = spec.base_filters;
    const int K = spec.out_channels;
    add_conv(net, rng, "enc1", b, spec.in_channels, 4);
    add_conv(net, rng, "enc2", 2 * b, b, 4);
    add_bn(net, "enc2", 2 * b);
    add_conv(net, rng, "enc3", 4 * b, 2 * b, 4);
    add_bn(net, "enc3", 4 * b);
    add_conv(net, rng, "enc3b", 4 * b, 4 * b, 3);
    add_bn(net, "enc3b", 4 * b);
    add_conv(net, rng, "score8", K, 4 * b, 1);
    add_conv(net, rng, "score4", K, 2 * b, 1);
    add_conv(net, rng, "score2", K, b, 1);
    add_convT(net, rng, "up8", K, K, 4);
    add_convT(net, rng, "up4", K, K, 4);
    add_convT(net, rng, "up2", K, K, 4);
    return net;
}

Network build_classifier(const NetworkSpec& spec, Rng& rng) {
    if (spec.kind != NetKind::kClassifier) throw ValueError("build_classifier: spec.kind mismatch");
    validate_spec(spec);
    Network net;
    net.spec = spec;
    const int b = spec.base_filters;
    const int filters[4] = {b, 2 * b, 4 * b, 8 * b};
    int prev = spec.in_channels;
    for (int i = 1; i <= 4; ++i) {
        const std::string name = "c" + std::to_string(i);
        add_conv(net, rng, name, filters[i - 1], prev, 4);
        if (i >= 2) add_bn(net, name, filters[i - 1]);
        prev = filters[i - 1];
    }
    add_conv(net, rng, "fc", spec.out_channels, 8 * b, 1);
    return net;
}

Network build_network(const NetworkSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case NetKind::kGenerator: return build_generator(spec, rng);
        case NetKind::kDiscriminator: return build_discriminator(spec, rng);
        case NetKind::kSegmenter: return build_segmenter(spec, rng);
        case NetKind::kClassifier: return build_classifier(spec, rng);
    }
    throw ValueError("unknown network kind");
}

Tensor generator_forward(Network& net, const Tensor& x, Mode mode, Rng& rng, const GenForwardOpts& opts) {
    if (x.rank() != 4 || x.dim(1) != net.spec.in_channels || x.dim(2) != net.spec.image_size ||
        x.dim(3) != net.spec.image_size)
        throw ShapeError("generator input " + shape_str(x.shape()) + " does not match spec (C=" +
                         std::to_string(net.spec.in_channels) + ", S=" + std::to_string(net.spec.image_size) + ")");
    const int depth = generator_depth(net.spec.image_size);
    const bool bn_train = mode == Mode::kTrain;
    const bool drop = mode != Mode::kEval;

    std::vector<Tensor> skips;
    Tensor h = x;
    for (int i = 1; i <= depth; ++i) {
        const std::string name = "enc" + std::to_string(i);
        h = conv_block(net, name, h, 2, 1);
        if (i >= 2) h = apply_bn(net, name, h, bn_train);
        h = leaky_relu(h);
        if (i < depth) skips.push_back(h);
    }
    for (int j = depth; j >= 1; --j) {
        if (j < depth) {
            Tensor s = skips[static_cast<size_t>(j - 1)];
            if (opts.ablate_skip == j) s = Tensor::zeros(s.shape());
            h = concat_channels(h, s);
        }
        const std::string name = "dec" + std::to_string(j);
        h = convT_block(net, name, h, 2, 1);
        if (j >= 2) h = apply_bn(net, name, h, bn_train);
        if (drop && j >= depth - 2) h = dropout(h, kDropoutRate, rng);
        h = (j > 1) ? relu(h) : tanh_act(h);
    }
    return h;
}

Tensor discriminator_forward(Network& net, const Tensor& cond, const Tensor& image, Mode mode) {
    Tensor h = concat_channels(cond, image);
    if (h.dim(1) != net.spec.in_channels)
        throw ShapeError("discriminator input channels " + std::to_string(h.dim(1)) + " != spec " +
                         std::to_string(net.spec.in_channels));
    const bool bn_train = mode == Mode::kTrain;
    const int strides[5] = {2, 2, 2, 1, 1};
    for (int i = 1; i <= 5; ++i) {
        const std::string name = "c" + std::to_string(i);
        h = conv_block(net, name, h, strides[i - 1], 1);
        if (has_bn(net, name)) h = apply_bn(net, name, h, bn_train);
        if (i < 5) h = leaky_relu(h);
    }
    return h;
}

Tensor segmenter_forward(Network& net, const Tensor& image, Mode mode) {
    if (image.rank() != 4 || image.dim(1) != net.spec.in_channels)
        throw ShapeError("segmenter input " + shape_str(image.shape()) + " must have " +
                         std::to_string(net.spec.in_channels) + " channel(s)");
    const bool bn_train = mode == Mode::kTrain;
    Tensor e1 = relu(conv_block(net, "enc1", image, 2, 1));
    Tensor e2 = relu(apply_bn(net, "enc2", conv_block(net, "enc2", e1, 2, 1), bn_train));
    Tensor e3 = relu(apply_bn(net, "enc3", conv_block(net, "enc3", e2, 2, 1), bn_train));
    Tensor e3b = relu(apply_bn(net, "enc3b", conv_block(net, "enc3b", e3, 1, 1), bn_train));
    Tensor s8 = conv_block(net, "score8", e3b, 1, 0);
    Tensor s4 = conv_block(net, "score4", e2, 1, 0);
    Tensor s2 = conv_block(net, "score2", e1, 1, 0);
    Tensor f4 = add(convT_block(net, "up8", s8, 2, 1), s4);
    Tensor f2 = add(convT_block(net, "up4", f4, 2, 1), s2);
    return convT_block(net, "up2", f2, 2, 1);
}

Tensor classifier_forward(Network& net, const Tensor& image, Mode mode) {
    if (image.rank() != 4 || image.dim(1) != net.spec.in_channels)
        throw ShapeError("classifier input " + shape_str(image.shape()) + " must have " +
                         std::to_string(net.spec.in_channels) + " channel(s)");
    const bool bn_train = mode == Mode::kTrain;
    Tensor h = image;
    for (int i = 1; i <= 4; ++i) {
        const std::string name = "c" + std::to_string(i);
        h = conv_block(net, name, h, 2, 1);
        if (has_bn(net, name)) h = apply_bn(net, name, h, bn_train);
        h = leaky_relu(h);
    }
    h = global_avg_pool(h);
    h = conv_block(net, "fc", h, 1, 0);
    return reshape(h, {h.dim(0), h.dim(1)});
}

namespace {

void put_u16(std::ofstream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<char*>(b), 2);
}

void put_u32(std::ofstream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<char*>(b), 4);
}

void put_f32(std::ofstream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

uint16_t get_u16(std::ifstream& is, const std::string& path) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated checkpoint: " + path);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::ifstream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint: " + path);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::ifstream& is, const std::string& path) {
    uint32_t u = get_u32(is, path);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

void write_entry(std::ofstream& os, const std::string& name, const Tensor& t) {
    put_u16(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
    for (double v : t.data()) put_f32(os, static_cast<float>(v));
}

constexpr char kMagic[4] = {'L', 'C', 'G', 'N'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    os.put(static_cast<char>(net.spec.kind));
    put_u32(os, static_cast<uint32_t>(net.params.size() + net.stats.size() + 1));
    {
        Tensor meta = Tensor::from_data({4}, {static_cast<double>(net.spec.image_size),
                                              static_cast<double>(net.spec.base_filters),
                                              static_cast<double>(net.spec.in_channels),
                                              static_cast<double>(net.spec.out_channels)});
        write_entry(os, "rs.meta", meta);
    }
    for (const auto& [name, t] : net.params) write_entry(os, name, t);
    for (const auto& [name, t] : net.stats) write_entry(os, name, t);
    if (!os) throw IoError("write failed: " + path);
}

Network load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4)) throw IoError("truncated checkpoint: " + path);
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad magic in checkpoint: " + path);
    const uint32_t version = get_u32(is, path);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    int kind_byte = is.get();
    if (kind_byte < 0) throw IoError("truncated checkpoint: " + path);
    if (kind_byte > 3) throw IoError("unknown network kind " + std::to_string(kind_byte) + ": " + path);
    const uint32_t count = get_u32(is, path);

    struct Entry {
        std::string name;
        Shape shape;
        std::vector<double> values;
    };
    std::vector<Entry> entries;
    entries.reserve(count);
    for (uint32_t e = 0; e < count; ++e) {
        const uint16_t name_len = get_u16(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw IoError("truncated checkpoint: " + path);
        const int rank = is.get();
        if (rank < 0) throw IoError("truncated checkpoint: " + path);
        Shape shape(static_cast<size_t>(rank));
        int64_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            shape[static_cast<size_t>(i)] = static_cast<int>(get_u32(is, path));
            numel *= shape[static_cast<size_t>(i)];
        }
        std::vector<double> values(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) values[static_cast<size_t>(i)] = get_f32(is, path);
        entries.push_back({std::move(name), std::move(shape), std::move(values)});
    }

    const Entry* meta = nullptr;
    for (const auto& e : entries)
        if (e.name == "rs.meta") meta = &e;
    if (meta == nullptr || meta->values.size() != 4) throw IoError("checkpoint missing rs.meta: " + path);
    NetworkSpec spec;
    spec.kind = static_cast<NetKind>(kind_byte);
    spec.image_size = static_cast<int>(meta->values[0]);
    spec.base_filters = static_cast<int>(meta->values[1]);
    spec.in_channels = static_cast<int>(meta->values[2]);
    spec.out_channels = static_cast<int>(meta->values[3]);

    Rng scratch(0);
    Network net = build_network(spec, scratch);

    std::map<std::string, bool> filled;
    for (const auto& [name, t] : net.params) filled[name] = false;
    for (const auto& [name, t] : net.stats) filled[name] = false;
    for (const auto& e : entries) {
        if (e.name == "rs.meta") continue;
        Tensor* dst = nullptr;
        if (auto it = net.params.find(e.name); it != net.params.end()) dst = &it->second;
        else if (auto it2 = net.stats.find(e.name); it2 != net.stats.end()) dst = &it2->second;
        if (dst == nullptr) throw IoError("unknown parameter name '" + e.name + "' in checkpoint: " + path);
        if (dst->shape() != e.shape)
            throw IoError("parameter '" + e.name + "' shape " + shape_str(e.shape) + " != expected " +
                          shape_str(dst->shape()) + ": " + path);
        std::copy(e.values.begin(), e.values.end(), dst->mutable_data().begin());
        filled[e.name] = true;
    }
    for (const auto& [name, ok] : filled)
        if (!ok) throw IoError("checkpoint missing parameter '" + name + "': " + path);
    return net;
}

}  // namespace lcgan
