#ifndef LCGAN_NN_HPP
#define LCGAN_NN_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lcgan/ops.hpp"
#include "lcgan/tensor.hpp"

namespace lcgan {

enum class NetKind : uint8_t { kGenerator = 0, kDiscriminator = 1, kSegmenter = 2, kClassifier = 3 };

const char* net_kind_name(NetKind k);

// Desk scale is image_size 64 / base 16; the full-scale architecture of the
// adopted image-to-image nets is image_size 256 / base 64.
struct NetworkSpec {
    NetKind kind = NetKind::kGenerator;
    int image_size = 64;
    int base_filters = 16;
    int in_channels = 1;
    int out_channels = 1;

    bool operator==(const NetworkSpec&) const = default;
};

// Canonical spec for a network kind at a given scale (mask channels = 6:
// background + 5 lesion classes).
NetworkSpec default_spec(NetKind kind, int image_size = 64, int base_filters = 16);

// Named parameters + running stats. Forward passes are pure functions of
// (params, input, rng, mode) except that train-mode batch norm updates the
// running stats.
struct Network {
    NetworkSpec spec;
    std::map<std::string, Tensor> params;  // requires_grad = true
    std::map<std::string, Tensor> stats;   // running stats, name prefix "rs."

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    Tensor& stat(const std::string& name);

    std::vector<std::pair<std::string, Tensor>> trainable() const;
    void set_requires_grad(bool v);
    void zero_grad();
    int64_t param_count() const;
};

enum class Mode {
    kTrain,     // batch-norm batch stats (updates running stats), dropout on
    kEval,      // running stats, dropout off
    kGenerate,  // running stats, dropout on (generator noise role)
};

// U-Net generator: log2(image_size)-1 encoder blocks (k4 s2 p1, filters
// base*[1,2,4,8,8,...] capped at 8*base, leaky-relu 0.2, batch norm except
// the first), mirrored transposed-conv decoder with channel-wise skip
// concatenation, dropout 0.5 in the first three decoder blocks, tanh head.
Network build_generator(const NetworkSpec& spec, Rng& rng);

// PatchGAN discriminator: k4 convs with strides (2,2,2,1,1), filters
// base*(1,2,4,8) then one logit channel; batch norm on the middle layers.
Network build_discriminator(const NetworkSpec& spec, Rng& rng);

// Compact FCN-8s-style segmenter: encoder to 1/8 resolution, per-scale 1x1
// score heads fused by upsampling + summation back to full resolution.
Network build_segmenter(const NetworkSpec& spec, Rng& rng);

// Small CNN real/fake selector: 4 downsampling blocks, global average pool,
// linear head to one logit.
Network build_classifier(const NetworkSpec& spec, Rng& rng);

Network build_network(const NetworkSpec& spec, Rng& rng);

struct GenForwardOpts {
    // 1-based encoder level whose skip connection is replaced by zeros
    // (test probe); 0 disables.
    int ablate_skip = 0;
};

// x: one-hot condition masks [N,mask_ch,S,S] -> image in [-1,1], [N,1,S,S].
Tensor generator_forward(Network& net, const Tensor& x, Mode mode, Rng& rng,
                         const GenForwardOpts& opts = {});

// cond [N,mask_ch,S,S] + image [N,1,S,S] -> patch logits [N,1,ho,wo].
Tensor discriminator_forward(Network& net, const Tensor& cond, const Tensor& image, Mode mode);

// image [N,1,H,W] -> class logits [N,K,H,W].
Tensor segmenter_forward(Network& net, const Tensor& image, Mode mode);

// image [N,1,H,W] -> real/fake logit [N,1].
Tensor classifier_forward(Network& net, const Tensor& image, Mode mode);

// Binary checkpoint: magic "LCGN", u32 LE version 1, kind byte, u32 entry
// count, then per entry: u16 name length + UTF-8 name, u8 rank, u32 LE
// extents, f32 LE values. Running stats are stored with their "rs." names;
// "rs.meta" carries [image_size, base_filters, in_channels, out_channels].
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace lcgan

#endif
