#ifndef LCGAN_OPS_HPP
#define LCGAN_OPS_HPP

#include <optional>
#include <vector>

#include "lcgan/tensor.hpp"

namespace lcgan {

// All ops are differentiable w.r.t. their tensor inputs (where meaningful),
// record themselves on the active tape, and reject non-finite outputs.

// input [N,C,H,W] * kernel [F,C,k,k] -> [N,F,H',W'], H' = (H+2p-k)/s + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);

// input [N,C,H,W] * kernel [C,F,k,k] -> [N,F,H'',W''], H'' = (H-1)s - 2p + k.
// Adjoint of conv2d: <conv2d(x,K),u> == <x, conv2d_transpose(u,K)>.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, int stride, int pad);

// Per-channel batch normalization over N,H,W. Train mode uses batch moments
// (eps 1e-5) and updates running stats in place with momentum 0.9; eval mode
// normalizes with the running stats.
struct BatchNormOpts {
    bool train = true;
    double momentum = 0.9;
    double eps = 1e-5;
};
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, const BatchNormOpts& opts);

enum class Act { kLeakyRelu, kRelu, kTanh, kSigmoid };

// Elementwise activation; leaky_relu slope is fixed at 0.2 and its
// subgradient at 0 uses slope 1.
Tensor activation(const Tensor& input, Act kind);

inline Tensor leaky_relu(const Tensor& x) { return activation(x, Act::kLeakyRelu); }
inline Tensor relu(const Tensor& x) { return activation(x, Act::kRelu); }
inline Tensor tanh_act(const Tensor& x) { return activation(x, Act::kTanh); }
inline Tensor sigmoid_act(const Tensor& x) { return activation(x, Act::kSigmoid); }

// Zeroes each element with probability `rate`, scales survivors by
// 1/(1-rate). Mask is drawn from `rng`; identical seeds give identical masks.
Tensor dropout(const Tensor& input, double rate, Rng& rng);

// Mean-reduced binary cross entropy on logits, numerically stable.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Mean absolute error.
Tensor l1_loss(const Tensor& prediction, const Tensor& target);

// Per-pixel softmax cross entropy. logits [N,K,H,W], targets [N,H,W] holding
// class indices; optional per-class weights (weighted mean). Rejects indices
// outside [0,K).
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& targets,
                             const std::vector<double>& class_weights = {});

// Channel concatenation of [N,Ca,H,W] and [N,Cb,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Channels [c0, c1) of input.
Tensor slice_channels(const Tensor& input, int c0, int c1);

// Elementwise sum of equal-shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);

// x * scale + shift, elementwise with scalar constants.
Tensor scale_shift(const Tensor& x, double scale, double shift);

// Adds bias[C] to every (n,h,w) position of [N,C,H,W].
Tensor bias_add(const Tensor& x, const Tensor& bias);

// [N,C,H,W] -> [N,C,1,1] spatial mean.
Tensor global_avg_pool(const Tensor& x);

// Same data, new shape (element count must match).
Tensor reshape(const Tensor& x, Shape new_shape);

// Scalar sum of all elements.
Tensor sum_all(const Tensor& x);

// Scalar pick of one element by flat index (probe utility).
Tensor select(const Tensor& x, int64_t flat_index);

// Intra-op parallelism (deterministic regardless of the setting: partial
// results are reduced in a fixed order). Thread-local.
void set_op_threads(int n);
int op_threads();

}  // namespace lcgan

#endif
