#include "lcgan/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lcgan {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using MapCRM = Eigen::Map<const RowMat>;

namespace {

thread_local int g_op_threads = 0;

int resolve_threads() {
    // Measured on desk-scale shapes: per-op threading loses to running
    // independent training/eval streams on separate cores, so ops default
    // to one thread. set_op_threads() overrides per thread.
    return g_op_threads > 0 ? g_op_threads : 1;
}

// Accumulate a contribution into t's grad buffer if it is tracked.
void accum(const Tensor& t, const double* contrib, size_t n) {
    auto impl = t.impl();
    if (impl->grad.empty()) return;
    double* g = impl->grad.data();
    for (size_t i = 0; i < n; ++i) g[i] += contrib[i];
}

bool tracked(const Tensor& t) { return !t.impl()->grad.empty(); }

struct ConvGeom {
    int N, C, H, W;   // image-side tensor
    int F, k;         // filters, kernel size
    int stride, pad;
    int Ho, Wo;       // conv-output spatial dims
};

// Reusable per-thread scratch; sized monotonically so steady-state training
// does no large allocations in the conv path.
std::vector<double>& scratch(int which) {
    thread_local std::vector<double> bufs[3];
    return bufs[which];
}

double* scratch_resize(int which, size_t n) {
    auto& v = scratch(which);
    if (v.size() < n) v.resize(n);
    return v.data();
}

// Receptive-field columns of one sample (C x H x W), laid out (C*k*k) x
// (Ho*Wo) row-major. Out-of-bounds taps are zero.
void im2col(const double* img, const ConvGeom& g, double* cols) {
    const int64_t HW = static_cast<int64_t>(g.Ho) * g.Wo;
    for (int c = 0; c < g.C; ++c) {
        const double* plane = img + static_cast<int64_t>(c) * g.H * g.W;
        for (int a = 0; a < g.k; ++a) {
            for (int b = 0; b < g.k; ++b) {
                double* row = cols + (static_cast<int64_t>(c) * g.k * g.k + a * g.k + b) * HW;
                for (int i = 0; i < g.Ho; ++i) {
                    const int ii = i * g.stride - g.pad + a;
                    double* dst = row + static_cast<int64_t>(i) * g.Wo;
                    if (ii < 0 || ii >= g.H) {
                        std::memset(dst, 0, sizeof(double) * g.Wo);
                        continue;
                    }
                    const double* src = plane + static_cast<int64_t>(ii) * g.W;
                    const int jlo = std::max(0, (g.pad - b + g.stride - 1) / g.stride);
                    const int jhi = std::min(g.Wo, (g.W - 1 + g.pad - b) / g.stride + 1);
                    for (int j = 0; j < jlo; ++j) dst[j] = 0.0;
                    for (int j = jlo; j < jhi; ++j) dst[j] = src[j * g.stride - g.pad + b];
                    for (int j = jhi; j < g.Wo; ++j) dst[j] = 0.0;
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im_add(const double* cols, const ConvGeom& g, double* img) {
    const int64_t HW = static_cast<int64_t>(g.Ho) * g.Wo;
    for (int c = 0; c < g.C; ++c) {
        double* plane = img + static_cast<int64_t>(c) * g.H * g.W;
        for (int a = 0; a < g.k; ++a) {
            for (int b = 0; b < g.k; ++b) {
                const double* row = cols + (static_cast<int64_t>(c) * g.k * g.k + a * g.k + b) * HW;
                for (int i = 0; i < g.Ho; ++i) {
                    const int ii = i * g.stride - g.pad + a;
                    if (ii < 0 || ii >= g.H) continue;
                    double* dst = plane + static_cast<int64_t>(ii) * g.W;
                    const double* src = row + static_cast<int64_t>(i) * g.Wo;
                    const int jlo = std::max(0, (g.pad - b + g.stride - 1) / g.stride);
                    const int jhi = std::min(g.Wo, (g.W - 1 + g.pad - b) / g.stride + 1);
                    for (int j = jlo; j < jhi; ++j) dst[j * g.stride - g.pad + b] += src[j];
                }
            }
        }
    }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

// y[n] (+)= W(F x C*k*k) * im2col(x[n]). Per-sample gemms write disjoint
// output blocks, so the parallel loop is bit-deterministic. For 1x1/s1/p0
// convs the input itself already has column layout and im2col is skipped.
// When `cols_cache` is non-null the per-sample columns are stored there
// (size N * ck2 * hw) for reuse by the weight-gradient pass.
void conv_fwd_core(const double* x, const double* wbuf, const ConvGeom& g, double* y, bool accumulate,
                   double* cols_cache = nullptr) {
    const int64_t ck2 = static_cast<int64_t>(g.C) * g.k * g.k;
    const int64_t hw = static_cast<int64_t>(g.Ho) * g.Wo;
    const bool pointwise = is_pointwise(g);
    const int nt = std::min(resolve_threads(), g.N);
#pragma omp parallel num_threads(nt)
    {
        double* cols = (pointwise || cols_cache) ? nullptr : scratch_resize(0, static_cast<size_t>(ck2 * hw));
#pragma omp for schedule(static)
        for (int n = 0; n < g.N; ++n) {
            const double* bsrc;
            if (pointwise) {
                bsrc = x + static_cast<int64_t>(n) * g.C * g.H * g.W;
            } else {
                double* dst = cols_cache ? cols_cache + static_cast<int64_t>(n) * ck2 * hw : cols;
                im2col(x + static_cast<int64_t>(n) * g.C * g.H * g.W, g, dst);
                bsrc = dst;
            }
            MapCRM Wm(wbuf, g.F, ck2);
            MapCRM Bm(bsrc, ck2, hw);
            MapRM Ym(y + static_cast<int64_t>(n) * g.F * hw, g.F, hw);
            if (accumulate) Ym.noalias() += Wm * Bm;
            else Ym.noalias() = Wm * Bm;
        }
    }
}

// y[n] (+)= scatter( L^T(F*k*k x Cin) * x[n] ); L is (Cin x F*k*k)
// row-major; x has Cin channels at the conv positions (Ho x Wo); y is the
// image side (g.C channels, g.H x g.W). Exact adjoint of conv_fwd_core.
void convT_fwd_core(const double* x, const double* lbuf, int Cin, const ConvGeom& g, double* y,
                    bool accumulate) {
    const int64_t fk2 = static_cast<int64_t>(g.C) * g.k * g.k;
    const int64_t hw = static_cast<int64_t>(g.Ho) * g.Wo;
    if (is_pointwise(g)) {
        // plain (g.C x Cin) linear map per pixel
        const int nt = std::min(resolve_threads(), g.N);
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int n = 0; n < g.N; ++n) {
            MapCRM Lm(lbuf, Cin, fk2);
            MapCRM Xm(x + static_cast<int64_t>(n) * Cin * hw, Cin, hw);
            MapRM Ym(y + static_cast<int64_t>(n) * g.C * hw, g.C, hw);
            if (accumulate) Ym.noalias() += Lm.transpose() * Xm;
            else Ym.noalias() = Lm.transpose() * Xm;
        }
        return;
    }
    const int nt = std::min(resolve_threads(), g.N);
#pragma omp parallel num_threads(nt)
    {
        double* cols = scratch_resize(0, static_cast<size_t>(fk2 * hw));
#pragma omp for schedule(static)
        for (int n = 0; n < g.N; ++n) {
            MapCRM Lm(lbuf, Cin, fk2);
            MapCRM Xm(x + static_cast<int64_t>(n) * Cin * hw, Cin, hw);
            MapRM Bm(cols, fk2, hw);
            Bm.noalias() = Lm.transpose() * Xm;
            double* out = y + static_cast<int64_t>(n) * g.C * g.H * g.W;
            if (!accumulate) std::fill(out, out + static_cast<int64_t>(g.C) * g.H * g.W, 0.0);
            col2im_add(cols, g, out);
        }
    }
}

// dw(P x C*k*k) += sum_n A[n](P x Ho*Wo) * cols(img[n])^T. Columns come
// from `cols_cache` when the forward pass saved them, directly from the
// input for 1x1 convs, and are otherwise rebuilt per sample. The n loop is
// serial (single accumulation buffer, fixed order); each gemm is split over
// disjoint dw columns, so results are bit-identical for any thread count.
void conv_dw_core(const double* a, int P, const double* img, const ConvGeom& g, double* dw,
                  const double* cols_cache = nullptr) {
    const int64_t ck2 = static_cast<int64_t>(g.C) * g.k * g.k;
    const int64_t hw = static_cast<int64_t>(g.Ho) * g.Wo;
    const bool pointwise = is_pointwise(g);
    double* scratch_cols =
        (pointwise || cols_cache) ? nullptr : scratch_resize(1, static_cast<size_t>(ck2 * hw));
    for (int n = 0; n < g.N; ++n) {
        const double* cols;
        if (pointwise) {
            cols = img + static_cast<int64_t>(n) * g.C * g.H * g.W;
        } else if (cols_cache) {
            cols = cols_cache + static_cast<int64_t>(n) * ck2 * hw;
        } else {
            im2col(img + static_cast<int64_t>(n) * g.C * g.H * g.W, g, scratch_cols);
            cols = scratch_cols;
        }
        MapCRM Am(a + static_cast<int64_t>(n) * P * hw, P, hw);
        MapCRM Bm(cols, ck2, hw);
        MapRM Dm(dw, P, ck2);
        Dm.noalias() += Am * Bm.transpose();
    }
}

// Fused backward for conv2d_transpose: builds im2col(dy[n]) once per sample
// and feeds both the input gradient (dx[n] += L * cols) and the kernel
// gradient (dl += x[n] * cols^T).
void convT_bwd_fused(const double* x, const double* dy, const double* lbuf, const ConvGeom& g,
                     double* dx, double* dl) {
    const int64_t ck2 = static_cast<int64_t>(g.C) * g.k * g.k;  // dy-side columns
    const int64_t hw = static_cast<int64_t>(g.Ho) * g.Wo;       // conv positions = x spatial
    const bool pointwise = is_pointwise(g);
    double* scratch_cols = pointwise ? nullptr : scratch_resize(1, static_cast<size_t>(ck2 * hw));
    for (int n = 0; n < g.N; ++n) {
        const double* cols;
        if (pointwise) {
            cols = dy + static_cast<int64_t>(n) * g.C * g.H * g.W;
        } else {
            im2col(dy + static_cast<int64_t>(n) * g.C * g.H * g.W, g, scratch_cols);
            cols = scratch_cols;
        }
        MapCRM Bm(cols, ck2, hw);
        if (dx != nullptr) {
            MapCRM Lm(lbuf, g.F, ck2);
            MapRM Dx(dx + static_cast<int64_t>(n) * g.F * hw, g.F, hw);
            Dx.noalias() += Lm * Bm;
        }
        if (dl != nullptr) {
            MapCRM Xm(x + static_cast<int64_t>(n) * g.F * hw, g.F, hw);
            MapRM Dl(dl, g.F, ck2);
            Dl.noalias() += Xm * Bm.transpose();
        }
    }
}

// Grad destination if the tensor is tracked, else nullptr.
double* grad_dst(const Tensor& t) {
    auto impl = t.impl();
    return impl->grad.empty() ? nullptr : impl->grad.data();
}

void require_rank4(const Tensor& t, const char* what) {
    if (t.rank() != 4) throw ShapeError(std::string(what) + " must be rank 4, got " + shape_str(t.shape()));
}

}  // namespace

void set_op_threads(int n) { g_op_threads = n; }
int op_threads() { return resolve_threads(); }

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
    require_rank4(input, "conv2d input");
    require_rank4(kernel, "conv2d kernel");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int F = kernel.dim(0), Ck = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kh != kw) throw ShapeError("conv2d kernel must be square, got " + shape_str(kernel.shape()));
    if (Ck != C)
        throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
    if (kh < 1 || stride < 1 || pad < 0) throw ValueError("conv2d needs k>=1, stride>=1, pad>=0");
    if (H + 2 * pad < kh || W + 2 * pad < kh)
        throw ShapeError("conv2d input " + shape_str(input.shape()) + " smaller than kernel " +
                         shape_str(kernel.shape()) + " with pad " + std::to_string(pad));

    ConvGeom g{N, C, H, W, F, kh, stride, pad, (H + 2 * pad - kh) / stride + 1, (W + 2 * pad - kh) / stride + 1};
    Tensor out = make_uninit({N, F, g.Ho, g.Wo});
    const bool rec = grad_enabled({input, kernel});
    // When recording, keep the im2col columns for the weight-gradient pass.
    std::shared_ptr<std::vector<double>> cols_cache;
    if (rec && !is_pointwise(g))
        cols_cache = std::make_shared<std::vector<double>>(
            static_cast<size_t>(g.N) * g.C * g.k * g.k * g.Ho * g.Wo);
    conv_fwd_core(input.data().data(), kernel.data().data(), g, out.mutable_data().data(), false,
                  cols_cache ? cols_cache->data() : nullptr);
    check_finite(out, "conv2d");

    if (rec) {
        Tape::active()->record({input, kernel}, out, [input, kernel, out, g, cols_cache]() {
            const double* dy = out.impl()->grad.data();
            // dX is the transposed conv of dY with the same kernel buffer.
            if (double* gx = grad_dst(input)) convT_fwd_core(dy, kernel.data().data(), g.F, g, gx, true);
            if (double* gk = grad_dst(kernel))
                conv_dw_core(dy, g.F, input.data().data(), g, gk,
                             cols_cache ? cols_cache->data() : nullptr);
        });
    }
    return out;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, int stride, int pad) {
    require_rank4(input, "conv2d_transpose input");
    require_rank4(kernel, "conv2d_transpose kernel");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Ck = kernel.dim(0), F = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kh != kw) throw ShapeError("conv2d_transpose kernel must be square, got " + shape_str(kernel.shape()));
    if (Ck != C)
        throw ShapeError("conv2d_transpose channel mismatch: input " + shape_str(input.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
    if (kh < 1 || stride < 1 || pad < 0) throw ValueError("conv2d_transpose needs k>=1, stride>=1, pad>=0");
    const int Ho = (H - 1) * stride - 2 * pad + kh;
    const int Wo = (W - 1) * stride - 2 * pad + kh;
    if (Ho < 1 || Wo < 1)
        throw ShapeError("conv2d_transpose output would be empty for input " + shape_str(input.shape()));

    // Image side of the geometry is the *output* here.
    ConvGeom g{N, F, Ho, Wo, C, kh, stride, pad, H, W};
    Tensor out = make_uninit({N, F, Ho, Wo});
    convT_fwd_core(input.data().data(), kernel.data().data(), C, g, out.mutable_data().data(), false);
    check_finite(out, "conv2d_transpose");

    if (grad_enabled({input, kernel})) {
        Tape::active()->record({input, kernel}, out, [input, kernel, out, g]() {
            const double* dy = out.impl()->grad.data();
            // dx[n] += L * im2col(dy[n]); dl += x[n] * im2col(dy[n])^T, with
            // the columns built once per sample.
            convT_bwd_fused(input.data().data(), dy, kernel.data().data(), g, grad_dst(input),
                            grad_dst(kernel));
        });
    }
    return out;
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, const BatchNormOpts& opts) {
    require_rank4(input, "batch_norm input");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    auto check_c = [&](const Tensor& t, const char* what) {
        if (t.rank() != 1 || t.dim(0) != C)
            throw ShapeError(std::string("batch_norm ") + what + " must be [" + std::to_string(C) + "], got " +
                             shape_str(t.shape()));
    };
    check_c(gamma, "gamma");
    check_c(beta, "beta");
    check_c(running_mean, "running_mean");
    check_c(running_var, "running_var");
    const int64_t m = static_cast<int64_t>(N) * H * W;
    if (opts.train && m < 2) throw ValueError("batch_norm train mode needs N*H*W >= 2 (variance undefined)");

    const int64_t plane = static_cast<int64_t>(H) * W;
    const double* x = input.data().data();
    Tensor out = Tensor::zeros(input.shape());
    double* y = out.mutable_data().data();

    std::vector<double> mean(C), inv_std(C);
    if (opts.train) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = x + (static_cast<int64_t>(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(m);
            double v = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = x + (static_cast<int64_t>(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    v += d * d;
                }
            }
            const double var = v / static_cast<double>(m);
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(var + opts.eps);
            running_mean.mutable_data()[c] = opts.momentum * running_mean.data()[c] + (1.0 - opts.momentum) * mu;
            running_var.mutable_data()[c] = opts.momentum * running_var.data()[c] + (1.0 - opts.momentum) * var;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean.data()[c];
            inv_std[c] = 1.0 / std::sqrt(running_var.data()[c] + opts.eps);
        }
    }

    const double* gm = gamma.data().data();
    const double* bt = beta.data().data();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* p = x + (static_cast<int64_t>(n) * C + c) * plane;
            double* q = y + (static_cast<int64_t>(n) * C + c) * plane;
            const double mu = mean[c], is = inv_std[c], gc = gm[c], bc = bt[c];
            for (int64_t i = 0; i < plane; ++i) q[i] = (p[i] - mu) * is * gc + bc;
        }
    }
    check_finite(out, "batch_norm");

    if (grad_enabled({input, gamma, beta})) {
        const bool train = opts.train;
        Tape::active()->record({input, gamma, beta}, out,
                               [input, gamma, beta, out, mean, inv_std, N, C, plane, m, train]() {
            const double* dy = out.impl()->grad.data();
            const double* x = input.data().data();
            const double* gm = gamma.data().data();
            std::vector<double> dbeta(C, 0.0), dgamma(C, 0.0);
            for (int c = 0; c < C; ++c) {
                double sb = 0.0, sg = 0.0;
                for (int n = 0; n < N; ++n) {
                    const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        const double d = dy[off + i];
                        sb += d;
                        sg += d * (x[off + i] - mean[c]) * inv_std[c];
                    }
                }
                dbeta[c] = sb;
                dgamma[c] = sg;
            }
            accum(gamma, dgamma.data(), dgamma.size());
            accum(beta, dbeta.data(), dbeta.size());
            if (double* dx = grad_dst(input)) {
                for (int n = 0; n < N; ++n) {
                    for (int c = 0; c < C; ++c) {
                        const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
                        const double gi = gm[c] * inv_std[c];
                        if (train) {
                            const double mb = dbeta[c] / static_cast<double>(m);
                            const double mg = dgamma[c] / static_cast<double>(m);
                            for (int64_t i = 0; i < plane; ++i) {
                                const double xh = (x[off + i] - mean[c]) * inv_std[c];
                                dx[off + i] += gi * (dy[off + i] - mb - xh * mg);
                            }
                        } else {
                            for (int64_t i = 0; i < plane; ++i) dx[off + i] += gi * dy[off + i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor activation(const Tensor& input, Act kind) {
    const size_t n = static_cast<size_t>(input.numel());
    Tensor out = make_uninit(input.shape());
    const double* x = input.data().data();
    double* y = out.mutable_data().data();
    switch (kind) {
        case Act::kLeakyRelu:
            for (size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : 0.2 * x[i];
            break;
        case Act::kRelu:
            for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case Act::kTanh:
            for (size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
            break;
        case Act::kSigmoid:
            for (size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
            break;
    }
    check_finite(out, "activation");
    if (grad_enabled({input})) {
        Tape::active()->record({input}, out, [input, out, kind, n]() {
            const double* dy = out.impl()->grad.data();
            const double* x = input.data().data();
            const double* y = out.data().data();
            double* dx = grad_dst(input);
            if (dx == nullptr) return;
            switch (kind) {
                case Act::kLeakyRelu:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * (x[i] >= 0.0 ? 1.0 : 0.2);
                    break;
                case Act::kRelu:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * (x[i] > 0.0 ? 1.0 : 0.0);
                    break;
                case Act::kTanh:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
                    break;
                case Act::kSigmoid:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
                    break;
            }
        });
    }
    return out;
}

Tensor dropout(const Tensor& input, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ValueError("dropout rate must be in [0,1), got " + std::to_string(rate));
    if (rate == 0.0) return input;  // identity, rng untouched
    const size_t n = static_cast<size_t>(input.numel());
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(n);
    Tensor out = make_uninit(input.shape());
    const double* x = input.data().data();
    double* y = out.mutable_data().data();
    for (size_t i = 0; i < n; ++i) {
        const double m = rng.uniform() < rate ? 0.0 : keep_scale;
        (*mask)[i] = m;
        y[i] = x[i] * m;
    }
    check_finite(out, "dropout");
    if (grad_enabled({input})) {
        Tape::active()->record({input}, out, [input, out, mask, n]() {
            const double* dy = out.impl()->grad.data();
            double* dx = grad_dst(input);
            if (dx == nullptr) return;
            for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * (*mask)[i];
        });
    }
    return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    if (logits.shape() != targets.shape())
        throw ShapeError("bce_with_logits shapes differ: " + shape_str(logits.shape()) + " vs " +
                         shape_str(targets.shape()));
    const size_t n = static_cast<size_t>(logits.numel());
    const double* z = logits.data().data();
    const double* t = targets.data().data();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i)
        s += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
    Tensor out = make_tensor({1}, {s / static_cast<double>(n)});
    check_finite(out, "bce_with_logits");
    if (grad_enabled({logits})) {
        Tape::active()->record({logits, targets}, out, [logits, targets, out, n]() {
            const double dy = out.impl()->grad[0];
            const double* z = logits.data().data();
            const double* t = targets.data().data();
            double* dz = grad_dst(logits);
            if (dz == nullptr) return;
            for (size_t i = 0; i < n; ++i) {
                const double sig = 1.0 / (1.0 + std::exp(-z[i]));
                dz[i] += dy * (sig - t[i]) / static_cast<double>(n);
            }
        });
    }
    return out;
}

Tensor l1_loss(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape())
        throw ShapeError("l1_loss shapes differ: " + shape_str(prediction.shape()) + " vs " +
                         shape_str(target.shape()));
    const size_t n = static_cast<size_t>(prediction.numel());
    const double* a = prediction.data().data();
    const double* b = target.data().data();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
    Tensor out = make_tensor({1}, {s / static_cast<double>(n)});
    check_finite(out, "l1_loss");
    if (grad_enabled({prediction, target})) {
        Tape::active()->record({prediction, target}, out, [prediction, target, out, n]() {
            const double dy = out.impl()->grad[0];
            const double* a = prediction.data().data();
            const double* b = target.data().data();
            double* da = grad_dst(prediction);
            double* db = grad_dst(target);
            for (size_t i = 0; i < n; ++i) {
                const double diff = a[i] - b[i];
                const double s = dy * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / static_cast<double>(n);
                if (da != nullptr) da[i] += s;
                if (db != nullptr) db[i] -= s;
            }
        });
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& targets,
                             const std::vector<double>& class_weights) {
    require_rank4(logits, "softmax_cross_entropy logits");
    if (targets.rank() != 3)
        throw ShapeError("softmax_cross_entropy targets must be [N,H,W], got " + shape_str(targets.shape()));
    const int N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    if (targets.dim(0) != N || targets.dim(1) != H || targets.dim(2) != W)
        throw ShapeError("softmax_cross_entropy logits " + shape_str(logits.shape()) + " vs targets " +
                         shape_str(targets.shape()));
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != K)
        throw ShapeError("class_weights size " + std::to_string(class_weights.size()) + " != K=" + std::to_string(K));

    const int64_t plane = static_cast<int64_t>(H) * W;
    const double* z = logits.data().data();
    const double* tg = targets.data().data();
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(logits.numel()));
    auto tidx = std::make_shared<std::vector<int>>(static_cast<size_t>(targets.numel()));
    double loss_sum = 0.0, weight_sum = 0.0;
    for (int n = 0; n < N; ++n) {
        for (int64_t p = 0; p < plane; ++p) {
            const double traw = tg[n * plane + p];
            const int t = static_cast<int>(std::llround(traw));
            if (t < 0 || t >= K)
                throw ValueError("class index " + std::to_string(t) + " out of range [0," + std::to_string(K) + ")");
            (*tidx)[static_cast<size_t>(n * plane + p)] = t;
            double mx = -1e300;
            for (int k = 0; k < K; ++k)
                mx = std::max(mx, z[(static_cast<int64_t>(n) * K + k) * plane + p]);
            double se = 0.0;
            for (int k = 0; k < K; ++k)
                se += std::exp(z[(static_cast<int64_t>(n) * K + k) * plane + p] - mx);
            const double lse = mx + std::log(se);
            for (int k = 0; k < K; ++k)
                (*probs)[static_cast<size_t>((static_cast<int64_t>(n) * K + k) * plane + p)] =
                    std::exp(z[(static_cast<int64_t>(n) * K + k) * plane + p] - lse);
            const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<size_t>(t)];
            loss_sum += w * (lse - z[(static_cast<int64_t>(n) * K + t) * plane + p]);
            weight_sum += w;
        }
    }
    if (weight_sum <= 0.0) throw ValueError("softmax_cross_entropy: zero total weight");
    Tensor out = make_tensor({1}, {loss_sum / weight_sum});
    check_finite(out, "softmax_cross_entropy");
    if (grad_enabled({logits})) {
        const auto weights = class_weights;
        Tape::active()->record({logits, targets}, out,
                               [logits, out, probs, tidx, weights, N, K, plane, weight_sum]() {
            const double dy = out.impl()->grad[0];
            double* dz = grad_dst(logits);
            if (dz == nullptr) return;
            for (int n = 0; n < N; ++n) {
                for (int64_t p = 0; p < plane; ++p) {
                    const int t = (*tidx)[static_cast<size_t>(n * plane + p)];
                    const double w = weights.empty() ? 1.0 : weights[static_cast<size_t>(t)];
                    for (int k = 0; k < K; ++k) {
                        const size_t idx = static_cast<size_t>((static_cast<int64_t>(n) * K + k) * plane + p);
                        dz[idx] += dy * w * ((*probs)[idx] - (k == t ? 1.0 : 0.0)) / weight_sum;
                    }
                }
            }
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank4(a, "concat_channels a");
    require_rank4(b, "concat_channels b");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels spatial mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor out = make_uninit({N, Ca + Cb, H, W});
    double* y = out.mutable_data().data();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (int n = 0; n < N; ++n) {
        std::memcpy(y + (static_cast<int64_t>(n) * (Ca + Cb)) * plane, pa + static_cast<int64_t>(n) * Ca * plane,
                    sizeof(double) * Ca * plane);
        std::memcpy(y + (static_cast<int64_t>(n) * (Ca + Cb) + Ca) * plane, pb + static_cast<int64_t>(n) * Cb * plane,
                    sizeof(double) * Cb * plane);
    }
    if (grad_enabled({a, b})) {
        Tape::active()->record({a, b}, out, [a, b, out, N, Ca, Cb, plane]() {
            const double* dy = out.impl()->grad.data();
            if (double* da = grad_dst(a)) {
                for (int n = 0; n < N; ++n) {
                    const double* s = dy + (static_cast<int64_t>(n) * (Ca + Cb)) * plane;
                    double* d = da + static_cast<int64_t>(n) * Ca * plane;
                    for (int64_t i = 0; i < Ca * plane; ++i) d[i] += s[i];
                }
            }
            if (double* db = grad_dst(b)) {
                for (int n = 0; n < N; ++n) {
                    const double* s = dy + (static_cast<int64_t>(n) * (Ca + Cb) + Ca) * plane;
                    double* d = db + static_cast<int64_t>(n) * Cb * plane;
                    for (int64_t i = 0; i < Cb * plane; ++i) d[i] += s[i];
                }
            }
        });
    }
    return out;
}

Tensor slice_channels(const Tensor& input, int c0, int c1) {
    require_rank4(input, "slice_channels input");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (c0 < 0 || c1 > C || c0 >= c1)
        throw ValueError("slice_channels range [" + std::to_string(c0) + "," + std::to_string(c1) + ") invalid for C=" +
                         std::to_string(C));
    const int Cs = c1 - c0;
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor out = make_uninit({N, Cs, H, W});
    double* y = out.mutable_data().data();
    const double* x = input.data().data();
    for (int n = 0; n < N; ++n)
        std::memcpy(y + static_cast<int64_t>(n) * Cs * plane, x + (static_cast<int64_t>(n) * C + c0) * plane,
                    sizeof(double) * Cs * plane);
    if (grad_enabled({input})) {
        Tape::active()->record({input}, out, [input, out, N, C, Cs, c0, plane]() {
            const double* dy = out.impl()->grad.data();
            double* dx = grad_dst(input);
            if (dx == nullptr) return;
            for (int n = 0; n < N; ++n) {
                const double* s = dy + static_cast<int64_t>(n) * Cs * plane;
                double* d = dx + (static_cast<int64_t>(n) * C + c0) * plane;
                for (int64_t i = 0; i < Cs * plane; ++i) d[i] += s[i];
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const size_t n = static_cast<size_t>(a.numel());
    Tensor out = make_uninit(a.shape());
    double* y = out.mutable_data().data();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) y[i] = pa[i] + pb[i];
    check_finite(out, "add");
    if (grad_enabled({a, b})) {
        Tape::active()->record({a, b}, out, [a, b, out]() {
            const auto& dy = out.impl()->grad;
            accum(a, dy.data(), dy.size());
            accum(b, dy.data(), dy.size());
        });
    }
    return out;
}

Tensor scale_shift(const Tensor& x, double scale, double shift) {
    if (!std::isfinite(scale) || !std::isfinite(shift)) throw ValueError("scale_shift with non-finite constants");
    const size_t n = static_cast<size_t>(x.numel());
    Tensor out = make_uninit(x.shape());
    double* y = out.mutable_data().data();
    const double* px = x.data().data();
    for (size_t i = 0; i < n; ++i) y[i] = px[i] * scale + shift;
    check_finite(out, "scale_shift");
    if (grad_enabled({x})) {
        Tape::active()->record({x}, out, [x, out, scale, n]() {
            const double* dy = out.impl()->grad.data();
            double* dx = grad_dst(x);
            if (dx == nullptr) return;
            for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * scale;
        });
    }
    return out;
}

Tensor bias_add(const Tensor& x, const Tensor& bias) {
    require_rank4(x, "bias_add input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (bias.rank() != 1 || bias.dim(0) != C)
        throw ShapeError("bias_add bias must be [" + std::to_string(C) + "], got " + shape_str(bias.shape()));
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor out = make_uninit(x.shape());
    double* y = out.mutable_data().data();
    const double* px = x.data().data();
    const double* pb = bias.data().data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) y[off + i] = px[off + i] + pb[c];
        }
    check_finite(out, "bias_add");
    if (grad_enabled({x, bias})) {
        Tape::active()->record({x, bias}, out, [x, bias, out, N, C, plane]() {
            const double* dy = out.impl()->grad.data();
            accum(x, dy, static_cast<size_t>(x.numel()));
            if (double* db = grad_dst(bias)) {
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
                        double s = 0.0;
                        for (int64_t i = 0; i < plane; ++i) s += dy[off + i];
                        db[c] += s;
                    }
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank4(x, "global_avg_pool input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor out = make_uninit({N, C, 1, 1});
    double* y = out.mutable_data().data();
    const double* px = x.data().data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
            double s = 0.0;
            for (int64_t i = 0; i < plane; ++i) s += px[off + i];
            y[static_cast<int64_t>(n) * C + c] = s / static_cast<double>(plane);
        }
    check_finite(out, "global_avg_pool");
    if (grad_enabled({x})) {
        Tape::active()->record({x}, out, [x, out, N, C, plane]() {
            const double* dy = out.impl()->grad.data();
            double* dx = grad_dst(x);
            if (dx == nullptr) return;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
                    const double g = dy[static_cast<int64_t>(n) * C + c] / static_cast<double>(plane);
                    for (int64_t i = 0; i < plane; ++i) dx[off + i] += g;
                }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) + " changes element count");
    Tensor out = make_uninit(std::move(new_shape));
    std::memcpy(out.mutable_data().data(), x.data().data(), static_cast<size_t>(x.numel()) * sizeof(double));
    if (grad_enabled({x})) {
        Tape::active()->record({x}, out, [x, out]() {
            const auto& dy = out.impl()->grad;
            accum(x, dy.data(), dy.size());
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = make_tensor({1}, {s});
    check_finite(out, "sum_all");
    if (grad_enabled({x})) {
        Tape::active()->record({x}, out, [x, out]() {
            const double dy = out.impl()->grad[0];
            double* dx = grad_dst(x);
            if (dx == nullptr) return;
            for (int64_t i = 0; i < x.numel(); ++i) dx[i] += dy;
        });
    }
    return out;
}

Tensor select(const Tensor& x, int64_t flat_index) {
    if (flat_index < 0 || flat_index >= x.numel())
        throw ValueError("select index " + std::to_string(flat_index) + " out of range for " + shape_str(x.shape()));
    Tensor out = make_tensor({1}, {x.data()[static_cast<size_t>(flat_index)]});
    if (grad_enabled({x})) {
        Tape::active()->record({x}, out, [x, out, flat_index]() {
            if (double* dx = grad_dst(x)) dx[static_cast<size_t>(flat_index)] += out.impl()->grad[0];
        });
    }
    return out;
}

}  // namespace lcgan
