#ifndef LCGAN_TENSOR_HPP
#define LCGAN_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lcgan/buffer.hpp"
#include "lcgan/errors.hpp"
#include "lcgan/rng.hpp"

namespace lcgan {

// Extents of a dense tensor. Image batches are NCHW, row-major.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct TensorImpl {
    Shape shape;
    Buffer data;
    Buffer grad;  // empty until backward populates it
    bool requires_grad = false;
};

}  // namespace detail

// Value-semantic handle to shared dense fp64 storage. All numerics in the
// project flow through this type; ops live in ops.hpp.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    // Validates that every value is finite.
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::span<const double> data() const { return {impl_->data.data(), impl_->data.size()}; }
    std::span<double> mutable_data() { return {impl_->data.data(), impl_->data.size()}; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad() { impl_->grad.clear(); }

    // Value of a one-element tensor.
    double item() const;

    // New leaf sharing no autodiff history (data copied, requires_grad off).
    Tensor detach() const;

    // Identity test: do two handles share storage?
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
    friend class Tape;
    friend Tensor make_tensor(Shape, std::vector<double>, bool);
    friend Tensor make_uninit(Shape);
    friend Tensor make_zeros_impl(Shape, bool);
};

// Internal: construct without the finiteness scan (ops validate outputs
// themselves through check_finite).
Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

// Internal: allocate without initializing (caller overwrites every element).
Tensor make_uninit(Shape shape);

void check_finite(const Tensor& t, const char* op_name);

// Reverse-mode tape. Ops record nodes in execution order (inputs always
// precede consumers); backward() replays them once, in reverse. Construction
// pushes the tape onto a thread-local stack so nested tapes are possible
// (the GAN loops keep a generator tape alive across a discriminator step).
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::vector<Tensor> inputs, const Tensor& output, std::function<void()> backward_fn);

    // Populates grads of every tracked tensor reachable from `loss`
    // (a scalar produced on this tape), then consumes the tape.
    void backward(const Tensor& loss);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
        std::shared_ptr<detail::TensorImpl> output;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
};

// True when some active tape should record an op consuming these inputs.
bool grad_enabled(std::initializer_list<std::reference_wrapper<const Tensor>> inputs);

// Backward through the active tape (spec surface for Tape::backward).
void backward(const Tensor& loss);

}  // namespace lcgan

#endif
