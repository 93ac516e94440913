#include "lcgan/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace lcgan {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

static void validate_shape(const Shape& s) {
    for (int e : s) {
        if (e <= 0) throw ShapeError("non-positive extent in " + shape_str(s));
    }
}

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = detail::Buffer(data.data(), data.size());
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor make_uninit(Shape shape) {
    validate_shape(shape);
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->data = detail::Buffer(static_cast<size_t>(shape_numel(shape)), detail::Buffer::Init::kUninit);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
}

Tensor make_zeros_impl(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->data = detail::Buffer(static_cast<size_t>(shape_numel(shape)), detail::Buffer::Init::kZero);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    validate_shape(shape);
    return make_zeros_impl(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    validate_shape(shape);
    if (!std::isfinite(value)) throw ValueError("full() with non-finite value");
    Tensor t = make_uninit(std::move(shape));
    for (double& x : t.mutable_data()) x = value;
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t = make_tensor(std::move(shape), std::move(data), requires_grad);
    check_finite(t, "from_data");
    return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    validate_shape(shape);
    Tensor t = make_uninit(std::move(shape));
    for (double& x : t.mutable_data()) x = rng.normal(0.0, stddev);
    t.set_requires_grad(requires_grad);
    return t;
}

std::span<const double> Tensor::grad() const {
    if (impl_->grad.empty())
        throw ValueError("gradient not populated (shape " + shape_str(impl_->shape) + ")");
    return {impl_->grad.data(), impl_->grad.size()};
}

std::span<double> Tensor::mutable_grad() {
    if (impl_->grad.empty()) impl_->grad.assign_zero(impl_->data.size());
    return {impl_->grad.data(), impl_->grad.size()};
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(impl_->shape));
    return impl_->data[0];
}

Tensor Tensor::detach() const {
    Tensor t = make_uninit(impl_->shape);
    std::memcpy(t.mutable_data().data(), impl_->data.data(), impl_->data.size() * sizeof(double));
    return t;
}

void check_finite(const Tensor& t, const char* op_name) {
    for (double v : t.data()) {
        if (!std::isfinite(v))
            throw NonFiniteError(std::string(op_name) + " produced NaN/Inf (shape " + shape_str(t.shape()) + ")");
    }
}

namespace {
thread_local std::vector<Tape*> g_tape_stack;
}

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
    // Tapes must unwind LIFO.
    if (!g_tape_stack.empty() && g_tape_stack.back() == this) g_tape_stack.pop_back();
}

Tape* Tape::active() { return g_tape_stack.empty() ? nullptr : g_tape_stack.back(); }

bool grad_enabled(std::initializer_list<std::reference_wrapper<const Tensor>> inputs) {
    if (Tape::active() == nullptr) return false;
    for (const Tensor& t : inputs)
        if (t.requires_grad()) return true;
    return false;
}

void Tape::record(std::vector<Tensor> inputs, const Tensor& output, std::function<void()> backward_fn) {
    Node n;
    n.inputs.reserve(inputs.size());
    for (auto& t : inputs) n.inputs.push_back(t.impl());
    n.output = output.impl();
    n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    // Mark the output as gradient-carrying so downstream ops keep recording.
    output.impl()->requires_grad = true;
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    bool on_tape = false;
    for (const Node& n : nodes_) {
        if (n.output == loss.impl()) {
            on_tape = true;
            break;
        }
    }
    if (!on_tape) throw ValueError("backward(): loss was not produced on the active tape");

    // Allocate zeroed grad buffers for every tensor participating in the
    // recorded graph: node outputs always chain, inputs only if they require
    // grad (leaves) or already carry a buffer (intermediates).
    for (Node& n : nodes_) {
        n.output->grad.assign_zero(n.output->data.size());
        for (auto& in : n.inputs) {
            if (in->requires_grad && in->grad.size() != in->data.size()) in->grad.assign_zero(in->data.size());
        }
    }
    loss.impl()->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward_fn();
    nodes_.clear();  // tape consumed
}

void backward(const Tensor& loss) {
    Tape* t = Tape::active();
    if (t == nullptr) throw ValueError("backward(): no active tape");
    t->backward(loss);
}

}  // namespace lcgan
