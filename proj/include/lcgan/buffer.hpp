#ifndef LCGAN_BUFFER_HPP
#define LCGAN_BUFFER_HPP

#include <cstddef>
#include <cstring>
#include <memory>

namespace lcgan::detail {

// Flat fp64 storage. Unlike std::vector, supports uninitialized allocation
// so op outputs that are fully overwritten skip the zero-fill pass.
class Buffer {
public:
    Buffer() = default;
    enum class Init { kZero, kUninit };
    Buffer(size_t n, Init init) : p_(init == Init::kZero ? new double[n]() : new double[n]), n_(n) {}
    Buffer(const double* src, size_t n) : Buffer(n, Init::kUninit) {
        std::memcpy(p_.get(), src, n * sizeof(double));
    }
    Buffer(const Buffer& o) : Buffer(o.p_.get(), o.n_) {}
    Buffer(Buffer&&) = default;
    Buffer& operator=(Buffer&& o) = default;
    Buffer& operator=(const Buffer& o) {
        if (this != &o) *this = Buffer(o);
        return *this;
    }

    double* data() { return p_.get(); }
    const double* data() const { return p_.get(); }
    size_t size() const { return n_; }
    bool empty() const { return n_ == 0; }
    double& operator[](size_t i) { return p_[i]; }
    double operator[](size_t i) const { return p_[i]; }
    double* begin() { return p_.get(); }
    double* end() { return p_.get() + n_; }
    const double* begin() const { return p_.get(); }
    const double* end() const { return p_.get() + n_; }

    void clear() {
        p_.reset();
        n_ = 0;
    }
    // (Re)allocate to n zeros.
    void assign_zero(size_t n) {
        if (n_ != n) {
            p_.reset(new double[n]());
            n_ = n;
        } else {
            std::memset(p_.get(), 0, n * sizeof(double));
        }
    }

private:
    std::unique_ptr<double[]> p_;
    size_t n_ = 0;
};

}  // namespace lcgan::detail

#endif
