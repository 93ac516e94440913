#include "lcgan/optim.hpp"

#include <cmath>

namespace lcgan {

void Adam::step(std::vector<std::pair<std::string, Tensor>> params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        if (!p.has_grad()) throw ValueError("adam: missing gradient for parameter '" + name + "'");
        auto g = p.grad();
        auto& mom = moments_[name];
        const size_t n = static_cast<size_t>(p.numel());
        if (mom.m.empty()) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        } else if (mom.m.size() != n) {
            throw ShapeError("adam: moment size mismatch for parameter '" + name + "'");
        }
        auto data = p.mutable_data();
        for (size_t i = 0; i < n; ++i) {
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace lcgan
