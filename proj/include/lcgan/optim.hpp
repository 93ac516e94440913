#ifndef LCGAN_OPTIM_HPP
#define LCGAN_OPTIM_HPP

#include <map>
#include <string>
#include <vector>

#include "lcgan/nn.hpp"
#include "lcgan/tensor.hpp"

namespace lcgan {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. Moment buffers are keyed by parameter name and
// allocated lazily; a parameter without a populated gradient is an error.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<std::pair<std::string, Tensor>> params);
    void step(Network& net) { step(net.trainable()); }

    int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace lcgan

#endif
