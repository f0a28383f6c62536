#pragma once

#include "gvci/autodiff.hpp"

#include <vector>

namespace gvci {

// Adam with bias correction. State is keyed by position in the parameter list,
// so the same list (same order) must be passed to every step().
class Adam {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Parameter*>& params);
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

}  // namespace gvci
