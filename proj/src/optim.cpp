#include "gvci/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gvci {

void Adam::step(const std::vector<Parameter*>& params) {
    if (m_.empty()) {
        for (const Parameter* p : params) {
            m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        }
    }
    if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        if (p.grad.size() != p.value.size()) continue;
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * p.grad.cwiseAbs2();
        p.value.array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
}

}  // namespace gvci
