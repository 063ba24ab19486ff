#include "tiseg/optim.hpp"

#include <cmath>

namespace tiseg {

AdamW::AdamW(ParamList params, Options opt) : params_(std::move(params)), opt_(opt) {
    for (const auto& [name, p] : params_) {
        m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor p = params_[i].second;
        if (!p.has_grad()) continue;
        auto w = p.mutable_data();
        auto g = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        const double decay = 1.0 - opt_.lr * opt_.weight_decay;
        for (size_t j = 0; j < w.size(); ++j) {
            w[j] *= decay;
            m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g[j];
            v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g[j] * g[j];
            w[j] -= opt_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

}  // namespace tiseg
