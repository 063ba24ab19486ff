#pragma once

#include <cstdint>
#include <vector>

#include "tiseg/nn.hpp"

namespace tiseg {

// Adam with decoupled weight decay. Decay is applied to every parameter,
// scaled by lr, before the moment update.
class AdamW {
public:
    struct Options {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    AdamW(ParamList params, Options opt);

    // Parameters without a gradient buffer are skipped (moments untouched).
    void step();
    void zero_grad();

    int64_t steps() const { return t_; }
    const Options& options() const { return opt_; }
    void set_lr(double lr) { opt_.lr = lr; }

    // Moment buffers in parameter order, for checkpointing.
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    void set_steps(int64_t t) { t_ = t; }

private:
    ParamList params_;
    Options opt_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace tiseg
