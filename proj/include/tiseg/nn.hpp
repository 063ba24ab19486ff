#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tiseg/ops.hpp"

namespace tiseg {

using NamedTensor = std::pair<std::string, Tensor>;
using ParamList = std::vector<NamedTensor>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

// He-normal init over fan_in.
Tensor he_normal(Shape shape, int64_t fan_in, std::mt19937_64& rng, double gain = 1.0);
Tensor xavier_normal(Shape shape, int64_t fan_in, int64_t fan_out, std::mt19937_64& rng);

struct Conv2d {
    Tensor weight;  // OC x IC x k x k
    Tensor bias;    // OC
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(int64_t in_ch, int64_t out_ch, int kernel, int stride, int pad, std::mt19937_64& rng, double gain = 1.0);
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }
    void collect(const std::string& prefix, ParamList& out) const;
};

struct Linear {
    Tensor weight;  // in x out
    Tensor bias;    // out, may be undefined

    Linear() = default;
    Linear(int64_t in, int64_t out, std::mt19937_64& rng, bool with_bias = true);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    LayerNorm() = default;
    explicit LayerNorm(int64_t width);
    Tensor operator()(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }
    void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace tiseg
