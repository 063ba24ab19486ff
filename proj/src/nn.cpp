#include "tiseg/nn.hpp"

#include <cmath>

namespace tiseg {

Tensor he_normal(Shape shape, int64_t fan_in, std::mt19937_64& rng, double gain) {
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor xavier_normal(Shape shape, int64_t fan_in, int64_t fan_out, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Conv2d::Conv2d(int64_t in_ch, int64_t out_ch, int kernel, int stride_, int pad_, std::mt19937_64& rng, double gain)
    : weight(he_normal({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng, gain)),
      bias(Tensor::zeros({out_ch}, true)),
      stride(stride_),
      pad(pad_) {}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(join_name(prefix, "weight"), weight);
    out.emplace_back(join_name(prefix, "bias"), bias);
}

Linear::Linear(int64_t in, int64_t out, std::mt19937_64& rng, bool with_bias)
    : weight(xavier_normal({in, out}, in, out, rng)) {
    if (with_bias) bias = Tensor::zeros({out}, true);
}

Tensor Linear::operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add_rowwise(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(join_name(prefix, "weight"), weight);
    if (bias.defined()) out.emplace_back(join_name(prefix, "bias"), bias);
}

LayerNorm::LayerNorm(int64_t width) : gamma(Tensor::full({width}, 1.0, true)), beta(Tensor::zeros({width}, true)) {}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(join_name(prefix, "gamma"), gamma);
    out.emplace_back(join_name(prefix, "beta"), beta);
}

}  // namespace tiseg
