#include "tiseg/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace tiseg {

ResidualBlock::ResidualBlock(int64_t width, std::mt19937_64& rng)
    : conv1(width, width, 3, 1, 1, rng), conv2(width, width, 3, 1, 1, rng, 0.5) {}

Tensor ResidualBlock::operator()(const Tensor& x) const { return relu(add(x, conv2(relu(conv1(x))))); }

void ResidualBlock::collect(const std::string& prefix, ParamList& out) const {
    conv1.collect(join_name(prefix, "conv1"), out);
    conv2.collect(join_name(prefix, "conv2"), out);
}

ResidualBackbone::ResidualBackbone(std::array<int64_t, 3> widths, std::mt19937_64& rng)
    : widths_(widths),
      stem1_(3, std::max<int64_t>(widths[0] / 2, 1), 3, 2, 1, rng),
      stem2_(std::max<int64_t>(widths[0] / 2, 1), widths[0], 3, 2, 1, rng),
      block_low_(widths[0], rng),
      down_mid_(widths[0], widths[1], 3, 2, 1, rng),
      block_mid_(widths[1], rng),
      down_deep_(widths[1], widths[2], 3, 2, 1, rng),
      block_deep_(widths[2], rng) {}

FeaturePyramid ResidualBackbone::extract(const Tensor& images) const {
    if (images.rank() != 4 || images.dim(1) != 3)
        throw std::invalid_argument("backbone expects B x 3 x S x S images, got " + shape_str(images.shape()));
    if (images.dim(2) % 16 != 0 || images.dim(3) % 16 != 0)
        throw std::invalid_argument("backbone input size " + std::to_string(images.dim(2)) + "x" +
                                    std::to_string(images.dim(3)) + " is not divisible by 16");
    Tensor x = relu(stem2_(relu(stem1_(images))));
    Tensor low = block_low_(x);
    Tensor mid = block_mid_(relu(down_mid_(low)));
    Tensor deep = block_deep_(relu(down_deep_(mid)));
    return {{low, 4, Level::low}, {mid, 8, Level::mid}, {deep, 16, Level::deep}};
}

int64_t ResidualBackbone::channels(Level level) const {
    switch (level) {
        case Level::low: return widths_[0];
        case Level::mid: return widths_[1];
        case Level::deep: return widths_[2];
    }
    return 0;
}

void ResidualBackbone::collect(const std::string& prefix, ParamList& out) const {
    stem1_.collect(join_name(prefix, "stem1"), out);
    stem2_.collect(join_name(prefix, "stem2"), out);
    block_low_.collect(join_name(prefix, "block_low"), out);
    down_mid_.collect(join_name(prefix, "down_mid"), out);
    block_mid_.collect(join_name(prefix, "block_mid"), out);
    down_deep_.collect(join_name(prefix, "down_deep"), out);
    block_deep_.collect(join_name(prefix, "block_deep"), out);
}

Descriptor pooled_descriptor(const FeatureMap& fm, int64_t item) {
    if (fm.level != Level::deep) throw std::invalid_argument("pooled_descriptor expects the deep feature level");
    const int64_t C = fm.channels(), HW = fm.height() * fm.width();
    if (item < 0 || item >= fm.batch()) throw std::out_of_range("pooled_descriptor: batch item out of range");
    Descriptor d;
    d.values.assign(static_cast<size_t>(C), 0.0);
    auto v = fm.values.data();
    for (int64_t c = 0; c < C; ++c) {
        const double* p = v.data() + (item * C + c) * HW;
        double acc = 0.0;
        for (int64_t i = 0; i < HW; ++i) acc += p[i];
        d.values[static_cast<size_t>(c)] = acc / static_cast<double>(HW);
    }
    double norm = 0.0;
    for (double x : d.values) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        d.zero = true;
        return d;
    }
    for (auto& x : d.values) x /= norm;
    return d;
}

}  // namespace tiseg
