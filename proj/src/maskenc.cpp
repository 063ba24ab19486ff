#include "tiseg/maskenc.hpp"

#include <stdexcept>

namespace tiseg {

MaskEncoder::MaskEncoder(int64_t trunk_channels, int64_t out_channels, std::mt19937_64& rng)
    : out_channels_(out_channels),
      conv1_(1, std::max<int64_t>(trunk_channels / 4, 1), 3, 2, 1, rng),
      conv2_(std::max<int64_t>(trunk_channels / 4, 1), std::max<int64_t>(trunk_channels / 2, 1), 3, 2, 1, rng),
      conv3_(std::max<int64_t>(trunk_channels / 2, 1), trunk_channels, 4, 4, 0, rng),
      head_tra_(trunk_channels, out_channels, 1, 1, 0, rng),
      head_ind_(trunk_channels, out_channels, 1, 1, 0, rng) {}

Tensor MaskEncoder::trunk(const Tensor& masks) const {
    if (masks.rank() != 4 || masks.dim(1) != 1)
        throw std::invalid_argument("mask encoder expects N x 1 x S x S, got " + shape_str(masks.shape()));
    if (masks.dim(2) % 16 != 0 || masks.dim(3) % 16 != 0)
        throw std::invalid_argument("mask size is not divisible by 16: " + shape_str(masks.shape()));
    for (double v : masks.data())
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("mask encoder input must be binary (binarize pseudo-labels first)");
    return relu(conv3_(relu(conv2_(relu(conv1_(masks))))));
}

MaskEncoding MaskEncoder::encode(const Tensor& masks, Head head) const {
    Tensor t = trunk(masks);
    return {head == Head::tra ? head_tra_(t) : head_ind_(t), head};
}

std::pair<MaskEncoding, MaskEncoding> MaskEncoder::encode_both(const Tensor& masks) const {
    Tensor t = trunk(masks);
    return {{head_tra_(t), Head::tra}, {head_ind_(t), Head::ind}};
}

void MaskEncoder::collect(const std::string& prefix, ParamList& out) const {
    conv1_.collect(join_name(prefix, "trunk.conv1"), out);
    conv2_.collect(join_name(prefix, "trunk.conv2"), out);
    conv3_.collect(join_name(prefix, "trunk.conv3"), out);
    head_tra_.collect(join_name(prefix, "head_tra"), out);
    head_ind_.collect(join_name(prefix, "head_ind"), out);
}

}  // namespace tiseg
