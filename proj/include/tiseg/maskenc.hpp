#pragma once

#include <random>

#include "tiseg/nn.hpp"

namespace tiseg {

enum class Head { tra, ind };

struct MaskEncoding {
    Tensor values;  // N x D x h x w at stride 16
    Head head = Head::tra;
};

// Two-head label encoder. A shared strided trunk (2, 2, 4) brings binary masks
// to stride 16; each head is a 1x1 projection to D channels.
class MaskEncoder {
public:
    MaskEncoder(int64_t trunk_channels, int64_t out_channels, std::mt19937_64& rng);

    // masks: N x 1 x S x S with values in {0, 1}.
    MaskEncoding encode(const Tensor& masks, Head head) const;
    std::pair<MaskEncoding, MaskEncoding> encode_both(const Tensor& masks) const;

    int64_t channels() const { return out_channels_; }
    void collect(const std::string& prefix, ParamList& out) const;

private:
    Tensor trunk(const Tensor& masks) const;

    int64_t out_channels_;
    Conv2d conv1_, conv2_, conv3_;
    Conv2d head_tra_, head_ind_;
};

}  // namespace tiseg
