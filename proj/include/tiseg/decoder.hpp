#pragma once

#include <array>
#include <random>

#include "tiseg/backbone.hpp"
#include "tiseg/maskenc.hpp"

namespace tiseg {

struct SegLogits {
    Tensor values;  // B x 1 x S x S, pre-sigmoid
};

// Fuses the two target-aligned encodings (channel concatenation) and upsamples
// 16 -> 8 -> 4 -> 1. Each upsampling block concatenates the skip at its
// stride: mid features, low features, then the input pixels themselves.
class SegmentationDecoder {
public:
    SegmentationDecoder(int64_t mask_channels, int64_t mid_channels, int64_t low_channels,
                        std::array<int64_t, 3> widths, std::mt19937_64& rng);

    SegLogits decode(const MaskEncoding& tra, const MaskEncoding& ind, const FeatureMap& mid, const FeatureMap& low,
                     const Tensor& pixels) const;
    void collect(const std::string& prefix, ParamList& out) const;

private:
    Conv2d fuse_, up_mid_, up_low_, up_full_, project_;
};

// Sigmoid then threshold; values at the threshold are foreground.
std::vector<uint8_t> binarize(const Tensor& logits, double threshold = 0.5);
std::vector<uint8_t> binarize_probabilities(std::span<const double> probs, double threshold = 0.5);

}  // namespace tiseg
