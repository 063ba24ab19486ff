#pragma once

#include <array>
#include <memory>
#include <random>
#include <vector>

#include "tiseg/nn.hpp"

namespace tiseg {

enum class Level { low, mid, deep };

struct FeatureMap {
    Tensor values;  // N x C x h x w
    int stride = 1;
    Level level = Level::deep;

    int64_t batch() const { return values.dim(0); }
    int64_t channels() const { return values.dim(1); }
    int64_t height() const { return values.dim(2); }
    int64_t width() const { return values.dim(3); }
};

struct FeaturePyramid {
    FeatureMap low;   // stride 4
    FeatureMap mid;   // stride 8
    FeatureMap deep;  // stride 16
};

// Seam for swapping in a different (e.g. pretrained) feature extractor. Any
// implementation must honour the stride-4/8/16 contract.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual FeaturePyramid extract(const Tensor& images) const = 0;
    virtual int64_t channels(Level level) const = 0;
    virtual void collect(const std::string& prefix, ParamList& out) const = 0;
};

struct ResidualBlock {
    Conv2d conv1;
    Conv2d conv2;

    ResidualBlock() = default;
    ResidualBlock(int64_t width, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Three-stage residual network: widths[0] at stride 4, widths[1] at 8,
// widths[2] at 16.
class ResidualBackbone final : public FeatureExtractor {
public:
    ResidualBackbone(std::array<int64_t, 3> widths, std::mt19937_64& rng);

    // images: B x 3 x S x S with S divisible by 16.
    FeaturePyramid extract(const Tensor& images) const override;
    int64_t channels(Level level) const override;
    void collect(const std::string& prefix, ParamList& out) const override;

private:
    std::array<int64_t, 3> widths_;
    Conv2d stem1_, stem2_;
    ResidualBlock block_low_;
    Conv2d down_mid_;
    ResidualBlock block_mid_;
    Conv2d down_deep_;
    ResidualBlock block_deep_;
};

struct Descriptor {
    std::vector<double> values;
    bool zero = false;  // pooled map was all zeros; values left at 0
};

// Global average pool of one batch item followed by L2 normalisation.
Descriptor pooled_descriptor(const FeatureMap& fm, int64_t item = 0);

}  // namespace tiseg
