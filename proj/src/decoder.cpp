#include "tiseg/decoder.hpp"

#include <cmath>
#include <stdexcept>

namespace tiseg {

SegmentationDecoder::SegmentationDecoder(int64_t mask_channels, int64_t mid_channels, int64_t low_channels,
                                         std::array<int64_t, 3> widths, std::mt19937_64& rng)
    : fuse_(2 * mask_channels, widths[0], 3, 1, 1, rng),
      up_mid_(widths[0] + mid_channels, widths[1], 3, 1, 1, rng),
      up_low_(widths[1] + low_channels, widths[2], 3, 1, 1, rng),
      up_full_(widths[2] + 3, std::max<int64_t>(widths[2] / 2, 1), 3, 1, 1, rng),
      project_(std::max<int64_t>(widths[2] / 2, 1), 1, 1, 1, 0, rng, 0.1) {}

SegLogits SegmentationDecoder::decode(const MaskEncoding& tra, const MaskEncoding& ind, const FeatureMap& mid,
                                      const FeatureMap& low, const Tensor& pixels) const {
    const Tensor& a = tra.values;
    const Tensor& b = ind.values;
    if (a.shape() != b.shape())
        throw std::invalid_argument("decoder: encodings differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    if (mid.stride != 8 || low.stride != 4)
        throw std::invalid_argument("decoder: skip strides must be 8 (mid) and 4 (low), got " +
                                    std::to_string(mid.stride) + " and " + std::to_string(low.stride));
    if (mid.height() != 2 * a.dim(2) || low.height() != 4 * a.dim(2) || mid.width() != 2 * a.dim(3) ||
        low.width() != 4 * a.dim(3))
        throw std::invalid_argument("decoder: encodings " + shape_str(a.shape()) +
                                    " are not at stride 16 relative to the skips");
    if (pixels.rank() != 4 || mid.batch() != a.dim(0) || low.batch() != a.dim(0) || pixels.dim(0) != a.dim(0))
        throw std::invalid_argument("decoder: batch size mismatch between encodings and skips");
    if (pixels.dim(1) != 3 || pixels.dim(2) != 16 * a.dim(2) || pixels.dim(3) != 16 * a.dim(3))
        throw std::invalid_argument("decoder: pixel skip " + shape_str(pixels.shape()) +
                                    " is not at stride 1 relative to the encodings");

    Tensor x = relu(fuse_(concat({a, b}, 1)));
    x = relu(up_mid_(concat({upsample_nearest(x, 2), mid.values}, 1)));
    x = relu(up_low_(concat({upsample_nearest(x, 2), low.values}, 1)));
    x = relu(up_full_(concat({upsample_nearest(x, 4), pixels}, 1)));
    return {project_(x)};
}

void SegmentationDecoder::collect(const std::string& prefix, ParamList& out) const {
    fuse_.collect(join_name(prefix, "fuse"), out);
    up_mid_.collect(join_name(prefix, "up_mid"), out);
    up_low_.collect(join_name(prefix, "up_low"), out);
    up_full_.collect(join_name(prefix, "up_full"), out);
    project_.collect(join_name(prefix, "project"), out);
}

std::vector<uint8_t> binarize_probabilities(std::span<const double> probs, double threshold) {
    std::vector<uint8_t> out(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1 : 0;
    return out;
}

std::vector<uint8_t> binarize(const Tensor& logits, double threshold) {
    std::vector<double> p(logits.data().begin(), logits.data().end());
    for (auto& v : p) v = 1.0 / (1.0 + std::exp(-v));
    return binarize_probabilities(p, threshold);
}

}  // namespace tiseg
