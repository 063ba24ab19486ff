#pragma once

#include <memory>
#include <vector>

#include "tiseg/backbone.hpp"
#include "tiseg/config.hpp"
#include "tiseg/decoder.hpp"
#include "tiseg/induction.hpp"
#include "tiseg/maskenc.hpp"
#include "tiseg/transduction.hpp"

namespace tiseg {

struct ModelOutput {
    SegLogits logits;
    Tensor inner_objective;  // undefined when the induction branch is off
    Tensor inner_data_term;
    std::vector<double> solver_trace;
    FeatureMap target_deep;
    MaskEncoding tra;  // target-aligned branch outputs, B x D x h x w
    MaskEncoding ind;
};

// Joint transductive/inductive segmentation network.
class SegmentationModel {
public:
    explicit SegmentationModel(ModelConfig cfg);
    SegmentationModel(const SegmentationModel&) = delete;
    SegmentationModel& operator=(const SegmentationModel&) = delete;

    // template_images N x 3 x S x S, template_masks N x 1 x S x S (binary),
    // target_images B x 3 x S x S.
    ModelOutput forward(const Tensor& template_images, const Tensor& template_masks, const Tensor& target_images,
                        int solver_steps) const;

    FeaturePyramid features(const Tensor& images) const { return backbone_->extract(images); }

    // Stable, name-ordered list of every learnable tensor.
    ParamList parameters() const;
    double lambda_value() const;
    const ModelConfig& config() const { return cfg_; }

    const MaskEncoder& mask_encoder() const { return maskenc_; }
    const TransformerEncoder& encoder() const { return encoder_; }
    const LabelPropagator& propagator() const { return propagator_; }

private:
    SegmentationModel(const ModelConfig& cfg, std::mt19937_64 rng);
    Tensor lambda_tensor() const;

    ModelConfig cfg_;
    std::unique_ptr<FeatureExtractor> backbone_;
    MaskEncoder maskenc_;
    TransformerEncoder encoder_;
    LabelPropagator propagator_;
    SegmentationDecoder decoder_;
    Tensor log_lambda_;  // learnable when cfg.learn_lambda
};

}  // namespace tiseg
