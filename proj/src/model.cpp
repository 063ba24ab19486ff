#include "tiseg/model.hpp"

#include <cmath>
#include <stdexcept>

namespace tiseg {

namespace {

const ModelConfig& validated(const ModelConfig& c) {
    validate(c);
    return c;
}

LabelPropagator::Options propagator_options(const ModelConfig& c) {
    LabelPropagator::Options o;
    o.layers = c.decoder_layers;
    o.feedforward = c.decoder_feedforward;
    o.norm = true;
    o.heads = c.attention_heads;
    o.ff_multiplier = c.ff_multiplier;
    o.logit_scale = c.logit_scale;
    return o;
}

// Centres [0, 1] intensities. Inputs never carry gradients.
Tensor standardize(const Tensor& images) {
    std::vector<double> v(images.data().begin(), images.data().end());
    for (auto& x : v) x = (x - 0.5) * 4.0;
    return Tensor::from(images.shape(), std::move(v));
}

}  // namespace

SegmentationModel::SegmentationModel(ModelConfig cfg)
    : SegmentationModel(validated(cfg), std::mt19937_64(cfg.init_seed)) {}

SegmentationModel::SegmentationModel(const ModelConfig& cfg, std::mt19937_64 rng)
    : cfg_(cfg),
      backbone_(std::make_unique<ResidualBackbone>(cfg.backbone_widths, rng)),
      maskenc_(cfg.mask_trunk_channels, cfg.mask_channels, rng),
      encoder_(cfg.backbone_widths[2], cfg.encoder_layers, cfg.attention_heads, cfg.ff_multiplier, cfg.logit_scale,
               cfg.positional_encoding, rng),
      propagator_(cfg.backbone_widths[2], cfg.mask_channels, propagator_options(cfg), rng),
      decoder_(cfg.mask_channels, cfg.backbone_widths[1], cfg.backbone_widths[0], cfg.decoder_widths, rng) {
    if (cfg_.learn_lambda) log_lambda_ = Tensor::scalar(std::log(cfg_.lambda), true);
}

Tensor SegmentationModel::lambda_tensor() const {
    return cfg_.learn_lambda ? exp(log_lambda_) : Tensor::scalar(cfg_.lambda);
}

double SegmentationModel::lambda_value() const { return cfg_.learn_lambda ? std::exp(log_lambda_.item()) : cfg_.lambda; }

ModelOutput SegmentationModel::forward(const Tensor& template_images, const Tensor& template_masks,
                                       const Tensor& target_images, int solver_steps) const {
    if (template_images.rank() != 4 || target_images.rank() != 4 || template_masks.rank() != 4)
        throw std::invalid_argument("model forward expects NCHW tensors");
    const int64_t N = template_images.dim(0), B = target_images.dim(0);
    if (N < 1) throw std::invalid_argument("model forward: empty template set");
    if (template_masks.dim(0) != N)
        throw std::invalid_argument("model forward: " + std::to_string(N) + " template images but " +
                                    std::to_string(template_masks.dim(0)) + " masks");
    if (template_images.dim(2) != target_images.dim(2) || template_images.dim(3) != target_images.dim(3) ||
        template_masks.dim(2) != template_images.dim(2) || template_masks.dim(3) != template_images.dim(3))
        throw std::invalid_argument("model forward: template and target patch sizes differ");

    const Tensor targets = standardize(target_images);
    FeaturePyramid all = backbone_->extract(concat({standardize(template_images), targets}, 0));
    auto split = [&](const FeatureMap& fm, bool templates) {
        return FeatureMap{templates ? slice(fm.values, 0, 0, N) : slice(fm.values, 0, N, N + B), fm.stride, fm.level};
    };
    const FeatureMap deep_t = split(all.deep, true);
    const FeatureMap deep_x = split(all.deep, false);

    ModelOutput out;
    out.target_deep = deep_x;
    const Shape enc_shape{B, cfg_.mask_channels, deep_x.height(), deep_x.width()};

    std::pair<MaskEncoding, MaskEncoding> encodings;
    if (cfg_.use_transduction || cfg_.use_induction) encodings = maskenc_.encode_both(template_masks);

    if (cfg_.use_transduction) {
        TokenSequence templates = encoder_.encode_templates(deep_t);
        std::vector<Tensor> per_target;
        per_target.reserve(static_cast<size_t>(B));
        for (int64_t b = 0; b < B; ++b) {
            TokenSequence target = encoder_.encode_target(deep_x, b);
            per_target.push_back(propagator_.propagate(target, templates, encodings.first).values);
        }
        out.tra = {B == 1 ? per_target[0] : concat(per_target, 0), Head::tra};
    } else {
        out.tra = {Tensor::zeros(enc_shape), Head::tra};
    }

    if (cfg_.use_induction) {
        FewShotProblem problem{deep_t.values, encodings.second.values, lambda_tensor(), cfg_.kernel_size};
        LearnedKernel kernel = solve_iterative(problem, solver_steps);
        out.solver_trace = kernel.trace;
        if (grad_enabled() && problem.encodings.requires_grad()) {
            // The objective as a training signal treats the encodings as fixed
            // targets; otherwise the encoder can zero it by emitting zeros.
            FewShotProblem fixed = problem;
            fixed.encodings = problem.encodings.detach();
            LearnedKernel k2 = solve_iterative(fixed, solver_steps);
            out.inner_objective = k2.objective;
            out.inner_data_term = k2.data_term;
        } else {
            out.inner_objective = kernel.objective;
            out.inner_data_term = kernel.data_term;
        }
        out.ind = apply_kernel(kernel, deep_x.values);
    } else {
        out.ind = {Tensor::zeros(enc_shape), Head::ind};
    }

    out.logits = decoder_.decode(out.tra, out.ind, split(all.mid, false), split(all.low, false), targets);
    return out;
}

ParamList SegmentationModel::parameters() const {
    ParamList out;
    backbone_->collect("backbone", out);
    maskenc_.collect("maskenc", out);
    encoder_.collect("transduction.encoder", out);
    propagator_.collect("transduction.propagator", out);
    decoder_.collect("decoder", out);
    if (log_lambda_.defined()) out.emplace_back("induction.log_lambda", log_lambda_);
    return out;
}

}  // namespace tiseg
