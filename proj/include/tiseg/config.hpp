#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace tiseg {

// Architecture knobs. Defaults are the desk-scale reference model.
struct ModelConfig {
    std::array<int64_t, 3> backbone_widths{32, 64, 256};  // strides 4 / 8 / 16
    int64_t mask_channels = 16;                           // D, per encoder head
    int64_t mask_trunk_channels = 32;
    int attention_heads = 4;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int ff_multiplier = 2;
    double logit_scale = 1.0 / 30.0;  // multiplies q.k logits
    bool positional_encoding = true;
    bool decoder_feedforward = true;
    int kernel_size = 3;  // few-shot learner filter size
    double lambda = 1e-2;
    bool learn_lambda = false;
    int solver_steps_train = 5;
    int solver_steps_infer = 10;
    std::string induction_apply_to = "target";
    bool use_transduction = true;
    bool use_induction = true;
    std::array<int64_t, 3> decoder_widths{64, 32, 16};
    uint64_t init_seed = 1;
};

struct TrainConfig {
    int n_templates = 5;
    int b_targets = 5;
    double lr = 1e-4;
    double weight_decay = 1e-4;  // decoupled
    int epochs = 1;
    int episodes_per_epoch = 0;  // 0: ceil(train patches / b_targets)
    double loss_weight_inner = 1.0;
    uint64_t seed = 0;
    double val_fraction = 0.1;
    std::string precision = "double";
    int patch_size = 256;
    int overlap = 128;
    bool augment = true;
    int val_max_patches = 0;  // 0: all validation patches
};

struct StageConfig {
    int stage = 1;
    int n_templates = 5;
    int k_candidates = 20;
    bool exclude_self = true;
    uint64_t template_seed = 0;
    int threads = 1;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const StageConfig& c);
void from_json(const nlohmann::json& j, StageConfig& c);

// Throws std::invalid_argument on violated invariants.
void validate(const ModelConfig& c);
void validate(const TrainConfig& c);
void validate(const StageConfig& c);

}  // namespace tiseg
