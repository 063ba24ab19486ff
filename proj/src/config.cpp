#include "tiseg/config.hpp"

#include <set>
#include <stdexcept>

namespace tiseg {

namespace {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& field) {
    if (auto it = j.find(key); it != j.end()) field = it->template get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* section) {
    if (!j.is_object()) throw std::invalid_argument(std::string(section) + " config must be an object");
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw std::invalid_argument(std::string("unknown key '") + k + "' in " + section + " config");
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"backbone_widths", c.backbone_widths},
         {"mask_channels", c.mask_channels},
         {"mask_trunk_channels", c.mask_trunk_channels},
         {"attention_heads", c.attention_heads},
         {"encoder_layers", c.encoder_layers},
         {"decoder_layers", c.decoder_layers},
         {"ff_multiplier", c.ff_multiplier},
         {"logit_scale", c.logit_scale},
         {"positional_encoding", c.positional_encoding},
         {"decoder_feedforward", c.decoder_feedforward},
         {"kernel_size", c.kernel_size},
         {"lambda", c.lambda},
         {"learn_lambda", c.learn_lambda},
         {"solver_steps_train", c.solver_steps_train},
         {"solver_steps_infer", c.solver_steps_infer},
         {"induction_apply_to", c.induction_apply_to},
         {"use_transduction", c.use_transduction},
         {"use_induction", c.use_induction},
         {"decoder_widths", c.decoder_widths},
         {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    reject_unknown(j,
                   {"backbone_widths", "mask_channels", "mask_trunk_channels", "attention_heads", "encoder_layers",
                    "decoder_layers", "ff_multiplier", "logit_scale", "positional_encoding", "decoder_feedforward",
                    "kernel_size", "lambda", "learn_lambda", "solver_steps_train", "solver_steps_infer",
                    "induction_apply_to", "use_transduction", "use_induction", "decoder_widths", "init_seed"},
                   "model");
    take(j, "backbone_widths", c.backbone_widths);
    take(j, "mask_channels", c.mask_channels);
    take(j, "mask_trunk_channels", c.mask_trunk_channels);
    take(j, "attention_heads", c.attention_heads);
    take(j, "encoder_layers", c.encoder_layers);
    take(j, "decoder_layers", c.decoder_layers);
    take(j, "ff_multiplier", c.ff_multiplier);
    take(j, "logit_scale", c.logit_scale);
    take(j, "positional_encoding", c.positional_encoding);
    take(j, "decoder_feedforward", c.decoder_feedforward);
    take(j, "kernel_size", c.kernel_size);
    take(j, "lambda", c.lambda);
    take(j, "learn_lambda", c.learn_lambda);
    take(j, "solver_steps_train", c.solver_steps_train);
    take(j, "solver_steps_infer", c.solver_steps_infer);
    take(j, "induction_apply_to", c.induction_apply_to);
    take(j, "use_transduction", c.use_transduction);
    take(j, "use_induction", c.use_induction);
    take(j, "decoder_widths", c.decoder_widths);
    take(j, "init_seed", c.init_seed);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"n_templates", c.n_templates},
         {"b_targets", c.b_targets},
         {"lr", c.lr},
         {"weight_decay", c.weight_decay},
         {"epochs", c.epochs},
         {"episodes_per_epoch", c.episodes_per_epoch},
         {"loss_weight_inner", c.loss_weight_inner},
         {"seed", c.seed},
         {"val_fraction", c.val_fraction},
         {"precision", c.precision},
         {"patch_size", c.patch_size},
         {"overlap", c.overlap},
         {"augment", c.augment},
         {"val_max_patches", c.val_max_patches}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    reject_unknown(j,
                   {"n_templates", "b_targets", "lr", "weight_decay", "epochs", "episodes_per_epoch",
                    "loss_weight_inner", "seed", "val_fraction", "precision", "patch_size", "overlap", "augment",
                    "val_max_patches"},
                   "train");
    take(j, "n_templates", c.n_templates);
    take(j, "b_targets", c.b_targets);
    take(j, "lr", c.lr);
    take(j, "weight_decay", c.weight_decay);
    take(j, "epochs", c.epochs);
    take(j, "episodes_per_epoch", c.episodes_per_epoch);
    take(j, "loss_weight_inner", c.loss_weight_inner);
    take(j, "seed", c.seed);
    take(j, "val_fraction", c.val_fraction);
    take(j, "precision", c.precision);
    take(j, "patch_size", c.patch_size);
    take(j, "overlap", c.overlap);
    take(j, "augment", c.augment);
    take(j, "val_max_patches", c.val_max_patches);
}

void to_json(nlohmann::json& j, const StageConfig& c) {
    j = {{"stage", c.stage},
         {"n_templates", c.n_templates},
         {"k_candidates", c.k_candidates},
         {"exclude_self", c.exclude_self},
         {"template_seed", c.template_seed},
         {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, StageConfig& c) {
    reject_unknown(j, {"stage", "n_templates", "k_candidates", "exclude_self", "template_seed", "threads"}, "stage");
    take(j, "stage", c.stage);
    take(j, "n_templates", c.n_templates);
    take(j, "k_candidates", c.k_candidates);
    take(j, "exclude_self", c.exclude_self);
    take(j, "template_seed", c.template_seed);
    take(j, "threads", c.threads);
}

void validate(const ModelConfig& c) {
    for (auto w : c.backbone_widths)
        if (w < 1) throw std::invalid_argument("backbone widths must be positive");
    for (auto w : c.decoder_widths)
        if (w < 1) throw std::invalid_argument("decoder widths must be positive");
    if (c.mask_channels < 1 || c.mask_trunk_channels < 1) throw std::invalid_argument("mask channels must be positive");
    if (c.attention_heads < 1 || c.backbone_widths[2] % c.attention_heads != 0)
        throw std::invalid_argument("deep width must be divisible by attention_heads");
    if (c.encoder_layers < 0 || c.decoder_layers < 1) throw std::invalid_argument("bad transformer layer counts");
    if (c.ff_multiplier < 1) throw std::invalid_argument("ff_multiplier must be >= 1");
    if (!(c.logit_scale > 0.0)) throw std::invalid_argument("logit_scale (tau) must be > 0");
    if (c.kernel_size < 1 || c.kernel_size % 2 == 0) throw std::invalid_argument("kernel_size must be odd");
    if (c.lambda < 0.0 || (c.learn_lambda && c.lambda <= 0.0))
        throw std::invalid_argument("lambda must be >= 0 (> 0 when learnable)");
    if (c.solver_steps_train < 1 || c.solver_steps_infer < 1) throw std::invalid_argument("solver steps must be >= 1");
    if (!c.use_transduction && !c.use_induction)
        throw std::invalid_argument("at least one of use_transduction / use_induction must be on");
    if (c.induction_apply_to != "target")
        throw std::invalid_argument("induction_apply_to='" + c.induction_apply_to +
                                    "' is not supported; the decoder needs target-aligned encodings ('target')");
}

void validate(const TrainConfig& c) {
    if (c.n_templates < 1 || c.b_targets < 1) throw std::invalid_argument("n_templates and b_targets must be >= 1");
    if (!(c.lr > 0.0) || c.weight_decay < 0.0) throw std::invalid_argument("lr must be > 0, weight_decay >= 0");
    if (c.epochs < 0 || c.episodes_per_epoch < 0) throw std::invalid_argument("epochs must be >= 0");
    if (c.loss_weight_inner < 0.0) throw std::invalid_argument("loss_weight_inner must be >= 0");
    if (!(c.val_fraction > 0.0 && c.val_fraction <= 0.5)) throw std::invalid_argument("val_fraction must be in (0, 0.5]");
    if (c.precision != "double")
        throw std::invalid_argument("precision '" + c.precision + "' is not available; only 'double' is implemented");
    if (c.patch_size < 16 || c.patch_size % 16 != 0) throw std::invalid_argument("patch_size must be a multiple of 16");
    if (c.overlap < 0 || c.overlap >= c.patch_size) throw std::invalid_argument("overlap must be in [0, patch_size)");
}

void validate(const StageConfig& c) {
    if (c.stage != 1 && c.stage != 2) throw std::invalid_argument("stage must be 1 or 2");
    if (c.n_templates < 1) throw std::invalid_argument("n_templates must be >= 1");
    if (c.stage == 2 && c.n_templates > c.k_candidates)
        throw std::invalid_argument("stage 2 needs n_templates <= k_candidates");
    if (c.threads < 1) throw std::invalid_argument("threads must be >= 1");
}

}  // namespace tiseg
