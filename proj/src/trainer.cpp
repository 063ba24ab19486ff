#include "tiseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "tiseg/inference.hpp"

namespace tiseg {

namespace {

AdamW::Options adam_options(const TrainConfig& c) {
    AdamW::Options o;
    o.lr = c.lr;
    o.weight_decay = c.weight_decay;
    return o;
}

std::string rng_text(const std::mt19937_64& rng) {
    std::ostringstream s;
    s << rng;
    return s.str();
}

class Log {
public:
    explicit Log(const TrainHooks& h) : hooks_(h) {
        if (h.log_path) {
            file_.open(*h.log_path, std::ios::app);
            if (!file_) throw std::runtime_error("cannot open training log " + h.log_path->string());
        }
    }
    void write(const nlohmann::json& j) {
        if (file_.is_open()) file_ << j.dump() << '\n' << std::flush;
        if (hooks_.on_record) hooks_.on_record(j);
    }

private:
    const TrainHooks& hooks_;
    std::ofstream file_;
};

int episodes_per_epoch(const TrainConfig& cfg, size_t pool) {
    if (cfg.episodes_per_epoch > 0) return cfg.episodes_per_epoch;
    return static_cast<int>((pool + static_cast<size_t>(cfg.b_targets) - 1) / static_cast<size_t>(cfg.b_targets));
}

// Runs `epochs` epochs on `pool`, scoring on `val` after each one when given.
struct LoopResult {
    Checkpoint best;
    Checkpoint last;
    int best_epoch = 0;
};

LoopResult run_epochs(SegmentationModel& model, const TrainConfig& cfg, std::span<const Patch> pool,
                      const Dataset* val, int epochs, const TrainHooks& hooks) {
    Log log(hooks);
    EpisodeTrainer trainer(model, cfg);
    std::mt19937_64 master(cfg.seed);
    const int per_epoch = episodes_per_epoch(cfg, pool.size());

    LoopResult out;
    std::vector<EpochRecord> history;
    auto score = [&](int epoch, double mean_loss) {
        EpochRecord r{epoch, mean_loss, 0.0, 0.0};
        if (val) {
            const auto s = validate_model(model, pool, *val, cfg, hooks.threads);
            r.val_dice = s.dice;
            r.val_f1 = s.f1;
        }
        history.push_back(r);
        log.write({{"type", "epoch"}, {"epoch", epoch}, {"mean_loss", mean_loss}, {"val_dice", r.val_dice},
                   {"val_f1", r.val_f1}, {"lr", cfg.lr}});
        return r;
    };

    const EpochRecord initial = score(0, std::nan(""));
    out.best = snapshot(model, cfg, 0);
    double best_f1 = initial.val_f1;

    int64_t step = 0;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        double loss_sum = 0.0;
        for (int e = 0; e < per_epoch; ++e, ++step) {
            const uint64_t seed = master();
            const Episode ep = sample_episode(pool, cfg.n_templates, cfg.b_targets, seed, cfg.augment);
            const StepLosses l = trainer.step(ep, seed, step);
            loss_sum += l.total;
            log.write({{"type", "step"}, {"step", step}, {"epoch", epoch}, {"episode_seed", seed}, {"loss", l.total},
                       {"bce", l.bce}, {"inner", l.inner}, {"lr", cfg.lr}});
        }
        const EpochRecord r = score(epoch, loss_sum / per_epoch);
        if (val && r.val_f1 > best_f1) {
            best_f1 = r.val_f1;
            out.best = snapshot(model, cfg, epoch);
            out.best_epoch = epoch;
        }
    }
    if (!val) {
        out.best = snapshot(model, cfg, epochs);
        out.best_epoch = epochs;
    }
    out.last = snapshot(model, cfg, epochs);
    for (Checkpoint* c : {&out.best, &out.last}) {
        c->history = history;
        c->rng_state = rng_text(master);
    }
    return out;
}

}  // namespace

EpisodeTrainer::EpisodeTrainer(SegmentationModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), opt_(model.parameters(), adam_options(cfg)) {
    validate(cfg_);
}

EpisodeTrainer::Terms EpisodeTrainer::losses(const Episode& ep) const {
    const auto tp = pointers(ep.templates);
    const auto xp = pointers(ep.targets);
    const ModelOutput out = model_.forward(pixels_tensor(tp), masks_tensor(tp), pixels_tensor(xp),
                                           model_.config().solver_steps_train);
    Terms t;
    t.bce = bce_with_logits(out.logits.values, masks_tensor(xp));
    if (out.inner_objective.defined()) {
        // Per residual element, so the weight does not depend on patch size.
        const double count = static_cast<double>(ep.templates.size()) * static_cast<double>(model_.config().mask_channels) *
                             static_cast<double>(out.target_deep.height() * out.target_deep.width());
        t.inner = div_scalar(out.inner_objective, Tensor::scalar(count));
        t.total = add(t.bce, mul_scalar(t.inner, Tensor::scalar(cfg_.loss_weight_inner)));
    } else {
        t.inner = Tensor::scalar(0.0);
        t.total = t.bce;
    }
    return t;
}

StepLosses EpisodeTrainer::evaluate(const Episode& ep) const {
    NoGradGuard guard;
    const Terms t = losses(ep);
    return {t.total.item(), t.bce.item(), t.inner.item()};
}

StepLosses EpisodeTrainer::step(const Episode& ep, uint64_t episode_seed, int64_t step_index) {
    const Terms t = losses(ep);
    const StepLosses l{t.total.item(), t.bce.item(), t.inner.item()};
    if (!std::isfinite(l.total))
        throw NumericError("non-finite loss at step " + std::to_string(step_index) + " (episode seed " +
                               std::to_string(episode_seed) + ")",
                           episode_seed, step_index);
    opt_.zero_grad();
    t.total.backward();
    opt_.step();
    return l;
}

DataSplit split_by_image(const Dataset& d, double val_fraction, uint64_t seed) {
    if (d.size() < 2) throw std::invalid_argument("validation split needs at least 2 images, got " + std::to_string(d.size()));
    if (!(val_fraction > 0.0 && val_fraction <= 0.5))
        throw std::invalid_argument("val_fraction must lie in (0, 0.5]");
    std::vector<size_t> idx(d.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_val = std::clamp<size_t>(static_cast<size_t>(std::ceil(val_fraction * static_cast<double>(d.size()))),
                                          1, d.size() - 1);
    std::vector<size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::sort(val_idx.begin(), val_idx.end());
    DataSplit s;
    for (size_t i = 0; i < d.size(); ++i)
        (std::binary_search(val_idx.begin(), val_idx.end(), i) ? s.val : s.train).push_back(d[i]);
    return s;
}

std::vector<Patch> patch_dataset(const Dataset& d, int size, int overlap) {
    std::vector<Patch> out;
    for (const auto& r : d)
        for (auto& p : make_patches(r, size, overlap)) out.push_back(std::move(p));
    return out;
}

ValidationScore validate_model(const SegmentationModel& model, std::span<const Patch> train_pool, const Dataset& val,
                               const TrainConfig& cfg, int threads) {
    StageConfig sc;
    sc.n_templates = cfg.n_templates;
    sc.k_candidates = std::max(cfg.n_templates, sc.k_candidates);
    sc.template_seed = cfg.seed;
    const auto patches = patch_dataset(val, cfg.patch_size, cfg.overlap);
    InferenceOptions io;
    io.threads = threads;

    std::map<std::string, BinaryMask> preds, gts;
    if (cfg.val_max_patches > 0 && static_cast<size_t>(cfg.val_max_patches) < patches.size()) {
        // Capped: score patches individually.
        std::span<const Patch> subset(patches.data(), static_cast<size_t>(cfg.val_max_patches));
        const auto store = run_stage1(model, train_pool, subset, sc, io);
        for (const auto& p : subset) {
            const int S = p.geom.size;
            preds.emplace(p.id(), BinaryMask{S, S, binarize_probabilities(store.entries.at(p.id()).prob, 0.5)});
            gts.emplace(p.id(), BinaryMask{S, S, *p.mask});
        }
    } else {
        const auto store = run_stage1(model, train_pool, patches, sc, io);
        const auto geom = geometry_of(val);
        preds = assemble(store, geom, cfg.patch_size, cfg.overlap);
        gts = ground_truth_of(val);
    }
    const EvalReport r = evaluate(preds, gts);
    return {r.dice, r.f1};
}

TrainResult train(const Dataset& dataset, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
    validate(cfg);
    for (const auto& r : dataset)
        if (!r.mask) throw std::invalid_argument("training record " + r.id + " has no mask");
    const DataSplit split = split_by_image(dataset, cfg.val_fraction, cfg.seed);
    const auto pool = patch_dataset(split.train, cfg.patch_size, cfg.overlap);

    SegmentationModel model(model_cfg);
    LoopResult loop = run_epochs(model, cfg, pool, &split.val, cfg.epochs, hooks);

    nlohmann::json val_ids = nlohmann::json::array();
    for (const auto& r : split.val) val_ids.push_back(r.id);
    for (Checkpoint* c : {&loop.best, &loop.last}) {
        c->provenance["kind"] = "train";
        c->provenance["validation_images"] = val_ids;
        c->provenance["best_epoch"] = loop.best_epoch;
    }
    return {std::move(loop.best), std::move(loop.last), loop.best_epoch};
}

Checkpoint retrain_full(const Dataset& dataset, const Checkpoint& selection, const TrainHooks& hooks,
                        std::string* warning) {
    const TrainConfig& cfg = selection.train;
    validate(cfg);
    for (const auto& r : dataset)
        if (!r.mask) throw std::invalid_argument("training record " + r.id + " has no mask");
    const int epochs = selection.epoch;

    SegmentationModel model(selection.model);
    Checkpoint out;
    if (epochs == 0) {
        if (warning) *warning = "selected best epoch is 0; returning the initialization checkpoint";
        out = snapshot(model, cfg, 0);
        out.rng_state = rng_text(std::mt19937_64(cfg.seed));
    } else {
        const auto pool = patch_dataset(dataset, cfg.patch_size, cfg.overlap);
        out = run_epochs(model, cfg, pool, nullptr, epochs, hooks).last;
    }
    const auto bytes = selection.serialize();
    out.provenance = {{"kind", "retrain_full"},
                      {"selection",
                       {{"epoch", selection.epoch},
                        {"checkpoint_hash", fnv1a64(bytes)},
                        {"provenance", selection.provenance}}}};
    return out;
}

}  // namespace tiseg
