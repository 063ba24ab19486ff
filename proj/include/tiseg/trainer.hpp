#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>

#include "tiseg/checkpoint.hpp"
#include "tiseg/datakit.hpp"
#include "tiseg/metrics.hpp"
#include "tiseg/optim.hpp"

namespace tiseg {

// Raised when a training loss is NaN or infinite. Carries what is needed to
// replay the offending episode.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, uint64_t episode_seed, int64_t step)
        : std::runtime_error(what), episode_seed(episode_seed), step(step) {}
    uint64_t episode_seed;
    int64_t step;
};

struct StepLosses {
    double total = 0.0;
    double bce = 0.0;
    double inner = 0.0;  // normalised inner objective, before weighting
};

// One optimizer over one model; the unit the training loop is built from.
class EpisodeTrainer {
public:
    EpisodeTrainer(SegmentationModel& model, const TrainConfig& cfg);

    // Loss of the episode's targets without touching weights.
    StepLosses evaluate(const Episode& ep) const;
    // Forward, backward and one optimizer update.
    StepLosses step(const Episode& ep, uint64_t episode_seed = 0, int64_t step_index = 0);

    AdamW& optimizer() { return opt_; }
    SegmentationModel& model() { return model_; }

private:
    struct Terms {
        Tensor total, bce, inner;
    };
    Terms losses(const Episode& ep) const;

    SegmentationModel& model_;
    TrainConfig cfg_;
    AdamW opt_;
};

struct DataSplit {
    Dataset train;
    Dataset val;
};
// Seeded shuffle of whole images; at least one image on each side.
DataSplit split_by_image(const Dataset& d, double val_fraction, uint64_t seed);

std::vector<Patch> patch_dataset(const Dataset& d, int size, int overlap);

struct TrainHooks {
    std::optional<std::filesystem::path> log_path;  // JSON lines
    std::function<void(const nlohmann::json&)> on_record;
    int threads = 1;  // validation inference workers
};

struct ValidationScore {
    double dice = 0.0;
    double f1 = 0.0;
};

// Stage-1 style prediction of `val` using templates from `train_pool`, then
// whole-image Dice and object F1.
ValidationScore validate_model(const SegmentationModel& model, std::span<const Patch> train_pool, const Dataset& val,
                               const TrainConfig& cfg, int threads = 1);

struct TrainResult {
    Checkpoint best;  // weights of the epoch with the highest validation F1
    Checkpoint last;
    int best_epoch = 0;
};

// Epoch 0 scores the initial weights; ties keep the earlier epoch.
TrainResult train(const Dataset& dataset, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Trains on every image for exactly selection.epoch epochs (same seeds and
// schedule as train()). The result records where the epoch count came from.
Checkpoint retrain_full(const Dataset& dataset, const Checkpoint& selection, const TrainHooks& hooks = {},
                        std::string* warning = nullptr);

}  // namespace tiseg
