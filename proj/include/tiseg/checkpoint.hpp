#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tiseg/config.hpp"
#include "tiseg/model.hpp"

namespace tiseg {

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double val_dice = 0.0;
    double val_f1 = 0.0;
};

struct SavedTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

// Self-describing model snapshot. File layout: 8-byte magic, u32 version,
// u64 header length, JSON header, then every tensor's doubles in header order.
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    int epoch = 0;
    std::vector<EpochRecord> history;
    std::string rng_state;  // std::mt19937_64 textual state
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<SavedTensor> weights;

    std::vector<uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<uint8_t>& bytes);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

Checkpoint snapshot(const SegmentationModel& model, const TrainConfig& train, int epoch);
// Copies weights into a model built from the same config; names and shapes
// must match exactly.
void restore_weights(SegmentationModel& model, const Checkpoint& ckpt);
std::unique_ptr<SegmentationModel> model_from(const Checkpoint& ckpt);

}  // namespace tiseg
