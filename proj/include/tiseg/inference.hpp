#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tiseg/config.hpp"
#include "tiseg/datakit.hpp"
#include "tiseg/metrics.hpp"
#include "tiseg/model.hpp"

namespace tiseg {

struct StoreEntry {
    std::string parent_id;
    PatchGeometry geom;
    std::vector<double> prob;  // size x size sigmoid probabilities
    std::vector<double> descriptor;
    bool zero_descriptor = false;
    int stage = 1;
};

// Per-patch predictions keyed by patch id. Ordered map, so iteration (and the
// on-disk form) is by ascending patch id.
struct PseudoLabelStore {
    std::map<std::string, StoreEntry> entries;

    uint64_t hash() const;
    void save(const std::filesystem::path& path) const;
    static PseudoLabelStore load(const std::filesystem::path& path);
};

struct SelectedTemplate {
    std::string patch_id;
    std::vector<uint8_t> mask;  // stage-1 probabilities binarized at 0.5
    double similarity = 0.0;
};

// Runtime knobs that do not change results.
struct InferenceOptions {
    int threads = 1;
};

// Stage 1: templates with ground-truth masks drawn per target from
// `train_pool`, seeded by (template_seed, target patch id).
PseudoLabelStore run_stage1(const SegmentationModel& model, std::span<const Patch> train_pool,
                            std::span<const Patch> test_patches, const StageConfig& cfg,
                            const InferenceOptions& opt = {});

// Top cfg.n_templates store entries by descending cosine similarity to the
// target's descriptor; ties go to the lower patch id.
std::vector<SelectedTemplate> select_templates(const std::string& target_id, const PseudoLabelStore& store,
                                               const StageConfig& cfg);

// Stage 2: templates are other test patches with their stage-1 pseudo-labels.
// `stage1` is read only.
PseudoLabelStore run_stage2(const SegmentationModel& model, const PseudoLabelStore& stage1,
                            std::span<const Patch> test_patches, const StageConfig& cfg,
                            const InferenceOptions& opt = {});

struct ImageGeometry {
    std::string id;
    int height = 0;
    int width = 0;
};

// Stitches each image's patch probabilities and thresholds at 0.5. Every
// patch tiling the image at (size, overlap) must be present in the store.
std::map<std::string, BinaryMask> assemble(const PseudoLabelStore& store, std::span<const ImageGeometry> images,
                                           int patch_size, int overlap);

std::vector<ImageGeometry> geometry_of(const Dataset& d);
std::map<std::string, BinaryMask> ground_truth_of(const Dataset& d);

}  // namespace tiseg
