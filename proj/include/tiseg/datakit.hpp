#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiseg/tensor.hpp"

namespace tiseg {

enum class Source { train, test, synthetic };

std::string to_string(Source s);
Source source_from_string(const std::string& s);

// Pixels are H x W x 3 interleaved RGB in [0, 1], row-major. Mask is H x W
// with 1 = nucleus.
struct ImageRecord {
    std::string id;
    int height = 0;
    int width = 0;
    std::vector<double> pixels;
    std::optional<std::vector<uint8_t>> mask;
    Source source = Source::synthetic;
    int nuclei = 0;

    void check() const;  // throws on violated invariants
};

using Dataset = std::vector<ImageRecord>;

struct PatchGeometry {
    int x0 = 0;
    int y0 = 0;
    int size = 0;
};

struct Patch {
    std::string parent_id;
    PatchGeometry geom;
    std::vector<double> pixels;  // size x size x 3
    std::optional<std::vector<uint8_t>> mask;

    // Zero-padded so lexicographic order is (parent, y0, x0) order.
    std::string id() const;
};

struct Episode {
    std::vector<Patch> templates;
    std::vector<Patch> targets;
};

// ---- MoNuSeg ingestion -------------------------------------------------------

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};
using Polygon = std::vector<Point2>;

// Even-odd test on the point; points on an edge or vertex count as inside.
bool point_in_polygon(const Polygon& poly, double x, double y);
// A pixel (x, y) is set iff its centre (x + 0.5, y + 0.5) lies in any polygon.
std::vector<uint8_t> rasterize_polygons(std::span<const Polygon> polygons, int height, int width);

struct AnnotationFile {
    std::vector<Polygon> polygons;
    int skipped_regions = 0;  // regions with fewer than 3 vertices
};
AnnotationFile parse_monuseg_xml(const std::filesystem::path& path);

struct IngestResult {
    Dataset records;
    std::vector<std::string> errors;    // one per failed record, naming the stem
    std::vector<std::string> warnings;  // skipped regions, empty annotations
    int skipped_regions = 0;
    int total_nuclei = 0;
};
IngestResult ingest_monuseg(const std::filesystem::path& image_dir, const std::filesystem::path& annotation_dir,
                            Source source = Source::train);

// ---- Synthetic data ------------------------------------------------------------

struct Ellipse {
    double cx = 0.0, cy = 0.0;
    double a = 1.0, b = 1.0;  // semi-axes
    double theta = 0.0;
};

bool inside_ellipse(const Ellipse& e, double x, double y);

struct SynthOptions {
    int min_nuclei = 5;
    int max_nuclei = 30;
    double min_semi_axis = 2.0;  // full axes 4..16 px
    double max_semi_axis = 8.0;
    double noise_sigma = 0.03;
    // 0 = reference appearance. Larger values shift the background hue, raise
    // the noise level and fade the nuclei stain.
    double domain_shift = 0.0;
    // Per-image stain variation: each image adds U(0, shift_spread) to the shift.
    double shift_spread = 0.0;
    // Per-image stain strength in [1 - stain_spread, 1].
    double stain_spread = 0.0;
    // Up to this many unlabelled pale bodies per image, each stained at
    // 40-65% of the image's nuclear strength.
    int max_distractors = 0;
    std::string id_prefix = "synth";
};

// Nucleus layout for image `index` of a generation run.
std::vector<Ellipse> synth_layout(uint64_t seed, int index, int height, int width, const SynthOptions& opt = {});
Dataset synth_generate(int n_images, int height, int width, uint64_t seed, const SynthOptions& opt = {});

// ---- Patching -------------------------------------------------------------------

// Offsets along one axis: step size - overlap, last offset clamped to dim - size.
std::vector<int> patch_offsets(int dim, int size, int overlap);
std::vector<Patch> make_patches(const ImageRecord& record, int size, int overlap);

struct ScoredPatch {
    PatchGeometry geom;
    std::vector<double> scores;  // size x size
};
// Mean of all covering patch scores per pixel.
std::vector<double> stitch(std::span<const ScoredPatch> patches, int height, int width);

// ---- Augmentation ----------------------------------------------------------------

// Dihedral group of the square. Index mapping for an S x S patch, (row, col):
//   rot90: (r, c) -> (c, S-1-r); rot180, rot270 are its powers;
//   flip_h: (r, c) -> (r, S-1-c); flip_v: (r, c) -> (S-1-r, c);
//   transpose: (r, c) -> (c, r); anti_transpose: (r, c) -> (S-1-c, S-1-r).
enum class Dihedral : int { identity = 0, rot90, rot180, rot270, flip_h, flip_v, transpose, anti_transpose };

Dihedral inverse(Dihedral e);
Dihedral dihedral_from_seed(uint64_t seed);
void apply_dihedral(Dihedral e, int size, std::vector<double>& pixels, std::vector<uint8_t>* mask);
// Draws one element uniformly from the seed and applies it to both.
Dihedral augment(int size, std::vector<double>& pixels, std::vector<uint8_t>& mask, uint64_t seed);

// ---- Episodes ----------------------------------------------------------------------

// Draws n_templates + n_targets distinct patches (all must carry masks).
Episode sample_episode(std::span<const Patch> pool, int n_templates, int n_targets, uint64_t seed,
                       bool augment_patches = true);

// Patch batches as tensors.
Tensor pixels_tensor(std::span<const Patch* const> patches);
Tensor masks_tensor(std::span<const Patch* const> patches);
std::vector<const Patch*> pointers(std::span<const Patch> patches);

// ---- Dataset cache -----------------------------------------------------------------

void write_record(const std::filesystem::path& path, const ImageRecord& r);
ImageRecord read_record(const std::filesystem::path& path);
// One `<id>.rec` file per record inside dir.
void write_dataset_cache(const std::filesystem::path& dir, const Dataset& d);
Dataset read_dataset_cache(const std::filesystem::path& dir);

uint64_t fnv1a64(std::span<const uint8_t> bytes, uint64_t h = 14695981039346656037ULL);
uint64_t hash_file(const std::filesystem::path& path);
uint64_t hash_directory(const std::filesystem::path& dir);

}  // namespace tiseg
