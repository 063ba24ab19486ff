#include "tiseg/datakit.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace tiseg {

namespace fs = std::filesystem;

std::string to_string(Source s) {
    switch (s) {
        case Source::train: return "train";
        case Source::test: return "test";
        case Source::synthetic: return "synthetic";
    }
    return "unknown";
}

Source source_from_string(const std::string& s) {
    if (s == "train") return Source::train;
    if (s == "test") return Source::test;
    if (s == "synthetic") return Source::synthetic;
    throw std::invalid_argument("unknown record source '" + s + "'");
}

void ImageRecord::check() const {
    if (height < 1 || width < 1) throw std::invalid_argument("record " + id + ": empty image");
    if (pixels.size() != static_cast<size_t>(height) * width * 3)
        throw std::invalid_argument("record " + id + ": pixel buffer does not match " + std::to_string(height) + "x" +
                                    std::to_string(width) + "x3");
    for (double v : pixels)
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("record " + id + ": pixel value outside [0, 1]");
    if (mask) {
        if (mask->size() != static_cast<size_t>(height) * width)
            throw std::invalid_argument("record " + id + ": mask does not match image size");
        for (auto m : *mask)
            if (m > 1) throw std::invalid_argument("record " + id + ": mask is not binary");
    }
}

std::string Patch::id() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_y%05d_x%05d", geom.y0, geom.x0);
    return parent_id + buf;
}

// ---- Synthetic data ----------------------------------------------------------

bool inside_ellipse(const Ellipse& e, double x, double y) {
    const double dx = x - e.cx, dy = y - e.cy;
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    const double u = (dx * c + dy * s) / e.a;
    const double v = (-dx * s + dy * c) / e.b;
    return u * u + v * v <= 1.0;
}

namespace {

std::mt19937_64 image_rng(uint64_t seed, int index, uint64_t stream) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index),
                      static_cast<uint32_t>(stream)};
    return std::mt19937_64(seq);
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

std::vector<Ellipse> synth_layout(uint64_t seed, int index, int height, int width, const SynthOptions& opt) {
    auto rng = image_rng(seed, index, 1);
    std::uniform_int_distribution<int> count(opt.min_nuclei, opt.max_nuclei);
    std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);
    std::uniform_real_distribution<double> axis(opt.min_semi_axis, opt.max_semi_axis);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::vector<Ellipse> out(static_cast<size_t>(count(rng)));
    for (auto& e : out) {
        e.cx = ux(rng);
        e.cy = uy(rng);
        e.a = axis(rng);
        e.b = axis(rng);
        e.theta = angle(rng);
    }
    return out;
}

Dataset synth_generate(int n_images, int height, int width, uint64_t seed, const SynthOptions& opt) {
    if (height < 64 || width < 64) throw std::invalid_argument("synthetic images must be at least 64x64");
    if (n_images < 0) throw std::invalid_argument("n_images must be >= 0");
    Dataset out;
    out.reserve(static_cast<size_t>(n_images));
    for (int i = 0; i < n_images; ++i) {
        const auto ellipses = synth_layout(seed, i, height, width, opt);
        auto rng = image_rng(seed, i, 2);
        std::uniform_real_distribution<double> jitter(-1.0, 1.0);
        const double shift = opt.domain_shift + (opt.shift_spread > 0.0 ? opt.shift_spread * 0.5 * (1.0 + jitter(rng)) : 0.0);
        std::normal_distribution<double> noise(0.0, opt.noise_sigma * (1.0 + shift));

        // Eosin-like background drifting towards a yellow-grey tint under shift.
        std::array<double, 3> bg{0.92 + 0.03 * jitter(rng), 0.72 + 0.03 * jitter(rng), 0.84 + 0.03 * jitter(rng)};
        const std::array<double, 3> shifted{0.80, 0.78, 0.58};
        for (int c = 0; c < 3; ++c) bg[c] = (1.0 - shift) * bg[c] + shift * shifted[c];

        struct Wave {
            double fx, fy, phase, amp;
        };
        std::array<Wave, 3> waves;
        for (auto& w : waves)
            w = {0.02 + 0.1 * std::abs(jitter(rng)), 0.02 + 0.1 * std::abs(jitter(rng)), std::numbers::pi * jitter(rng),
                 0.03 + 0.02 * jitter(rng)};

        // Stain strength: 1 is the reference hematoxylin uptake, lower is paler.
        const double strength = opt.stain_spread > 0.0 ? 1.0 - opt.stain_spread * 0.5 * (1.0 + jitter(rng)) : 1.0;
        auto stained = [&](double d, double k) {
            std::array<double, 3> col{0.38 + d, 0.22 + d, 0.55 + 0.5 * d};
            for (int c = 0; c < 3; ++c) col[c] = bg[c] + k * (col[c] - bg[c]);
            for (int c = 0; c < 3; ++c) col[c] = (1.0 - 0.35 * shift) * col[c] + 0.35 * shift * bg[c];
            return col;
        };
        std::vector<std::array<double, 3>> nucleus_color(ellipses.size());
        for (auto& col : nucleus_color) col = stained(0.05 * jitter(rng), strength);

        // Unlabelled pale bodies of nuclear shape, weaker than this image's nuclei.
        std::vector<Ellipse> pale;
        std::vector<std::array<double, 3>> pale_color;
        if (opt.max_distractors > 0) {
            auto drng = image_rng(seed, i, 3);
            std::uniform_int_distribution<int> count(0, opt.max_distractors);
            std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height), u01(0.0, 1.0);
            std::uniform_real_distribution<double> axis(opt.min_semi_axis, opt.max_semi_axis);
            pale.resize(static_cast<size_t>(count(drng)));
            for (auto& e : pale) {
                e = {ux(drng), uy(drng), axis(drng), axis(drng), std::numbers::pi * u01(drng)};
                pale_color.push_back(stained(0.05 * (2.0 * u01(drng) - 1.0), strength * (0.4 + 0.25 * u01(drng))));
            }
        }

        ImageRecord r;
        char id[64];
        std::snprintf(id, sizeof id, "%s_%04d", opt.id_prefix.c_str(), i);
        r.id = id;
        r.height = height;
        r.width = width;
        r.source = Source::synthetic;
        r.nuclei = static_cast<int>(ellipses.size());
        r.pixels.resize(static_cast<size_t>(height) * width * 3);
        std::vector<uint8_t> mask(static_cast<size_t>(height) * width, 0);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                double tex = 0.0;
                for (const auto& w : waves) tex += w.amp * std::sin(w.fx * px + w.fy * py + w.phase);
                std::array<double, 3> col{bg[0] + tex, bg[1] + tex, bg[2] + 0.5 * tex};
                for (size_t e = 0; e < pale.size(); ++e)
                    if (inside_ellipse(pale[e], px, py)) col = pale_color[e];
                for (size_t e = 0; e < ellipses.size(); ++e)
                    if (inside_ellipse(ellipses[e], px, py)) {
                        col = nucleus_color[e];
                        mask[static_cast<size_t>(y) * width + x] = 1;
                    }
                for (int c = 0; c < 3; ++c)
                    r.pixels[(static_cast<size_t>(y) * width + x) * 3 + c] = clamp01(col[c] + noise(rng));
            }
        r.mask = std::move(mask);
        out.push_back(std::move(r));
    }
    return out;
}

// ---- Patching ------------------------------------------------------------------

std::vector<int> patch_offsets(int dim, int size, int overlap) {
    if (size < 1 || overlap < 0 || overlap >= size)
        throw std::invalid_argument("patching needs size >= 1 and 0 <= overlap < size");
    if (size > dim)
        throw std::invalid_argument("patch size " + std::to_string(size) + " exceeds dimension " + std::to_string(dim));
    std::vector<int> out;
    for (int off = 0;; off += size - overlap) {
        if (off + size >= dim) {
            out.push_back(dim - size);
            break;
        }
        out.push_back(off);
    }
    return out;
}

std::vector<Patch> make_patches(const ImageRecord& record, int size, int overlap) {
    if (size > std::min(record.height, record.width))
        throw std::invalid_argument("record " + record.id + ": patch size " + std::to_string(size) +
                                    " exceeds image size " + std::to_string(record.height) + "x" +
                                    std::to_string(record.width));
    const auto ys = patch_offsets(record.height, size, overlap);
    const auto xs = patch_offsets(record.width, size, overlap);
    std::vector<Patch> out;
    out.reserve(ys.size() * xs.size());
    for (int y0 : ys)
        for (int x0 : xs) {
            Patch p;
            p.parent_id = record.id;
            p.geom = {x0, y0, size};
            p.pixels.resize(static_cast<size_t>(size) * size * 3);
            for (int y = 0; y < size; ++y)
                std::copy_n(record.pixels.begin() + ((static_cast<ptrdiff_t>(y0 + y) * record.width + x0) * 3),
                            size * 3, p.pixels.begin() + static_cast<ptrdiff_t>(y) * size * 3);
            if (record.mask) {
                std::vector<uint8_t> m(static_cast<size_t>(size) * size);
                for (int y = 0; y < size; ++y)
                    std::copy_n(record.mask->begin() + (static_cast<ptrdiff_t>(y0 + y) * record.width + x0), size,
                                m.begin() + static_cast<ptrdiff_t>(y) * size);
                p.mask = std::move(m);
            }
            out.push_back(std::move(p));
        }
    return out;
}

std::vector<double> stitch(std::span<const ScoredPatch> patches, int height, int width) {
    std::vector<double> acc(static_cast<size_t>(height) * width, 0.0);
    std::vector<int> count(acc.size(), 0);
    for (const auto& p : patches) {
        const auto& g = p.geom;
        if (g.x0 < 0 || g.y0 < 0 || g.x0 + g.size > width || g.y0 + g.size > height)
            throw std::invalid_argument("stitch: patch at (" + std::to_string(g.x0) + ", " + std::to_string(g.y0) +
                                        ") leaves the " + std::to_string(height) + "x" + std::to_string(width) + " canvas");
        if (p.scores.size() != static_cast<size_t>(g.size) * g.size)
            throw std::invalid_argument("stitch: score map size does not match patch size");
        for (int y = 0; y < g.size; ++y)
            for (int x = 0; x < g.size; ++x) {
                const size_t dst = static_cast<size_t>(g.y0 + y) * width + (g.x0 + x);
                acc[dst] += p.scores[static_cast<size_t>(y) * g.size + x];
                ++count[dst];
            }
    }
    for (size_t i = 0; i < acc.size(); ++i) {
        if (count[i] == 0)
            throw std::invalid_argument("stitch: pixel (x=" + std::to_string(i % width) + ", y=" +
                                        std::to_string(i / width) + ") is not covered by any patch");
        acc[i] /= count[i];
    }
    return acc;
}

// ---- Augmentation ----------------------------------------------------------------

Dihedral inverse(Dihedral e) {
    switch (e) {
        case Dihedral::rot90: return Dihedral::rot270;
        case Dihedral::rot270: return Dihedral::rot90;
        default: return e;  // every other element is an involution
    }
}

Dihedral dihedral_from_seed(uint64_t seed) {
    std::mt19937_64 rng(seed);
    return static_cast<Dihedral>(std::uniform_int_distribution<int>(0, 7)(rng));
}

namespace {

std::pair<int, int> map_index(Dihedral e, int S, int r, int c) {
    switch (e) {
        case Dihedral::identity: return {r, c};
        case Dihedral::rot90: return {c, S - 1 - r};
        case Dihedral::rot180: return {S - 1 - r, S - 1 - c};
        case Dihedral::rot270: return {S - 1 - c, r};
        case Dihedral::flip_h: return {r, S - 1 - c};
        case Dihedral::flip_v: return {S - 1 - r, c};
        case Dihedral::transpose: return {c, r};
        case Dihedral::anti_transpose: return {S - 1 - c, S - 1 - r};
    }
    return {r, c};
}

}  // namespace

void apply_dihedral(Dihedral e, int S, std::vector<double>& pixels, std::vector<uint8_t>* mask) {
    if (pixels.size() != static_cast<size_t>(S) * S * 3) throw std::invalid_argument("augment: patch is not square");
    if (e == Dihedral::identity) return;
    std::vector<double> px(pixels.size());
    std::vector<uint8_t> m(mask ? mask->size() : 0);
    for (int r = 0; r < S; ++r)
        for (int c = 0; c < S; ++c) {
            const auto [rr, cc] = map_index(e, S, r, c);
            const size_t src = static_cast<size_t>(r) * S + c, dst = static_cast<size_t>(rr) * S + cc;
            for (int k = 0; k < 3; ++k) px[dst * 3 + k] = pixels[src * 3 + k];
            if (mask) m[dst] = (*mask)[src];
        }
    pixels = std::move(px);
    if (mask) *mask = std::move(m);
}

Dihedral augment(int size, std::vector<double>& pixels, std::vector<uint8_t>& mask, uint64_t seed) {
    if (mask.size() != static_cast<size_t>(size) * size) throw std::invalid_argument("augment: mask is not square");
    const Dihedral e = dihedral_from_seed(seed);
    apply_dihedral(e, size, pixels, &mask);
    return e;
}

// ---- Episodes ------------------------------------------------------------------------

Episode sample_episode(std::span<const Patch> pool, int n_templates, int n_targets, uint64_t seed,
                       bool augment_patches) {
    if (n_templates < 1 || n_targets < 0) throw std::invalid_argument("episode needs at least one template");
    const size_t need = static_cast<size_t>(n_templates + n_targets);
    if (pool.size() < need)
        throw std::invalid_argument("episode needs " + std::to_string(need) + " patches, only " +
                                    std::to_string(pool.size()) + " available");
    std::mt19937_64 rng(seed);
    std::vector<size_t> idx(pool.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // Partial Fisher-Yates: the first `need` slots are a uniform draw without replacement.
    for (size_t i = 0; i < need; ++i) {
        std::uniform_int_distribution<size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    Episode ep;
    for (size_t i = 0; i < need; ++i) {
        Patch p = pool[idx[i]];
        if (!p.mask) throw std::invalid_argument("episode patch " + p.id() + " has no mask");
        if (augment_patches) augment(p.geom.size, p.pixels, *p.mask, rng());
        (i < static_cast<size_t>(n_templates) ? ep.templates : ep.targets).push_back(std::move(p));
    }
    return ep;
}

std::vector<const Patch*> pointers(std::span<const Patch> patches) {
    std::vector<const Patch*> out;
    out.reserve(patches.size());
    for (const auto& p : patches) out.push_back(&p);
    return out;
}

Tensor pixels_tensor(std::span<const Patch* const> patches) {
    if (patches.empty()) throw std::invalid_argument("pixels_tensor: no patches");
    const int S = patches[0]->geom.size;
    const auto n = static_cast<int64_t>(patches.size());
    std::vector<double> v(static_cast<size_t>(n) * 3 * S * S);
    for (int64_t i = 0; i < n; ++i) {
        const auto& p = *patches[static_cast<size_t>(i)];
        if (p.geom.size != S) throw std::invalid_argument("pixels_tensor: patches differ in size");
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < S * S; ++j)
                v[static_cast<size_t>((i * 3 + c) * S * S + j)] = p.pixels[static_cast<size_t>(j) * 3 + c];
    }
    return Tensor::from({n, 3, S, S}, std::move(v));
}

Tensor masks_tensor(std::span<const Patch* const> patches) {
    if (patches.empty()) throw std::invalid_argument("masks_tensor: no patches");
    const int S = patches[0]->geom.size;
    const auto n = static_cast<int64_t>(patches.size());
    std::vector<double> v(static_cast<size_t>(n) * S * S);
    for (int64_t i = 0; i < n; ++i) {
        const auto& p = *patches[static_cast<size_t>(i)];
        if (!p.mask) throw std::invalid_argument("masks_tensor: patch " + p.id() + " has no mask");
        if (p.geom.size != S) throw std::invalid_argument("masks_tensor: patches differ in size");
        for (int j = 0; j < S * S; ++j) v[static_cast<size_t>(i * S * S + j)] = (*p.mask)[static_cast<size_t>(j)];
    }
    return Tensor::from({n, 1, S, S}, std::move(v));
}

// ---- Cache -----------------------------------------------------------------------------

namespace {

constexpr char kRecordMagic[8] = {'T', 'I', 'S', 'E', 'G', 'R', 'E', 'C'};
constexpr uint32_t kRecordVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("truncated record file");
    return v;
}

}  // namespace

void write_record(const fs::path& path, const ImageRecord& r) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(kRecordMagic, sizeof kRecordMagic);
    put(os, kRecordVersion);
    put(os, static_cast<uint32_t>(r.id.size()));
    os.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
    put(os, static_cast<int32_t>(r.height));
    put(os, static_cast<int32_t>(r.width));
    put(os, static_cast<uint8_t>(r.source));
    put(os, static_cast<int32_t>(r.nuclei));
    put(os, static_cast<uint8_t>(r.mask ? 1 : 0));
    os.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size() * sizeof(double)));
    if (r.mask) os.write(reinterpret_cast<const char*>(r.mask->data()), static_cast<std::streamsize>(r.mask->size()));
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

ImageRecord read_record(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kRecordMagic))
        throw std::runtime_error(path.string() + " is not a record file");
    if (const auto v = get<uint32_t>(is); v != kRecordVersion)
        throw std::runtime_error(path.string() + ": unsupported record version " + std::to_string(v));
    ImageRecord r;
    r.id.resize(get<uint32_t>(is));
    if (!is.read(r.id.data(), static_cast<std::streamsize>(r.id.size()))) throw std::runtime_error("truncated record file");
    r.height = get<int32_t>(is);
    r.width = get<int32_t>(is);
    const auto src = get<uint8_t>(is);
    if (src > 2) throw std::runtime_error(path.string() + ": bad source tag");
    r.source = static_cast<Source>(src);
    r.nuclei = get<int32_t>(is);
    const bool has_mask = get<uint8_t>(is) != 0;
    r.pixels.resize(static_cast<size_t>(r.height) * r.width * 3);
    if (!is.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size() * sizeof(double))))
        throw std::runtime_error("truncated record file " + path.string());
    if (has_mask) {
        std::vector<uint8_t> m(static_cast<size_t>(r.height) * r.width);
        if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size())))
            throw std::runtime_error("truncated record file " + path.string());
        r.mask = std::move(m);
    }
    return r;
}

void write_dataset_cache(const fs::path& dir, const Dataset& d) {
    fs::create_directories(dir);
    for (const auto& r : d) write_record(dir / (r.id + ".rec"), r);
}

Dataset read_dataset_cache(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset cache " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".rec") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    Dataset d;
    for (const auto& f : files) d.push_back(read_record(f));
    return d;
}

uint64_t fnv1a64(std::span<const uint8_t> bytes, uint64_t h) {
    for (auto b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t hash_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return fnv1a64(buf);
}

uint64_t hash_directory(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    uint64_t h = 14695981039346656037ULL;
    for (const auto& f : files) {
        const std::string rel = fs::relative(f, dir).generic_string();
        h = fnv1a64({reinterpret_cast<const uint8_t*>(rel.data()), rel.size()}, h);
        const uint64_t fh = hash_file(f);
        h = fnv1a64({reinterpret_cast<const uint8_t*>(&fh), sizeof fh}, h);
    }
    return h;
}

}  // namespace tiseg
