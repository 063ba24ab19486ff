#include "tiseg/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

#include "tiseg/decoder.hpp"

namespace tiseg {

namespace {

constexpr char kStoreMagic[8] = {'T', 'I', 'S', 'E', 'G', 'P', 'L', 'S'};
constexpr uint32_t kStoreVersion = 1;

class Writer {
public:
    std::vector<uint8_t> bytes;
    template <class T>
    void pod(const T& v) {
        const auto* p = reinterpret_cast<const uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void str(const std::string& s) {
        pod(static_cast<uint64_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    void doubles(const std::vector<double>& v) {
        pod(static_cast<uint64_t>(v.size()));
        const auto* p = reinterpret_cast<const uint8_t*>(v.data());
        bytes.insert(bytes.end(), p, p + v.size() * sizeof(double));
    }
};

class Reader {
public:
    explicit Reader(std::vector<uint8_t> b) : bytes_(std::move(b)) {}
    template <class T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        const auto n = pod<uint64_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles() {
        const auto n = pod<uint64_t>();
        need(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) throw std::runtime_error("pseudo-label store: truncated file");
    }
    std::vector<uint8_t> bytes_;
    size_t pos_ = 0;
};

std::vector<uint8_t> serialize(const PseudoLabelStore& s) {
    Writer w;
    w.bytes.insert(w.bytes.end(), kStoreMagic, kStoreMagic + 8);
    w.pod(kStoreVersion);
    w.pod(static_cast<uint64_t>(s.entries.size()));
    for (const auto& [id, e] : s.entries) {
        w.str(id);
        w.str(e.parent_id);
        w.pod(static_cast<int32_t>(e.geom.x0));
        w.pod(static_cast<int32_t>(e.geom.y0));
        w.pod(static_cast<int32_t>(e.geom.size));
        w.pod(static_cast<int32_t>(e.stage));
        w.pod(static_cast<uint8_t>(e.zero_descriptor));
        w.doubles(e.prob);
        w.doubles(e.descriptor);
    }
    return w.bytes;
}

uint64_t id_seed(uint64_t seed, const std::string& id) {
    const auto h = fnv1a64({reinterpret_cast<const uint8_t*>(id.data()), id.size()});
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(h),
                      static_cast<uint32_t>(h >> 32)};
    std::mt19937_64 rng(seq);
    return rng();
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(size_t n, int threads, Fn fn) {
    const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (size_t t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            NoGradGuard guard;
            for (size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

StoreEntry predict(const SegmentationModel& model, std::vector<const Patch*> templates, const Patch& target,
                   int stage) {
    NoGradGuard guard;
    std::vector<const Patch*> tp{&target};
    ModelOutput out = model.forward(pixels_tensor(templates), masks_tensor(templates), pixels_tensor(tp),
                                    model.config().solver_steps_infer);
    StoreEntry e;
    e.parent_id = target.parent_id;
    e.geom = target.geom;
    e.stage = stage;
    auto logits = out.logits.values.data();
    e.prob.resize(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) e.prob[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    Descriptor d = pooled_descriptor(out.target_deep, 0);
    e.descriptor = std::move(d.values);
    e.zero_descriptor = d.zero;
    return e;
}

void check_unique(std::span<const Patch> patches) {
    std::set<std::string> seen;
    for (const auto& p : patches)
        if (!seen.insert(p.id()).second) throw std::invalid_argument("duplicate test patch id " + p.id());
}

}  // namespace

uint64_t PseudoLabelStore::hash() const {
    const auto b = serialize(*this);
    return fnv1a64(b);
}

void PseudoLabelStore::save(const std::filesystem::path& path) const {
    const auto b = serialize(*this);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

PseudoLabelStore PseudoLabelStore::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (b.size() < 12 || std::memcmp(b.data(), kStoreMagic, 8) != 0)
        throw std::runtime_error(path.string() + " is not a pseudo-label store");
    Reader r(std::vector<uint8_t>(b.begin() + 8, b.end()));
    const auto version = r.pod<uint32_t>();
    if (version != kStoreVersion)
        throw std::runtime_error("pseudo-label store version " + std::to_string(version) + " unsupported");
    PseudoLabelStore s;
    const auto n = r.pod<uint64_t>();
    for (uint64_t i = 0; i < n; ++i) {
        std::string id = r.str();
        StoreEntry e;
        e.parent_id = r.str();
        e.geom.x0 = r.pod<int32_t>();
        e.geom.y0 = r.pod<int32_t>();
        e.geom.size = r.pod<int32_t>();
        e.stage = r.pod<int32_t>();
        e.zero_descriptor = r.pod<uint8_t>() != 0;
        e.prob = r.doubles();
        e.descriptor = r.doubles();
        s.entries.emplace(std::move(id), std::move(e));
    }
    if (!r.done()) throw std::runtime_error("pseudo-label store: trailing bytes in " + path.string());
    return s;
}

PseudoLabelStore run_stage1(const SegmentationModel& model, std::span<const Patch> train_pool,
                            std::span<const Patch> test_patches, const StageConfig& cfg,
                            const InferenceOptions& opt) {
    PseudoLabelStore store;
    if (test_patches.empty()) return store;
    if (train_pool.empty()) throw std::invalid_argument("stage 1: empty training set");
    if (train_pool.size() < static_cast<size_t>(cfg.n_templates))
        throw std::invalid_argument("stage 1: need " + std::to_string(cfg.n_templates) + " training patches, have " +
                                    std::to_string(train_pool.size()));
    for (const auto& p : train_pool)
        if (!p.mask) throw std::invalid_argument("stage 1: training patch " + p.id() + " has no mask");
    check_unique(test_patches);

    std::vector<StoreEntry> results(test_patches.size());
    parallel_for(test_patches.size(), opt.threads, [&](size_t i) {
        const Patch& target = test_patches[i];
        std::mt19937_64 rng(id_seed(cfg.template_seed, target.id()));
        std::vector<size_t> idx(train_pool.size());
        for (size_t j = 0; j < idx.size(); ++j) idx[j] = j;
        std::vector<const Patch*> templates;
        for (size_t j = 0; j < static_cast<size_t>(cfg.n_templates); ++j) {
            std::uniform_int_distribution<size_t> pick(j, idx.size() - 1);
            std::swap(idx[j], idx[pick(rng)]);
            templates.push_back(&train_pool[idx[j]]);
        }
        results[i] = predict(model, templates, target, 1);
    });
    for (size_t i = 0; i < test_patches.size(); ++i) store.entries.emplace(test_patches[i].id(), std::move(results[i]));
    return store;
}

std::vector<SelectedTemplate> select_templates(const std::string& target_id, const PseudoLabelStore& store,
                                               const StageConfig& cfg) {
    auto it = store.entries.find(target_id);
    if (it == store.entries.end()) throw std::invalid_argument("select_templates: " + target_id + " not in store");
    const auto& q = it->second.descriptor;

    std::vector<std::pair<double, const std::string*>> ranked;
    for (const auto& [id, e] : store.entries) {
        if (cfg.exclude_self && id == target_id) continue;
        if (e.descriptor.size() != q.size())
            throw std::invalid_argument("select_templates: descriptor width differs for " + id);
        double s = 0.0;
        for (size_t c = 0; c < q.size(); ++c) s += q[c] * e.descriptor[c];
        ranked.emplace_back(s, &id);
    }
    if (ranked.size() < static_cast<size_t>(cfg.n_templates))
        throw std::invalid_argument("select_templates: need " + std::to_string(cfg.n_templates) + " candidates for " +
                                    target_id + ", store offers " + std::to_string(ranked.size()));
    // Descriptors are unit norm (or zero), so the dot product is the cosine.
    auto better = [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : *a.second < *b.second; };
    const auto n = static_cast<size_t>(cfg.n_templates);
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), better);

    std::vector<SelectedTemplate> out;
    for (size_t i = 0; i < n; ++i) {
        const auto& e = store.entries.at(*ranked[i].second);
        out.push_back({*ranked[i].second, binarize_probabilities(e.prob, 0.5), ranked[i].first});
    }
    return out;
}

PseudoLabelStore run_stage2(const SegmentationModel& model, const PseudoLabelStore& stage1,
                            std::span<const Patch> test_patches, const StageConfig& cfg,
                            const InferenceOptions& opt) {
    check_unique(test_patches);
    std::map<std::string, const Patch*> by_id;
    for (const auto& p : test_patches) by_id.emplace(p.id(), &p);
    for (const auto& [id, e] : stage1.entries) {
        if (e.stage != 1) throw std::invalid_argument("stage 2: store entry " + id + " is not a stage-1 prediction");
        if (!by_id.count(id)) throw std::invalid_argument("stage 2: store entry " + id + " has no test patch");
    }
    for (const auto& p : test_patches)
        if (!stage1.entries.count(p.id())) throw std::invalid_argument("stage 2: no stage-1 entry for " + p.id());

    std::vector<StoreEntry> results(test_patches.size());
    parallel_for(test_patches.size(), opt.threads, [&](size_t i) {
        const Patch& target = test_patches[i];
        auto chosen = select_templates(target.id(), stage1, cfg);
        std::vector<Patch> templates;
        templates.reserve(chosen.size());
        for (auto& t : chosen) {
            Patch p = *by_id.at(t.patch_id);
            p.mask = std::move(t.mask);
            templates.push_back(std::move(p));
        }
        results[i] = predict(model, pointers(templates), target, 2);
    });
    PseudoLabelStore store;
    for (size_t i = 0; i < test_patches.size(); ++i) store.entries.emplace(test_patches[i].id(), std::move(results[i]));
    return store;
}

std::map<std::string, BinaryMask> assemble(const PseudoLabelStore& store, std::span<const ImageGeometry> images,
                                           int patch_size, int overlap) {
    std::map<std::string, BinaryMask> out;
    for (const auto& img : images) {
        std::vector<ScoredPatch> parts;
        for (int y : patch_offsets(img.height, patch_size, overlap))
            for (int x : patch_offsets(img.width, patch_size, overlap)) {
                Patch probe;
                probe.parent_id = img.id;
                probe.geom = {x, y, patch_size};
                auto it = store.entries.find(probe.id());
                if (it == store.entries.end()) throw std::invalid_argument("assemble: missing patch " + probe.id());
                parts.push_back({probe.geom, it->second.prob});
            }
        const auto probs = stitch(parts, img.height, img.width);
        out.emplace(img.id, BinaryMask{img.height, img.width, binarize_probabilities(probs, 0.5)});
    }
    return out;
}

std::vector<ImageGeometry> geometry_of(const Dataset& d) {
    std::vector<ImageGeometry> out;
    for (const auto& r : d) out.push_back({r.id, r.height, r.width});
    return out;
}

std::map<std::string, BinaryMask> ground_truth_of(const Dataset& d) {
    std::map<std::string, BinaryMask> out;
    for (const auto& r : d) {
        if (!r.mask) throw std::invalid_argument("record " + r.id + " has no mask");
        out.emplace(r.id, BinaryMask{r.height, r.width, *r.mask});
    }
    return out;
}

}  // namespace tiseg
