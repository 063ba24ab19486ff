#include "tiseg/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tiseg {

namespace {

constexpr char kMagic[8] = {'T', 'I', 'S', 'E', 'G', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::vector<uint8_t>& b, const T& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    b.insert(b.end(), p, p + sizeof(T));
}

}  // namespace

std::vector<uint8_t> Checkpoint::serialize() const {
    nlohmann::json h;
    h["model"] = model;
    h["train"] = train;
    h["epoch"] = epoch;
    h["rng_state"] = rng_state;
    h["provenance"] = provenance;
    auto& hist = h["history"] = nlohmann::json::array();
    for (const auto& r : history)
        hist.push_back({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"val_dice", r.val_dice}, {"val_f1", r.val_f1}});
    auto& index = h["tensors"] = nlohmann::json::array();
    for (const auto& t : weights) {
        if (static_cast<int64_t>(t.values.size()) != shape_numel(t.shape))
            throw std::invalid_argument("checkpoint tensor " + t.name + " has inconsistent shape");
        index.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    const std::string header = h.dump();

    std::vector<uint8_t> b(kMagic, kMagic + 8);
    put(b, kVersion);
    put(b, static_cast<uint64_t>(header.size()));
    b.insert(b.end(), header.begin(), header.end());
    for (const auto& t : weights) {
        const auto* p = reinterpret_cast<const uint8_t*>(t.values.data());
        b.insert(b.end(), p, p + t.values.size() * sizeof(double));
    }
    return b;
}

Checkpoint Checkpoint::deserialize(const std::vector<uint8_t>& b) {
    if (b.size() < 20 || std::memcmp(b.data(), kMagic, 8) != 0) throw std::runtime_error("not a tiseg checkpoint");
    uint32_t version = 0;
    uint64_t hlen = 0;
    std::memcpy(&version, b.data() + 8, 4);
    std::memcpy(&hlen, b.data() + 12, 8);
    if (version != kVersion) throw std::runtime_error("checkpoint version " + std::to_string(version) + " unsupported");
    if (20 + hlen > b.size()) throw std::runtime_error("checkpoint header truncated");
    const auto h = nlohmann::json::parse(b.begin() + 20, b.begin() + 20 + static_cast<std::ptrdiff_t>(hlen));

    Checkpoint c;
    c.model = h.at("model").get<ModelConfig>();
    c.train = h.at("train").get<TrainConfig>();
    c.epoch = h.at("epoch").get<int>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.provenance = h.at("provenance");
    for (const auto& r : h.at("history"))
        c.history.push_back({r.at("epoch").get<int>(),
                             r.at("mean_loss").is_null() ? std::nan("") : r.at("mean_loss").get<double>(), r.at("val_dice").get<double>(),
                             r.at("val_f1").get<double>()});
    size_t pos = 20 + hlen;
    for (const auto& t : h.at("tensors")) {
        SavedTensor s{t.at("name").get<std::string>(), t.at("shape").get<Shape>(), {}};
        const auto n = static_cast<size_t>(shape_numel(s.shape));
        if (pos + n * sizeof(double) > b.size()) throw std::runtime_error("checkpoint tensor data truncated at " + s.name);
        s.values.resize(n);
        std::memcpy(s.values.data(), b.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
        c.weights.push_back(std::move(s));
    }
    if (pos != b.size()) throw std::runtime_error("checkpoint has trailing bytes");
    return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const auto b = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(b);
}

Checkpoint snapshot(const SegmentationModel& model, const TrainConfig& train, int epoch) {
    Checkpoint c;
    c.model = model.config();
    c.train = train;
    c.epoch = epoch;
    for (const auto& [name, t] : model.parameters())
        c.weights.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
    return c;
}

void restore_weights(SegmentationModel& model, const Checkpoint& ckpt) {
    auto params = model.parameters();
    if (params.size() != ckpt.weights.size())
        throw std::invalid_argument("checkpoint holds " + std::to_string(ckpt.weights.size()) + " tensors, model has " +
                                    std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [name, t] = params[i];
        const auto& s = ckpt.weights[i];
        if (name != s.name || t.shape() != s.shape)
            throw std::invalid_argument("checkpoint tensor " + s.name + " " + shape_str(s.shape) + " does not match " +
                                        name + " " + shape_str(t.shape()));
        auto dst = t.mutable_data();
        std::copy(s.values.begin(), s.values.end(), dst.begin());
    }
}

std::unique_ptr<SegmentationModel> model_from(const Checkpoint& ckpt) {
    auto m = std::make_unique<SegmentationModel>(ckpt.model);
    restore_weights(*m, ckpt);
    return m;
}

}  // namespace tiseg
