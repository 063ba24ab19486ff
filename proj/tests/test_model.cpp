#include <doctest.h>

#include <cmath>
#include <random>

#include "testing.hpp"
#include "tiseg/backbone.hpp"
#include "tiseg/decoder.hpp"
#include "tiseg/maskenc.hpp"
#include "tiseg/model.hpp"
#include "tiseg/ops.hpp"

using namespace tiseg;
using tiseg::testing::grad_check;
using tiseg::testing::random_tensor;
using tiseg::testing::tiny_model_config;

namespace {

Tensor random_masks(int64_t n, int64_t s, std::mt19937_64& rng) {
    std::bernoulli_distribution b(0.3);
    std::vector<double> v(static_cast<size_t>(n * s * s));
    for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
    return Tensor::from({n, 1, s, s}, std::move(v));
}

Tensor uniform_images(int64_t n, int64_t s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(static_cast<size_t>(n * 3 * s * s));
    for (auto& x : v) x = u(rng);
    return Tensor::from({n, 3, s, s}, std::move(v));
}

}  // namespace

TEST_CASE("backbone levels sit at strides 4, 8 and 16") {
    std::mt19937_64 rng(1);
    const ResidualBackbone bb({4, 6, 8}, rng);
    for (int64_t s : {64, 256}) {
        const auto fp = bb.extract(uniform_images(1, s, rng));
        CHECK(fp.low.values.shape() == Shape{1, 4, s / 4, s / 4});
        CHECK(fp.mid.values.shape() == Shape{1, 6, s / 8, s / 8});
        CHECK(fp.deep.values.shape() == Shape{1, 8, s / 16, s / 16});
        CHECK(fp.low.stride == 4);
        CHECK(fp.mid.stride == 8);
        CHECK(fp.deep.stride == 16);
        CHECK(fp.deep.level == Level::deep);
    }
    CHECK_THROWS(bb.extract(uniform_images(1, 40, rng)));
    CHECK(bb.channels(Level::mid) == 6);
}

TEST_CASE("identical batch items give identical features") {
    std::mt19937_64 rng(2);
    const ResidualBackbone bb({4, 6, 8}, rng);
    const Tensor one = uniform_images(1, 32, rng);
    const auto fp = bb.extract(concat({one, one}, 0));
    const auto d = fp.deep.values.data();
    const size_t half = d.size() / 2;
    for (size_t i = 0; i < half; ++i) CHECK(d[i] == d[half + i]);
}

TEST_CASE("pooled descriptor") {
    // Constant per-channel values 1, 2, 2 -> (1, 2, 2) / 3.
    std::vector<double> v;
    for (double c : {1.0, 2.0, 2.0})
        for (int i = 0; i < 4; ++i) v.push_back(c);
    const Descriptor d = pooled_descriptor({Tensor::from({1, 3, 2, 2}, v), 16, Level::deep});
    CHECK(d.values[0] == doctest::Approx(1.0 / 3.0));
    CHECK(d.values[1] == doctest::Approx(2.0 / 3.0));
    CHECK(!d.zero);

    std::vector<double> one_hot(12, 0.0);
    one_hot[4 + 1] = 5.0;
    const Descriptor h = pooled_descriptor({Tensor::from({1, 3, 2, 2}, one_hot), 16, Level::deep});
    CHECK(h.values == std::vector<double>{0.0, 1.0, 0.0});

    // Channel means 0.25 and -0.5.
    const Descriptor r = pooled_descriptor({Tensor::from({1, 2, 2, 2}, {1, 0, 0, 0, -1, -1, 0, 0}), 16, Level::deep});
    const double n = std::sqrt(0.25 * 0.25 + 0.5 * 0.5);
    CHECK(r.values[0] == doctest::Approx(0.25 / n));
    CHECK(r.values[1] == doctest::Approx(-0.5 / n));

    const Descriptor z = pooled_descriptor({Tensor::zeros({1, 2, 2, 2}), 16, Level::deep});
    CHECK(z.zero);
    CHECK_THROWS(pooled_descriptor({Tensor::zeros({1, 2, 2, 2}), 8, Level::mid}));
}

TEST_CASE("mask encoder shapes, determinism and input checks") {
    std::mt19937_64 rng(3);
    const MaskEncoder enc(8, 16, rng);
    const Tensor m = random_masks(2, 256, rng);
    const auto [tra, ind] = enc.encode_both(m);
    CHECK(tra.values.shape() == Shape{2, 16, 16, 16});
    CHECK(tra.head == Head::tra);
    CHECK(ind.head == Head::ind);
    const auto again = enc.encode(m, Head::tra);
    for (int64_t i = 0; i < tra.values.numel(); ++i) CHECK(again.values.data()[i] == tra.values.data()[i]);

    Tensor soft = Tensor::full({1, 1, 32, 32}, 0.5);
    CHECK_THROWS_WITH(enc.encode(soft, Head::tra), doctest::Contains("binary"));
    CHECK_THROWS(enc.encode(Tensor::zeros({1, 1, 40, 40}), Head::tra));

    ParamList params;
    enc.collect("m", params);
    int head_params = 0;
    for (const auto& [name, t] : params)
        if (name.find("head_") != std::string::npos) ++head_params;
    CHECK(head_params == 4);
}

TEST_CASE("mask encoder gradients match finite differences") {
    std::mt19937_64 rng(4);
    const MaskEncoder enc(4, 3, rng);
    const Tensor m = random_masks(2, 16, rng);
    ParamList params;
    enc.collect("m", params);
    // Zero biases put empty mask regions exactly on the ReLU kink.
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (auto& [name, t] : params)
        for (auto& v : t.mutable_data()) v += jitter(rng);
    const Tensor probe = random_tensor({2, 3, 1, 1}, rng);
    auto loss = [&] {
        const auto [a, b] = enc.encode_both(m);
        return add(dot(a.values, probe), dot(b.values, probe));
    };
    for (const auto& [name, t] : params) {
        CAPTURE(name);
        CHECK(grad_check(loss, t, 6).max_rel_error < 1e-3);
    }
}

TEST_CASE("decoder output size, determinism and gradients") {
    std::mt19937_64 rng(5);
    const SegmentationDecoder dec(3, 5, 4, {6, 4, 4}, rng);
    const Tensor tra = random_tensor({1, 3, 2, 2}, rng, true);
    const Tensor ind = random_tensor({1, 3, 2, 2}, rng, true);
    const FeatureMap mid{random_tensor({1, 5, 4, 4}, rng), 8, Level::mid};
    const FeatureMap low{random_tensor({1, 4, 8, 8}, rng), 4, Level::low};
    const Tensor pixels = random_tensor({1, 3, 32, 32}, rng);
    const auto out = dec.decode({tra, Head::tra}, {ind, Head::ind}, mid, low, pixels);
    CHECK(out.values.shape() == Shape{1, 1, 32, 32});
    const auto again = dec.decode({tra, Head::tra}, {ind, Head::ind}, mid, low, pixels);
    for (int64_t i = 0; i < out.values.numel(); ++i) CHECK(again.values.data()[i] == out.values.data()[i]);

    const Tensor probe = random_tensor({1, 1, 32, 32}, rng);
    auto loss = [&] { return dot(dec.decode({tra, Head::tra}, {ind, Head::ind}, mid, low, pixels).values, probe); };
    CHECK(grad_check(loss, tra).max_rel_error < 1e-3);
    CHECK(grad_check(loss, ind).max_rel_error < 1e-3);
    ParamList params;
    dec.collect("d", params);
    for (const auto& [name, t] : params) {
        CAPTURE(name);
        CHECK(grad_check(loss, t, 4).max_rel_error < 1e-3);
    }

    // Zeroing the transductive block moves the logits.
    const auto zeroed = dec.decode({Tensor::zeros({1, 3, 2, 2}), Head::tra}, {ind, Head::ind}, mid, low, pixels);
    double diff = 0.0;
    for (int64_t i = 0; i < out.values.numel(); ++i) diff += std::abs(zeroed.values.data()[i] - out.values.data()[i]);
    CHECK(diff > 0.0);

    const FeatureMap wrong_mid{random_tensor({1, 5, 4, 4}, rng), 16, Level::mid};
    CHECK_THROWS_WITH(dec.decode({tra, Head::tra}, {ind, Head::ind}, wrong_mid, low, pixels), doctest::Contains("stride"));
}

TEST_CASE("binarize thresholds sigmoid probabilities") {
    CHECK(binarize(Tensor::full({1, 1, 2, 2}, -10.0)) == std::vector<uint8_t>(4, 0));
    CHECK(binarize(Tensor::full({1, 1, 2, 2}, 10.0)) == std::vector<uint8_t>(4, 1));
    CHECK(binarize(Tensor::full({1, 1, 1, 1}, 0.0)) == std::vector<uint8_t>{1});
}

TEST_CASE("model forward shapes and branch switches") {
    std::mt19937_64 rng(6);
    ModelConfig cfg = tiny_model_config();
    const Tensor ti = uniform_images(2, 32, rng), tm = random_masks(2, 32, rng), xi = uniform_images(3, 32, rng);
    {
        const SegmentationModel model(cfg);
        NoGradGuard g;
        const auto out = model.forward(ti, tm, xi, 3);
        CHECK(out.logits.values.shape() == Shape{3, 1, 32, 32});
        CHECK(out.tra.values.shape() == Shape{3, 4, 2, 2});
        CHECK(out.ind.values.shape() == Shape{3, 4, 2, 2});
        CHECK(out.inner_objective.defined());
        CHECK(out.solver_trace.size() <= 4);
        CHECK(out.target_deep.values.shape() == Shape{3, 8, 2, 2});
    }
    cfg.use_induction = false;
    {
        const SegmentationModel model(cfg);
        NoGradGuard g;
        const auto out = model.forward(ti, tm, xi, 3);
        CHECK(!out.inner_objective.defined());
        for (double v : out.ind.values.data()) CHECK(v == 0.0);
    }
    cfg.use_induction = true;
    cfg.use_transduction = false;
    {
        const SegmentationModel model(cfg);
        NoGradGuard g;
        const auto out = model.forward(ti, tm, xi, 3);
        for (double v : out.tra.values.data()) CHECK(v == 0.0);
    }
    cfg.use_induction = false;
    CHECK_THROWS(SegmentationModel{cfg});
}

TEST_CASE("model construction is seeded and the forward is deterministic") {
    std::mt19937_64 rng(7);
    const Tensor ti = uniform_images(1, 32, rng), tm = random_masks(1, 32, rng), xi = uniform_images(1, 32, rng);
    const SegmentationModel a(tiny_model_config(3)), b(tiny_model_config(3)), c(tiny_model_config(4));
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool all_same = true, any_diff = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        all_same = all_same && std::equal(pa[i].second.data().begin(), pa[i].second.data().end(), pb[i].second.data().begin());
        any_diff = any_diff || !std::equal(pa[i].second.data().begin(), pa[i].second.data().end(), pc[i].second.data().begin());
    }
    CHECK(all_same);
    CHECK(any_diff);
    NoGradGuard g;
    const auto o1 = a.forward(ti, tm, xi, 3), o2 = b.forward(ti, tm, xi, 3);
    CHECK(std::equal(o1.logits.values.data().begin(), o1.logits.values.data().end(), o2.logits.values.data().begin()));
}

TEST_CASE("every parameter receives gradient from the segmentation loss") {
    std::mt19937_64 rng(8);
    ModelConfig cfg = tiny_model_config();
    cfg.learn_lambda = true;
    const SegmentationModel model(cfg);
    const Tensor ti = uniform_images(2, 32, rng), tm = random_masks(2, 32, rng), xi = uniform_images(2, 32, rng);
    const Tensor xm = random_masks(2, 32, rng);
    const auto out = model.forward(ti, tm, xi, 3);
    bce_with_logits(out.logits.values, xm).backward();
    for (const auto& [name, t] : model.parameters()) {
        CAPTURE(name);
        REQUIRE(t.has_grad());
        double s = 0.0;
        for (double g : t.grad()) s += std::abs(g);
        CHECK(s > 0.0);
    }
}

TEST_CASE("model input checks") {
    std::mt19937_64 rng(9);
    const SegmentationModel model(tiny_model_config());
    NoGradGuard g;
    CHECK_THROWS(model.forward(uniform_images(2, 32, rng), random_masks(1, 32, rng), uniform_images(1, 32, rng), 2));
    CHECK_THROWS(model.forward(uniform_images(1, 32, rng), Tensor::full({1, 1, 32, 32}, 0.5), uniform_images(1, 32, rng), 2));
    CHECK_THROWS(model.forward(uniform_images(1, 32, rng), random_masks(1, 32, rng), uniform_images(1, 48, rng), 2));
}
