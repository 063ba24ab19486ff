#include <doctest.h>

#include <cmath>
#include <random>

#include "testing.hpp"
#include "tiseg/ops.hpp"
#include "tiseg/transduction.hpp"

using namespace tiseg;
using tiseg::testing::grad_check;
using tiseg::testing::random_tensor;

namespace {

Tensor eye(int64_t n) {
    Tensor t = Tensor::zeros({n, n});
    auto d = t.mutable_data();
    for (int64_t i = 0; i < n; ++i) d[static_cast<size_t>(i * n + i)] = 1.0;
    return t;
}

AttentionParams identity_params(int64_t width, double scale) {
    AttentionParams p;
    p.w_q = eye(width);
    p.w_k = eye(width);
    p.w_v = eye(width);
    p.heads = 1;
    p.logit_scale = scale;
    return p;
}

// Plain loops over row-major buffers, no shared code with the library.
std::vector<double> naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& p) {
    auto project = [](const Tensor& x, const Tensor& w) {
        const int64_t r = x.dim(0), in = x.dim(1), out = w.dim(1);
        std::vector<double> y(static_cast<size_t>(r * out), 0.0);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < out; ++j)
                for (int64_t c = 0; c < in; ++c) y[i * out + j] += x.data()[i * in + c] * w.data()[c * out + j];
        return y;
    };
    const auto qp = project(q, p.w_q), kp = project(k, p.w_k), vp = project(v, p.w_v);
    const int64_t n = q.dim(0), m = k.dim(0), M = p.w_q.dim(1), hd = M / p.heads;
    std::vector<double> mixed(static_cast<size_t>(n * M), 0.0);
    for (int h = 0; h < p.heads; ++h)
        for (int64_t i = 0; i < n; ++i) {
            std::vector<double> logit(static_cast<size_t>(m));
            double top = -1e300;
            for (int64_t j = 0; j < m; ++j) {
                double s = 0.0;
                for (int64_t c = h * hd; c < (h + 1) * hd; ++c) s += qp[i * M + c] * kp[j * M + c];
                logit[j] = s * p.logit_scale;
                top = std::max(top, logit[j]);
            }
            double z = 0.0;
            for (auto& l : logit) z += (l = std::exp(l - top));
            for (int64_t j = 0; j < m; ++j)
                for (int64_t c = h * hd; c < (h + 1) * hd; ++c) mixed[i * M + c] += logit[j] / z * vp[j * M + c];
        }
    if (!p.w_o.defined()) return mixed;
    const int64_t out = p.w_o.dim(1);
    std::vector<double> y(static_cast<size_t>(n * out), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < out; ++j)
            for (int64_t c = 0; c < M; ++c) y[i * out + j] += mixed[i * M + c] * p.w_o.data()[c * out + j];
    return y;
}

double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
    REQUIRE(static_cast<size_t>(a.numel()) == b.size());
    double m = 0.0;
    for (size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("attention with two keys reproduces the hand softmax") {
    const Tensor q = Tensor::from({1, 2}, {1, 0});
    const Tensor k = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor v = Tensor::from({2, 1}, {1, 0});
    AttentionParams p = identity_params(2, 1.0 / 30.0);
    p.w_v = Tensor::from({1, 2}, {1.0, 0.0});
    const double expected = 1.0 / (1.0 + std::exp(-1.0 / 30.0));
    const Tensor out = attention(q, k, v, p);
    CHECK(out.data()[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.data()[0] == doctest::Approx(0.50833).epsilon(1e-5));
}

TEST_CASE("a single key returns its value row exactly") {
    std::mt19937_64 rng(3);
    const Tensor q = random_tensor({4, 3}, rng);
    const Tensor k = random_tensor({1, 3}, rng);
    const Tensor v = random_tensor({1, 3}, rng);
    const Tensor out = attention(q, k, v, identity_params(3, 1.0 / 30.0));
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t c = 0; c < 3; ++c) CHECK(out.data()[i * 3 + c] == v.data()[c]);
}

TEST_CASE("attention matches a loop oracle on random instances") {
    std::mt19937_64 rng(11);
    struct Case {
        int64_t n, m, c, dv, width, out;
        int heads;
    };
    for (const Case cs : {Case{3, 4, 6, 5, 8, 7, 2}, Case{5, 4, 8, 3, 8, 8, 4}, Case{5, 2, 4, 4, 4, 2, 1}}) {
        for (int rep = 0; rep < 5; ++rep) {
            const Tensor q = random_tensor({cs.n, cs.c}, rng);
            const Tensor k = random_tensor({cs.m, cs.c}, rng);
            const Tensor v = random_tensor({cs.m, cs.dv}, rng);
            AttentionParams p = AttentionParams::make(cs.c, cs.c, cs.dv, cs.width, cs.out, cs.heads, 0.7, rng);
            CHECK(max_abs_diff(attention(q, k, v, p), naive_attention(q, k, v, p)) < 1e-10);
            p.w_o = Tensor();
            CHECK(max_abs_diff(attention(q, k, v, p), naive_attention(q, k, v, p)) < 1e-10);
        }
    }
}

TEST_CASE("attention is invariant to a joint permutation of keys and values") {
    std::mt19937_64 rng(5);
    const Tensor q = random_tensor({3, 4}, rng);
    const Tensor k = random_tensor({6, 4}, rng);
    const Tensor v = random_tensor({6, 2}, rng);
    const AttentionParams p = AttentionParams::make(4, 4, 2, 4, 3, 2, 0.5, rng);
    const std::vector<int64_t> perm{4, 1, 5, 0, 3, 2};
    std::vector<Tensor> kr, vr;
    for (auto i : perm) {
        kr.push_back(slice(k, 0, i, i + 1));
        vr.push_back(slice(v, 0, i, i + 1));
    }
    const Tensor a = attention(q, k, v, p);
    const Tensor b = attention(q, concat(kr, 0), concat(vr, 0), p);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("tiny logit scale averages the projected values") {
    std::mt19937_64 rng(9);
    const Tensor q = random_tensor({2, 3}, rng);
    const Tensor k = random_tensor({5, 3}, rng);
    const Tensor v = random_tensor({5, 2}, rng);
    AttentionParams p = identity_params(3, 1e-8);
    p.w_v = random_tensor({2, 3}, rng);
    const Tensor out = attention(q, k, v, p);
    const auto vp = matmul(v, p.w_v);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (int64_t j = 0; j < 5; ++j) mean += vp.data()[j * 3 + c] / 5.0;
            CHECK(std::abs(out.data()[i * 3 + c] - mean) < 1e-4);
        }
}

TEST_CASE("attention rejects empty key sets and mismatched shapes") {
    std::mt19937_64 rng(1);
    const AttentionParams p = identity_params(2, 1.0);
    CHECK_THROWS_WITH(attention(random_tensor({1, 2}, rng), Tensor::zeros({0, 2}), Tensor::zeros({0, 2}), p),
                      doctest::Contains("m = 0"));
    CHECK_THROWS(attention(random_tensor({1, 2}, rng), random_tensor({3, 2}, rng), random_tensor({2, 2}, rng), p));
}

TEST_CASE("attention gradients reach all projections") {
    std::mt19937_64 rng(21);
    const Tensor q = random_tensor({3, 4}, rng, true);
    const Tensor k = random_tensor({5, 4}, rng, true);
    const Tensor v = random_tensor({5, 3}, rng, true);
    AttentionParams p = AttentionParams::make(4, 4, 3, 4, 2, 2, 0.8, rng);
    for (Tensor* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) w->set_requires_grad(true);
    const Tensor probe = random_tensor({3, 2}, rng);
    auto loss = [&] { return dot(attention(q, k, v, p), probe); };
    for (const Tensor& t : {q, k, v, p.w_q, p.w_k, p.w_v, p.w_o}) {
        const auto r = grad_check(loss, t);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("encoder token counts and the zero-layer case") {
    std::mt19937_64 rng(2);
    const TransformerEncoder enc(8, 1, 2, 2, 1.0 / 30.0, true, rng);
    FeatureMap templates{random_tensor({5, 8, 3, 4}, rng), 16, Level::deep};
    FeatureMap target{random_tensor({2, 8, 3, 4}, rng), 16, Level::deep};
    const auto [ot, o] = encode_tokens(enc, templates, target);
    CHECK(ot.tokens.dim(0) == 5 * 3 * 4);
    CHECK(ot.origin == Origin::template_set);
    CHECK(o.tokens.dim(0) == 3 * 4);
    CHECK(o.origin == Origin::target);

    const TransformerEncoder none(8, 0, 2, 2, 1.0 / 30.0, true, rng);
    const TokenSequence s = none.encode_target(target, 1);
    const Tensor pe = positional_encoding_2d(3, 4, 8);
    for (int64_t t = 0; t < 12; ++t)
        for (int64_t c = 0; c < 8; ++c) {
            const int64_t y = t / 4, x = t % 4;
            const double raw = target.values.data()[((1 * 8 + c) * 3 + y) * 4 + x];
            CHECK(s.tokens.data()[t * 8 + c] == doctest::Approx(raw + pe.data()[t * 8 + c]).epsilon(1e-14));
        }
    FeatureMap wrong{random_tensor({1, 4, 3, 4}, rng), 16, Level::deep};
    CHECK_THROWS(encode_tokens(enc, wrong, target));
}

TEST_CASE("single propagation block matches the attention oracle") {
    std::mt19937_64 rng(4);
    LabelPropagator::Options opt;
    opt.layers = 1;
    opt.feedforward = false;
    opt.norm = false;
    opt.heads = 2;
    LabelPropagator prop(6, 3, opt, rng);
    TokenSequence target{random_tensor({2 * 3, 6}, rng), Origin::target, 1, 2, 3};
    TokenSequence templates{random_tensor({2 * 2 * 3, 6}, rng), Origin::template_set, 2, 2, 3};
    MaskEncoding enc{random_tensor({2, 3, 2, 3}, rng), Head::tra};
    const MaskEncoding out = prop.propagate(target, templates, enc);
    CHECK(out.values.shape() == Shape{1, 3, 2, 3});

    const auto expected = naive_attention(target.tokens, templates.tokens, nchw_to_rows(enc.values), prop.blocks()[0].attn);
    CHECK(max_abs_diff(nchw_to_rows(out.values), expected) < 1e-10);

    MaskEncoding bad{random_tensor({1, 3, 2, 3}, rng), Head::tra};
    CHECK_THROWS_WITH(prop.propagate(target, templates, bad), doctest::Contains("not aligned"));
}

TEST_CASE("one template token is copied to every target position") {
    std::mt19937_64 rng(6);
    LabelPropagator::Options opt;
    opt.layers = 1;
    opt.feedforward = false;
    opt.norm = false;
    opt.heads = 1;
    LabelPropagator prop(4, 4, opt, rng);
    prop.blocks()[0].attn = identity_params(4, 1.0 / 30.0);
    TokenSequence target{random_tensor({3, 4}, rng), Origin::target, 1, 1, 3};
    TokenSequence templates{random_tensor({1, 4}, rng), Origin::template_set, 1, 1, 1};
    MaskEncoding enc{random_tensor({1, 4, 1, 1}, rng), Head::tra};
    const Tensor rows = nchw_to_rows(prop.propagate(target, templates, enc).values);
    for (int64_t t = 0; t < 3; ++t)
        for (int64_t c = 0; c < 4; ++c) CHECK(rows.data()[t * 4 + c] == doctest::Approx(enc.values.data()[c]).epsilon(1e-14));
}
