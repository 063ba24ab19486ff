#include <doctest.h>

#include "testing.hpp"
#include "tiseg/ops.hpp"

using namespace tiseg;
using tiseg::testing::grad_check;
using tiseg::testing::random_tensor;

namespace {

// Weighted sum with fixed random weights so every output element matters.
Tensor probe(const Tensor& y, uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    return dot(y, random_tensor(y.shape(), rng));
}

}  // namespace

TEST_CASE("elementwise and reduction gradients") {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor({3, 4}, rng, true);
    Tensor b = random_tensor({3, 4}, rng, true);
    Tensor s = Tensor::scalar(1.7, true);

    CHECK(grad_check([&] { return probe(add(a, b)); }, a).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(sub(a, b)); }, b).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(mul(a, b)); }, a).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(mul_scalar(a, s)); }, s).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(div_scalar(a, s)); }, s).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(div_scalar(a, s)); }, a).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(exp(a)); }, a).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(sigmoid(a)); }, a).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(relu(a)); }, a).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return sum_squares(a); }, a).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return mean(mul(a, a)); }, a).max_rel_error < 1e-6);
}

TEST_CASE("matmul gradients for every transpose combination") {
    std::mt19937_64 rng(2);
    for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
            Tensor a = random_tensor(ta ? Shape{4, 3} : Shape{3, 4}, rng, true);
            Tensor b = random_tensor(tb ? Shape{5, 4} : Shape{4, 5}, rng, true);
            auto f = [&] { return probe(matmul(a, b, ta, tb)); };
            CHECK(grad_check(f, a).max_rel_error < 1e-6);
            CHECK(grad_check(f, b).max_rel_error < 1e-6);
        }
}

TEST_CASE("matmul rejects inner dimension mismatch") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("softmax and layer norm") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({4, 6}, rng, true);
    Tensor y = softmax_rows(x, 0.7);
    for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int c = 0; c < 6; ++c) s += y.data()[static_cast<size_t>(r * 6 + c)];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(grad_check([&] { return probe(softmax_rows(x, 0.7)); }, x).max_rel_error < 1e-6);

    Tensor g = random_tensor({6}, rng, true);
    Tensor b = random_tensor({6}, rng, true);
    auto ln = [&] { return probe(layer_norm_rows(x, g, b)); };
    CHECK(grad_check(ln, x).max_rel_error < 1e-5);
    CHECK(grad_check(ln, g).max_rel_error < 1e-6);
    CHECK(grad_check(ln, b).max_rel_error < 1e-6);
}

TEST_CASE("concat, slice and layout permutations") {
    std::mt19937_64 rng(4);
    Tensor a = random_tensor({2, 3, 2, 2}, rng, true);
    Tensor b = random_tensor({2, 1, 2, 2}, rng, true);
    Tensor c = concat({a, b}, 1);
    CHECK(c.shape() == Shape{2, 4, 2, 2});
    CHECK(c.data()[static_cast<size_t>(3 * 4)] == b.data()[0]);
    CHECK(grad_check([&] { return probe(concat({a, b}, 1)); }, b).max_rel_error < 1e-6);
    CHECK(grad_check([&] { return probe(slice(a, 1, 1, 3)); }, a).max_rel_error < 1e-6);

    Tensor rows = nchw_to_rows(a);
    CHECK(rows.shape() == Shape{8, 3});
    // row (n=1, pixel 2), channel 1 == a[1, 1, 1, 0]
    CHECK(rows.data()[static_cast<size_t>((4 + 2) * 3 + 1)] == a.data()[static_cast<size_t>(((1 * 3 + 1) * 2 + 1) * 2)]);
    Tensor back = rows_to_nchw(rows, 2, 2, 2);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(back.data()[static_cast<size_t>(i)] == a.data()[static_cast<size_t>(i)]);
    CHECK(grad_check([&] { return probe(nchw_to_rows(a)); }, a).max_rel_error < 1e-6);
}

TEST_CASE("conv2d matches a direct sliding-window loop") {
    std::mt19937_64 rng(5);
    const int N = 2, C = 3, H = 7, W = 6, OC = 4, k = 3;
    for (int stride : {1, 2}) {
        const int pad = 1;
        Tensor x = random_tensor({N, C, H, W}, rng, true);
        Tensor w = random_tensor({OC, C, k, k}, rng, true);
        Tensor b = random_tensor({OC}, rng, true);
        Tensor y = conv2d(x, w, b, stride, pad);
        const int OH = (H + 2 * pad - k) / stride + 1, OW = (W + 2 * pad - k) / stride + 1;
        REQUIRE(y.shape() == Shape{N, OC, OH, OW});
        auto X = [&](int n, int c, int yy, int xx) -> double {
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
            return x.data()[static_cast<size_t>(((n * C + c) * H + yy) * W + xx)];
        };
        double worst = 0.0;
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < OC; ++o)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        double acc = b.data()[static_cast<size_t>(o)];
                        for (int c = 0; c < C; ++c)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx)
                                    acc += w.data()[static_cast<size_t>(((o * C + c) * k + ky) * k + kx)] *
                                           X(n, c, oy * stride - pad + ky, ox * stride - pad + kx);
                        worst = std::max(worst, std::abs(acc - y.data()[static_cast<size_t>(((n * OC + o) * OH + oy) * OW + ox)]));
                    }
        CHECK(worst < 1e-12);
        auto f = [&] { return probe(conv2d(x, w, b, stride, pad)); };
        CHECK(grad_check(f, x).max_rel_error < 1e-6);
        CHECK(grad_check(f, w).max_rel_error < 1e-6);
        CHECK(grad_check(f, b).max_rel_error < 1e-6);
    }
}

TEST_CASE("upsample and binary cross-entropy") {
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({1, 2, 2, 3}, rng, true);
    Tensor u = upsample_nearest(x, 2);
    CHECK(u.shape() == Shape{1, 2, 4, 6});
    CHECK(u.data()[static_cast<size_t>(1 * 6 + 1)] == x.data()[0]);
    CHECK(grad_check([&] { return probe(upsample_nearest(x, 2)); }, x).max_rel_error < 1e-6);

    Tensor zero = Tensor::zeros({1, 1, 2, 2});
    Tensor t = Tensor::from({1, 1, 2, 2}, {0, 1, 1, 0});
    CHECK(bce_with_logits(zero, t).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Tensor z = random_tensor({1, 1, 2, 2}, rng, true, 3.0);
    CHECK(grad_check([&] { return bce_with_logits(z, t); }, z).max_rel_error < 1e-6);
}

TEST_CASE("no-grad mode records no graph") {
    Tensor a = Tensor::full({2}, 1.0, true);
    {
        NoGradGuard g;
        CHECK_FALSE(add(a, a).requires_grad());
    }
    CHECK(add(a, a).requires_grad());
}

TEST_CASE("shared subexpressions accumulate gradients") {
    Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor y = sum(mul(a, a));  // d/da = 2a
    y.backward();
    CHECK(a.grad()[0] == doctest::Approx(2.0));
    CHECK(a.grad()[1] == doctest::Approx(4.0));
}
