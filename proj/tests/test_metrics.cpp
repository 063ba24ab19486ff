#include <doctest.h>

#include <random>

#include "tiseg/metrics.hpp"

using namespace tiseg;

namespace {

BinaryMask blank(int h, int w) { return {h, w, std::vector<uint8_t>(static_cast<size_t>(h * w), 0)}; }

void fill(BinaryMask& m, int y0, int x0, int h, int w) {
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) m.data[static_cast<size_t>(y * m.width + x)] = 1;
}

}  // namespace

TEST_CASE("dice of identical, disjoint and half-overlapping masks") {
    BinaryMask a = blank(20, 20), b = blank(20, 20);
    fill(a, 0, 0, 10, 10);
    CHECK(dice(a, a).value == 1.0);
    fill(b, 10, 10, 10, 10);
    CHECK(dice(a, b).value == 0.0);

    // |P| = |G| = 100, overlap 50: 2 * 50 / 200.
    BinaryMask c = blank(20, 20);
    fill(c, 0, 5, 10, 10);
    CHECK(dice(a, c).value == 0.5);
    CHECK(dice(c, a).value == dice(a, c).value);
}

TEST_CASE("dice of two empty masks is 1 and flagged") {
    const auto r = dice(blank(4, 4), blank(4, 4));
    CHECK(r.value == 1.0);
    CHECK(r.both_empty);
    CHECK_THROWS(dice(blank(4, 4), blank(4, 5)));
}

TEST_CASE("8-connected labelling joins diagonal neighbours") {
    BinaryMask m = blank(5, 5);
    m.data[0] = 1;
    m.data[6] = 1;   // (1,1) diagonal to (0,0)
    m.data[24] = 1;  // isolated corner
    int n = 0;
    const auto labels = label_components(m, &n);
    CHECK(n == 2);
    CHECK(labels[0] == labels[6]);
    CHECK(labels[0] != labels[24]);
    CHECK(labels[1] == 0);
}

TEST_CASE("object F1 with two of three objects found") {
    BinaryMask gt = blank(30, 30), pred = blank(30, 30);
    fill(gt, 0, 0, 5, 5);
    fill(gt, 10, 10, 5, 5);
    fill(gt, 20, 20, 5, 5);
    fill(pred, 0, 0, 5, 5);
    fill(pred, 10, 10, 5, 4);  // IoU 20/25
    const auto r = object_f1(pred, gt);
    CHECK(r.tp == 2);
    CHECK(r.fp == 0);
    CHECK(r.fn == 1);
    CHECK(r.value == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("object F1 is zero when every IoU falls below the threshold") {
    BinaryMask gt = blank(20, 20), pred = blank(20, 20);
    fill(gt, 0, 0, 4, 4);
    fill(pred, 0, 2, 4, 4);  // overlap 8, union 24: IoU 1/3
    const auto r = object_f1(pred, gt);
    CHECK(r.value == 0.0);
    CHECK(r.fp == 1);
    CHECK(r.fn == 1);
    CHECK(object_f1(pred, gt, 0.3).value == 1.0);
}

TEST_CASE("object F1 matches greedily by descending IoU") {
    // One prediction overlaps two GT objects; the better match wins and the
    // other GT is a miss.
    BinaryMask gt = blank(10, 20), pred = blank(10, 20);
    fill(gt, 0, 0, 4, 4);
    fill(gt, 0, 5, 4, 2);
    fill(pred, 0, 0, 4, 6);  // IoU with first: 16/24, with second: 4/28
    const auto r = object_f1(pred, gt);
    CHECK(r.tp == 1);
    CHECK(r.fn == 1);
    CHECK(r.fp == 0);
    CHECK(r.value == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("object F1 properties") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> pos(0, 40), size(2, 6);
    for (int t = 0; t < 10; ++t) {
        BinaryMask a = blank(48, 48), b = blank(48, 48);
        for (int k = 0; k < 6; ++k) fill(a, pos(rng), pos(rng), size(rng), size(rng));
        for (int k = 0; k < 6; ++k) fill(b, pos(rng), pos(rng), size(rng), size(rng));
        double prev = 2.0;
        for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            const double v = object_f1(a, b, thr).value;
            CHECK(v <= prev);
            CHECK(v >= 0.0);
            prev = v;
        }
        CHECK(object_f1(a, a).value == 1.0);
        CHECK(dice(a, b).value == doctest::Approx(dice(b, a).value));
    }
    CHECK(object_f1(blank(3, 3), blank(3, 3)).both_empty);
}

TEST_CASE("single-component F1 is 1 exactly when IoU reaches the threshold") {
    BinaryMask gt = blank(10, 10), pred = blank(10, 10);
    fill(gt, 0, 0, 4, 4);
    fill(pred, 0, 0, 4, 2);  // IoU 0.5
    CHECK(object_f1(pred, gt, 0.5).value == 1.0);
    CHECK(object_f1(pred, gt, 0.51).value == 0.0);
}

TEST_CASE("evaluate averages per image and checks key sets") {
    BinaryMask a = blank(8, 8), z = blank(8, 8);
    fill(a, 2, 2, 3, 3);
    std::map<std::string, BinaryMask> gts{{"i1", a}, {"i2", a}};
    std::map<std::string, BinaryMask> preds{{"i1", a}, {"i2", z}};
    const auto r = evaluate(preds, gts);
    CHECK(r.dice == 0.5);
    CHECK(r.f1 == 0.5);
    CHECK(r.dice_f1_mean == (r.dice + r.f1) / 2.0);
    REQUIRE(r.per_image.size() == 2);
    CHECK(r.per_image[0].id == "i1");

    const auto j = to_json(r);
    CHECK(j.at("aggregate").at("dice").get<double>() == 0.5);
    CHECK(j.at("aggregate").contains("dice_f1_mean"));
    CHECK(j.at("f1_mode").get<std::string>() == "object");

    std::map<std::string, BinaryMask> wrong{{"i1", a}, {"i3", a}};
    CHECK_THROWS_WITH(evaluate(wrong, gts), doctest::Contains("i3"));

    EvalOptions pix;
    pix.pixel_level_f1 = true;
    const auto rp = evaluate(preds, gts, pix);
    CHECK(rp.f1_mode == "pixel");
    CHECK(rp.f1 == rp.dice);
}

TEST_CASE("reported mean column follows (dice + f1) / 2") {
    const auto r = report_from_scores(85.12, 75.86);
    CHECK(r.dice_f1_mean == doctest::Approx(80.49));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", r.dice_f1_mean);
    CHECK(std::string(buf) == "80.49");
}
