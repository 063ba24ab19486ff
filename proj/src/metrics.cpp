#include "tiseg/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace tiseg {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width || a.data.size() != b.data.size())
        throw std::invalid_argument("mask shapes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                    " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    if (a.data.size() != static_cast<size_t>(a.height) * a.width)
        throw std::invalid_argument("mask buffer does not match its declared size");
}

}  // namespace

DiceResult dice(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt);
    int64_t inter = 0, p = 0, g = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
        inter += a && b;
        p += a;
        g += b;
    }
    if (p + g == 0) return {1.0, true};
    return {2.0 * static_cast<double>(inter) / static_cast<double>(p + g), false};
}

DiceResult pixel_f1(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt);
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
        tp += a && b;
        fp += a && !b;
        fn += !a && b;
    }
    if (tp + fp + fn == 0) return {1.0, true};
    return {2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn), false};
}

std::vector<int> label_components(const BinaryMask& m, int* count) {
    const int H = m.height, W = m.width;
    std::vector<int> labels(static_cast<size_t>(H) * W, 0);
    std::vector<int> stack;
    int next = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int start = y * W + x;
            if (!m.data[static_cast<size_t>(start)] || labels[static_cast<size_t>(start)]) continue;
            labels[static_cast<size_t>(start)] = ++next;
            stack.push_back(start);
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cy = cur / W, cx = cur % W;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = cy + dy, nx = cx + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        const int nb = ny * W + nx;
                        if (m.data[static_cast<size_t>(nb)] && !labels[static_cast<size_t>(nb)]) {
                            labels[static_cast<size_t>(nb)] = next;
                            stack.push_back(nb);
                        }
                    }
            }
        }
    if (count) *count = next;
    return labels;
}

ObjectF1Result object_f1(const BinaryMask& pred, const BinaryMask& gt, double iou_threshold) {
    require_same_shape(pred, gt);
    int np = 0, ng = 0;
    const auto lp = label_components(pred, &np);
    const auto lg = label_components(gt, &ng);
    ObjectF1Result r;
    if (np == 0 && ng == 0) {
        r.value = 1.0;
        r.both_empty = true;
        return r;
    }
    std::vector<int64_t> area_p(static_cast<size_t>(np) + 1, 0), area_g(static_cast<size_t>(ng) + 1, 0);
    std::map<std::pair<int, int>, int64_t> overlap;
    for (size_t i = 0; i < lp.size(); ++i) {
        ++area_p[static_cast<size_t>(lp[i])];
        ++area_g[static_cast<size_t>(lg[i])];
        if (lp[i] && lg[i]) ++overlap[{lp[i], lg[i]}];
    }
    std::vector<std::tuple<double, int, int>> pairs;
    for (const auto& [key, inter] : overlap) {
        const auto [i, j] = key;
        const double uni = static_cast<double>(area_p[static_cast<size_t>(i)] + area_g[static_cast<size_t>(j)] - inter);
        pairs.emplace_back(static_cast<double>(inter) / uni, i, j);
    }
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
    });
    std::vector<bool> used_p(static_cast<size_t>(np) + 1, false), used_g(static_cast<size_t>(ng) + 1, false);
    for (const auto& [iou, i, j] : pairs) {
        if (iou < iou_threshold) break;
        if (used_p[static_cast<size_t>(i)] || used_g[static_cast<size_t>(j)]) continue;
        used_p[static_cast<size_t>(i)] = used_g[static_cast<size_t>(j)] = true;
        ++r.tp;
    }
    r.fp = np - r.tp;
    r.fn = ng - r.tp;
    r.value = 2.0 * r.tp / static_cast<double>(2 * r.tp + r.fp + r.fn);
    return r;
}

EvalReport evaluate(const std::map<std::string, BinaryMask>& preds, const std::map<std::string, BinaryMask>& gts,
                    const EvalOptions& opt) {
    std::string missing;
    for (const auto& [id, _] : preds)
        if (!gts.count(id)) missing += " pred-only:" + id;
    for (const auto& [id, _] : gts)
        if (!preds.count(id)) missing += " gt-only:" + id;
    if (!missing.empty()) throw std::invalid_argument("evaluate: key sets differ:" + missing);
    if (preds.empty()) throw std::invalid_argument("evaluate: no images");

    EvalReport rep;
    rep.iou_threshold = opt.iou_threshold;
    rep.f1_mode = opt.pixel_level_f1 ? "pixel" : "object";
    for (const auto& [id, pred] : preds) {
        const auto& gt = gts.at(id);
        ImageScore s;
        s.id = id;
        const auto d = dice(pred, gt);
        s.dice = d.value;
        s.dice_both_empty = d.both_empty;
        if (opt.pixel_level_f1) {
            const auto f = pixel_f1(pred, gt);
            s.f1 = f.value;
            s.f1_both_empty = f.both_empty;
        } else {
            const auto f = object_f1(pred, gt, opt.iou_threshold);
            s.f1 = f.value;
            s.f1_both_empty = f.both_empty;
        }
        rep.dice += s.dice;
        rep.f1 += s.f1;
        rep.per_image.push_back(std::move(s));
    }
    const auto n = static_cast<double>(rep.per_image.size());
    rep.dice /= n;
    rep.f1 /= n;
    rep.dice_f1_mean = (rep.dice + rep.f1) / 2.0;
    return rep;
}

EvalReport report_from_scores(double dice_value, double f1_value) {
    EvalReport r;
    r.dice = dice_value;
    r.f1 = f1_value;
    r.dice_f1_mean = (dice_value + f1_value) / 2.0;
    return r;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : r.per_image)
        per.push_back({{"id", s.id},
                       {"dice", s.dice},
                       {"f1", s.f1},
                       {"dice_both_empty", s.dice_both_empty},
                       {"f1_both_empty", s.f1_both_empty}});
    return {{"aggregate", {{"dice", r.dice}, {"f1", r.f1}, {"dice_f1_mean", r.dice_f1_mean}}},
            {"per_image", per},
            {"thresholds", {{"iou", r.iou_threshold}, {"binarize", 0.5}}},
            {"f1_mode", r.f1_mode}};
}

}  // namespace tiseg
