#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tiseg {

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;  // row-major, 0/1
};

struct DiceResult {
    double value = 0.0;
    bool both_empty = false;  // 1.0 by convention
};

// 2|P & G| / (|P| + |G|).
DiceResult dice(const BinaryMask& pred, const BinaryMask& gt);

// 8-connected component labels (0 = background, 1..count).
std::vector<int> label_components(const BinaryMask& m, int* count = nullptr);

struct ObjectF1Result {
    double value = 0.0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
    bool both_empty = false;
};

// Components are matched one-to-one, greedily in descending IoU order; a pair
// counts as a hit iff IoU >= iou_threshold. F1 = 2TP / (2TP + FP + FN).
ObjectF1Result object_f1(const BinaryMask& pred, const BinaryMask& gt, double iou_threshold = 0.5);

// Pixel-level F1 (numerically identical to Dice for binary masks).
DiceResult pixel_f1(const BinaryMask& pred, const BinaryMask& gt);

struct ImageScore {
    std::string id;
    double dice = 0.0;
    double f1 = 0.0;
    bool dice_both_empty = false;
    bool f1_both_empty = false;
};

struct EvalReport {
    std::vector<ImageScore> per_image;
    double dice = 0.0;
    double f1 = 0.0;
    double dice_f1_mean = 0.0;
    double iou_threshold = 0.5;
    std::string f1_mode = "object";
};

struct EvalOptions {
    double iou_threshold = 0.5;
    bool pixel_level_f1 = false;
};

EvalReport evaluate(const std::map<std::string, BinaryMask>& preds, const std::map<std::string, BinaryMask>& gts,
                    const EvalOptions& opt = {});
// Aggregate row from already-computed column values.
EvalReport report_from_scores(double dice, double f1);

nlohmann::json to_json(const EvalReport& r);

}  // namespace tiseg
