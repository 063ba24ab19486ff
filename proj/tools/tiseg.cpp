// tiseg command-line tool.
//
// Configuration is layered: built-in defaults < --config JSON < --set / named
// flags. Every command that writes a run directory stores the resolved
// configuration and a manifest with the hashes of its inputs.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tiseg/checkpoint.hpp"
#include "tiseg/datakit.hpp"
#include "tiseg/imageio.hpp"
#include "tiseg/inference.hpp"
#include "tiseg/metrics.hpp"
#include "tiseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tiseg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalSettings {
    double iou_threshold = 0.5;
    bool pixel_f1 = false;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    StageConfig stage;
    EvalSettings eval;
    bool deterministic = false;

    json to_json() const {
        return {{"model", model},
                {"train", train},
                {"stage", stage},
                {"eval", {{"iou_threshold", eval.iou_threshold}, {"pixel_f1", eval.pixel_f1}}},
                {"deterministic", deterministic}};
    }
};

void merge_into(json& base, const json& over) {
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (!base.contains(it.key())) throw UsageError("unknown config key '" + it.key() + "'");
        if (it->is_object() && base[it.key()].is_object())
            merge_into(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

RunConfig from_tree(const json& j) {
    RunConfig c;
    try {
        c.model = j.at("model").get<ModelConfig>();
        c.train = j.at("train").get<TrainConfig>();
        c.stage = j.at("stage").get<StageConfig>();
        c.eval.iou_threshold = j.at("eval").at("iou_threshold").get<double>();
        c.eval.pixel_f1 = j.at("eval").at("pixel_f1").get<bool>();
        c.deterministic = j.at("deterministic").get<bool>();
        validate(c.model);
        validate(c.train);
        validate(c.stage);
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    if (c.deterministic) c.stage.threads = 1;
    return c;
}

// Options shared by every subcommand.
struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    bool deterministic = false;
    std::string out;
    std::optional<uint64_t> seed;
    std::optional<int> epochs, episodes, n_templates, b_targets, patch_size, overlap, threads, k_candidates;
    std::optional<double> lr;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_file, "JSON config file (sections model/train/stage/eval)");
    app->add_option("--set", c.sets, "override, e.g. train.lr=0.001 (value parsed as JSON)");
    app->add_flag("--deterministic", c.deterministic, "single-threaded everywhere");
    app->add_option("--out", c.out, "run directory (default: $TISEG_OUTPUT_ROOT/<command>)");
    app->add_option("--seed", c.seed, "sets train.seed, stage.template_seed and model.init_seed");
    app->add_option("--epochs", c.epochs);
    app->add_option("--episodes-per-epoch", c.episodes);
    app->add_option("--lr", c.lr);
    app->add_option("--n-templates", c.n_templates, "N for training and inference");
    app->add_option("--b-targets", c.b_targets);
    app->add_option("--patch-size", c.patch_size);
    app->add_option("--overlap", c.overlap);
    app->add_option("--threads", c.threads);
    app->add_option("--k-candidates", c.k_candidates);
}

RunConfig resolve(const Common& c) {
    json tree = RunConfig{}.to_json();
    if (!c.config_file.empty()) {
        std::ifstream f(c.config_file);
        if (!f) throw UsageError("cannot read config file " + c.config_file);
        json file;
        try {
            file = json::parse(f);
        } catch (const json::exception& e) {
            throw UsageError("config file " + c.config_file + ": " + e.what());
        }
        merge_into(tree, file);
    }
    auto set = [&](const std::string& path, const json& v) {
        const auto dot = path.find('.');
        json over;
        if (dot == std::string::npos)
            over[path] = v;
        else
            over[path.substr(0, dot)][path.substr(dot + 1)] = v;
        merge_into(tree, over);
    };
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        json v;
        try {
            v = json::parse(s.substr(eq + 1));
        } catch (const json::exception&) {
            v = s.substr(eq + 1);  // bare strings
        }
        set(s.substr(0, eq), v);
    }
    if (c.seed) {
        set("train.seed", *c.seed);
        set("stage.template_seed", *c.seed);
        set("model.init_seed", *c.seed);
    }
    if (c.epochs) set("train.epochs", *c.epochs);
    if (c.episodes) set("train.episodes_per_epoch", *c.episodes);
    if (c.lr) set("train.lr", *c.lr);
    if (c.n_templates) {
        set("train.n_templates", *c.n_templates);
        set("stage.n_templates", *c.n_templates);
    }
    if (c.b_targets) set("train.b_targets", *c.b_targets);
    if (c.patch_size) set("train.patch_size", *c.patch_size);
    if (c.overlap) set("train.overlap", *c.overlap);
    if (c.threads) set("stage.threads", *c.threads);
    if (c.k_candidates) set("stage.k_candidates", *c.k_candidates);
    if (c.deterministic) set("deterministic", true);
    return from_tree(tree);
}

fs::path run_dir(const Common& c, const std::string& command) {
    fs::path dir;
    if (!c.out.empty()) {
        dir = c.out;
    } else {
        const char* root = std::getenv("TISEG_OUTPUT_ROOT");
        dir = fs::path(root && *root ? root : "runs") / command;
    }
    fs::create_directories(dir);
    return dir;
}

std::string hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    return json::parse(f);
}

// Resolved config plus the identity of every input.
void write_run_files(const fs::path& dir, const std::string& command, const RunConfig& cfg, const json& inputs) {
    write_json(dir / "config.json", cfg.to_json());
    write_json(dir / "manifest.json", {{"command", command}, {"inputs", inputs}, {"format_version", 1}});
}

Dataset load_data(const std::string& dir) {
    Dataset d = read_dataset_cache(dir);
    if (d.empty()) throw std::runtime_error("dataset cache " + dir + " holds no records");
    return d;
}

json dataset_input(const std::string& dir) { return {{"path", dir}, {"hash", hex(hash_directory(dir))}}; }
json file_input(const std::string& path) { return {{"path", path}, {"hash", hex(hash_file(path))}}; }

void write_dataset_pngs(const fs::path& dir, const Dataset& d) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    for (const auto& r : d) {
        save_rgb_png(dir / "images" / (r.id + ".png"), r.height, r.width, r.pixels);
        if (r.mask) save_mask_png(dir / "masks" / (r.id + ".png"), r.height, r.width, *r.mask);
    }
}

// ---- commands -----------------------------------------------------------------

int cmd_prepare(const Common& common, const std::string& images, const std::string& annotations,
                const std::string& source) {
    const RunConfig cfg = resolve(common);
    Source src;
    try {
        src = source_from_string(source);
    } catch (const std::exception&) {
        throw UsageError("--source must be train or test, got '" + source + "'");
    }
    const IngestResult r = ingest_monuseg(images, annotations, src);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& e : r.errors) std::cerr << "error: " << e << '\n';
    if (r.records.empty()) throw std::runtime_error("no records ingested from " + images);

    const fs::path dir = run_dir(common, "prepare");
    write_dataset_cache(dir / "data", r.records);
    const auto patches = patch_dataset(r.records, cfg.train.patch_size, cfg.train.overlap);
    const json stats = {{"records", r.records.size()},
                        {"errors", r.errors},
                        {"skipped_regions", r.skipped_regions},
                        {"total_nuclei", r.total_nuclei},
                        {"patch_size", cfg.train.patch_size},
                        {"overlap", cfg.train.overlap},
                        {"patches", patches.size()}};
    write_json(dir / "stats.json", stats);
    write_run_files(dir, "prepare", cfg, {{"images", images}, {"annotations", annotations}});
    std::cout << stats.dump(2) << '\n';
    return r.errors.empty() ? 0 : kExitData;
}

int cmd_synth(const Common& common, int n, int size, double shift, bool pngs) {
    const RunConfig cfg = resolve(common);
    if (n < 0 || size < 64) throw UsageError("synth needs --n >= 0 and --size >= 64");
    SynthOptions opt;
    opt.domain_shift = shift;
    const Dataset d = synth_generate(n, size, size, cfg.train.seed, opt);
    const fs::path dir = run_dir(common, "synth");
    write_dataset_cache(dir / "data", d);
    if (pngs) write_dataset_pngs(dir, d);
    write_run_files(dir, "synth", cfg, {{"n", n}, {"size", size}, {"domain_shift", shift}, {"seed", cfg.train.seed}});
    std::cout << "wrote " << d.size() << " images to " << (dir / "data").string() << " (hash "
              << hex(hash_directory(dir / "data")) << ")\n";
    return 0;
}

TrainHooks hooks_for(const fs::path& dir, const RunConfig& cfg) {
    TrainHooks h;
    fs::remove(dir / "train_log.jsonl");
    h.log_path = dir / "train_log.jsonl";
    h.threads = cfg.stage.threads;
    h.on_record = [](const json& j) {
        if (j.at("type") == "epoch")
            std::cout << "epoch " << j.at("epoch") << " mean_loss " << j.at("mean_loss") << " val_dice "
                      << j.at("val_dice") << " val_f1 " << j.at("val_f1") << '\n';
    };
    return h;
}

int cmd_train(const Common& common, const std::string& data) {
    const RunConfig cfg = resolve(common);
    const Dataset d = load_data(data);
    const fs::path dir = run_dir(common, "train");
    write_run_files(dir, "train", cfg, {{"data", dataset_input(data)}});
    const TrainResult r = train(d, cfg.model, cfg.train, hooks_for(dir, cfg));
    r.best.save(dir / "best.ckpt");
    r.last.save(dir / "last.ckpt");
    write_json(dir / "result.json", {{"best_epoch", r.best_epoch},
                                     {"best_checkpoint_hash", hex(hash_file(dir / "best.ckpt"))},
                                     {"last_checkpoint_hash", hex(hash_file(dir / "last.ckpt"))}});
    std::cout << "best epoch " << r.best_epoch << "; checkpoints in " << dir.string() << '\n';
    return 0;
}

int cmd_retrain(const Common& common, const std::string& data, const std::string& selection) {
    const RunConfig cfg = resolve(common);
    const Dataset d = load_data(data);
    const Checkpoint sel = Checkpoint::load(selection);
    const fs::path dir = run_dir(common, "retrain-full");
    RunConfig used = cfg;
    used.model = sel.model;
    used.train = sel.train;
    write_run_files(dir, "retrain-full", used, {{"data", dataset_input(data)}, {"selection", file_input(selection)}});
    std::string warning;
    const Checkpoint out = retrain_full(d, sel, hooks_for(dir, cfg), &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << '\n';
    out.save(dir / "full.ckpt");
    std::cout << "trained " << sel.epoch << " epochs on " << d.size() << " images; wrote "
              << (dir / "full.ckpt").string() << '\n';
    return 0;
}

void write_masks(const fs::path& dir, const std::map<std::string, BinaryMask>& masks, int stage) {
    fs::create_directories(dir);
    for (const auto& [id, m] : masks)
        save_mask_png(dir / (id + "_stage" + std::to_string(stage) + ".png"), m.height, m.width, m.data);
}

json eval_and_save(const std::map<std::string, BinaryMask>& preds, const std::map<std::string, BinaryMask>& gts,
                   const EvalSettings& s, const fs::path& path) {
    EvalOptions o;
    o.iou_threshold = s.iou_threshold;
    o.pixel_level_f1 = s.pixel_f1;
    const json j = to_json(evaluate(preds, gts, o));
    write_json(path, j);
    return j;
}

std::string table(const std::vector<std::pair<std::string, json>>& rows) {
    std::ostringstream s;
    s << "| Method | Dice | F1 | Dice&F1 |\n|---|---|---|---|\n";
    char buf[128];
    for (const auto& [label, j] : rows) {
        const auto& a = j.at("aggregate");
        std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.2f |\n", label.c_str(), 100.0 * a.at("dice").get<double>(),
                      100.0 * a.at("f1").get<double>(), 100.0 * a.at("dice_f1_mean").get<double>());
        s << buf;
    }
    return s.str();
}

int cmd_infer(const Common& common, const std::string& checkpoint, const std::string& train_data,
              const std::string& test_data, const std::string& stage) {
    RunConfig cfg = resolve(common);
    if (stage != "1" && stage != "2" && stage != "both") throw UsageError("--stage must be 1, 2 or both");
    StageConfig stage2 = cfg.stage;
    stage2.stage = 2;
    if (stage != "1") {
        try {
            validate(stage2);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    const Checkpoint ckpt = Checkpoint::load(checkpoint);
    const auto model = model_from(ckpt);
    cfg.model = ckpt.model;
    const int S = ckpt.train.patch_size, ov = ckpt.train.overlap;
    cfg.train.patch_size = S;
    cfg.train.overlap = ov;

    const Dataset test = load_data(test_data);
    const auto test_patches = patch_dataset(test, S, ov);
    const fs::path dir = run_dir(common, "infer");
    write_run_files(dir, "infer", cfg,
                    {{"checkpoint", file_input(checkpoint)},
                     {"train_data", dataset_input(train_data)},
                     {"test_data", dataset_input(test_data)},
                     {"stage", stage}});
    InferenceOptions io;
    io.threads = cfg.stage.threads;
    const auto geom = geometry_of(test);
    bool labelled = true;
    for (const auto& r : test) labelled = labelled && r.mask.has_value();

    // Stage 2 always needs the stage-1 store; reuse one from a previous run when present.
    PseudoLabelStore s1;
    const fs::path s1_path = dir / "store_stage1.bin";
    if (stage == "2" && fs::exists(s1_path)) {
        s1 = PseudoLabelStore::load(s1_path);
    } else {
        const Dataset train_set = load_data(train_data);
        const auto pool = patch_dataset(train_set, S, ov);
        StageConfig sc = cfg.stage;
        sc.stage = 1;
        s1 = run_stage1(*model, pool, test_patches, sc, io);
        s1.save(s1_path);
    }
    std::vector<std::pair<std::string, json>> rows;
    auto finish = [&](const PseudoLabelStore& store, int k) {
        const auto masks = assemble(store, geom, S, ov);
        write_masks(dir / "masks", masks, k);
        if (labelled) {
            const json j = eval_and_save(masks, ground_truth_of(test), cfg.eval,
                                         dir / ("eval_stage" + std::to_string(k) + ".json"));
            rows.emplace_back(k == 1 ? "stage 1" : "stage 2 (test-set templates)", j);
        }
    };
    if (stage != "2") finish(s1, 1);
    if (stage != "1") {
        const PseudoLabelStore s2 = run_stage2(*model, s1, test_patches, stage2, io);
        s2.save(dir / "store_stage2.bin");
        finish(s2, 2);
    }
    if (!rows.empty()) {
        const std::string t = table(rows);
        std::ofstream(dir / "table.md") << t;
        std::cout << t;
    }
    std::cout << "masks in " << (dir / "masks").string() << '\n';
    return 0;
}

// Prediction files are <id>.png or <id>_stage<k>.png.
std::map<std::string, BinaryMask> read_mask_dir(const fs::path& dir, std::optional<int> stage) {
    if (!fs::is_directory(dir)) throw std::runtime_error("mask directory " + dir.string() + " does not exist");
    const std::regex staged("(.+)_stage([0-9]+)");
    std::map<std::string, BinaryMask> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::string id = f.stem().string();
        std::smatch m;
        if (std::regex_match(id, m, staged)) {
            if (stage && std::stoi(m[2]) != *stage) continue;
            id = m[1];
        } else if (stage) {
            continue;
        }
        BinaryMask b;
        b.data = load_mask_png(f, &b.height, &b.width);
        if (!out.emplace(id, std::move(b)).second)
            throw std::runtime_error("several masks for image " + id + " in " + dir.string() + "; pass --stage");
    }
    return out;
}

// Ground truth from a dataset cache (.rec files) or a directory of mask PNGs.
std::map<std::string, BinaryMask> read_ground_truth(const fs::path& dir) {
    bool has_records = false;
    if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir)) has_records = has_records || e.path().extension() == ".rec";
    if (has_records) return ground_truth_of(read_dataset_cache(dir));
    return read_mask_dir(dir, std::nullopt);
}

int cmd_eval(const Common& common, const std::string& pred_dir, const std::string& gt_dir, std::optional<int> stage) {
    const RunConfig cfg = resolve(common);
    const auto preds = read_mask_dir(pred_dir, stage);
    const auto gts = read_ground_truth(gt_dir);
    const fs::path dir = run_dir(common, "eval");
    write_run_files(dir, "eval", cfg,
                    {{"pred_dir", dataset_input(pred_dir)}, {"gt_dir", dataset_input(gt_dir)}, {"stage", stage ? *stage : 0}});
    const json j = eval_and_save(preds, gts, cfg.eval, dir / "eval.json");
    std::cout << table({{stage ? "stage " + std::to_string(*stage) : "prediction", j}});
    return 0;
}

int cmd_report(const Common& common, const std::vector<std::string>& evals, std::vector<std::string> labels,
               const std::string& data, const std::string& pred_dir, std::optional<int> stage) {
    const RunConfig cfg = resolve(common);
    if (!labels.empty() && labels.size() != evals.size()) throw UsageError("--label must be given once per --eval");
    const fs::path dir = run_dir(common, "report");
    std::vector<std::pair<std::string, json>> rows;
    json inputs = json::array();
    for (size_t i = 0; i < evals.size(); ++i) {
        rows.emplace_back(labels.empty() ? fs::path(evals[i]).stem().string() : labels[i], read_json(evals[i]));
        inputs.push_back(file_input(evals[i]));
    }
    if (!rows.empty()) {
        const std::string t = table(rows);
        std::ofstream(dir / "table.md") << t;
        std::cout << t;
    }
    int overlays = 0;
    if (!data.empty() && !pred_dir.empty()) {
        const Dataset d = load_data(data);
        const auto preds = read_mask_dir(pred_dir, stage);
        fs::create_directories(dir / "overlays");
        for (const auto& r : d) {
            const auto it = preds.find(r.id);
            if (it == preds.end() || !r.mask) continue;
            if (it->second.height != r.height || it->second.width != r.width)
                throw std::runtime_error("prediction for " + r.id + " has the wrong size");
            save_overlay_png(dir / "overlays" / (r.id + "_overlay.png"), r.height, r.width, r.pixels, *r.mask,
                             it->second.data);
            ++overlays;
        }
        std::cout << overlays << " overlays (green: ground truth, red: prediction) in "
                  << (dir / "overlays").string() << '\n';
    }
    write_run_files(dir, "report", cfg, {{"evals", inputs}, {"data", data}, {"pred_dir", pred_dir}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tiseg: transductive/inductive nuclei segmentation"};
    app.require_subcommand(1);

    Common common;
    std::string images, annotations, source = "train";
    auto* prepare = app.add_subcommand("prepare", "ingest MoNuSeg-format tiles into a dataset cache");
    add_common(prepare, common);
    prepare->add_option("--images", images);
    prepare->add_option("--annotations", annotations);
    prepare->add_option("--source", source, "train or test");

    int n = 10, size = 256;
    double shift = 0.0;
    bool pngs = false;
    auto* synth = app.add_subcommand("synth", "generate a synthetic nuclei dataset");
    add_common(synth, common);
    synth->add_option("--n", n, "number of images");
    synth->add_option("--size", size, "image side in pixels");
    synth->add_option("--shift", shift, "appearance shift (0 = reference)");
    synth->add_flag("--png", pngs, "also write images/ and masks/ PNGs");

    std::string data;
    auto* train_cmd = app.add_subcommand("train", "episodic training with validation-based epoch selection");
    add_common(train_cmd, common);
    train_cmd->add_option("--data", data, "dataset cache directory");

    std::string selection;
    auto* retrain = app.add_subcommand("retrain-full", "retrain on all images for the selected epoch count");
    add_common(retrain, common);
    retrain->add_option("--data", data);
    retrain->add_option("--selection", selection, "checkpoint from train (best.ckpt)");

    std::string checkpoint, train_data, test_data, stage = "both";
    auto* infer = app.add_subcommand("infer", "two-stage inference");
    add_common(infer, common);
    infer->add_option("--checkpoint", checkpoint);
    infer->add_option("--train-data", train_data, "labelled template source for stage 1");
    infer->add_option("--test-data", test_data);
    infer->add_option("--stage", stage, "1, 2 or both");

    std::string pred_dir, gt_dir;
    std::optional<int> eval_stage;
    auto* eval = app.add_subcommand("eval", "score predicted masks against ground truth");
    add_common(eval, common);
    eval->add_option("--pred-dir", pred_dir);
    eval->add_option("--gt-dir", gt_dir, "dataset cache or directory of <id>.png masks");
    eval->add_option("--stage", eval_stage, "only read <id>_stage<k>.png");

    std::vector<std::string> evals, labels;
    auto* report = app.add_subcommand("report", "result tables and contour overlays");
    add_common(report, common);
    report->add_option("--eval", evals, "eval JSON files, one table row each");
    report->add_option("--label", labels, "row labels");
    report->add_option("--data", data, "dataset cache for overlays");
    report->add_option("--pred-dir", pred_dir);
    report->add_option("--stage", eval_stage);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    // Checked after parsing so that an unknown flag is reported first.
    auto need = [](const std::string& value, const char* flag) {
        if (value.empty()) throw UsageError(std::string(flag) + " is required");
    };
    try {
        if (*prepare) need(images, "--images"), need(annotations, "--annotations");
        if (*train_cmd || *retrain) need(data, "--data");
        if (*retrain) need(selection, "--selection");
        if (*infer) need(checkpoint, "--checkpoint"), need(train_data, "--train-data"), need(test_data, "--test-data");
        if (*eval) need(pred_dir, "--pred-dir"), need(gt_dir, "--gt-dir");
        if (*prepare) return cmd_prepare(common, images, annotations, source);
        if (*synth) return cmd_synth(common, n, size, shift, pngs);
        if (*train_cmd) return cmd_train(common, data);
        if (*retrain) return cmd_retrain(common, data, selection);
        if (*infer) return cmd_infer(common, checkpoint, train_data, test_data, stage);
        if (*eval) return cmd_eval(common, pred_dir, gt_dir, eval_stage);
        if (*report) return cmd_report(common, evals, labels, data, pred_dir, eval_stage);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << " (replay with episode seed " << e.episode_seed << ")\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
