// conseg: command-line front end for the consistency-learning segmented
// time-series classification pipeline. Subcommands cover the full flow:
// gen -> disturb -> segment -> train -> eval, plus harmonize-export and the
// mi-demo information-gain table. Every run writes a resolved config
// snapshot and a manifest beside its outputs; re-running from the snapshot
// reproduces outputs byte for byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "conseg/config.hpp"
#include "conseg/data.hpp"
#include "conseg/metrics.hpp"
#include "conseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace conseg;

namespace {

const std::vector<std::string> kKnownKeys = {
    "gen.classes",          "gen.features",       "gen.intervals",
    "gen.groups",           "gen.runs_min",       "gen.runs_max",
    "gen.duration_min",     "gen.duration_max",   "gen.crossfade",
    "gen.noise",            "gen.seed",           "disturb.mode",
    "disturb.ratio",        "disturb.seed",       "seg.window",
    "seg.stride",           "curriculum.levels",  "pool.per_level",
    "pool.val_per_level",   "pool.test_per_level", "pool.interval_len",
    "pool.seed",            "enc.hidden",         "enc.ffn",
    "enc.heads",            "enc.layers",         "enc.max_segments",
    "enc.dropout",          "enc.sigma_floor",    "enc.conv_channels",
    "enc.conv_kernel",      "enc.conv_stride",    "enc.gate_mode",
    "train.epochs",         "train.batch",        "train.lr",
    "train.weight_decay",   "train.e_eta",        "train.e_gap",
    "train.seed",           "train.symmetric_ratio", "train.symmetric_seed",
    "split.train",          "split.val",          "split.test",
    "split.fold",           "eval.tolerance",     "mi.random_tables",
    "mi.seed",
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--out", args.out_dir,
                    "output directory (default: $CONSEG_OUT/<command>)");
    cmd->add_option("--seed", args.seed, "seed override")->each([&args](const std::string&) {
        args.seed_set = true;
    });
}

Config load_config(const CommonArgs& args) {
    Config cfg;
    if (!args.config_path.empty()) cfg = Config::load_file(args.config_path);
    cfg.require_known(kKnownKeys);
    return cfg;
}

fs::path resolve_out(const CommonArgs& args, const std::string& command) {
    fs::path out;
    if (!args.out_dir.empty()) {
        out = args.out_dir;
    } else if (const char* root = std::getenv("CONSEG_OUT")) {
        out = fs::path(root) / command;
    } else {
        throw ConfigError("no output directory: pass --out or set CONSEG_OUT");
    }
    fs::create_directories(out);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot open for writing: " + path.string());
    os << text;
    if (!os) throw ContractError("write failed: " + path.string());
}

std::string hash_hex(const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(Config::hash_text(text)));
    return buf;
}

// resolved-config snapshot + manifest, shared by every subcommand
std::string write_run_records(const fs::path& out, const std::string& command, Config& cfg,
                              json extra) {
    std::string snapshot = cfg.to_string();
    write_text(out / "config.snapshot", snapshot);
    json manifest = {{"command", command}, {"config_hash", hash_hex(snapshot)}};
    manifest.update(extra);
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return hash_hex(snapshot);
}

data::GeneratorConfig generator_config(const Config& cfg) {
    data::GeneratorConfig g;
    g.classes = cfg.get_int("gen.classes", g.classes);
    g.features = cfg.get_int("gen.features", g.features);
    g.intervals = cfg.get_int("gen.intervals", g.intervals);
    g.groups = cfg.get_int("gen.groups", g.groups);
    g.runs_min = cfg.get_int("gen.runs_min", g.runs_min);
    g.runs_max = cfg.get_int("gen.runs_max", g.runs_max);
    g.duration_min = cfg.get_int("gen.duration_min", g.duration_min);
    g.duration_max = cfg.get_int("gen.duration_max", g.duration_max);
    g.crossfade = cfg.get_int("gen.crossfade", g.crossfade);
    g.noise = cfg.get_double("gen.noise", g.noise);
    return g;
}

model::EncoderConfig encoder_config(const Config& cfg) {
    model::EncoderConfig e;
    e.features = cfg.get_int("gen.features", e.features);
    e.window = cfg.get_int("seg.window", e.window);
    e.hidden = cfg.get_int("enc.hidden", e.hidden);
    e.ffn = cfg.get_int("enc.ffn", e.ffn);
    e.heads = cfg.get_int("enc.heads", e.heads);
    e.layers = cfg.get_int("enc.layers", e.layers);
    e.max_segments = cfg.get_int("enc.max_segments", e.max_segments);
    e.dropout = cfg.get_double("enc.dropout", e.dropout);
    e.sigma_floor = cfg.get_double("enc.sigma_floor", e.sigma_floor);
    e.conv_channels = cfg.get_int_list("enc.conv_channels", e.conv_channels);
    e.conv_kernel = cfg.get_int("enc.conv_kernel", e.conv_kernel);
    e.conv_stride = cfg.get_int("enc.conv_stride", e.conv_stride);
    std::string gate = cfg.get_string("enc.gate_mode", "learned");
    if (gate == "learned")
        e.gate_mode = model::EncoderConfig::GateMode::learned;
    else if (gate == "self_only")
        e.gate_mode = model::EncoderConfig::GateMode::self_only;
    else if (gate == "gaussian_only")
        e.gate_mode = model::EncoderConfig::GateMode::gaussian_only;
    else
        throw ConfigError("config key 'enc.gate_mode': expected learned|self_only|gaussian_only");
    e.validate();
    return e;
}

int infer_groups(const std::vector<data::TimeInterval>& ds) {
    int g = 0;
    for (const auto& iv : ds) g = std::max(g, iv.group_id + 1);
    return g;
}

int infer_classes(const Config& cfg, const std::vector<data::TimeInterval>& ds) {
    if (cfg.has("gen.classes")) return cfg.get_int("gen.classes", 2);
    int c = 0;
    for (const auto& iv : ds)
        for (int l : iv.labels) c = std::max(c, l + 1);
    return std::max(c, 2);
}

data::Fold select_fold(const Config& cfg, int groups) {
    data::SplitScheme scheme{cfg.get_int("split.train", 2), cfg.get_int("split.val", 1),
                             cfg.get_int("split.test", 1)};
    data::SplitPlan plan = data::make_splits(groups, scheme);
    int fold = cfg.get_int("split.fold", 0);
    if (fold < 0 || fold >= static_cast<int>(plan.folds.size()))
        throw ConfigError("config key 'split.fold': " + std::to_string(fold) +
                          " out of range for " + std::to_string(plan.folds.size()) + " folds");
    return plan.folds[static_cast<size_t>(fold)];
}

train::TrainSetup train_setup(const Config& cfg, uint64_t seed, int classes) {
    train::TrainSetup s;
    s.window = cfg.get_int("seg.window", s.window);
    s.stride = cfg.get_int("seg.stride", s.stride);
    s.classes = classes;
    s.schedule.e_eta = cfg.get_int("train.e_eta", s.schedule.e_eta);
    s.schedule.e_gap = cfg.get_int("train.e_gap", s.schedule.e_gap);
    s.schedule.n_levels = cfg.get_int("curriculum.levels", s.schedule.n_levels);
    s.schedule.epochs = cfg.get_int("train.epochs", s.schedule.epochs);
    s.opt.lr = cfg.get_double("train.lr", 1e-3);
    s.opt.weight_decay = cfg.get_double("train.weight_decay", 1e-4);
    s.batch_size = cfg.get_int("train.batch", s.batch_size);
    s.seed = seed;
    s.symmetric_ratio = cfg.get_double("train.symmetric_ratio", 0.0);
    s.symmetric_seed = cfg.get_uint64("train.symmetric_seed", seed);
    return s;
}

json recovery_json(const metrics::RecoveryStats& st) {
    return {{"disturbed", st.disturbed}, {"restored", st.restored},
            {"intact", st.intact},       {"corrupted", st.corrupted},
            {"recovery", st.recovery},   {"corruption", st.corruption}};
}

// --- subcommands -----------------------------------------------------------

int cmd_gen(const CommonArgs& common) {
    Config cfg = load_config(common);
    uint64_t seed = common.seed_set ? common.seed : cfg.get_uint64("gen.seed", 1);
    cfg.set("gen.seed", std::to_string(seed));
    fs::path out = resolve_out(common, "gen");
    data::GeneratorConfig gen = generator_config(cfg);
    auto ds = data::generate_mvd(gen, seed);
    data::save_dataset_jsonl((out / "dataset.jsonl").string(), ds);
    json extra = {{"seed", seed},
                  {"intervals", ds.size()},
                  {"generator",
                   {{"classes", gen.classes},
                    {"features", gen.features},
                    {"groups", gen.groups},
                    {"runs", {gen.runs_min, gen.runs_max}},
                    {"duration", {gen.duration_min, gen.duration_max}},
                    {"crossfade", gen.crossfade},
                    {"noise", gen.noise}}}};
    write_run_records(out, "gen", cfg, extra);
    std::cout << "gen: wrote " << ds.size() << " intervals to " << (out / "dataset.jsonl")
              << "\n";
    return 0;
}

data::DisturbanceConfig disturbance_config(const Config& cfg, const CommonArgs& common) {
    data::DisturbanceConfig d;
    std::string mode = cfg.get_string("disturb.mode", "boundary");
    if (mode == "boundary")
        d.mode = data::DisturbanceConfig::Mode::boundary;
    else if (mode == "symmetric")
        d.mode = data::DisturbanceConfig::Mode::symmetric;
    else
        throw ConfigError("config key 'disturb.mode': expected boundary|symmetric, got '" + mode +
                          "'");
    d.ratio = cfg.get_double("disturb.ratio", 0.0);
    if (d.ratio < 0.0 || d.ratio > 1.0)
        throw ConfigError("config key 'disturb.ratio': must be in [0,1]");
    d.seed = common.seed_set ? common.seed : cfg.get_uint64("disturb.seed", 1);
    return d;
}

int cmd_disturb(const CommonArgs& common, const std::string& input) {
    Config cfg = load_config(common);
    data::DisturbanceConfig d = disturbance_config(cfg, common);
    cfg.set("disturb.seed", std::to_string(d.seed));
    bool boundary = d.mode == data::DisturbanceConfig::Mode::boundary;
    fs::path out = resolve_out(common, "disturb");
    json extra = {{"seed", d.seed},
                  {"input", input},
                  {"mode", boundary ? "boundary" : "symmetric"},
                  {"ratio", d.ratio}};
    if (boundary) {
        auto ds = data::load_dataset_jsonl(input);
        for (auto& iv : ds)
            iv.labels = data::disturb_boundaries(
                iv.labels, d.ratio,
                Rng::derive(d.seed, "boundary-" + std::to_string(iv.interval_id)));
        data::save_dataset_jsonl((out / "dataset.jsonl").string(), ds);
    } else {
        auto segs = data::load_segments_jsonl(input);
        int classes = cfg.get_int("gen.classes", 0);
        if (classes == 0) {
            for (const auto& s : segs)
                for (int l : s.seg_labels) classes = std::max(classes, l + 1);
            classes = std::max(classes, 2);
        }
        for (auto& s : segs)
            s.seg_labels = data::disturb_symmetric(
                s.seg_labels, d.ratio, classes,
                Rng::derive(d.seed, "symmetric-" + std::to_string(s.interval_id)));
        data::save_segments_jsonl((out / "segments.jsonl").string(), segs);
    }
    write_run_records(out, "disturb", cfg, extra);
    std::cout << "disturb: mode " << (boundary ? "boundary" : "symmetric") << ", ratio "
              << d.ratio << " -> " << out << "\n";
    return 0;
}

int cmd_segment(const CommonArgs& common, const std::string& input) {
    Config cfg = load_config(common);
    fs::path out = resolve_out(common, "segment");
    int window = cfg.get_int("seg.window", 16);
    int stride = cfg.get_int("seg.stride", 8);
    int levels = cfg.get_int("curriculum.levels", 5);
    auto ds = data::load_dataset_jsonl(input);
    std::vector<data::SegmentSequence> segs;
    segs.reserve(ds.size());
    for (const auto& iv : ds) segs.push_back(data::segment_interval(iv, window, stride, levels));
    data::save_segments_jsonl((out / "segments.jsonl").string(), segs);
    json extra = {{"input", input}, {"window", window}, {"stride", stride},
                  {"levels", levels}, {"sequences", segs.size()}};
    write_run_records(out, "segment", cfg, extra);
    std::cout << "segment: wrote " << segs.size() << " sequences to "
              << (out / "segments.jsonl") << "\n";
    return 0;
}

void write_harmonized(const fs::path& path, const train::TrainResult& res) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot open for writing: " + path.string());
    for (size_t i = 0; i < res.harmonized.size(); ++i) {
        json line = {{"pool_id", res.pool_ids[i]},
                     {"level", res.levels[i]},
                     {"harmonized", res.harmonized[i]},
                     {"original", res.original[i]},
                     {"clean", res.clean[i]}};
        os << line.dump() << "\n";
    }
}

int cmd_train(const CommonArgs& common, const std::string& input) {
    Config cfg = load_config(common);
    uint64_t seed = common.seed_set ? common.seed : cfg.get_uint64("train.seed", 1);
    cfg.set("train.seed", std::to_string(seed));
    fs::path out = resolve_out(common, "train");
    auto ds = data::load_dataset_jsonl(input);
    if (ds.empty()) throw ContractError("empty dataset: " + input);
    int classes = infer_classes(cfg, ds);
    data::Fold fold = select_fold(cfg, infer_groups(ds));

    int levels = cfg.get_int("curriculum.levels", 5);
    int interval_len = cfg.get_int("pool.interval_len", 96);
    uint64_t pool_seed = cfg.get_uint64("pool.seed", seed);
    auto train_pool = data::sample_intervals_per_level(
        train::filter_by_groups(ds, fold.train), cfg.get_int("pool.per_level", 40), interval_len,
        levels, Rng::derive(pool_seed, "pool-train"));
    auto val_pool = data::sample_intervals_per_level(
        train::filter_by_groups(ds, fold.val), cfg.get_int("pool.val_per_level", 10),
        interval_len, levels, Rng::derive(pool_seed, "pool-val"));
    if (train_pool.items.empty()) throw ConfigError("training pool is empty; check pool.* keys");
    for (int lvl : train_pool.undersampled_levels)
        std::cerr << "warning: training pool level " << lvl << " has fewer than "
                  << cfg.get_int("pool.per_level", 40) << " eligible sub-intervals\n";

    model::EncoderConfig enc = encoder_config(cfg);
    train::Model model(enc, classes, seed);
    train::TrainSetup setup = train_setup(cfg, seed, classes);
    train::TrainResult res = train::train_run(model, train_pool.items, val_pool.items, setup);

    std::string snapshot_hash = write_run_records(
        out, "train", cfg,
        {{"seed", seed},
         {"input", input},
         {"fold", {{"train", fold.train}, {"val", fold.val}, {"test", fold.test}}},
         {"train_pool", train_pool.items.size()},
         {"val_pool", val_pool.items.size()},
         {"undersampled_levels", train_pool.undersampled_levels}});
    json ckpt_manifest = {{"config_hash", snapshot_hash},
                          {"epoch", res.best_epoch},
                          {"rng_state", res.rng_state},
                          {"classes", classes},
                          {"best_val_macro_f1", res.best_val_f1}};
    model.store.save((out / "checkpoint.bin").string(), ckpt_manifest.dump());
    res.log["config_hash"] = snapshot_hash;
    write_text(out / "train_log.json", res.log.dump(2) + "\n");
    write_harmonized(out / "harmonized_labels.jsonl", res);
    std::cout << "train: best val macro-F1 " << res.best_val_f1 << " at epoch "
              << res.best_epoch << "; outputs in " << out << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& input, const std::string& checkpoint,
             const std::string& train_dir, const std::string& aggregate) {
    Config cfg = load_config(common);
    fs::path out = resolve_out(common, "eval");

    if (!aggregate.empty()) {
        // mean +/- std summary over per-fold metric reports
        std::vector<std::string> files;
        std::stringstream ss(aggregate);
        std::string part;
        while (std::getline(ss, part, ',')) files.push_back(part);
        json summary;
        for (const std::string& field : {"accuracy", "macro_f1", "c_score"}) {
            std::vector<double> vals;
            for (const std::string& f : files) {
                std::ifstream is(f);
                if (!is) throw ContractError("cannot open report: " + f);
                json rep = json::parse(is);
                vals.push_back(rep.at(field).get<double>());
            }
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            double stdev = vals.size() > 1 ? std::sqrt(var / (static_cast<double>(vals.size()) - 1))
                                           : 0.0;
            summary[field] = {{"mean", mean}, {"std", stdev}};
        }
        summary["reports"] = files.size();
        write_text(out / "summary.json", summary.dump(2) + "\n");
        std::cout << "eval: aggregated " << files.size() << " reports into "
                  << (out / "summary.json") << "\n";
        return 0;
    }

    if (checkpoint.empty()) throw ConfigError("eval requires --checkpoint (or --aggregate)");
    if (input.empty()) throw ConfigError("eval requires --in");
    auto ds = data::load_dataset_jsonl(input);
    if (ds.empty()) throw ContractError("empty dataset: " + input);
    int classes = infer_classes(cfg, ds);
    data::Fold fold = select_fold(cfg, infer_groups(ds));
    int levels = cfg.get_int("curriculum.levels", 5);
    uint64_t pool_seed = cfg.get_uint64("pool.seed", cfg.get_uint64("train.seed", 1));
    auto test_pool = data::sample_intervals_per_level(
        train::filter_by_groups(ds, fold.test), cfg.get_int("pool.test_per_level", 10),
        cfg.get_int("pool.interval_len", 96), levels, Rng::derive(pool_seed, "pool-test"));
    if (test_pool.items.empty()) throw ConfigError("test pool is empty; check pool.* keys");

    model::EncoderConfig enc = encoder_config(cfg);
    train::Model model(enc, classes, cfg.get_uint64("train.seed", 1));
    model.store.load(checkpoint);

    int window = cfg.get_int("seg.window", 16);
    int stride = cfg.get_int("seg.stride", 8);
    int tol = cfg.get_int("eval.tolerance", 2);
    std::vector<int> all_pred, all_truth;
    double c_sum = 0.0;
    std::ofstream preds(out / "predictions.jsonl");
    if (!preds) throw ContractError("cannot open predictions file");
    for (const auto& pi : test_pool.items) {
        data::SegmentSequence seq =
            data::segment_interval(train::pool_to_interval(pi), window, stride, levels);
        train::PredictOutput po = train::predict_interval(model, seq);
        all_pred.insert(all_pred.end(), po.labels.begin(), po.labels.end());
        all_truth.insert(all_truth.end(), seq.clean_seg_labels.begin(),
                         seq.clean_seg_labels.end());
        c_sum += metrics::c_score(po.labels, seq.clean_seg_labels, tol);
        json tanh_params = json::array();
        for (const auto& f : po.bundle.tanh_params)
            tanh_params.push_back({{"a", f.a},
                                   {"k", f.k},
                                   {"b", f.b},
                                   {"h", f.h},
                                   {"converged", f.converged},
                                   {"iterations", f.iterations}});
        auto mat_rows = [](const predict::Mat& m) {
            json rows = json::array();
            for (int i = 0; i < m.rows; ++i) {
                json row = json::array();
                for (int c = 0; c < m.cols; ++c) row.push_back(m.at(i, c));
                rows.push_back(std::move(row));
            }
            return rows;
        };
        json line = {{"pool_id", pi.pool_id},
                     {"source_interval_id", pi.source_interval_id},
                     {"level", pi.level},
                     {"y_hat", po.labels},
                     {"clean", seq.clean_seg_labels},
                     {"p_hat", mat_rows(po.bundle.p_hat)},
                     {"p_tilde", mat_rows(po.bundle.p_tilde)},
                     {"p_bar", mat_rows(po.bundle.p_bar)},
                     {"tanh", tanh_params}};
        preds << line.dump() << "\n";
    }
    metrics::ClassificationReport rep = metrics::classification_metrics(all_pred, all_truth,
                                                                        classes);
    json mj = {{"accuracy", rep.accuracy},
               {"macro_f1", rep.macro_f1},
               {"per_class_f1", rep.per_class_f1},
               {"positive_class_f1", rep.per_class_f1.back()},
               {"c_score", c_sum / static_cast<double>(test_pool.items.size())},
               {"c_score_tolerance", tol},
               {"counts",
                {{"intervals", test_pool.items.size()}, {"segments", all_pred.size()}}}};
    if (!train_dir.empty()) {
        std::ifstream is(fs::path(train_dir) / "harmonized_labels.jsonl");
        if (!is)
            throw ContractError("no harmonized_labels.jsonl under " + train_dir);
        std::vector<int> harm, orig, clean;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            for (int v : j.at("harmonized").get<std::vector<int>>()) harm.push_back(v);
            for (int v : j.at("original").get<std::vector<int>>()) orig.push_back(v);
            for (int v : j.at("clean").get<std::vector<int>>()) clean.push_back(v);
        }
        mj["label_recovery"] = recovery_json(metrics::label_recovery(harm, orig, clean));
    }
    std::string snapshot_hash = write_run_records(
        out, "eval", cfg,
        {{"input", input}, {"checkpoint", checkpoint}, {"test_pool", test_pool.items.size()}});
    mj["config_hash"] = snapshot_hash;
    write_text(out / "metrics.json", mj.dump(2) + "\n");
    std::cout << "eval: accuracy " << rep.accuracy << ", macro-F1 " << rep.macro_f1
              << ", change-point score " << mj["c_score"].get<double>() << "; report in "
              << (out / "metrics.json") << "\n";
    return 0;
}

int cmd_harmonize_export(const CommonArgs& common, const std::string& train_dir) {
    Config cfg = load_config(common);
    fs::path out = resolve_out(common, "harmonize-export");
    fs::path src = fs::path(train_dir) / "harmonized_labels.jsonl";
    std::ifstream is(src);
    if (!is) throw ContractError("no harmonized_labels.jsonl under " + train_dir);
    std::ofstream os(out / "harmonized_labels.jsonl");
    std::string line;
    size_t n = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("harmonized") || !j.contains("original"))
            throw ContractError("malformed harmonized labels in " + src.string());
        os << j.dump() << "\n";
        ++n;
    }
    write_run_records(out, "harmonize-export", cfg, {{"source", src.string()}, {"sequences", n}});
    std::cout << "harmonize-export: " << n << " sequences -> "
              << (out / "harmonized_labels.jsonl") << "\n";
    return 0;
}

int cmd_mi_demo(const CommonArgs& common) {
    Config cfg = load_config(common);
    uint64_t seed = common.seed_set ? common.seed : cfg.get_uint64("mi.seed", 1);
    cfg.set("mi.seed", std::to_string(seed));
    int random_tables = cfg.get_int("mi.random_tables", 100);
    fs::path out = resolve_out(common, "mi-demo");

    json rows = json::array();
    auto add_row = [&rows](const std::string& name, const metrics::MiResult& r) {
        rows.push_back({{"case", name},
                        {"i_y_x", r.i_y_x},
                        {"i_y_x_ctx", r.i_y_x_ctx},
                        {"gain", r.gain}});
        std::printf("%-28s I(y;x)=%.6f  I(y;x,ctx)=%.6f  gain=%.6f\n", name.c_str(), r.i_y_x,
                    r.i_y_x_ctx, r.gain);
    };

    metrics::JointTable det(2, 2, 2);
    for (int y = 0; y < 2; ++y)
        for (int a = 0; a < 2; ++a) det.at(y, y, a) = 0.25;
    add_row("deterministic y=x", metrics::mi_gain(det));

    metrics::JointTable ctx(2, 3, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) ctx.at(y, x, y) = (y == 0 ? 0.3 : 0.7) / 3.0;
    add_row("independent x, ctx=y", metrics::mi_gain(ctx));

    metrics::JointTable indep(2, 2, 2);
    for (double& v : indep.p) v = 0.125;
    add_row("fully independent", metrics::mi_gain(indep));

    Rng rng(seed);
    double min_gain = std::numeric_limits<double>::infinity();
    for (int t = 0; t < random_tables; ++t) {
        metrics::JointTable j(2, 3, 2);
        double sum = 0.0;
        for (double& v : j.p) {
            v = rng.uniform(0.0, 1.0);
            sum += v;
        }
        for (double& v : j.p) v /= sum;
        double s2 = 0.0;
        for (double v : j.p) s2 += v;
        j.p[0] += 1.0 - s2;
        min_gain = std::min(min_gain, metrics::mi_gain(j).gain);
    }
    std::printf("%-28s min gain over %d tables = %.3e\n", "random joints", random_tables,
                min_gain);
    json doc = {{"cases", rows}, {"random_tables", random_tables}, {"min_random_gain", min_gain}};
    write_run_records(out, "mi-demo", cfg, {{"seed", seed}});
    write_text(out / "mi_demo.json", doc.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"consistency-learning pipeline for segmented time-series classification"};
    app.require_subcommand(1);

    CommonArgs gen_args, disturb_args, segment_args, train_args, eval_args, harm_args, mi_args;
    std::string disturb_in, segment_in, train_in, eval_in, eval_ckpt, eval_train_dir,
        eval_aggregate, harm_train_dir;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic labeled dataset");
    add_common(gen, gen_args);

    CLI::App* disturb = app.add_subcommand("disturb", "corrupt labels (boundary or symmetric)");
    add_common(disturb, disturb_args);
    disturb->add_option("--in", disturb_in, "input dataset (boundary) or segments (symmetric)")
        ->required();

    CLI::App* segment = app.add_subcommand("segment", "window a dataset into segment sequences");
    add_common(segment, segment_args);
    segment->add_option("--in", segment_in, "input dataset jsonl")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "train with label harmonization");
    add_common(train_cmd, train_args);
    train_cmd->add_option("--in", train_in, "input dataset jsonl")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test fold");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("--in", eval_in, "input dataset jsonl");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint file");
    eval_cmd->add_option("--train-dir", eval_train_dir,
                         "training output dir for label-recovery stats");
    eval_cmd->add_option("--aggregate", eval_aggregate,
                         "comma-separated metrics.json files to summarize instead");

    CLI::App* harm = app.add_subcommand("harmonize-export", "re-emit final harmonized labels");
    add_common(harm, harm_args);
    harm->add_option("--train-dir", harm_train_dir, "training output dir")->required();

    CLI::App* mi = app.add_subcommand("mi-demo", "context information-gain demo table");
    add_common(mi, mi_args);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen(gen_args);
        if (disturb->parsed()) return cmd_disturb(disturb_args, disturb_in);
        if (segment->parsed()) return cmd_segment(segment_args, segment_in);
        if (train_cmd->parsed()) return cmd_train(train_args, train_in);
        if (eval_cmd->parsed())
            return cmd_eval(eval_args, eval_in, eval_ckpt, eval_train_dir, eval_aggregate);
        if (harm->parsed()) return cmd_harmonize_export(harm_args, harm_train_dir);
        if (mi->parsed()) return cmd_mi_demo(mi_args);
        return 1;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
