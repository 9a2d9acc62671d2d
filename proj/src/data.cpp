#include "conseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace conseg::data {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

double class_frequency(int cls) { return 0.05 + 0.08 * cls; }

double class_signal(int cls, int feature, double phase, int64_t t) {
    double f = class_frequency(cls);
    // second harmonic on odd features keeps channels from being redundant
    double base = std::sin(2.0 * M_PI * f * static_cast<double>(t) + phase);
    if (feature % 2 == 1)
        base = 0.7 * base + 0.3 * std::sin(4.0 * M_PI * f * static_cast<double>(t) + 2.0 * phase);
    return base;
}

namespace {

// one run's process over [t0, t1), including crossfade margins
struct RunSignal {
    int t0 = 0;
    std::vector<double> values;  // (t1-t0) x F
    double at(int t, int f, int features) const {
        return values[static_cast<size_t>(t - t0) * features + f];
    }
};

RunSignal render_run(int cls, int features, int t0, int t1, double noise, Rng& rng) {
    RunSignal rs;
    rs.t0 = t0;
    rs.values.resize(static_cast<size_t>(t1 - t0) * features);
    std::vector<double> phase(features);
    for (int f = 0; f < features; ++f) phase[f] = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<double> ar(features, 0.0);
    constexpr double rho = 0.7;
    for (int t = t0; t < t1; ++t) {
        for (int f = 0; f < features; ++f) {
            ar[f] = rho * ar[f] + noise * rng.normal();
            rs.values[static_cast<size_t>(t - t0) * features + f] =
                class_signal(cls, f, phase[f], t) + ar[f];
        }
    }
    return rs;
}

}  // namespace

std::vector<TimeInterval> generate_mvd(const GeneratorConfig& cfg, uint64_t seed) {
    if (cfg.classes < 2) throw ConfigError("generator: classes must be >= 2");
    if (cfg.features < 1) throw ConfigError("generator: features must be >= 1");
    if (cfg.intervals < 1) throw ConfigError("generator: intervals must be >= 1");
    if (cfg.groups < 1) throw ConfigError("generator: groups must be >= 1");
    if (cfg.duration_min < 1 || cfg.duration_max < cfg.duration_min)
        throw ConfigError("generator: empty duration range");
    if (cfg.runs_min < 1 || cfg.runs_max < cfg.runs_min)
        throw ConfigError("generator: empty runs-per-interval range");
    if (cfg.crossfade < 0) throw ConfigError("generator: negative crossfade");

    Rng rng(seed);
    std::vector<TimeInterval> out;
    out.reserve(static_cast<size_t>(cfg.intervals));
    for (int iv = 0; iv < cfg.intervals; ++iv) {
        int n_runs = static_cast<int>(rng.uniform_int(cfg.runs_min, cfg.runs_max));
        std::vector<ClassRun> runs(n_runs);
        int cls = static_cast<int>(rng.uniform_int(0, cfg.classes - 1));
        int pos = 1;
        for (int r = 0; r < n_runs; ++r) {
            int len = static_cast<int>(rng.uniform_int(cfg.duration_min, cfg.duration_max));
            runs[r] = {pos, pos + len - 1, cls};
            pos += len;
            if (cfg.classes == 2) {
                cls = 1 - cls;
            } else {
                int next = static_cast<int>(rng.uniform_int(0, cfg.classes - 2));
                cls = next >= cls ? next + 1 : next;
            }
        }
        int T = pos - 1;

        TimeInterval ti;
        ti.interval_id = iv;
        ti.group_id = iv % cfg.groups;
        ti.features = cfg.features;
        ti.values.assign(static_cast<size_t>(T) * cfg.features, 0.0);
        ti.clean_labels.resize(static_cast<size_t>(T));

        int margin = cfg.crossfade;
        std::vector<RunSignal> sig(runs.size());
        for (size_t r = 0; r < runs.size(); ++r) {
            int lo = std::max(1, runs[r].start - margin) - 1;  // 0-based
            int hi = std::min(T, runs[r].end + margin);        // exclusive 0-based
            sig[r] = render_run(runs[r].cls, cfg.features, lo, hi, cfg.noise, rng);
        }
        for (size_t r = 0; r < runs.size(); ++r) {
            for (int t = runs[r].start - 1; t < runs[r].end; ++t) {
                for (int f = 0; f < cfg.features; ++f)
                    ti.values[static_cast<size_t>(t) * cfg.features + f] =
                        sig[r].at(t, f, cfg.features);
                ti.clean_labels[static_cast<size_t>(t)] = runs[r].cls;
            }
        }
        // linear crossfade across each interior boundary
        if (cfg.crossfade > 0) {
            for (size_t r = 0; r + 1 < runs.size(); ++r) {
                int b = runs[r].end;  // 0-based index of the boundary's right point
                int half = cfg.crossfade / 2;
                int lo = std::max({b - half, runs[r].start - 1, sig[r + 1].t0});
                int hi_ex = std::min(b - half + cfg.crossfade, runs[r + 1].end);
                hi_ex = std::min<int>(hi_ex, sig[r].t0 + static_cast<int>(sig[r].values.size()) /
                                                             cfg.features);
                for (int t = lo; t < hi_ex; ++t) {
                    double w = (static_cast<double>(t - (b - half)) + 0.5) / cfg.crossfade;
                    w = std::clamp(w, 0.0, 1.0);
                    for (int f = 0; f < cfg.features; ++f)
                        ti.values[static_cast<size_t>(t) * cfg.features + f] =
                            (1.0 - w) * sig[r].at(t, f, cfg.features) +
                            w * sig[r + 1].at(t, f, cfg.features);
                }
            }
        }
        ti.labels = ti.clean_labels;
        out.push_back(std::move(ti));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

std::vector<ClassRun> find_class_runs(const std::vector<int>& labels) {
    if (labels.empty()) throw ContractError("find_class_runs: empty label sequence");
    std::vector<ClassRun> runs;
    int start = 1;
    for (size_t i = 1; i <= labels.size(); ++i) {
        if (i == labels.size() || labels[i] != labels[i - 1]) {
            runs.push_back({start, static_cast<int>(i), labels[i - 1]});
            start = static_cast<int>(i) + 1;
        }
    }
    return runs;
}

int majority_label(const std::vector<int>& labels, int begin, int count) {
    std::vector<int> hist;
    for (int i = begin; i < begin + count; ++i) {
        int l = labels[static_cast<size_t>(i)];
        if (l >= static_cast<int>(hist.size())) hist.resize(static_cast<size_t>(l) + 1, 0);
        ++hist[static_cast<size_t>(l)];
    }
    int best = *std::max_element(hist.begin(), hist.end());
    int center = labels[static_cast<size_t>(begin) + (count + 1) / 2 - 1];
    if (hist[static_cast<size_t>(center)] == best) return center;
    for (size_t c = 0; c < hist.size(); ++c)
        if (hist[c] == best) return static_cast<int>(c);
    return 0;  // unreachable
}

SegmentSequence segment_interval(const TimeInterval& iv, int window, int stride, int n_levels) {
    int T = iv.length();
    if (window > T)
        throw ContractError("segment_interval: window " + std::to_string(window) +
                            " exceeds interval length " + std::to_string(T));
    if (window < 1 || stride < 1) throw ConfigError("segment_interval: window/stride must be >= 1");
    int L = (T - window) / stride + 1;
    SegmentSequence out;
    out.interval_id = iv.interval_id;
    out.window = window;
    out.stride = stride;
    out.features = iv.features;
    out.segments.reserve(static_cast<size_t>(L));
    out.seg_labels.reserve(static_cast<size_t>(L));
    std::vector<int> pl = position_levels(iv.labels, n_levels);
    for (int i = 0; i < L; ++i) {
        int b = i * stride;  // 0-based first point
        out.segments.emplace_back(iv.values.begin() + static_cast<size_t>(b) * iv.features,
                                  iv.values.begin() +
                                      static_cast<size_t>(b + window) * iv.features);
        out.seg_labels.push_back(majority_label(iv.labels, b, window));
        if (!iv.clean_labels.empty())
            out.clean_seg_labels.push_back(majority_label(iv.clean_labels, b, window));
        out.levels.push_back(pl[static_cast<size_t>(b) + (window + 1) / 2 - 1]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Disturbance
// ---------------------------------------------------------------------------

std::vector<int> disturb_boundaries(const std::vector<int>& labels, double ratio, uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("disturb_boundaries: ratio must be in [0,1]");
    std::vector<ClassRun> runs = find_class_runs(labels);
    if (runs.size() < 2 || ratio == 0.0) return labels;
    Rng rng(seed);
    for (size_t b = 0; b + 1 < runs.size(); ++b) {
        ClassRun& a = runs[b];
        ClassRun& nb = runs[b + 1];
        bool forward = rng.uniform() < 0.5;  // move into the right run
        ClassRun& target = forward ? nb : a;
        int max_move = static_cast<int>(std::floor(ratio * target.length()));
        max_move = std::min(max_move, target.length() - 1);
        if (max_move < 1) continue;
        int delta = static_cast<int>(rng.uniform_int(1, max_move));
        if (forward) {
            a.end += delta;
            nb.start += delta;
        } else {
            a.end -= delta;
            nb.start -= delta;
        }
    }
    std::vector<int> out(labels.size());
    for (const ClassRun& r : runs)
        for (int p = r.start; p <= r.end; ++p) out[static_cast<size_t>(p - 1)] = r.cls;
    return out;
}

std::vector<int> disturb_symmetric(const std::vector<int>& seg_labels, double ratio, int classes,
                                   uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("disturb_symmetric: ratio must be in [0,1]");
    if (classes < 2) throw ConfigError("disturb_symmetric: classes must be >= 2");
    int L = static_cast<int>(seg_labels.size());
    int k = static_cast<int>(std::floor(ratio * L));
    std::vector<int> out = seg_labels;
    if (k == 0) return out;
    Rng rng(seed);
    std::vector<int> idx(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        int j = static_cast<int>(rng.uniform_int(i, L - 1));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        int pos = idx[static_cast<size_t>(i)];
        int draw = static_cast<int>(rng.uniform_int(0, classes - 2));
        out[static_cast<size_t>(pos)] = draw >= out[static_cast<size_t>(pos)] ? draw + 1 : draw;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Curriculum levels
// ---------------------------------------------------------------------------

std::vector<int> assign_levels(int K, int n_levels) {
    if (K < 1) throw ContractError("assign_levels: K must be >= 1");
    if (n_levels < 1) throw ConfigError("assign_levels: n_levels must be >= 1");
    std::vector<int> lv(static_cast<size_t>(K));
    if (K < 2 * n_levels) {
        // quantized relative distance to the nearest run edge
        for (int p = 1; p <= K; ++p) {
            int dist = std::min(p - 1, K - p);
            int l = static_cast<int>(
                std::ceil(n_levels * (1.0 - 2.0 * static_cast<double>(dist) / K)));
            lv[static_cast<size_t>(p - 1)] = std::clamp(l, 1, n_levels);
        }
        return lv;
    }
    // integer comparisons against the 2*n_levels equipartition boundaries;
    // level 1 is the strict central band, boundary points fall outward
    const int64_t N = n_levels;
    const int64_t Kl = K;
    for (int p = 1; p <= K; ++p) {
        int64_t x = 2 * N * p;
        int level;
        if (x > (N - 1) * Kl && x < (N + 1) * Kl) {
            level = 1;
        } else if (x <= (N - 1) * Kl) {
            level = n_levels;
            for (int l = 2; l <= n_levels - 1; ++l) {
                if (x >= (N - l) * Kl) {
                    level = l;
                    break;
                }
            }
        } else {
            level = n_levels;
            for (int l = 2; l <= n_levels - 1; ++l) {
                if (x <= (N + l) * Kl) {
                    level = l;
                    break;
                }
            }
        }
        lv[static_cast<size_t>(p - 1)] = level;
    }
    return lv;
}

std::vector<int> position_levels(const std::vector<int>& labels, int n_levels) {
    std::vector<ClassRun> runs = find_class_runs(labels);
    std::vector<int> out(labels.size());
    for (const ClassRun& r : runs) {
        std::vector<int> lv = assign_levels(r.length(), n_levels);
        for (int p = r.start; p <= r.end; ++p)
            out[static_cast<size_t>(p - 1)] = lv[static_cast<size_t>(p - r.start)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampling / splits
// ---------------------------------------------------------------------------

IntervalPool sample_intervals_per_level(const std::vector<TimeInterval>& dataset, int per_level,
                                        int length, int n_levels, uint64_t seed) {
    if (per_level < 1) throw ConfigError("sample_intervals_per_level: per_level must be >= 1");
    if (length < 1) throw ConfigError("sample_intervals_per_level: length must be >= 1");
    Rng rng(seed);
    // eligible (interval index, 0-based offset) pairs per level
    std::vector<std::vector<std::pair<int, int>>> eligible(static_cast<size_t>(n_levels));
    for (size_t di = 0; di < dataset.size(); ++di) {
        const TimeInterval& iv = dataset[di];
        int T = iv.length();
        if (T < length) continue;
        std::vector<int> pl = position_levels(iv.labels, n_levels);
        for (int p = 1; p <= T; ++p) {
            int offset = (p - 1) - length / 2;
            if (offset < 0 || offset + length > T) continue;
            int lvl = pl[static_cast<size_t>(p - 1)];
            eligible[static_cast<size_t>(lvl - 1)].push_back(
                {static_cast<int>(di), offset});
        }
    }
    IntervalPool pool;
    int64_t next_id = 0;
    for (int lvl = 1; lvl <= n_levels; ++lvl) {
        auto& cand = eligible[static_cast<size_t>(lvl - 1)];
        int take = std::min<int>(per_level, static_cast<int>(cand.size()));
        if (take < per_level) pool.undersampled_levels.push_back(lvl);
        for (int i = 0; i < take; ++i) {
            int j = static_cast<int>(rng.uniform_int(i, static_cast<int64_t>(cand.size()) - 1));
            std::swap(cand[static_cast<size_t>(i)], cand[static_cast<size_t>(j)]);
            const auto& [di, offset] = cand[static_cast<size_t>(i)];
            const TimeInterval& iv = dataset[static_cast<size_t>(di)];
            PoolInterval pi;
            pi.pool_id = next_id++;
            pi.source_interval_id = iv.interval_id;
            pi.group_id = iv.group_id;
            pi.offset = offset;
            pi.level = lvl;
            pi.features = iv.features;
            pi.values.assign(iv.values.begin() + static_cast<size_t>(offset) * iv.features,
                             iv.values.begin() +
                                 static_cast<size_t>(offset + length) * iv.features);
            pi.labels.assign(iv.labels.begin() + offset, iv.labels.begin() + offset + length);
            pi.clean_labels.assign(iv.clean_labels.begin() + offset,
                                   iv.clean_labels.begin() + offset + length);
            pool.items.push_back(std::move(pi));
        }
    }
    return pool;
}

namespace {

void combos(int n, int k, int from, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (static_cast<int>(cur.size()) == k) {
        out.push_back(cur);
        return;
    }
    for (int i = from; i < n; ++i) {
        cur.push_back(i);
        combos(n, k, i + 1, cur, out);
        cur.pop_back();
    }
}

std::vector<std::vector<int>> choose(const std::vector<int>& items, int k) {
    std::vector<std::vector<int>> idx;
    std::vector<int> cur;
    combos(static_cast<int>(items.size()), k, 0, cur, idx);
    std::vector<std::vector<int>> out;
    out.reserve(idx.size());
    for (const auto& c : idx) {
        std::vector<int> v;
        for (int i : c) v.push_back(items[static_cast<size_t>(i)]);
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<int> without(const std::vector<int>& all, const std::vector<int>& drop) {
    std::vector<int> out;
    for (int g : all)
        if (std::find(drop.begin(), drop.end(), g) == drop.end()) out.push_back(g);
    return out;
}

}  // namespace

SplitPlan make_splits(int groups, SplitScheme scheme) {
    if (scheme.n_train < 1 || scheme.n_val < 1 || scheme.n_test < 1)
        throw ConfigError("make_splits: all scheme counts must be >= 1");
    if (groups < scheme.n_train + scheme.n_val + scheme.n_test)
        throw ConfigError("make_splits: " + std::to_string(groups) +
                          " groups cannot satisfy scheme " + std::to_string(scheme.n_train) + "-" +
                          std::to_string(scheme.n_val) + "-" + std::to_string(scheme.n_test));
    std::vector<int> all(static_cast<size_t>(groups));
    for (int i = 0; i < groups; ++i) all[static_cast<size_t>(i)] = i;
    SplitPlan plan;
    plan.groups = groups;
    plan.scheme = scheme;
    for (const auto& tr : choose(all, scheme.n_train)) {
        std::vector<int> rest = without(all, tr);
        for (const auto& va : choose(rest, scheme.n_val)) {
            std::vector<int> rest2 = without(rest, va);
            for (const auto& te : choose(rest2, scheme.n_test))
                plan.folds.push_back({tr, va, te});
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// JSONL io
// ---------------------------------------------------------------------------

void save_dataset_jsonl(const std::string& path, const std::vector<TimeInterval>& dataset) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot open for writing: " + path);
    for (const TimeInterval& iv : dataset) {
        json rows = json::array();
        int T = iv.length();
        for (int t = 0; t < T; ++t) {
            json row = json::array();
            for (int f = 0; f < iv.features; ++f) row.push_back(iv.at(t, f));
            rows.push_back(std::move(row));
        }
        json line = {{"interval_id", iv.interval_id},
                     {"group_id", iv.group_id},
                     {"values", std::move(rows)},
                     {"labels", iv.labels},
                     {"clean_labels", iv.clean_labels}};
        os << line.dump() << "\n";
    }
    if (!os) throw ContractError("write failed: " + path);
}

std::vector<TimeInterval> load_dataset_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ContractError("cannot open dataset: " + path);
    std::vector<TimeInterval> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ContractError(path + ":" + std::to_string(lineno) + ": invalid JSON");
        TimeInterval iv;
        iv.interval_id = j.at("interval_id").get<int64_t>();
        iv.group_id = j.at("group_id").get<int>();
        const json& rows = j.at("values");
        int T = static_cast<int>(rows.size());
        iv.features = T == 0 ? 0 : static_cast<int>(rows[0].size());
        iv.values.reserve(static_cast<size_t>(T) * iv.features);
        for (const json& row : rows) {
            if (static_cast<int>(row.size()) != iv.features)
                throw ContractError(path + ":" + std::to_string(lineno) + ": ragged values");
            for (const json& v : row) iv.values.push_back(v.get<double>());
        }
        iv.labels = j.at("labels").get<std::vector<int>>();
        iv.clean_labels = j.at("clean_labels").get<std::vector<int>>();
        if (static_cast<int>(iv.labels.size()) != T ||
            static_cast<int>(iv.clean_labels.size()) != T)
            throw ContractError(path + ":" + std::to_string(lineno) + ": label length != T");
        out.push_back(std::move(iv));
    }
    return out;
}

void save_segments_jsonl(const std::string& path, const std::vector<SegmentSequence>& segs) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot open for writing: " + path);
    for (const SegmentSequence& s : segs) {
        json line = {{"interval_id", s.interval_id}, {"window", s.window},
                     {"stride", s.stride},           {"features", s.features},
                     {"segments", s.segments},       {"seg_labels", s.seg_labels},
                     {"clean_seg_labels", s.clean_seg_labels},
                     {"levels", s.levels}};
        os << line.dump() << "\n";
    }
    if (!os) throw ContractError("write failed: " + path);
}

std::vector<SegmentSequence> load_segments_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ContractError("cannot open segments: " + path);
    std::vector<SegmentSequence> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ContractError(path + ":" + std::to_string(lineno) + ": invalid JSON");
        SegmentSequence s;
        s.interval_id = j.at("interval_id").get<int64_t>();
        s.window = j.at("window").get<int>();
        s.stride = j.at("stride").get<int>();
        s.features = j.at("features").get<int>();
        s.segments = j.at("segments").get<std::vector<std::vector<double>>>();
        s.seg_labels = j.at("seg_labels").get<std::vector<int>>();
        s.clean_seg_labels = j.at("clean_seg_labels").get<std::vector<int>>();
        s.levels = j.at("levels").get<std::vector<int>>();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace conseg::data
