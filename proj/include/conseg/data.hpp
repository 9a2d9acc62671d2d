#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "conseg/errors.hpp"
#include "conseg/rng.hpp"

namespace conseg::data {

// One raw labeled multivariate sequence. values is row-major T x F
// (values[t*features + f]); labels are the working labels (possibly
// disturbed), clean_labels the generator's ground truth.
struct TimeInterval {
    int64_t interval_id = 0;
    int group_id = 0;
    int features = 0;
    std::vector<double> values;
    std::vector<int> labels;
    std::vector<int> clean_labels;

    int length() const { return features == 0 ? 0 : static_cast<int>(values.size()) / features; }
    double at(int t, int f) const { return values[static_cast<size_t>(t) * features + f]; }
};

// Maximal constant-label run, 1-based inclusive endpoints.
struct ClassRun {
    int start = 0;
    int end = 0;
    int cls = 0;
    int length() const { return end - start + 1; }
};

// Windowed view of one interval: L segments of w x F values plus majority
// labels and per-segment curriculum levels.
struct SegmentSequence {
    int64_t interval_id = 0;
    int window = 0;
    int stride = 0;
    int features = 0;
    std::vector<std::vector<double>> segments;  // L entries, each w*F row-major
    std::vector<int> seg_labels;
    std::vector<int> clean_seg_labels;
    std::vector<int> levels;

    int count() const { return static_cast<int>(segments.size()); }
};

struct DisturbanceConfig {
    enum class Mode { none, boundary, symmetric };
    Mode mode = Mode::none;
    double ratio = 0.0;
    uint64_t seed = 0;
};

struct GeneratorConfig {
    int classes = 2;
    int features = 3;
    int intervals = 24;
    int groups = 4;
    int runs_min = 3;
    int runs_max = 5;
    int duration_min = 80;
    int duration_max = 160;
    int crossfade = 12;     // points blended across each class boundary
    double noise = 0.3;     // AR(1) innovation scale
};

struct SplitScheme {
    int n_train = 2;
    int n_val = 1;
    int n_test = 1;
};

struct Fold {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

struct SplitPlan {
    int groups = 0;
    SplitScheme scheme;
    std::vector<Fold> folds;
};

// A fixed-length sub-interval cut out of a source interval; the curriculum
// level of its center position is the pool item's level tag.
struct PoolInterval {
    int64_t pool_id = 0;
    int64_t source_interval_id = 0;
    int group_id = 0;
    int offset = 0;  // 0-based start in the source interval
    int level = 1;
    int features = 0;
    std::vector<double> values;
    std::vector<int> labels;
    std::vector<int> clean_labels;

    int length() const { return features == 0 ? 0 : static_cast<int>(values.size()) / features; }
};

struct IntervalPool {
    std::vector<PoolInterval> items;
    std::vector<int> undersampled_levels;  // levels with fewer items than requested
};

// --- generation -----------------------------------------------------------

// Each class emits a distinguishable process (class-specific sinusoid plus
// AR(1) noise); adjacent runs are linearly crossfaded over cfg.crossfade
// points. Clean labels are kept alongside the working labels.
std::vector<TimeInterval> generate_mvd(const GeneratorConfig& cfg, uint64_t seed);

// Pure class template value used by the generator (exposed for tests).
double class_signal(int cls, int feature, double phase, int64_t t);
double class_frequency(int cls);

// --- segmentation ----------------------------------------------------------

std::vector<ClassRun> find_class_runs(const std::vector<int>& labels);

// Majority label of a window; ties break toward the label of the window's
// center point (position ceil(w/2), 1-based), then toward the smallest label.
int majority_label(const std::vector<int>& labels, int begin, int count);

SegmentSequence segment_interval(const TimeInterval& iv, int window, int stride,
                                 int n_levels = 5);

// --- label disturbance ------------------------------------------------------

// Boundary protocol: per interior boundary (left to right), a direction is
// drawn with probability 0.5 each, then the boundary moves 1..floor(ratio*K)
// points into the chosen run (K = that run's current length), clamped so
// every run keeps at least one point. Labels between old and new boundary
// flip to the encroaching class.
std::vector<int> disturb_boundaries(const std::vector<int>& labels, double ratio, uint64_t seed);

// Uniform relabeling: floor(ratio*L) indices chosen without replacement,
// each reassigned a uniformly random different class.
std::vector<int> disturb_symmetric(const std::vector<int>& seg_labels, double ratio, int classes,
                                   uint64_t seed);

// --- curriculum levels -------------------------------------------------------

// Position -> level map for a K-length class run, n_levels bands from core
// (1) to boundary (n_levels). For K >= 2*n_levels the bands follow the
// symmetric 2*n_levels-chunk pattern with the published endpoint formulas
// for levels 1 and n_levels; shorter runs fall back to quantized relative
// distance to the nearest run edge. Returned vector is 0-indexed by
// position-1 and always tiles the run.
std::vector<int> assign_levels(int K, int n_levels);

// Level of every position of a label sequence, run by run.
std::vector<int> position_levels(const std::vector<int>& labels, int n_levels);

// --- sampling / splits -------------------------------------------------------

IntervalPool sample_intervals_per_level(const std::vector<TimeInterval>& dataset, int per_level,
                                        int length, int n_levels, uint64_t seed);

SplitPlan make_splits(int groups, SplitScheme scheme);

// --- JSONL io ----------------------------------------------------------------

void save_dataset_jsonl(const std::string& path, const std::vector<TimeInterval>& dataset);
std::vector<TimeInterval> load_dataset_jsonl(const std::string& path);

void save_segments_jsonl(const std::string& path, const std::vector<SegmentSequence>& segs);
std::vector<SegmentSequence> load_segments_jsonl(const std::string& path);

}  // namespace conseg::data
