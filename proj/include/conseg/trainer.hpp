#pragma once

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "conseg/data.hpp"
#include "conseg/encoder.hpp"
#include "conseg/params.hpp"
#include "conseg/predict.hpp"

namespace conseg::train {

struct Schedule {
    int e_eta = 30;    // epochs for the trust weight to reach 1 (0 pins it at 1)
    int e_gap = 5;     // curriculum lag between admitting consecutive levels
    int n_levels = 5;  // curriculum level count
    int epochs = 60;
};

// Trust weight: 1 when e_eta == 0, else min(epoch / e_eta, 1).
double eta(int epoch, int e_eta);

// Exponential history weights over the available entries, newest first:
// w_m proportional to exp(-m/2), normalized to sum 1.
std::vector<double> omega_weights(int count);

// Weights over m in {0..min(4, epoch)} per the label-update rule.
std::vector<double> omega(int epoch);

// Levels admitted at an epoch: {1 .. min(n_levels, 1 + epoch/e_gap)};
// e_gap == 0 admits everything immediately.
std::vector<int> curriculum_active_levels(int epoch, int e_gap, int n_levels);

// Per-interval label bookkeeping: original one-hot labels, current labels,
// soft labels, and a rolling window of the last 5 epochs of predictions.
struct IntervalLabelState {
    predict::Mat y0;
    std::vector<int> y_cur;
    predict::Mat p_e;
    std::deque<std::pair<predict::Mat, predict::Mat>> history;  // (p_hat, p_bar), newest at back
};

void push_history(IntervalLabelState& st, predict::Mat p_hat, predict::Mat p_bar);

// Applies p_e = (1-eta)*y0 + eta*((1-eta/2)*phat5 + (eta/2)*pbar5) with the
// omega-weighted history averages and sets y_cur = argmax p_e (ties to the
// lowest class). Returns the number of labels that changed.
int update_labels(IntervalLabelState& st, double eta_value);

// Encoder + prediction heads over one parameter store.
struct Model {
    ad::ParameterStore store;
    std::unique_ptr<model::ContextEncoder> encoder;
    std::unique_ptr<predict::PredictionHeads> heads;

    Model(const model::EncoderConfig& cfg, int classes, uint64_t init_seed);
    int classes() const { return heads->classes(); }
};

struct PredictOutput {
    predict::PredictionBundle bundle;
    std::vector<int> labels;
    predict::Mat scores;
};

// Inference-mode forward for one segmented interval.
PredictOutput predict_interval(const Model& model, const data::SegmentSequence& seq);

data::TimeInterval pool_to_interval(const data::PoolInterval& pi);

std::vector<data::TimeInterval> filter_by_groups(const std::vector<data::TimeInterval>& dataset,
                                                 const std::vector<int>& groups);

std::vector<data::SegmentSequence> segment_pool(const std::vector<data::PoolInterval>& pool,
                                                int window, int stride, int n_levels);

struct TrainSetup {
    int window = 16;
    int stride = 8;
    int classes = 2;
    Schedule schedule;
    ad::OptimizerConfig opt{1e-3, 0.9, 0.999, 1e-8, 1e-4};
    int batch_size = 16;
    uint64_t seed = 1;
    // optional segment-level uniform label noise applied to the training pool
    double symmetric_ratio = 0.0;
    uint64_t symmetric_seed = 0;
};

struct TrainResult {
    nlohmann::json log;
    int best_epoch = -1;
    double best_val_f1 = 0.0;
    std::string rng_state;  // training stream position at completion
    // per training pool item, aligned with the input pool order
    std::vector<std::vector<int>> harmonized;  // final y_cur
    std::vector<std::vector<int>> original;    // working labels before harmonization
    std::vector<std::vector<int>> clean;       // clean segment labels
    std::vector<int> levels;                   // pool item level tags
    std::vector<int64_t> pool_ids;
};

// Full training loop: curriculum admission, per-batch optimization of l1+l2,
// detached behavior fits feeding the prediction history, label updates at
// each epoch boundary, and best-validation-F1 checkpoint retention (the model
// holds the best parameters on return). Validation labels are never touched.
TrainResult train_run(Model& model, const std::vector<data::PoolInterval>& train_pool,
                      const std::vector<data::PoolInterval>& val_pool, const TrainSetup& setup);

}  // namespace conseg::train
