#include "conseg/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "conseg/metrics.hpp"

namespace conseg::train {

using predict::Mat;

double eta(int epoch, int e_eta) {
    if (epoch < 0) throw ContractError("eta: negative epoch");
    if (e_eta < 0) throw ConfigError("eta: e_eta must be >= 0");
    if (e_eta == 0) return 1.0;
    return std::min(static_cast<double>(epoch) / e_eta, 1.0);
}

std::vector<double> omega_weights(int count) {
    if (count < 1) throw ContractError("omega: empty history");
    std::vector<double> w(static_cast<size_t>(count));
    double sum = 0.0;
    for (int m = 0; m < count; ++m) {
        w[static_cast<size_t>(m)] = std::exp(-0.5 * m);
        sum += w[static_cast<size_t>(m)];
    }
    for (double& x : w) x /= sum;
    return w;
}

std::vector<double> omega(int epoch) {
    if (epoch < 0) throw ContractError("omega: negative epoch");
    return omega_weights(std::min(4, epoch) + 1);
}

std::vector<int> curriculum_active_levels(int epoch, int e_gap, int n_levels) {
    if (epoch < 0) throw ContractError("curriculum: negative epoch");
    if (e_gap < 0 || n_levels < 1) throw ConfigError("curriculum: bad schedule");
    int top = e_gap == 0 ? n_levels : std::min(n_levels, 1 + epoch / e_gap);
    std::vector<int> out;
    for (int l = 1; l <= top; ++l) out.push_back(l);
    return out;
}

void push_history(IntervalLabelState& st, Mat p_hat, Mat p_bar) {
    st.history.emplace_back(std::move(p_hat), std::move(p_bar));
    while (st.history.size() > 5) st.history.pop_front();
}

namespace {

Mat history_average(const std::deque<std::pair<Mat, Mat>>& history, bool constrained) {
    int count = static_cast<int>(history.size());
    std::vector<double> w = omega_weights(count);
    const Mat& newest = constrained ? history.back().second : history.back().first;
    Mat out(newest.rows, newest.cols);
    for (int m = 0; m < count; ++m) {
        const auto& entry = history[static_cast<size_t>(count - 1 - m)];
        const Mat& src = constrained ? entry.second : entry.first;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += w[static_cast<size_t>(m)] * src.v[i];
    }
    return out;
}

std::vector<int> argmax_rows(const Mat& m) {
    std::vector<int> out(static_cast<size_t>(m.rows));
    for (int i = 0; i < m.rows; ++i) {
        int best = 0;
        for (int c = 1; c < m.cols; ++c)
            if (m.at(i, c) > m.at(i, best)) best = c;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

}  // namespace

int update_labels(IntervalLabelState& st, double eta_value) {
    if (st.history.empty()) throw ContractError("update_labels: no prediction history");
    Mat phat5 = history_average(st.history, false);
    Mat pbar5 = history_average(st.history, true);
    Mat pe(st.y0.rows, st.y0.cols);
    double he = eta_value;
    for (size_t i = 0; i < pe.v.size(); ++i)
        pe.v[i] = (1.0 - he) * st.y0.v[i] +
                  he * ((1.0 - he / 2.0) * phat5.v[i] + (he / 2.0) * pbar5.v[i]);
    std::vector<int> y_new = argmax_rows(pe);
    int changes = 0;
    for (size_t i = 0; i < y_new.size(); ++i)
        if (y_new[i] != st.y_cur[i]) ++changes;
    st.p_e = std::move(pe);
    st.y_cur = std::move(y_new);
    return changes;
}

Model::Model(const model::EncoderConfig& cfg, int classes, uint64_t init_seed) {
    Rng init_rng(Rng::derive(init_seed, "init"));
    encoder = std::make_unique<model::ContextEncoder>(cfg, store, init_rng);
    heads = std::make_unique<predict::PredictionHeads>(cfg.hidden, classes, store, init_rng);
}

PredictOutput predict_interval(const Model& model, const data::SegmentSequence& seq) {
    ad::Tape tape;
    ad::Tensor c = model.encoder->forward(tape, seq.segments, false, nullptr);
    ad::Tensor p_hat = model.heads->independent(tape, c);
    ad::Tensor r_hat = model.heads->pairwise(tape, c);
    PredictOutput out;
    out.bundle = predict::make_bundle(p_hat.value(), r_hat.value(), seq.count(),
                                      model.heads->classes());
    auto [labels, scores] = predict::infer_final(out.bundle.p_hat, out.bundle.p_bar);
    out.labels = std::move(labels);
    out.scores = std::move(scores);
    return out;
}

data::TimeInterval pool_to_interval(const data::PoolInterval& pi) {
    data::TimeInterval iv;
    iv.interval_id = pi.pool_id;
    iv.group_id = pi.group_id;
    iv.features = pi.features;
    iv.values = pi.values;
    iv.labels = pi.labels;
    iv.clean_labels = pi.clean_labels;
    return iv;
}

std::vector<data::TimeInterval> filter_by_groups(const std::vector<data::TimeInterval>& dataset,
                                                 const std::vector<int>& groups) {
    std::vector<data::TimeInterval> out;
    for (const auto& iv : dataset)
        if (std::find(groups.begin(), groups.end(), iv.group_id) != groups.end())
            out.push_back(iv);
    return out;
}

std::vector<data::SegmentSequence> segment_pool(const std::vector<data::PoolInterval>& pool,
                                                int window, int stride, int n_levels) {
    std::vector<data::SegmentSequence> out;
    out.reserve(pool.size());
    for (const auto& pi : pool)
        out.push_back(data::segment_interval(pool_to_interval(pi), window, stride, n_levels));
    return out;
}

namespace {

struct ValScore {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

ValScore validate(const Model& model, const std::vector<data::SegmentSequence>& val_segs,
                  int classes) {
    if (val_segs.empty()) return {};
    std::vector<int> pred, truth;
    for (const auto& seq : val_segs) {
        PredictOutput out = predict_interval(model, seq);
        pred.insert(pred.end(), out.labels.begin(), out.labels.end());
        truth.insert(truth.end(), seq.seg_labels.begin(), seq.seg_labels.end());
    }
    auto rep = metrics::classification_metrics(pred, truth, classes);
    return {rep.accuracy, rep.macro_f1};
}

}  // namespace

TrainResult train_run(Model& model, const std::vector<data::PoolInterval>& train_pool,
                      const std::vector<data::PoolInterval>& val_pool, const TrainSetup& setup) {
    if (train_pool.empty()) throw ConfigError("train: empty training pool");
    if (setup.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (setup.schedule.epochs < 1) throw ConfigError("train: epochs must be >= 1");

    const int classes = setup.classes;
    const int n_items = static_cast<int>(train_pool.size());
    std::vector<data::SegmentSequence> segs =
        segment_pool(train_pool, setup.window, setup.stride, setup.schedule.n_levels);
    std::vector<data::SegmentSequence> val_segs =
        segment_pool(val_pool, setup.window, setup.stride, setup.schedule.n_levels);

    if (setup.symmetric_ratio > 0.0) {
        for (int i = 0; i < n_items; ++i)
            segs[static_cast<size_t>(i)].seg_labels = data::disturb_symmetric(
                segs[static_cast<size_t>(i)].seg_labels, setup.symmetric_ratio, classes,
                Rng::derive(setup.symmetric_seed, "sym" + std::to_string(i)));
    }

    std::vector<IntervalLabelState> states(static_cast<size_t>(n_items));
    for (int i = 0; i < n_items; ++i) {
        const auto& y = segs[static_cast<size_t>(i)].seg_labels;
        IntervalLabelState& st = states[static_cast<size_t>(i)];
        st.y0 = Mat(static_cast<int>(y.size()), classes, predict::one_hot(y, classes));
        st.y_cur = y;
        st.p_e = st.y0;
    }

    Rng rng(Rng::derive(setup.seed, "train-loop"));
    ad::Optimizer optimizer(setup.opt);
    auto params = model.store.all();

    nlohmann::json log;
    log["epochs"] = nlohmann::json::array();
    TrainResult result;
    std::vector<std::vector<double>> best_snapshot;
    int cumulative_changes_vs_y0 = 0;

    for (int e = 0; e < setup.schedule.epochs; ++e) {
        std::vector<int> levels =
            curriculum_active_levels(e, setup.schedule.e_gap, setup.schedule.n_levels);
        int top_level = levels.back();
        std::vector<int> admitted;
        for (int i = 0; i < n_items; ++i)
            if (train_pool[static_cast<size_t>(i)].level <= top_level) admitted.push_back(i);
        rng.shuffle(admitted);

        double sum_l1 = 0.0, sum_l2 = 0.0, sum_l3 = 0.0;
        int batches = 0;
        for (size_t b0 = 0; b0 < admitted.size(); b0 += static_cast<size_t>(setup.batch_size)) {
            size_t b1 = std::min(admitted.size(), b0 + static_cast<size_t>(setup.batch_size));
            int nb = static_cast<int>(b1 - b0);
            model.store.zero_grad();
            for (size_t bi = b0; bi < b1; ++bi) {
                int idx = admitted[bi];
                const auto& seq = segs[static_cast<size_t>(idx)];
                IntervalLabelState& st = states[static_cast<size_t>(idx)];
                ad::Tape tape;
                ad::Tensor c = model.encoder->forward(tape, seq.segments, true, &rng);
                ad::Tensor p_hat = model.heads->independent(tape, c);
                ad::Tensor r_hat = model.heads->pairwise(tape, c);
                ad::Tensor l1 = tape.cross_entropy(p_hat, predict::one_hot(st.y_cur, classes));
                ad::Tensor l2 = tape.cross_entropy(r_hat, predict::pair_targets(st.y_cur));
                ad::Tensor loss = tape.add(l1, l2);
                double lv = loss.scalar();
                if (!std::isfinite(lv))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(e) +
                                        ", pool item " +
                                        std::to_string(train_pool[static_cast<size_t>(idx)].pool_id));
                tape.backward(tape.scale(loss, 1.0 / nb));
                sum_l1 += l1.scalar();
                sum_l2 += l2.scalar();

                // detached behavior fit feeding the label-update history
                predict::PredictionBundle bundle = predict::make_bundle(
                    p_hat.value(), r_hat.value(), seq.count(), classes);
                double fit_err = 0.0;
                for (size_t k = 0; k < bundle.p_bar.v.size(); ++k) {
                    double d = bundle.p_bar.v[k] - bundle.p_tilde.v[k];
                    fit_err += d * d;
                }
                sum_l3 += fit_err / static_cast<double>(bundle.p_bar.v.size());
                push_history(st, std::move(bundle.p_hat), std::move(bundle.p_bar));
            }
            optimizer.step(params);
            ++batches;
        }

        double eta_e = eta(e, setup.schedule.e_eta);
        int label_changes = 0;
        for (int idx : admitted)
            label_changes += update_labels(states[static_cast<size_t>(idx)], eta_e);

        ValScore val = validate(model, val_segs, classes);
        bool is_best = result.best_epoch < 0 || val.macro_f1 > result.best_val_f1;
        if (is_best) {
            result.best_epoch = e;
            result.best_val_f1 = val.macro_f1;
            best_snapshot = model.store.snapshot_values();
        }

        int changed_vs_y0 = 0;
        for (int i = 0; i < n_items; ++i) {
            const IntervalLabelState& st = states[static_cast<size_t>(i)];
            for (size_t k = 0; k < st.y_cur.size(); ++k)
                if (st.y_cur[k] != segs[static_cast<size_t>(i)].seg_labels[k]) ++changed_vs_y0;
        }
        cumulative_changes_vs_y0 = changed_vs_y0;

        double denom = std::max<size_t>(admitted.size(), 1);
        nlohmann::json entry = {
            {"epoch", e},
            {"eta", eta_e},
            {"admitted_levels", levels},
            {"admitted_intervals", admitted.size()},
            {"loss_independent", sum_l1 / denom},
            {"loss_pairwise", sum_l2 / denom},
            {"fit_mse", sum_l3 / denom},
            {"batches", batches},
            {"label_changes", label_changes},
            {"labels_differing_from_original", changed_vs_y0},
            {"val_accuracy", val.accuracy},
            {"val_macro_f1", val.macro_f1},
        };
        log["epochs"].push_back(std::move(entry));
    }

    if (!best_snapshot.empty()) model.store.restore_values(best_snapshot);

    log["best_epoch"] = result.best_epoch;
    log["best_val_macro_f1"] = result.best_val_f1;
    log["final_labels_differing_from_original"] = cumulative_changes_vs_y0;
    log["train_pool_size"] = n_items;
    result.rng_state = rng.state_token();
    result.log = std::move(log);

    result.harmonized.reserve(static_cast<size_t>(n_items));
    for (int i = 0; i < n_items; ++i) {
        result.harmonized.push_back(states[static_cast<size_t>(i)].y_cur);
        result.original.push_back(segs[static_cast<size_t>(i)].seg_labels);
        result.clean.push_back(segs[static_cast<size_t>(i)].clean_seg_labels);
        result.levels.push_back(train_pool[static_cast<size_t>(i)].level);
        result.pool_ids.push_back(train_pool[static_cast<size_t>(i)].pool_id);
    }
    return result;
}

}  // namespace conseg::train
