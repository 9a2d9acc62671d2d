#include "conseg/predict.hpp"
#include <limits>

#include <algorithm>
#include <array>
#include <cmath>

namespace conseg::predict {

using ad::Tensor;

PredictionHeads::PredictionHeads(int hidden, int classes, ad::ParameterStore& store, Rng& init_rng)
    : hidden_(hidden), classes_(classes) {
    if (hidden < 2) throw ConfigError("prediction heads: hidden dim must be >= 2");
    if (classes < 2) throw ConfigError("prediction heads: classes must be >= 2");
    int mid = hidden / 2;
    cls_w1_ = &store.create_xavier("heads/cls/w1", {hidden, mid}, init_rng);
    cls_b1_ = &store.create("heads/cls/b1", {mid});
    cls_w2_ = &store.create_xavier("heads/cls/w2", {mid, classes}, init_rng);
    cls_b2_ = &store.create("heads/cls/b2", {classes});
    pair_w1_ = &store.create_xavier("heads/pair/w1", {2 * hidden, hidden}, init_rng);
    pair_b1_ = &store.create("heads/pair/b1", {hidden});
    pair_w2_ = &store.create_xavier("heads/pair/w2", {hidden, 2}, init_rng);
    pair_b2_ = &store.create("heads/pair/b2", {2});
}

Tensor PredictionHeads::independent(ad::Tape& tape, const Tensor& c) const {
    Tensor h = tape.gelu(tape.add(tape.matmul(c, tape.param(*cls_w1_)), tape.param(*cls_b1_)));
    Tensor logits = tape.add(tape.matmul(h, tape.param(*cls_w2_)), tape.param(*cls_b2_));
    return tape.softmax_rows(logits);
}

Tensor PredictionHeads::pairwise(ad::Tape& tape, const Tensor& c) const {
    Tensor pairs = tape.pairwise_concat(c);  // (L*L, 2d)
    Tensor h = tape.gelu(tape.add(tape.matmul(pairs, tape.param(*pair_w1_)),
                                  tape.param(*pair_b1_)));
    Tensor logits = tape.add(tape.matmul(h, tape.param(*pair_w2_)), tape.param(*pair_b2_));
    return tape.softmax_rows(logits);
}

std::vector<double> one_hot(const std::vector<int>& y, int classes) {
    std::vector<double> out(y.size() * static_cast<size_t>(classes), 0.0);
    for (size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || y[i] >= classes)
            throw ContractError("one_hot: label " + std::to_string(y[i]) + " out of range");
        out[i * classes + static_cast<size_t>(y[i])] = 1.0;
    }
    return out;
}

std::vector<double> pair_targets(const std::vector<int>& y) {
    size_t L = y.size();
    std::vector<double> out(L * L * 2, 0.0);
    for (size_t i = 0; i < L; ++i)
        for (size_t j = 0; j < L; ++j)
            out[(i * L + j) * 2 + (y[i] == y[j] ? 1 : 0)] = 1.0;
    return out;
}

Tensor consistency_losses(ad::Tape& tape, const Tensor& p_hat, const Tensor& r_hat,
                          const std::vector<int>& labels, int classes) {
    Tensor l1 = tape.cross_entropy(p_hat, one_hot(labels, classes));
    Tensor l2 = tape.cross_entropy(r_hat, pair_targets(labels));
    return tape.add(l1, l2);
}

Mat aggregate_context(const Mat& r_same, const Mat& p_hat) {
    if (r_same.rows != r_same.cols || r_same.rows != p_hat.rows)
        throw DimensionError("aggregate_context: weight/prediction shapes disagree");
    int L = r_same.rows, C = p_hat.cols;
    Mat out(L, C);
    for (int i = 0; i < L; ++i) {
        double sum = 0.0;
        for (int j = 0; j < L; ++j) sum += r_same.at(i, j);
        if (sum <= 0.0) {
            for (int c = 0; c < C; ++c) out.at(i, c) = p_hat.at(i, c);
            continue;
        }
        for (int j = 0; j < L; ++j) {
            double w = r_same.at(i, j) / sum;
            if (w == 0.0) continue;
            for (int c = 0; c < C; ++c) out.at(i, c) += w * p_hat.at(j, c);
        }
    }
    return out;
}

std::pair<TanhFit, std::vector<double>> fit_tanh(const std::vector<double>& seq) {
    int L = static_cast<int>(seq.size());
    TanhFit fit;
    if (L < 2) return {fit, seq};

    std::vector<double> s(seq.size());
    for (int i = 0; i < L; ++i) s[static_cast<size_t>(i)] = 2.0 * seq[static_cast<size_t>(i)] - 1.0;
    std::vector<double> x(seq.size());
    int half = L / 2;
    for (int i = 1; i <= L; ++i) x[static_cast<size_t>(i - 1)] = static_cast<double>(i - half);

    // slope and center start at the largest adjacent difference
    int bidx = 0;
    double bmag = -1.0;
    for (int i = 0; i + 1 < L; ++i) {
        double d = std::abs(s[static_cast<size_t>(i + 1)] - s[static_cast<size_t>(i)]);
        if (d > bmag) {
            bmag = d;
            bidx = i;
        }
    }
    double di_b = s[static_cast<size_t>(bidx + 1)] - s[static_cast<size_t>(bidx)];
    // amplitude/offset start on the sequence's own range; slope and center on
    // the largest adjacent difference
    auto [smin_it, smax_it] = std::minmax_element(s.begin(), s.end());
    std::array<double, 4> p = {(*smax_it - *smin_it) / 2.0,                            // a
                               di_b,                                                   // k
                               -(static_cast<double>(bidx + 1) - half + 0.5),          // b
                               (*smax_it + *smin_it) / 2.0};                           // h

    constexpr double lr = 0.1, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    constexpr int max_iters = 100;
    constexpr double tol = 1e-6;
    std::array<double, 4> m{}, v{};
    std::array<double, 4> best = p;
    double best_loss = std::numeric_limits<double>::infinity();
    double prev_loss = 0.0;
    int calm = 0;
    for (int it = 0; it < max_iters; ++it) {
        // squared-norm residual; the direction is scale-free under the
        // adaptive-moment update, the scale only sharpens the stop tolerance
        double loss = 0.0;
        std::array<double, 4> g{};
        for (int i = 0; i < L; ++i) {
            double u = p[1] * (x[static_cast<size_t>(i)] + p[2]);
            double th = std::tanh(u);
            double r = p[0] * th + p[3] - s[static_cast<size_t>(i)];
            loss += r * r;
            double sech2 = 1.0 - th * th;
            double w = 2.0 * r;
            g[0] += w * th;
            g[1] += w * p[0] * sech2 * (x[static_cast<size_t>(i)] + p[2]);
            g[2] += w * p[0] * sech2 * p[1];
            g[3] += w;
        }
        if (loss < best_loss) {
            best_loss = loss;
            best = p;
        }
        // the adaptive-moment path oscillates, so a single small step change
        // can be a turning point; require it to persist
        if (it > 0 && std::abs(prev_loss - loss) < tol) {
            if (++calm >= 3) {
                fit.converged = true;
                break;
            }
        } else {
            calm = 0;
        }
        prev_loss = loss;
        double t = static_cast<double>(it + 1);
        for (int j = 0; j < 4; ++j) {
            m[static_cast<size_t>(j)] = beta1 * m[static_cast<size_t>(j)] + (1.0 - beta1) * g[static_cast<size_t>(j)];
            v[static_cast<size_t>(j)] = beta2 * v[static_cast<size_t>(j)] + (1.0 - beta2) * g[static_cast<size_t>(j)] * g[static_cast<size_t>(j)];
            double mhat = m[static_cast<size_t>(j)] / (1.0 - std::pow(beta1, t));
            double vhat = v[static_cast<size_t>(j)] / (1.0 - std::pow(beta2, t));
            p[static_cast<size_t>(j)] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        fit.iterations = it + 1;
    }
    p = best;
    fit.a = p[0];
    fit.k = p[1];
    fit.b = p[2];
    fit.h = p[3];
    std::vector<double> curve(seq.size());
    for (int i = 0; i < L; ++i) {
        double f = p[0] * std::tanh(p[1] * (x[static_cast<size_t>(i)] + p[2])) + p[3];
        curve[static_cast<size_t>(i)] = std::clamp((f + 1.0) / 2.0, 0.0, 1.0);
    }
    return {fit, curve};
}

std::pair<Mat, std::vector<TanhFit>> constrain_behavior(const Mat& p_tilde) {
    int L = p_tilde.rows, C = p_tilde.cols;
    Mat raw(L, C);
    std::vector<TanhFit> fits;
    fits.reserve(static_cast<size_t>(C));
    std::vector<double> channel(static_cast<size_t>(L));
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < L; ++i) channel[static_cast<size_t>(i)] = p_tilde.at(i, c);
        auto [fit, curve] = fit_tanh(channel);
        fits.push_back(fit);
        for (int i = 0; i < L; ++i) raw.at(i, c) = curve[static_cast<size_t>(i)];
    }
    Mat out(L, C);
    for (int i = 0; i < L; ++i) {
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += raw.at(i, c);
        if (sum <= 0.0) {
            for (int c = 0; c < C; ++c) out.at(i, c) = 1.0 / C;
        } else {
            for (int c = 0; c < C; ++c) out.at(i, c) = raw.at(i, c) / sum;
        }
    }
    return {std::move(out), std::move(fits)};
}

std::pair<std::vector<int>, Mat> infer_final(const Mat& p_hat, const Mat& p_bar) {
    if (p_hat.rows != p_bar.rows || p_hat.cols != p_bar.cols)
        throw DimensionError("infer_final: shapes disagree");
    Mat scores(p_hat.rows, p_hat.cols);
    std::vector<int> labels(static_cast<size_t>(p_hat.rows));
    for (int i = 0; i < p_hat.rows; ++i) {
        int best = 0;
        for (int c = 0; c < p_hat.cols; ++c) {
            scores.at(i, c) = 0.5 * (p_hat.at(i, c) + p_bar.at(i, c));
            if (scores.at(i, c) > scores.at(i, best)) best = c;
        }
        labels[static_cast<size_t>(i)] = best;
    }
    return {std::move(labels), std::move(scores)};
}

PredictionBundle make_bundle(const std::vector<double>& p_hat, const std::vector<double>& r_hat,
                             int len, int classes) {
    PredictionBundle b;
    b.p_hat = Mat(len, classes, p_hat);
    b.r_same = Mat(len, len);
    for (int i = 0; i < len; ++i)
        for (int j = 0; j < len; ++j)
            b.r_same.at(i, j) = r_hat[(static_cast<size_t>(i) * len + j) * 2 + 1];
    b.p_tilde = aggregate_context(b.r_same, b.p_hat);
    auto [p_bar, fits] = constrain_behavior(b.p_tilde);
    b.p_bar = std::move(p_bar);
    b.tanh_params = std::move(fits);
    return b;
}

}  // namespace conseg::predict
