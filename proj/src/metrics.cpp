#include "conseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace conseg::metrics {

ClassificationReport classification_metrics(const std::vector<int>& pred,
                                            const std::vector<int>& truth, int classes) {
    if (pred.empty() || pred.size() != truth.size())
        throw ContractError("classification_metrics: empty or mismatched inputs");
    std::vector<int64_t> tp(static_cast<size_t>(classes), 0), fp(static_cast<size_t>(classes), 0),
        fn(static_cast<size_t>(classes), 0);
    int64_t correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= classes || truth[i] < 0 || truth[i] >= classes)
            throw ContractError("classification_metrics: label out of range at index " +
                                std::to_string(i));
        if (pred[i] == truth[i]) {
            ++correct;
            ++tp[static_cast<size_t>(pred[i])];
        } else {
            ++fp[static_cast<size_t>(pred[i])];
            ++fn[static_cast<size_t>(truth[i])];
        }
    }
    ClassificationReport rep;
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    rep.per_class_f1.resize(static_cast<size_t>(classes), 0.0);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
        double denom = 2.0 * tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)] +
                       fn[static_cast<size_t>(c)];
        rep.per_class_f1[static_cast<size_t>(c)] =
            denom > 0.0 ? 2.0 * tp[static_cast<size_t>(c)] / denom : 0.0;
        sum += rep.per_class_f1[static_cast<size_t>(c)];
    }
    rep.macro_f1 = sum / classes;
    return rep;
}

std::vector<int> change_points(const std::vector<int>& labels) {
    if (labels.empty()) throw ContractError("change_points: empty input");
    std::vector<int> out;
    for (size_t i = 0; i + 1 < labels.size(); ++i)
        if (labels[i] != labels[i + 1]) out.push_back(static_cast<int>(i) + 1);
    return out;
}

double c_score_sets(const std::vector<int>& pred_cp, const std::vector<int>& true_cp, int tol) {
    if (tol < 0) throw ContractError("c_score: negative tolerance");
    if (pred_cp.empty() && true_cp.empty()) return 1.0;
    if (pred_cp.empty() || true_cp.empty()) return 0.0;
    // two-pointer greedy matching over the sorted sets; symmetric in its args
    size_t i = 0, j = 0;
    int matched = 0;
    while (i < pred_cp.size() && j < true_cp.size()) {
        if (std::abs(pred_cp[i] - true_cp[j]) <= tol) {
            ++matched;
            ++i;
            ++j;
        } else if (pred_cp[i] < true_cp[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    double precision = static_cast<double>(matched) / static_cast<double>(pred_cp.size());
    double recall = static_cast<double>(matched) / static_cast<double>(true_cp.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double c_score(const std::vector<int>& pred_labels, const std::vector<int>& true_labels, int tol) {
    return c_score_sets(change_points(pred_labels), change_points(true_labels), tol);
}

RecoveryStats label_recovery(const std::vector<int>& harmonized,
                             const std::vector<int>& disturbed, const std::vector<int>& clean) {
    if (harmonized.size() != disturbed.size() || harmonized.size() != clean.size())
        throw ContractError("label_recovery: length mismatch");
    RecoveryStats st;
    for (size_t i = 0; i < clean.size(); ++i) {
        if (disturbed[i] != clean[i]) {
            ++st.disturbed;
            if (harmonized[i] == clean[i]) ++st.restored;
        } else {
            ++st.intact;
            if (harmonized[i] != clean[i]) ++st.corrupted;
        }
    }
    st.recovery = st.disturbed > 0 ? static_cast<double>(st.restored) / st.disturbed : 0.0;
    st.corruption = st.intact > 0 ? static_cast<double>(st.corrupted) / st.intact : 0.0;
    return st;
}

void JointTable::validate() const {
    if (ny < 1 || nx < 1 || nctx < 1) throw ContractError("joint table: empty alphabet");
    if (p.size() != static_cast<size_t>(ny) * nx * nctx)
        throw ContractError("joint table: size does not match alphabets");
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0 || !std::isfinite(v)) throw ContractError("joint table: invalid entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ContractError("joint table: probabilities sum to " + std::to_string(sum));
}

namespace {
double xlog2x_ratio(double joint, double denom) {
    // joint * log2(joint / denom), with 0 log 0 = 0
    if (joint <= 0.0) return 0.0;
    return joint * std::log2(joint / denom);
}
}  // namespace

MiResult mi_gain(const JointTable& joint) {
    joint.validate();
    int ny = joint.ny, nx = joint.nx, na = joint.nctx;
    std::vector<double> py(static_cast<size_t>(ny), 0.0), px(static_cast<size_t>(nx), 0.0);
    std::vector<double> pyx(static_cast<size_t>(ny) * nx, 0.0);
    std::vector<double> pxa(static_cast<size_t>(nx) * na, 0.0);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a) {
                double v = joint.at(y, x, a);
                py[static_cast<size_t>(y)] += v;
                px[static_cast<size_t>(x)] += v;
                pyx[static_cast<size_t>(y) * nx + x] += v;
                pxa[static_cast<size_t>(x) * na + a] += v;
            }
    MiResult res;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            res.i_y_x += xlog2x_ratio(pyx[static_cast<size_t>(y) * nx + x],
                                      py[static_cast<size_t>(y)] * px[static_cast<size_t>(x)]);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a)
                res.i_y_x_ctx +=
                    xlog2x_ratio(joint.at(y, x, a),
                                 py[static_cast<size_t>(y)] * pxa[static_cast<size_t>(x) * na + a]);
    res.gain = res.i_y_x_ctx - res.i_y_x;
    return res;
}

}  // namespace conseg::metrics
