#pragma once

#include <utility>
#include <vector>

#include "conseg/autodiff.hpp"
#include "conseg/params.hpp"
#include "conseg/rng.hpp"

namespace conseg::predict {

// Small dense row-major matrix for detached (no-gradient) prediction math.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}
    Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {}

    double& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
};

// Fitted behavior-constraint parameters for one class channel:
// curve(x) = a * tanh(k * (x + b)) + h on the [-1,1]-rescaled sequence.
struct TanhFit {
    double a = 0.0;
    double k = 0.0;
    double b = 0.0;
    double h = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Per-interval model outputs.
struct PredictionBundle {
    Mat p_hat;                    // L x C independent predictions
    Mat r_same;                   // L x L same-class channel of the pair discriminator
    Mat p_tilde;                  // L x C context-aware predictions
    Mat p_bar;                    // L x C behavior-constrained predictions
    std::vector<TanhFit> tanh_params;  // one per class
};

// Classifier and pair-discriminator heads on top of encoder representations.
// independent: softmax(MLP1(c)) with one hidden layer d -> d/2 -> C.
// pairwise: softmax over the last axis of MLP2(c_i || c_j) for all ordered
// pairs, 2d -> d -> 2 with channel 0 = different, 1 = same.
class PredictionHeads {
  public:
    PredictionHeads(int hidden, int classes, ad::ParameterStore& store, Rng& init_rng);

    ad::Tensor independent(ad::Tape& tape, const ad::Tensor& c) const;  // (L, C)
    ad::Tensor pairwise(ad::Tape& tape, const ad::Tensor& c) const;     // (L*L, 2)

    int classes() const { return classes_; }

  private:
    int hidden_;
    int classes_;
    ad::Parameter* cls_w1_;
    ad::Parameter* cls_b1_;
    ad::Parameter* cls_w2_;
    ad::Parameter* cls_b2_;
    ad::Parameter* pair_w1_;
    ad::Parameter* pair_b1_;
    ad::Parameter* pair_w2_;
    ad::Parameter* pair_b2_;
};

// One-hot rows for a label vector.
std::vector<double> one_hot(const std::vector<int>& y, int classes);

// Pair targets over all ordered pairs: row i*L+j is [1,0] when y_i != y_j,
// [0,1] when equal.
std::vector<double> pair_targets(const std::vector<int>& y);

// l1 + l2 on the tape: cross-entropy of independent predictions against the
// labels plus cross-entropy of the pair discriminator against the equality
// mask, summed with equal weights.
ad::Tensor consistency_losses(ad::Tape& tape, const ad::Tensor& p_hat, const ad::Tensor& r_hat,
                              const std::vector<int>& labels, int classes);

// Context aggregation: same-class weights row-normalized, then p_tilde = W *
// p_hat. A row of all-zero weights falls back to the identity row.
Mat aggregate_context(const Mat& r_same, const Mat& p_hat);

// Behavior-constraint fit of one sequence of values in [0,1]:
// rescale s = 2*seq-1, abscissa x_i = i - floor(L/2) (1-based i), slope/center
// initialized from the largest adjacent difference, then adaptive-moment
// descent on the MSE at lr 0.1, at most 100 iterations, stopping when the
// loss change falls below 1e-6. Returns the fitted parameters and the curve
// mapped back to [0,1]. L < 2 passes through unconverged.
std::pair<TanhFit, std::vector<double>> fit_tanh(const std::vector<double>& seq);

// fit_tanh per class channel, channels renormalized per row (all-zero rows
// become uniform).
std::pair<Mat, std::vector<TanhFit>> constrain_behavior(const Mat& p_tilde);

// Final coherent prediction: scores = (p_hat + p_bar) / 2, argmax per row
// with ties to the lowest class index.
std::pair<std::vector<int>, Mat> infer_final(const Mat& p_hat, const Mat& p_bar);

// Detached bundle from forward-pass outputs (p_hat L x C, r_hat (L*L) x 2).
PredictionBundle make_bundle(const std::vector<double>& p_hat, const std::vector<double>& r_hat,
                             int len, int classes);

}  // namespace conseg::predict
