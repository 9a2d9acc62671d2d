#pragma once

#include <vector>

#include "conseg/errors.hpp"

namespace conseg::metrics {

struct ClassificationReport {
    double accuracy = 0.0;
    std::vector<double> per_class_f1;
    double macro_f1 = 0.0;
};

// Confusion-matrix based accuracy and F1; a class with no true and no
// predicted instances scores F1 = 0.
ClassificationReport classification_metrics(const std::vector<int>& pred,
                                            const std::vector<int>& truth, int classes);

// 1-based indices i where label_i != label_{i+1}.
std::vector<int> change_points(const std::vector<int>& labels);

// Tolerance-windowed change-point F1: greedy one-to-one matching of change
// points within distance tol, harmonic mean of precision and recall. Both
// sets empty -> 1, exactly one empty -> 0.
double c_score_sets(const std::vector<int>& pred_cp, const std::vector<int>& true_cp, int tol);
double c_score(const std::vector<int>& pred_labels, const std::vector<int>& true_labels, int tol);

struct RecoveryStats {
    int disturbed = 0;  // segments where the working label differed from clean
    int restored = 0;   // of those, harmonized back to clean
    int intact = 0;     // segments where working == clean
    int corrupted = 0;  // of those, harmonization broke them
    double recovery = 0.0;
    double corruption = 0.0;
};

RecoveryStats label_recovery(const std::vector<int>& harmonized,
                             const std::vector<int>& disturbed, const std::vector<int>& clean);

// Probability table over (y, x, x_ctx); all entries non-negative summing to 1.
struct JointTable {
    int ny = 0, nx = 0, nctx = 0;
    std::vector<double> p;

    JointTable() = default;
    JointTable(int y, int x, int ctx)
        : ny(y), nx(x), nctx(ctx), p(static_cast<size_t>(y) * x * ctx, 0.0) {}
    double& at(int y, int x, int ctx) {
        return p[(static_cast<size_t>(y) * nx + x) * nctx + ctx];
    }
    double at(int y, int x, int ctx) const {
        return p[(static_cast<size_t>(y) * nx + x) * nctx + ctx];
    }
    void validate() const;  // ContractError if invalid
};

struct MiResult {
    double i_y_x = 0.0;      // I(y; x) in bits
    double i_y_x_ctx = 0.0;  // I(y; x, x_ctx) in bits
    double gain = 0.0;
};

// Exhaustive-sum mutual informations over the discrete joint; the gain from
// adding context is I(y; x, x_ctx) - I(y; x).
MiResult mi_gain(const JointTable& joint);

}  // namespace conseg::metrics
