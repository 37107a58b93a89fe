#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "debias/types.hpp"

namespace debias {

// Binary linear classifier, sigmoid link.
struct LinearModel {
    Vector weights;
    double intercept = 0.0;

    double score(const Vector& x) const { return weights.dot(x) + intercept; }
};

// Max-margin model with weights split into a part common to all datasets and
// per-dataset offsets. Held-out examples are scored with the common part only.
struct UnbiasedSvmModel {
    Vector common_weights;
    double common_intercept = 0.0;
    Matrix dataset_deltas;   // D x N, row d is Delta_d
    Vector delta_intercepts; // length D

    double score(const Vector& x) const { return common_weights.dot(x) + common_intercept; }

    double dataset_score(const Vector& x, int d) const {
        return (common_weights + dataset_deltas.row(d).transpose()).dot(x) +
               common_intercept + delta_intercepts[d];
    }
};

// Multinomial softmax over dataset ids; accuracy above chance evidences
// dataset-identifying signal in the features.
struct StudyNamingModel {
    Matrix weights;    // D x N
    Vector intercepts; // length D

    int predict(const Vector& x) const;
};

// Average binary cross-entropy + l2 ||w||^2 (intercept unpenalized),
// minimized with the same adaptive first-order scheme as the main trainer.
LinearModel train_logistic(const LabeledDataset& train, double l2, std::uint64_t seed);

// 1/2 ||w0||^2 + (delta_penalty/2) sum_d ||Delta_d||^2
//   + c_common   sum_m hinge(y_m, w0'x_m + b0)
//   + c_specific sum_m hinge(y_m, (w0+Delta_s)'x_m + b0 + b_s),
// labels recoded to +-1, subgradient descent with averaged iterates.
UnbiasedSvmModel train_unbiased_svm(const LabeledDataset& train, double c_common,
                                    double c_specific, double delta_penalty,
                                    std::uint64_t seed);

// Multinomial softmax fit with dataset ids as targets (class labels ignored).
StudyNamingModel train_study_namer(const LabeledDataset& train, double l2, std::uint64_t seed);

struct StudyNamingReport {
    double accuracy = 0.0; // mean over the two folds
    double chance = 0.0;   // 1 / D
    Eigen::MatrixXi confusion; // true dataset x predicted, both held-out folds
};

// Two-fold cross-validated study naming, stratified by dataset.
StudyNamingReport study_namer_cv(const LabeledDataset& data, double l2, std::uint64_t seed);

struct CeilingEntry {
    int dataset = 0;
    bool skipped = false;
    std::string skip_reason;
    double auc = 0.0; // mean held-out AUC over the two folds when not skipped
};

// Per-dataset two-fold cross-validated logistic AUC. Datasets where AUC
// cannot be computed are skipped with a marker, never an error.
std::vector<CeilingEntry> within_dataset_ceiling(const LabeledDataset& data, double l2,
                                                 std::uint64_t seed);

// Seeded stratified two-fold assignment: returns 0/1 per row, each stratum
// split as evenly as possible.
std::vector<int> two_fold_split(const std::vector<int>& strata, std::uint64_t seed);

} // namespace debias
