#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "debias/errors.hpp"

namespace debias {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Multi-dataset labeled data: feature rows x_m with a dataset id s_m in
// [0, dataset_count) and a class label y_m in [0, class_count).
struct LabeledDataset {
    Matrix features;              // M x N
    std::vector<int> dataset_ids; // length M
    std::vector<int> class_labels;// length M
    int dataset_count = 0;
    int class_count = 0;

    int row_count() const { return static_cast<int>(features.rows()); }
    int feature_count() const { return static_cast<int>(features.cols()); }

    // Throws DataError on any violated invariant (shapes, ranges, finiteness,
    // or a dataset id in [0, dataset_count) with no rows).
    void validate() const;

    // Rows per dataset id.
    std::vector<int> group_sizes() const;

    // Empirical priors M_d / M.
    Vector empirical_priors() const;

    // Number of distinct label values present.
    int distinct_label_count() const;

    // Subset containing only the listed dataset ids, in row order, with
    // dataset ids remapped to 0..(ids.size()-1) following the order of `ids`.
    LabeledDataset subset_of_datasets(const std::vector<int>& ids) const;

    // All rows except dataset `d`, ids remapped to stay contiguous.
    LabeledDataset without_dataset(int d) const;

    // Rows of dataset `d` only (single-dataset view, dataset_count = 1).
    LabeledDataset only_dataset(int d) const;

    // Row subset by index list; dataset ids and counts kept as-is.
    LabeledDataset select_rows(const std::vector<int>& rows) const;
};

// The learned artifact: K prototypes in feature space plus the latent
// softmax classifier weights.
struct PrototypeModel {
    Matrix prototypes;    // K x N
    Matrix class_weights; // C x K
    int prototype_count = 0;

    void validate() const;
};

// Optimizer settings ride along with the loss weights because the grid
// search treats them as one tuning surface.
struct HyperParams {
    double alpha_j = 1.0;
    double alpha_e = 1.0;
    double alpha_l = 1.0;
    double lambda = 0.0;
    int prototype_count = 4;

    double step_size = 1e-2;
    int max_iterations = 2000;
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
    int restarts = 1;

    void validate() const;
};

// Soft prototype assignments, one probability row per example.
struct AssignmentMatrix {
    Matrix psi; // M x K, rows sum to 1

    void validate() const;
};

// Per-dataset expected assignments and the Bayes conditionals they induce.
struct DatasetConditionals {
    Matrix phi;         // D x K, each row sums to 1
    Matrix conditional; // D x K, each column sums to 1 over d
    Vector priors;      // length D

    void validate() const;
};

// One evaluation of the combined objective, term by term.
struct LossBreakdown {
    double entropy_j = 0.0;
    double reconstruction_e = 0.0;
    double classification_l = 0.0;
    double l2_penalty = 0.0;
    double combined = 0.0;
};

} // namespace debias
