#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "debias/baselines.hpp"
#include "debias/types.hpp"

namespace debias {

// Mann-Whitney AUC: (concordant + 0.5 * tied) / (positives * negatives),
// computed with a single sort and midrank tie handling.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// 100 * (ceiling - lodo) / ceiling; requires ceiling_auc > 0.
double drop_percentage(double lodo_auc, double ceiling_auc);

// Weight penalty used for the within-dataset ceiling fits; strong enough to
// keep a 78-dimensional logistic sane on half-dataset folds.
inline constexpr double kCeilingL2 = 0.3;

enum class Method { kDebias, kLogistic, kUnbiasedSvm };

Method parse_method(const std::string& name);
std::string method_name(Method method);

// Candidate lists for the nested search. Optimizer settings apply to every
// prototype-model cell; the svm lists only matter for the unbiased SVM.
struct GridSpec {
    std::vector<double> alpha_j{1.0};
    std::vector<double> alpha_e{1.0};
    std::vector<double> alpha_l{1.0};
    std::vector<double> lambda{0.0};
    std::vector<int> prototype_count{4};
    std::vector<double> svm_c_common{1.0};
    std::vector<double> svm_c_specific{1.0};
    std::vector<double> svm_delta_penalty{1.0};

    double step_size = 1e-2;
    int max_iterations = 2000;
    double tolerance = 1e-6;
    int restarts = 1;

    void validate() const; // every list non-empty, values in range
};

// One hyperparameter choice for whichever method is being evaluated.
struct HyperCell {
    Method method = Method::kDebias;
    HyperParams debias;
    double logistic_l2 = 0.01;
    double svm_c_common = 1.0;
    double svm_c_specific = 1.0;
    double svm_delta_penalty = 1.0;
};

// Cells in canonical order (sorted keys, smallest first) so equal scores
// resolve to the smallest prototype_count, then lambda, then alphas.
std::vector<HyperCell> enumerate_cells(const GridSpec& grid, Method method);

using MethodModel = std::variant<PrototypeModel, LinearModel, UnbiasedSvmModel>;

MethodModel train_with_cell(const LabeledDataset& train, const HyperCell& cell,
                            std::uint64_t seed);

// Score used for ranking held-out examples (positive-class probability or
// margin); prediction thresholds it the method-appropriate way.
double method_score(const MethodModel& model, const Vector& x);
int method_predict(const MethodModel& model, const Vector& x);

// FNV-1a over the parameter bytes; equal digests mean identical parameters.
std::uint64_t method_digest(const MethodModel& model);
std::string digest_hex(std::uint64_t digest);

struct GridSearchResult {
    HyperCell cell;
    double inner_score = 0.0; // mean held-out AUC over admissible inner folds
    int admissible_folds = 0;
};

// Inner leave-one-dataset-out over the training datasets; picks the cell
// with the highest mean AUC, ties going to the canonically first cell.
GridSearchResult nested_grid_search(const LabeledDataset& train, const GridSpec& grid,
                                    Method method, std::uint64_t seed, int threads = 1);

struct FoldReport {
    int held_out = 0;
    HyperCell chosen;
    double inner_score = 0.0;
    int inner_folds = 0; // admissible inner folds behind inner_score
    bool auc_skipped = false;
    std::string skip_reason;
    double auc = 0.0;
    double accuracy = 0.0;
    bool ceiling_skipped = false;
    double ceiling_auc = 0.0;
    bool drop_defined = false;
    double drop_pct = 0.0;
    std::string model_digest;
};

struct EvalReport {
    std::string method;
    std::uint64_t seed = 0;
    int dataset_count = 0;
    std::vector<FoldReport> folds;
};

// Leave-one-dataset-out with a nested grid search per fold. Held-out
// datasets with a single class get a skip marker instead of an AUC but keep
// participating in every training fold. threads only affects wall time.
EvalReport lodo_evaluate(const LabeledDataset& data, Method method, const GridSpec& grid,
                         std::uint64_t seed, int threads = 1);

} // namespace debias
