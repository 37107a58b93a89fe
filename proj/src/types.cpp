#include "debias/types.hpp"

#include <string>

namespace debias {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw DataError(message);
}

} // namespace

void LabeledDataset::validate() const {
    require(features.rows() >= 1, "dataset has no rows");
    require(features.cols() >= 1, "dataset has no features");
    require(dataset_count >= 1, "dataset_count must be >= 1");
    require(class_count >= 1, "class_count must be >= 1");
    const int m = row_count();
    require(static_cast<int>(dataset_ids.size()) == m, "dataset_ids length != row count");
    require(static_cast<int>(class_labels.size()) == m, "class_labels length != row count");
    require(features.allFinite(), "features contain non-finite values");
    std::vector<int> counts(dataset_count, 0);
    for (int i = 0; i < m; ++i) {
        require(dataset_ids[i] >= 0 && dataset_ids[i] < dataset_count,
                "dataset id out of range at row " + std::to_string(i));
        require(class_labels[i] >= 0 && class_labels[i] < class_count,
                "class label out of range at row " + std::to_string(i));
        ++counts[dataset_ids[i]];
    }
    for (int d = 0; d < dataset_count; ++d) {
        require(counts[d] >= 1, "dataset " + std::to_string(d) + " has no rows");
    }
}

std::vector<int> LabeledDataset::group_sizes() const {
    std::vector<int> counts(dataset_count, 0);
    for (int id : dataset_ids) {
        if (id >= 0 && id < dataset_count) ++counts[id];
    }
    return counts;
}

Vector LabeledDataset::empirical_priors() const {
    const auto counts = group_sizes();
    Vector priors(dataset_count);
    for (int d = 0; d < dataset_count; ++d) {
        priors[d] = static_cast<double>(counts[d]) / static_cast<double>(row_count());
    }
    return priors;
}

int LabeledDataset::distinct_label_count() const {
    std::vector<bool> seen(class_count, false);
    int distinct = 0;
    for (int y : class_labels) {
        if (y >= 0 && y < class_count && !seen[y]) {
            seen[y] = true;
            ++distinct;
        }
    }
    return distinct;
}

LabeledDataset LabeledDataset::subset_of_datasets(const std::vector<int>& ids) const {
    std::vector<int> remap(dataset_count, -1);
    for (std::size_t j = 0; j < ids.size(); ++j) {
        require(ids[j] >= 0 && ids[j] < dataset_count, "subset dataset id out of range");
        remap[ids[j]] = static_cast<int>(j);
    }
    std::vector<int> rows;
    for (int i = 0; i < row_count(); ++i) {
        if (remap[dataset_ids[i]] >= 0) rows.push_back(i);
    }
    require(!rows.empty(), "dataset subset is empty");

    LabeledDataset out;
    out.features.resize(static_cast<int>(rows.size()), features.cols());
    out.dataset_ids.resize(rows.size());
    out.class_labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<int>(i)) = features.row(rows[i]);
        out.dataset_ids[i] = remap[dataset_ids[rows[i]]];
        out.class_labels[i] = class_labels[rows[i]];
    }
    out.dataset_count = static_cast<int>(ids.size());
    out.class_count = class_count;
    return out;
}

LabeledDataset LabeledDataset::without_dataset(int d) const {
    std::vector<int> keep;
    keep.reserve(dataset_count - 1);
    for (int id = 0; id < dataset_count; ++id) {
        if (id != d) keep.push_back(id);
    }
    return subset_of_datasets(keep);
}

LabeledDataset LabeledDataset::only_dataset(int d) const {
    return subset_of_datasets({d});
}

LabeledDataset LabeledDataset::select_rows(const std::vector<int>& rows) const {
    require(!rows.empty(), "row selection is empty");
    LabeledDataset out;
    out.features.resize(static_cast<int>(rows.size()), features.cols());
    out.dataset_ids.resize(rows.size());
    out.class_labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < row_count(), "row index out of range");
        out.features.row(static_cast<int>(i)) = features.row(rows[i]);
        out.dataset_ids[i] = dataset_ids[rows[i]];
        out.class_labels[i] = class_labels[rows[i]];
    }
    out.dataset_count = dataset_count;
    out.class_count = class_count;
    return out;
}

void PrototypeModel::validate() const {
    require(prototype_count >= 1, "prototype_count must be >= 1");
    require(prototypes.rows() == prototype_count, "prototype row count != prototype_count");
    require(class_weights.cols() == prototype_count, "class_weights column count != prototype_count");
    require(prototypes.allFinite(), "prototypes contain non-finite values");
    require(class_weights.allFinite(), "class_weights contain non-finite values");
}

void HyperParams::validate() const {
    if (alpha_j < 0 || alpha_e < 0 || alpha_l < 0 || lambda < 0) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (alpha_j == 0 && alpha_e == 0 && alpha_l == 0) {
        throw ConfigError("at least one of alpha_j, alpha_e, alpha_l must be positive");
    }
    if (prototype_count < 1) throw ConfigError("prototype_count must be >= 1");
    if (step_size <= 0) throw ConfigError("step_size must be positive");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (tolerance < 0) throw ConfigError("tolerance must be non-negative");
    if (restarts < 1) throw ConfigError("restarts must be >= 1");
}

void AssignmentMatrix::validate() const {
    require(psi.allFinite(), "assignment matrix contains non-finite values");
    for (int m = 0; m < psi.rows(); ++m) {
        double sum = 0.0;
        for (int k = 0; k < psi.cols(); ++k) {
            const double p = psi(m, k);
            require(p >= 0.0 && p <= 1.0, "assignment probability outside [0, 1]");
            sum += p;
        }
        require(std::abs(sum - 1.0) <= 1e-9, "assignment row does not sum to 1");
    }
}

void DatasetConditionals::validate() const {
    require(phi.allFinite() && conditional.allFinite(), "conditionals contain non-finite values");
    require(phi.rows() == conditional.rows() && phi.cols() == conditional.cols(),
            "phi and conditional shapes differ");
    require(priors.size() == phi.rows(), "priors length != dataset count");
    for (int d = 0; d < phi.rows(); ++d) {
        require(std::abs(phi.row(d).sum() - 1.0) <= 1e-9, "phi row does not sum to 1");
        require(priors[d] > 0.0, "prior must be positive");
    }
    require(std::abs(priors.sum() - 1.0) <= 1e-9, "priors do not sum to 1");
    for (int k = 0; k < conditional.cols(); ++k) {
        require(std::abs(conditional.col(k).sum() - 1.0) <= 1e-9,
                "conditional column does not sum to 1");
    }
}

} // namespace debias
