#include "debias/core_model.hpp"

#include <cmath>
#include <string>

namespace debias {

namespace {

double clamped_log(double p) {
    return std::log(p < kLogFloor ? kLogFloor : p);
}

// -p ln p with the 0 ln 0 = 0 convention.
double neg_p_log_p(double p) {
    if (p <= 0.0) return 0.0;
    return -p * clamped_log(p);
}

} // namespace

AssignmentMatrix compute_assignments(const Matrix& features, const Matrix& prototypes) {
    if (features.cols() != prototypes.cols()) {
        throw DataError("feature dimension " + std::to_string(features.cols()) +
                        " != prototype dimension " + std::to_string(prototypes.cols()));
    }
    if (!features.allFinite() || !prototypes.allFinite()) {
        throw DataError("non-finite input to compute_assignments");
    }
    const int m_count = static_cast<int>(features.rows());
    const int k_count = static_cast<int>(prototypes.rows());

    // Negated squared distances, then a stabilized row softmax.
    Matrix logits(m_count, k_count);
    for (int k = 0; k < k_count; ++k) {
        logits.col(k) = -(features.rowwise() - prototypes.row(k)).rowwise().squaredNorm();
    }
    AssignmentMatrix out;
    out.psi.resize(m_count, k_count);
    for (int m = 0; m < m_count; ++m) {
        const double row_max = logits.row(m).maxCoeff();
        const Eigen::RowVectorXd shifted = (logits.row(m).array() - row_max).exp().matrix();
        out.psi.row(m) = shifted / shifted.sum();
    }
    return out;
}

DatasetConditionals compute_dataset_conditionals(const AssignmentMatrix& psi,
                                                 const std::vector<int>& dataset_ids,
                                                 const Vector& priors) {
    const int m_count = static_cast<int>(psi.psi.rows());
    const int k_count = static_cast<int>(psi.psi.cols());
    const int d_count = static_cast<int>(priors.size());
    if (static_cast<int>(dataset_ids.size()) != m_count) {
        throw DataError("dataset_ids length != assignment row count");
    }
    for (int d = 0; d < d_count; ++d) {
        if (!(priors[d] > 0.0)) throw DataError("priors must be strictly positive");
    }
    if (std::abs(priors.sum() - 1.0) > 1e-9) throw DataError("priors must sum to 1");

    std::vector<int> group_counts(d_count, 0);
    for (int id : dataset_ids) {
        if (id < 0 || id >= d_count) throw DataError("dataset id out of range");
        ++group_counts[id];
    }
    for (int d = 0; d < d_count; ++d) {
        if (group_counts[d] == 0) {
            throw DataError("dataset " + std::to_string(d) + " has no rows");
        }
    }

    DatasetConditionals out;
    out.priors = priors;
    out.phi = Matrix::Zero(d_count, k_count);
    for (int m = 0; m < m_count; ++m) {
        out.phi.row(dataset_ids[m]) += psi.psi.row(m);
    }
    for (int d = 0; d < d_count; ++d) {
        out.phi.row(d) /= static_cast<double>(group_counts[d]);
    }

    out.conditional.resize(d_count, k_count);
    for (int k = 0; k < k_count; ++k) {
        const Vector weighted = out.phi.col(k).cwiseProduct(priors);
        const double denom = weighted.sum();
        if (denom > 0.0) {
            out.conditional.col(k) = weighted / denom;
        } else {
            // Everything assigned away from this prototype: fall back to the
            // priors so the column stays a distribution.
            out.conditional.col(k) = priors;
        }
    }
    return out;
}

double entropy_objective(const DatasetConditionals& conditionals) {
    double j = 0.0;
    for (int k = 0; k < conditionals.conditional.cols(); ++k) {
        for (int d = 0; d < conditionals.conditional.rows(); ++d) {
            j += neg_p_log_p(conditionals.conditional(d, k));
        }
    }
    return j;
}

double reconstruction_error(const Matrix& features, const AssignmentMatrix& psi,
                            const Matrix& prototypes) {
    if (features.cols() != prototypes.cols()) {
        throw DataError("feature dimension != prototype dimension");
    }
    if (features.rows() != psi.psi.rows() || psi.psi.cols() != prototypes.rows()) {
        throw DataError("assignment shape inconsistent with features/prototypes");
    }
    const Matrix reconstructed = psi.psi * prototypes;
    return (features - reconstructed).rowwise().squaredNorm().mean();
}

double classification_loss(const AssignmentMatrix& psi, const std::vector<int>& class_labels,
                           const Matrix& class_weights) {
    const int m_count = static_cast<int>(psi.psi.rows());
    const int c_count = static_cast<int>(class_weights.rows());
    if (psi.psi.cols() != class_weights.cols()) {
        throw DataError("assignment width != class_weights width");
    }
    if (static_cast<int>(class_labels.size()) != m_count) {
        throw DataError("class_labels length != assignment row count");
    }

    const Matrix logits = psi.psi * class_weights.transpose(); // M x C
    double total = 0.0;
    for (int m = 0; m < m_count; ++m) {
        const int y = class_labels[m];
        if (y < 0 || y >= c_count) throw DataError("class label out of range");
        const double row_max = logits.row(m).maxCoeff();
        const double log_norm = std::log((logits.row(m).array() - row_max).exp().sum());
        total += log_norm - (logits(m, y) - row_max);
    }
    return total / static_cast<double>(m_count);
}

LossBreakdown combined_loss(const PrototypeModel& model, const LabeledDataset& data,
                            const HyperParams& hyper, const Vector& priors) {
    if (data.features.cols() != model.prototypes.cols()) {
        throw DataError("data feature dimension != prototype dimension");
    }
    const AssignmentMatrix psi = compute_assignments(data.features, model.prototypes);
    const DatasetConditionals cond =
        compute_dataset_conditionals(psi, data.dataset_ids, priors);

    LossBreakdown out;
    out.entropy_j = entropy_objective(cond);
    out.reconstruction_e = reconstruction_error(data.features, psi, model.prototypes);
    out.classification_l = classification_loss(psi, data.class_labels, model.class_weights);
    out.l2_penalty = model.class_weights.squaredNorm();
    out.combined = -hyper.alpha_j * out.entropy_j + hyper.alpha_e * out.reconstruction_e +
                   hyper.alpha_l * out.classification_l + hyper.lambda * out.l2_penalty;
    return out;
}

Vector predict_class_probabilities(const Vector& x, const PrototypeModel& model) {
    if (x.size() != model.prototypes.cols()) {
        throw DataError("input dimension != prototype dimension");
    }
    if (!x.allFinite()) throw DataError("non-finite input to predict_class_probabilities");

    const AssignmentMatrix psi = compute_assignments(x.transpose(), model.prototypes);
    const Vector logits = model.class_weights * psi.psi.row(0).transpose(); // length C
    const double max_logit = logits.maxCoeff();
    Vector probs = (logits.array() - max_logit).exp().matrix();
    probs /= probs.sum();
    return probs;
}

} // namespace debias
