#pragma once

#include "debias/types.hpp"

namespace debias {

// Probabilities below this floor are clamped before entering a logarithm.
inline constexpr double kLogFloor = 1e-300;

// Soft assignment of every feature row to every prototype:
//   psi_mk = exp(-||x_m - v_k||^2) / sum_j exp(-||x_m - v_j||^2),
// computed with row-wise max subtraction before exponentiation.
AssignmentMatrix compute_assignments(const Matrix& features, const Matrix& prototypes);

// phi_dk = mean of psi rows within dataset d, and the Bayes conditional
//   P(s=d | Z=k) = phi_dk P(s=d) / sum_r phi_rk P(s=r).
// A column whose denominator underflows to zero falls back to the priors.
DatasetConditionals compute_dataset_conditionals(const AssignmentMatrix& psi,
                                                 const std::vector<int>& dataset_ids,
                                                 const Vector& priors);

// J = -sum_k sum_d p log p over the conditional columns, natural log,
// 0*log(0) = 0. Bounded by [0, K ln D].
double entropy_objective(const DatasetConditionals& conditionals);

// E = (1/M) sum_m ||x_m - xhat_m||^2 with xhat_m = sum_k psi_mk v_k.
double reconstruction_error(const Matrix& features, const AssignmentMatrix& psi,
                            const Matrix& prototypes);

// Average negative log-likelihood of the latent softmax classifier
// Theta_c' Psi_m (no intercept), max-subtraction stabilized.
double classification_loss(const AssignmentMatrix& psi, const std::vector<int>& class_labels,
                           const Matrix& class_weights);

// Assembles all terms:
//   combined = -alpha_j J + alpha_e E + alpha_l L + lambda ||Theta||_F^2.
LossBreakdown combined_loss(const PrototypeModel& model, const LabeledDataset& data,
                            const HyperParams& hyper, const Vector& priors);

// softmax over Theta_c' Psi(x) for a single feature vector. Entry 1 is the
// positive-class score fed to ROC-AUC when C = 2.
Vector predict_class_probabilities(const Vector& x, const PrototypeModel& model);

} // namespace debias
