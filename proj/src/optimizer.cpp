#include "debias/optimizer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "debias/rng.hpp"

namespace debias {

namespace {

double clamped_log(double p) {
    return std::log(p < kLogFloor ? kLogFloor : p);
}

struct ForwardPass {
    AssignmentMatrix psi;
    DatasetConditionals cond;
    Matrix reconstructed;     // M x N
    Matrix class_probs;       // M x C
    LossBreakdown loss;
};

ForwardPass forward(const PrototypeModel& model, const LabeledDataset& data,
                    const HyperParams& hyper, const Vector& priors) {
    ForwardPass f;
    f.psi = compute_assignments(data.features, model.prototypes);
    f.cond = compute_dataset_conditionals(f.psi, data.dataset_ids, priors);
    f.reconstructed = f.psi.psi * model.prototypes;

    const int m_count = data.row_count();
    const int c_count = static_cast<int>(model.class_weights.rows());
    const Matrix logits = f.psi.psi * model.class_weights.transpose();
    f.class_probs.resize(m_count, c_count);
    double classification = 0.0;
    for (int m = 0; m < m_count; ++m) {
        const double row_max = logits.row(m).maxCoeff();
        const Eigen::RowVectorXd shifted = (logits.row(m).array() - row_max).exp().matrix();
        const double norm = shifted.sum();
        f.class_probs.row(m) = shifted / norm;
        classification += std::log(norm) - (logits(m, data.class_labels[m]) - row_max);
    }

    f.loss.entropy_j = entropy_objective(f.cond);
    f.loss.reconstruction_e =
        (data.features - f.reconstructed).rowwise().squaredNorm().mean();
    f.loss.classification_l = classification / static_cast<double>(m_count);
    f.loss.l2_penalty = model.class_weights.squaredNorm();
    f.loss.combined = -hyper.alpha_j * f.loss.entropy_j +
                      hyper.alpha_e * f.loss.reconstruction_e +
                      hyper.alpha_l * f.loss.classification_l +
                      hyper.lambda * f.loss.l2_penalty;
    return f;
}

void check_term_finite(double value, const char* term) {
    if (!std::isfinite(value)) {
        throw NumericError(std::string("non-finite value in term ") + term);
    }
}

} // namespace

std::pair<LossBreakdown, GradientBundle> loss_and_gradients(const PrototypeModel& model,
                                                            const LabeledDataset& data,
                                                            const HyperParams& hyper,
                                                            const Vector& priors) {
    if (data.features.cols() != model.prototypes.cols()) {
        throw DataError("data feature dimension != prototype dimension");
    }
    const int m_count = data.row_count();
    const int k_count = model.prototype_count;
    const int d_count = static_cast<int>(priors.size());

    const ForwardPass f = forward(model, data, hyper, priors);
    check_term_finite(f.loss.entropy_j, "entropy_j");
    check_term_finite(f.loss.reconstruction_e, "reconstruction_e");
    check_term_finite(f.loss.classification_l, "classification_l");
    check_term_finite(f.loss.l2_penalty, "l2_penalty");

    const Matrix& psi = f.psi.psi;
    const double inv_m = 1.0 / static_cast<double>(m_count);

    // One-hot residual of the latent classifier: P - Y, reused for both
    // gradients of L.
    Matrix prob_residual = f.class_probs; // M x C
    for (int m = 0; m < m_count; ++m) {
        prob_residual(m, data.class_labels[m]) -= 1.0;
    }

    // dL/dTheta = (1/M) (P - Y)' Psi, plus the ridge term.
    GradientBundle grad;
    grad.d_class_weights = hyper.alpha_l * inv_m * prob_residual.transpose() * psi +
                           2.0 * hyper.lambda * model.class_weights;

    // d(combined)/d(psi), accumulated per term.
    Matrix d_psi = Matrix::Zero(m_count, k_count);

    if (hyper.alpha_l != 0.0) {
        d_psi += hyper.alpha_l * inv_m * prob_residual * model.class_weights;
    }

    const Matrix residual = f.reconstructed - data.features; // M x N
    if (hyper.alpha_e != 0.0) {
        d_psi += hyper.alpha_e * (2.0 * inv_m) * residual * model.prototypes.transpose();
    }

    if (hyper.alpha_j != 0.0 && d_count > 1) {
        // dJ/dphi_dk = -(pi_d / T_k)(ln q_dk + H_k); a fallback column (T_k
        // underflowed) is constant in phi, so its gradient is zero.
        const std::vector<int> group_counts = data.group_sizes();
        Matrix d_phi(d_count, k_count);
        for (int k = 0; k < k_count; ++k) {
            const double t_k = f.cond.phi.col(k).cwiseProduct(priors).sum();
            if (t_k <= 0.0) {
                d_phi.col(k).setZero();
                continue;
            }
            double column_entropy = 0.0;
            for (int d = 0; d < d_count; ++d) {
                const double q = f.cond.conditional(d, k);
                if (q > 0.0) column_entropy -= q * clamped_log(q);
            }
            for (int d = 0; d < d_count; ++d) {
                const double q = f.cond.conditional(d, k);
                d_phi(d, k) = -(priors[d] / t_k) * (clamped_log(q) + column_entropy);
            }
        }
        // dJ/dpsi_mk = dJ/dphi_{s_m,k} / M_{s_m}; the combined loss carries -alpha_j.
        for (int m = 0; m < m_count; ++m) {
            const int d = data.dataset_ids[m];
            d_psi.row(m) -= hyper.alpha_j / static_cast<double>(group_counts[d]) * d_phi.row(d);
        }
    }

    // Back through the softmax over negated squared distances:
    //   dA_mk = psi_mk (d_psi_mk - <d_psi_m, psi_m>),  A_mk = -||x_m - v_k||^2,
    //   dV_k = sum_m dA_mk * 2 (x_m - v_k).
    const Vector inner = (d_psi.array() * psi.array()).rowwise().sum().matrix();
    const Matrix d_logits = (psi.array() * (d_psi.colwise() - inner).array()).matrix();
    grad.d_prototypes =
        2.0 * (d_logits.transpose() * data.features -
               d_logits.colwise().sum().transpose().asDiagonal() * model.prototypes);

    // Direct dependence of E on the prototypes through xhat.
    if (hyper.alpha_e != 0.0) {
        grad.d_prototypes += hyper.alpha_e * (2.0 * inv_m) * psi.transpose() * residual;
    }

    if (!grad.d_prototypes.allFinite()) {
        throw NumericError("non-finite value in term d_prototypes");
    }
    if (!grad.d_class_weights.allFinite()) {
        throw NumericError("non-finite value in term d_class_weights");
    }
    return {f.loss, grad};
}

namespace {

double fd_worst_against(const PrototypeModel& model, const LabeledDataset& data,
                        const HyperParams& hyper, const Vector& priors, double step,
                        const GradientBundle& grad) {
    PrototypeModel probe = model;
    const auto combined_at = [&](const PrototypeModel& candidate) {
        return combined_loss(candidate, data, hyper, priors).combined;
    };
    const auto relative_error = [](double analytic, double numeric) {
        return std::abs(analytic - numeric) /
               std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    };

    double worst = 0.0;
    for (int k = 0; k < probe.prototypes.rows(); ++k) {
        for (int n = 0; n < probe.prototypes.cols(); ++n) {
            const double saved = probe.prototypes(k, n);
            probe.prototypes(k, n) = saved + step;
            const double up = combined_at(probe);
            probe.prototypes(k, n) = saved - step;
            const double down = combined_at(probe);
            probe.prototypes(k, n) = saved;
            worst = std::max(worst, relative_error(grad.d_prototypes(k, n),
                                                   (up - down) / (2.0 * step)));
        }
    }
    for (int c = 0; c < probe.class_weights.rows(); ++c) {
        for (int k = 0; k < probe.class_weights.cols(); ++k) {
            const double saved = probe.class_weights(c, k);
            probe.class_weights(c, k) = saved + step;
            const double up = combined_at(probe);
            probe.class_weights(c, k) = saved - step;
            const double down = combined_at(probe);
            probe.class_weights(c, k) = saved;
            worst = std::max(worst, relative_error(grad.d_class_weights(c, k),
                                                   (up - down) / (2.0 * step)));
        }
    }
    return worst;
}

} // namespace

double finite_difference_check(const PrototypeModel& model, const LabeledDataset& data,
                               const HyperParams& hyper, const Vector& priors, double step) {
    if (!(step > 0.0)) throw ConfigError("finite difference step must be positive");
    const auto [loss, grad] = loss_and_gradients(model, data, hyper, priors);
    (void)loss;
    return fd_worst_against(model, data, hyper, priors, step, grad);
}

GradientCheckReport gradient_check_suite(std::uint64_t seed, bool corrupt_one_entry) {
    constexpr double kStep = 1e-5;

    // aj, ae, al, lambda: each term alone, then two mixed weightings
    const double activations[5][4] = {
        {1.0, 0.0, 0.0, 0.0},
        {0.0, 1.0, 0.0, 0.0},
        {0.0, 0.0, 1.0, 0.0},
        {1.0, 1.0, 1.0, 0.1},
        {0.7, 0.3, 1.5, 0.05},
    };

    const auto corrupt = [](GradientBundle& grad) {
        double* worst = &grad.d_prototypes(0, 0);
        double magnitude = -1.0;
        for (int k = 0; k < grad.d_prototypes.rows(); ++k)
            for (int n = 0; n < grad.d_prototypes.cols(); ++n)
                if (std::abs(grad.d_prototypes(k, n)) > magnitude) {
                    magnitude = std::abs(grad.d_prototypes(k, n));
                    worst = &grad.d_prototypes(k, n);
                }
        for (int c = 0; c < grad.d_class_weights.rows(); ++c)
            for (int k = 0; k < grad.d_class_weights.cols(); ++k)
                if (std::abs(grad.d_class_weights(c, k)) > magnitude) {
                    magnitude = std::abs(grad.d_class_weights(c, k));
                    worst = &grad.d_class_weights(c, k);
                }
        *worst *= 2.0;
    };

    const auto random_instance = [](std::uint64_t instance_seed, int variant,
                                    LabeledDataset& data, PrototypeModel& model) {
        Rng rng(instance_seed);
        const int m = 5 + variant % 6;
        const int n = 2 + variant % 3;
        const int k = 2 + variant % 2;
        const int d = 2 + (variant / 2) % 2;
        const int c = 2 + (variant / 3) % 2;

        data.features.resize(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) data.features(i, j) = rng.gaussian();
        data.dataset_ids.resize(m);
        data.class_labels.resize(m);
        std::vector<std::size_t> order(m);
        for (int i = 0; i < m; ++i) order[i] = static_cast<std::size_t>(i);
        rng.shuffle(order);
        for (int i = 0; i < m; ++i) {
            data.dataset_ids[static_cast<int>(order[i])] = i % d;
            data.class_labels[i] = static_cast<int>(rng.uniform_index(c));
        }
        data.dataset_count = d;
        data.class_count = c;

        model.prototype_count = k;
        model.prototypes.resize(k, n);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < n; ++j) model.prototypes(i, j) = rng.gaussian();
        model.class_weights.resize(c, k);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < k; ++j) model.class_weights(i, j) = 0.5 * rng.gaussian();
    };

    GradientCheckReport report;
    const auto run_case = [&](const LabeledDataset& data, const PrototypeModel& model,
                              const HyperParams& hyper) {
        const Vector priors = data.empirical_priors();
        auto [loss, grad] = loss_and_gradients(model, data, hyper, priors);
        (void)loss;
        if (corrupt_one_entry) corrupt(grad);
        return fd_worst_against(model, data, hyper, priors, kStep, grad);
    };

    int variant = 0;
    for (int rep = 0; rep < 5; ++rep) {
        for (const auto& weights : activations) {
            LabeledDataset data;
            PrototypeModel model;
            random_instance(mix_seed(seed, 1000 + variant), variant, data, model);
            HyperParams hyper;
            hyper.alpha_j = weights[0];
            hyper.alpha_e = weights[1];
            hyper.alpha_l = weights[2];
            hyper.lambda = weights[3];
            report.max_rel_error = std::max(report.max_rel_error, run_case(data, model, hyper));
            ++report.instances;
            ++variant;
        }
    }

    // penalty-only configuration: the analytic gradient is exactly 2*lambda*theta
    // and central differences are step-exact, so a coarse step minimizes rounding
    {
        LabeledDataset data;
        PrototypeModel model;
        random_instance(mix_seed(seed, 99), 3, data, model);
        HyperParams hyper;
        hyper.alpha_j = 0.0;
        hyper.alpha_e = 0.0;
        hyper.alpha_l = 0.0;
        hyper.lambda = 1.0;
        const Vector priors = data.empirical_priors();
        auto [loss, grad] = loss_and_gradients(model, data, hyper, priors);
        (void)loss;
        if (corrupt_one_entry) corrupt(grad);
        report.quadratic_rel_error =
            fd_worst_against(model, data, hyper, priors, 1e-3, grad);
        ++report.instances;
    }
    return report;
}

Matrix initialize_prototypes(const LabeledDataset& data, int prototype_count,
                             std::uint64_t seed, double jitter_scale) {
    if (prototype_count < 1) throw ConfigError("prototype_count must be >= 1");
    if (data.row_count() < 1) throw DataError("cannot initialize prototypes from empty data");

    const int m_count = data.row_count();
    const int n_count = data.feature_count();

    Vector feature_std(n_count);
    const Eigen::RowVectorXd mean = data.features.colwise().mean();
    for (int n = 0; n < n_count; ++n) {
        feature_std[n] = std::sqrt((data.features.col(n).array() - mean[n]).square().mean());
    }

    Rng rng(seed);
    const auto rows = rng.sample_indices(static_cast<std::size_t>(m_count),
                                         static_cast<std::size_t>(prototype_count));
    Matrix prototypes(prototype_count, n_count);
    for (int k = 0; k < prototype_count; ++k) {
        prototypes.row(k) = data.features.row(static_cast<int>(rows[k]));
        for (int n = 0; n < n_count; ++n) {
            prototypes(k, n) += jitter_scale * feature_std[n] * rng.gaussian();
        }
    }
    return prototypes;
}

namespace {

std::pair<PrototypeModel, TrainingTrace> train_once(const LabeledDataset& data,
                                                    const HyperParams& hyper,
                                                    const Vector& priors, std::uint64_t seed) {
    PrototypeModel model;
    model.prototype_count = hyper.prototype_count;
    model.prototypes = initialize_prototypes(data, hyper.prototype_count, seed);
    model.class_weights = Matrix::Zero(data.class_count, hyper.prototype_count);

    // Adam moments for both parameter blocks.
    Matrix m_proto = Matrix::Zero(model.prototypes.rows(), model.prototypes.cols());
    Matrix v_proto = m_proto;
    Matrix m_theta = Matrix::Zero(model.class_weights.rows(), model.class_weights.cols());
    Matrix v_theta = m_theta;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    TrainingTrace trace;
    PrototypeModel best = model;
    double best_combined = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < hyper.max_iterations; ++iter) {
        LossBreakdown loss;
        GradientBundle grad;
        try {
            std::tie(loss, grad) = loss_and_gradients(model, data, hyper, priors);
        } catch (const NumericError& err) {
            throw DivergenceError(std::string("training diverged at iteration ") +
                                      std::to_string(iter) + ": " + err.what(),
                                  trace);
        }
        if (!std::isfinite(loss.combined)) {
            throw DivergenceError("training diverged at iteration " + std::to_string(iter) +
                                      ": combined loss is non-finite",
                                  trace);
        }

        const double grad_norm = std::sqrt(grad.d_prototypes.squaredNorm() +
                                           grad.d_class_weights.squaredNorm());
        trace.records.push_back({iter, loss, grad_norm});
        if (loss.combined < best_combined) {
            best_combined = loss.combined;
            best = model;
            trace.best_iteration = iter;
        }
        if (grad_norm < hyper.tolerance) break;

        const double t = static_cast<double>(iter + 1);
        const double correction =
            std::sqrt(1.0 - std::pow(beta2, t)) / (1.0 - std::pow(beta1, t));
        const double step = hyper.step_size * correction;

        m_proto = beta1 * m_proto + (1.0 - beta1) * grad.d_prototypes;
        v_proto.array() =
            beta2 * v_proto.array() + (1.0 - beta2) * grad.d_prototypes.array().square();
        model.prototypes.array() -= step * m_proto.array() / (v_proto.array().sqrt() + eps);

        m_theta = beta1 * m_theta + (1.0 - beta1) * grad.d_class_weights;
        v_theta.array() =
            beta2 * v_theta.array() + (1.0 - beta2) * grad.d_class_weights.array().square();
        model.class_weights.array() -= step * m_theta.array() / (v_theta.array().sqrt() + eps);
    }

    trace.best_combined = best_combined;
    return {best, trace};
}

} // namespace

std::pair<PrototypeModel, TrainingTrace> train(const LabeledDataset& data,
                                               const HyperParams& hyper, const Vector& priors,
                                               std::uint64_t seed) {
    hyper.validate();
    data.validate();

    std::pair<PrototypeModel, TrainingTrace> best;
    bool have_best = false;
    for (int restart = 0; restart < hyper.restarts; ++restart) {
        const std::uint64_t restart_seed =
            restart == 0 ? seed : mix_seed(seed, 0x5e5dULL + static_cast<std::uint64_t>(restart));
        auto candidate = train_once(data, hyper, priors, restart_seed);
        if (!have_best || candidate.second.best_combined < best.second.best_combined) {
            best = std::move(candidate);
            have_best = true;
        }
    }
    return best;
}

} // namespace debias
