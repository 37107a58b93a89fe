#include "debias/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "debias/errors.hpp"
#include "debias/evaluation.hpp"
#include "debias/rng.hpp"

namespace debias {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr int kLogisticIterations = 1500;
constexpr double kLogisticStep = 0.05;
constexpr int kNamerIterations = 800;
constexpr double kNamerStep = 0.05;
constexpr int kSvmIterations = 2000;

double softplus(double z) {
    if (z > 30.0) return z;
    if (z < -30.0) return std::exp(z);
    return std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Adam over a flat parameter vector, returning the best iterate seen.
Vector adam_minimize(Vector params,
                     const std::function<double(const Vector&, Vector&)>& loss_and_grad,
                     double step, int iterations, double tolerance) {
    Vector m = Vector::Zero(params.size());
    Vector v = Vector::Zero(params.size());
    Vector grad(params.size());
    Vector best = params;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int t = 1; t <= iterations; ++t) {
        const double loss = loss_and_grad(params, grad);
        if (!std::isfinite(loss)) throw NumericError("baseline training diverged");
        if (loss < best_loss) {
            best_loss = loss;
            best = params;
        }
        const double gnorm = grad.norm();
        if (gnorm <= tolerance) break;
        m.array() = kAdamBeta1 * m.array() + (1.0 - kAdamBeta1) * grad.array();
        v.array() = kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * grad.array().square();
        const double c1 = 1.0 - std::pow(kAdamBeta1, t);
        const double c2 = 1.0 - std::pow(kAdamBeta2, t);
        params.array() -= step * (m.array() / c1) /
                          ((v.array() / c2).sqrt() + kAdamEps);
    }
    return best;
}

void require_binary(const LabeledDataset& train, const char* what) {
    if (train.class_count != 2)
        throw DataError(std::string(what) + " requires exactly 2 classes, got " +
                        std::to_string(train.class_count));
    if (train.distinct_label_count() < 2)
        throw DataError(std::string(what) + " requires both classes in the training data");
}

} // namespace

int StudyNamingModel::predict(const Vector& x) const {
    Eigen::Index best = 0;
    (weights * x + intercepts).maxCoeff(&best);
    return static_cast<int>(best);
}

LinearModel train_logistic(const LabeledDataset& train, double l2, std::uint64_t seed) {
    train.validate();
    require_binary(train, "logistic regression");
    if (l2 < 0.0) throw ConfigError("l2 must be >= 0");
    (void)seed; // zero init and full batches make the fit deterministic

    const int m_rows = static_cast<int>(train.features.rows());
    const int n_feat = static_cast<int>(train.features.cols());
    Vector y(m_rows);
    for (int i = 0; i < m_rows; ++i) y[i] = static_cast<double>(train.class_labels[i]);
    const double inv_m = 1.0 / static_cast<double>(m_rows);

    auto fn = [&](const Vector& params, Vector& grad) {
        const Vector w = params.head(n_feat);
        const double b = params[n_feat];
        const Vector z = train.features * w + Vector::Constant(m_rows, b);
        double loss = 0.0;
        Vector p(m_rows);
        for (int i = 0; i < m_rows; ++i) {
            loss += softplus(z[i]) - y[i] * z[i];
            p[i] = sigmoid(z[i]);
        }
        loss = loss * inv_m + l2 * w.squaredNorm();
        const Vector r = (p - y) * inv_m;
        grad.head(n_feat) = train.features.transpose() * r + 2.0 * l2 * w;
        grad[n_feat] = r.sum();
        return loss;
    };

    const Vector fit = adam_minimize(Vector::Zero(n_feat + 1), fn, kLogisticStep,
                                     kLogisticIterations, 1e-8);
    LinearModel model;
    model.weights = fit.head(n_feat);
    model.intercept = fit[n_feat];
    return model;
}

UnbiasedSvmModel train_unbiased_svm(const LabeledDataset& train, double c_common,
                                    double c_specific, double delta_penalty,
                                    std::uint64_t seed) {
    train.validate();
    require_binary(train, "unbiased SVM");
    if (c_common < 0.0 || c_specific < 0.0 || delta_penalty < 0.0)
        throw ConfigError("SVM penalties must be >= 0");
    (void)seed; // deterministic: zero init, full-batch subgradients

    const int m_rows = static_cast<int>(train.features.rows());
    const int n_feat = static_cast<int>(train.features.cols());
    const int d_count = train.dataset_count;
    Vector y(m_rows);
    for (int i = 0; i < m_rows; ++i) y[i] = train.class_labels[i] == 1 ? 1.0 : -1.0;

    Vector w0 = Vector::Zero(n_feat);
    double b0 = 0.0;
    Matrix deltas = Matrix::Zero(d_count, n_feat);
    Vector bd = Vector::Zero(d_count);

    Vector w0_avg = Vector::Zero(n_feat);
    double b0_avg = 0.0;
    Matrix deltas_avg = Matrix::Zero(d_count, n_feat);
    Vector bd_avg = Vector::Zero(d_count);
    int averaged = 0;

    Vector gw(n_feat);
    Matrix gd(d_count, n_feat);
    for (int t = 0; t < kSvmIterations; ++t) {
        const double eta = 1.0 / static_cast<double>(t + 1);
        gw.setZero();
        gd.setZero();
        double gb0 = 0.0;
        Vector gbd = Vector::Zero(d_count);
        for (int i = 0; i < m_rows; ++i) {
            const int s = train.dataset_ids[i];
            const auto x = train.features.row(i);
            const double common_margin = y[i] * (x.dot(w0) + b0);
            if (common_margin < 1.0) {
                gw -= (c_common * y[i]) * x.transpose();
                gb0 -= c_common * y[i];
            }
            const double full_margin =
                y[i] * (x.dot(w0) + x.dot(deltas.row(s)) + b0 + bd[s]);
            if (full_margin < 1.0) {
                gw -= (c_specific * y[i]) * x.transpose();
                gb0 -= c_specific * y[i];
                gd.row(s) -= (c_specific * y[i]) * x;
                gbd[s] -= c_specific * y[i];
            }
        }
        w0 -= eta * gw;
        b0 -= eta * gb0;
        deltas -= eta * gd;
        bd -= eta * gbd;
        // implicit (proximal) step for the quadratic terms; keeps the update
        // stable for arbitrarily large delta_penalty
        w0 /= 1.0 + eta;
        deltas /= 1.0 + eta * delta_penalty;
        if (t >= kSvmIterations / 2) {
            w0_avg += w0;
            b0_avg += b0;
            deltas_avg += deltas;
            bd_avg += bd;
            ++averaged;
        }
    }

    UnbiasedSvmModel model;
    const double inv = 1.0 / static_cast<double>(averaged);
    model.common_weights = w0_avg * inv;
    model.common_intercept = b0_avg * inv;
    model.dataset_deltas = deltas_avg * inv;
    model.delta_intercepts = bd_avg * inv;
    return model;
}

StudyNamingModel train_study_namer(const LabeledDataset& train, double l2,
                                   std::uint64_t seed) {
    train.validate();
    if (train.dataset_count < 2)
        throw DataError("study naming requires at least 2 datasets");
    if (l2 < 0.0) throw ConfigError("l2 must be >= 0");
    (void)seed;

    const int m_rows = static_cast<int>(train.features.rows());
    const int n_feat = static_cast<int>(train.features.cols());
    const int d_count = train.dataset_count;
    const double inv_m = 1.0 / static_cast<double>(m_rows);

    // params: row-major D x N weight block, then D intercepts
    auto fn = [&](const Vector& params, Vector& grad) {
        Eigen::Map<const Matrix> w(params.data(), d_count, n_feat);
        const Vector b = params.tail(d_count);
        Matrix logits = train.features * w.transpose();
        logits.rowwise() += b.transpose();
        double loss = 0.0;
        Matrix p(m_rows, d_count);
        for (int i = 0; i < m_rows; ++i) {
            const double mx = logits.row(i).maxCoeff();
            const Vector e = (logits.row(i).array() - mx).exp().matrix();
            const double total = e.sum();
            p.row(i) = e.transpose() / total;
            loss -= logits(i, train.dataset_ids[i]) - mx - std::log(total);
            p(i, train.dataset_ids[i]) -= 1.0;
        }
        loss = loss * inv_m + l2 * w.squaredNorm();
        Eigen::Map<Matrix> gw(grad.data(), d_count, n_feat);
        gw = inv_m * p.transpose() * train.features + 2.0 * l2 * w;
        grad.tail(d_count) = inv_m * p.colwise().sum().transpose();
        return loss;
    };

    const Vector fit = adam_minimize(Vector::Zero(d_count * n_feat + d_count), fn,
                                     kNamerStep, kNamerIterations, 1e-8);
    StudyNamingModel model;
    model.weights = Eigen::Map<const Matrix>(fit.data(), d_count, n_feat);
    model.intercepts = fit.tail(d_count);
    return model;
}

std::vector<int> two_fold_split(const std::vector<int>& strata, std::uint64_t seed) {
    std::vector<int> fold(strata.size(), 0);
    const int max_stratum =
        strata.empty() ? -1 : *std::max_element(strata.begin(), strata.end());
    Rng rng(seed);
    for (int s = 0; s <= max_stratum; ++s) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < strata.size(); ++i)
            if (strata[i] == s) members.push_back(i);
        rng.shuffle(members);
        for (std::size_t j = 0; j < members.size(); ++j)
            fold[members[j]] = j < (members.size() + 1) / 2 ? 0 : 1;
    }
    return fold;
}

StudyNamingReport study_namer_cv(const LabeledDataset& data, double l2,
                                 std::uint64_t seed) {
    data.validate();
    if (data.dataset_count < 2)
        throw DataError("study naming requires at least 2 datasets");
    for (int d = 0; d < data.dataset_count; ++d) {
        if (data.group_sizes()[d] < 2)
            throw DataError("study naming needs at least 2 rows per dataset, dataset " +
                            std::to_string(d) + " has " +
                            std::to_string(data.group_sizes()[d]));
    }

    const std::vector<int> fold = two_fold_split(data.dataset_ids, mix_seed(seed, 0x5117));

    StudyNamingReport report;
    report.chance = 1.0 / static_cast<double>(data.dataset_count);
    report.confusion = Eigen::MatrixXi::Zero(data.dataset_count, data.dataset_count);

    double accuracy_sum = 0.0;
    for (int held = 0; held < 2; ++held) {
        std::vector<int> train_rows;
        std::vector<int> eval_rows;
        for (int i = 0; i < static_cast<int>(fold.size()); ++i)
            (fold[i] == held ? eval_rows : train_rows).push_back(i);
        const LabeledDataset train = data.select_rows(train_rows);
        const StudyNamingModel model =
            train_study_namer(train, l2, mix_seed(seed, 0xf01d + held));
        int hits = 0;
        for (const int i : eval_rows) {
            const int pred = model.predict(data.features.row(i).transpose());
            report.confusion(data.dataset_ids[i], pred) += 1;
            if (pred == data.dataset_ids[i]) ++hits;
        }
        accuracy_sum += static_cast<double>(hits) / static_cast<double>(eval_rows.size());
    }
    report.accuracy = accuracy_sum / 2.0;
    return report;
}

std::vector<CeilingEntry> within_dataset_ceiling(const LabeledDataset& data, double l2,
                                                 std::uint64_t seed) {
    data.validate();
    std::vector<CeilingEntry> entries;
    for (int d = 0; d < data.dataset_count; ++d) {
        CeilingEntry entry;
        entry.dataset = d;
        const LabeledDataset sub = data.only_dataset(d);
        if (sub.distinct_label_count() < 2) {
            entry.skipped = true;
            entry.skip_reason = "single_class";
            entries.push_back(entry);
            continue;
        }
        const std::vector<int> fold = two_fold_split(sub.class_labels, mix_seed(seed, d));
        bool usable = true;
        double auc_sum = 0.0;
        for (int held = 0; held < 2 && usable; ++held) {
            std::vector<int> train_rows;
            std::vector<int> eval_rows;
            for (int i = 0; i < static_cast<int>(fold.size()); ++i)
                (fold[i] == held ? eval_rows : train_rows).push_back(i);
            const LabeledDataset train = sub.select_rows(train_rows);
            const LabeledDataset eval = sub.select_rows(eval_rows);
            if (train.distinct_label_count() < 2 || eval.distinct_label_count() < 2) {
                usable = false;
                break;
            }
            const LinearModel model = train_logistic(train, l2, mix_seed(seed, 0xce + d));
            std::vector<double> scores(eval_rows.size());
            for (std::size_t i = 0; i < eval_rows.size(); ++i)
                scores[i] = model.score(eval.features.row(static_cast<int>(i)).transpose());
            auc_sum += roc_auc(scores, eval.class_labels);
        }
        if (!usable) {
            entry.skipped = true;
            entry.skip_reason = "insufficient_class_rows";
        } else {
            entry.auc = auc_sum / 2.0;
        }
        entries.push_back(entry);
    }
    return entries;
}

} // namespace debias
