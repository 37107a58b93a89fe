#include "debias/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "debias/core_model.hpp"
#include "debias/errors.hpp"
#include "debias/optimizer.hpp"
#include "debias/rng.hpp"

namespace debias {
namespace {

void parallel_for(int tasks, int threads, const std::function<void(int)>& body) {
    if (threads < 1) throw ConfigError("threads must be >= 1");
    const int workers = std::min(threads, tasks);
    if (workers <= 1) {
        for (int i = 0; i < tasks; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    auto drain = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= tasks) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::uint64_t fnv1a_bytes(std::uint64_t hash, const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::uint64_t fnv1a_matrix(std::uint64_t hash, const Matrix& m) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    hash = fnv1a_bytes(hash, dims, sizeof(dims));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const double v = m(r, c);
            hash = fnv1a_bytes(hash, &v, sizeof(v));
        }
    return hash;
}

std::uint64_t fnv1a_vector(std::uint64_t hash, const Vector& v) {
    const std::int64_t len = v.size();
    hash = fnv1a_bytes(hash, &len, sizeof(len));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double x = v[i];
        hash = fnv1a_bytes(hash, &x, sizeof(x));
    }
    return hash;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

} // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataError("roc_auc: scores and labels differ in length");
    if (scores.empty()) throw DataError("roc_auc: empty input");

    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw DataError("roc_auc: labels must be 0 or 1");
        if (!std::isfinite(scores[i])) throw DataError("roc_auc: non-finite score");
        positives += labels[i] == 1 ? 1 : 0;
    }
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0)
        throw DataError("roc_auc: needs both classes present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midrank over each tie run; u_plus = sum of positive ranks - P(P+1)/2
    double u_plus = 0.0;
    std::size_t lo = 0;
    while (lo < order.size()) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
        const double midrank = 0.5 * static_cast<double>(lo + hi) + 1.0;
        for (std::size_t i = lo; i <= hi; ++i)
            if (labels[order[i]] == 1) u_plus += midrank;
        lo = hi + 1;
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    u_plus -= 0.5 * p * (p + 1.0);
    return 0.5 + (u_plus - 0.5 * p * n) / (p * n);
}

double drop_percentage(double lodo_auc, double ceiling_auc) {
    if (!(ceiling_auc > 0.0))
        throw DataError("drop_percentage: ceiling AUC must be positive");
    return 100.0 * (ceiling_auc - lodo_auc) / ceiling_auc;
}

Method parse_method(const std::string& name) {
    if (name == "debias") return Method::kDebias;
    if (name == "logistic") return Method::kLogistic;
    if (name == "unbiased-svm" || name == "unbiased_svm") return Method::kUnbiasedSvm;
    throw ConfigError("unknown method '" + name +
                      "' (expected debias, logistic, or unbiased-svm)");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::kDebias: return "debias";
        case Method::kLogistic: return "logistic";
        case Method::kUnbiasedSvm: return "unbiased-svm";
    }
    throw ConfigError("invalid method enum value");
}

void GridSpec::validate() const {
    const auto require = [](bool ok, const char* message) {
        if (!ok) throw ConfigError(message);
    };
    const auto all_at_least = [](const std::vector<double>& xs, double lo) {
        return std::all_of(xs.begin(), xs.end(),
                           [&](double x) { return std::isfinite(x) && x >= lo; });
    };
    require(!alpha_j.empty() && !alpha_e.empty() && !alpha_l.empty(),
            "grid: alpha lists must be non-empty");
    require(!lambda.empty(), "grid: lambda list must be non-empty");
    require(!prototype_count.empty(), "grid: prototype_count list must be non-empty");
    require(!svm_c_common.empty() && !svm_c_specific.empty() && !svm_delta_penalty.empty(),
            "grid: svm lists must be non-empty");
    require(all_at_least(alpha_j, 0.0) && all_at_least(alpha_e, 0.0) &&
                all_at_least(alpha_l, 0.0),
            "grid: alpha values must be >= 0");
    require(all_at_least(lambda, 0.0), "grid: lambda values must be >= 0");
    require(all_at_least(svm_c_common, 0.0) && all_at_least(svm_c_specific, 0.0) &&
                all_at_least(svm_delta_penalty, 0.0),
            "grid: svm values must be >= 0");
    require(std::all_of(prototype_count.begin(), prototype_count.end(),
                        [](int k) { return k >= 1; }),
            "grid: prototype_count values must be >= 1");
    const auto max_of = [](const std::vector<double>& xs) {
        return *std::max_element(xs.begin(), xs.end());
    };
    require(max_of(alpha_j) > 0.0 || max_of(alpha_e) > 0.0 || max_of(alpha_l) > 0.0,
            "grid: at least one alpha list must contain a positive value");
    require(step_size > 0.0, "grid: step_size must be positive");
    require(max_iterations >= 1, "grid: max_iterations must be >= 1");
    require(tolerance >= 0.0, "grid: tolerance must be >= 0");
    require(restarts >= 1, "grid: restarts must be >= 1");
}

std::vector<HyperCell> enumerate_cells(const GridSpec& grid, Method method) {
    grid.validate();
    const auto sorted = [](std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        return xs;
    };
    std::vector<HyperCell> cells;
    if (method == Method::kDebias) {
        std::vector<int> ks = grid.prototype_count;
        std::sort(ks.begin(), ks.end());
        const auto lambdas = sorted(grid.lambda);
        const auto ajs = sorted(grid.alpha_j);
        const auto aes = sorted(grid.alpha_e);
        const auto als = sorted(grid.alpha_l);
        for (const int k : ks)
            for (const double lam : lambdas)
                for (const double aj : ajs)
                    for (const double ae : aes)
                        for (const double al : als) {
                            HyperCell cell;
                            cell.method = method;
                            cell.debias.prototype_count = k;
                            cell.debias.lambda = lam;
                            cell.debias.alpha_j = aj;
                            cell.debias.alpha_e = ae;
                            cell.debias.alpha_l = al;
                            cell.debias.step_size = grid.step_size;
                            cell.debias.max_iterations = grid.max_iterations;
                            cell.debias.tolerance = grid.tolerance;
                            cell.debias.restarts = grid.restarts;
                            cells.push_back(cell);
                        }
    } else if (method == Method::kLogistic) {
        for (const double lam : sorted(grid.lambda)) {
            HyperCell cell;
            cell.method = method;
            cell.logistic_l2 = lam;
            cells.push_back(cell);
        }
    } else {
        for (const double cc : sorted(grid.svm_c_common))
            for (const double cs : sorted(grid.svm_c_specific))
                for (const double dp : sorted(grid.svm_delta_penalty)) {
                    HyperCell cell;
                    cell.method = method;
                    cell.svm_c_common = cc;
                    cell.svm_c_specific = cs;
                    cell.svm_delta_penalty = dp;
                    cells.push_back(cell);
                }
    }
    return cells;
}

MethodModel train_with_cell(const LabeledDataset& train, const HyperCell& cell,
                            std::uint64_t seed) {
    switch (cell.method) {
        case Method::kDebias: {
            const Vector priors = train.empirical_priors();
            return debias::train(train, cell.debias, priors, seed).first;
        }
        case Method::kLogistic:
            return train_logistic(train, cell.logistic_l2, seed);
        case Method::kUnbiasedSvm:
            return train_unbiased_svm(train, cell.svm_c_common, cell.svm_c_specific,
                                      cell.svm_delta_penalty, seed);
    }
    throw ConfigError("invalid method enum value");
}

double method_score(const MethodModel& model, const Vector& x) {
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PrototypeModel>) {
                return predict_class_probabilities(x, m)[1];
            } else {
                return m.score(x);
            }
        },
        model);
}

int method_predict(const MethodModel& model, const Vector& x) {
    return std::visit(
        [&](const auto& m) -> int {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PrototypeModel>) {
                const Vector probs = predict_class_probabilities(x, m);
                Eigen::Index best = 0;
                probs.maxCoeff(&best);
                return static_cast<int>(best);
            } else {
                return m.score(x) >= 0.0 ? 1 : 0;
            }
        },
        model);
}

std::uint64_t method_digest(const MethodModel& model) {
    return std::visit(
        [](const auto& m) -> std::uint64_t {
            using T = std::decay_t<decltype(m)>;
            std::uint64_t hash = kFnvOffset;
            if constexpr (std::is_same_v<T, PrototypeModel>) {
                const char tag = 'p';
                hash = fnv1a_bytes(hash, &tag, 1);
                hash = fnv1a_matrix(hash, m.prototypes);
                hash = fnv1a_matrix(hash, m.class_weights);
            } else if constexpr (std::is_same_v<T, LinearModel>) {
                const char tag = 'l';
                hash = fnv1a_bytes(hash, &tag, 1);
                hash = fnv1a_vector(hash, m.weights);
                hash = fnv1a_bytes(hash, &m.intercept, sizeof(double));
            } else {
                const char tag = 's';
                hash = fnv1a_bytes(hash, &tag, 1);
                hash = fnv1a_vector(hash, m.common_weights);
                hash = fnv1a_bytes(hash, &m.common_intercept, sizeof(double));
                hash = fnv1a_matrix(hash, m.dataset_deltas);
                hash = fnv1a_vector(hash, m.delta_intercepts);
            }
            return hash;
        },
        model);
}

std::string digest_hex(std::uint64_t digest) {
    static const char* kHex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = kHex[digest & 0xf];
        digest >>= 4;
    }
    return out;
}

namespace {

struct InnerFold {
    LabeledDataset train;
    LabeledDataset held;
    bool admissible = false;
};

std::vector<double> held_out_scores(const MethodModel& model, const LabeledDataset& held) {
    std::vector<double> scores(static_cast<std::size_t>(held.row_count()));
    for (int i = 0; i < held.row_count(); ++i)
        scores[static_cast<std::size_t>(i)] = method_score(model, held.features.row(i).transpose());
    return scores;
}

} // namespace

GridSearchResult nested_grid_search(const LabeledDataset& train, const GridSpec& grid,
                                    Method method, std::uint64_t seed, int threads) {
    train.validate();
    const std::vector<HyperCell> cells = enumerate_cells(grid, method);

    if (train.dataset_count < 2) {
        if (cells.size() == 1) {
            GridSearchResult result;
            result.cell = cells.front();
            result.inner_score = 0.0;
            result.admissible_folds = 0;
            return result;
        }
        throw DataError(
            "grid search needs >= 2 training datasets for the inner folds; "
            "provide a single-cell grid to skip tuning");
    }

    std::vector<InnerFold> folds(static_cast<std::size_t>(train.dataset_count));
    int admissible = 0;
    for (int f = 0; f < train.dataset_count; ++f) {
        InnerFold& fold = folds[static_cast<std::size_t>(f)];
        fold.held = train.only_dataset(f);
        fold.train = train.without_dataset(f);
        fold.admissible = fold.held.distinct_label_count() == 2 &&
                          fold.train.distinct_label_count() == 2;
        admissible += fold.admissible ? 1 : 0;
    }
    if (admissible == 0)
        throw DataError("no inner fold admits an AUC; need >= 2 training datasets "
                        "with both classes");

    const int fold_count = static_cast<int>(folds.size());
    std::vector<double> auc(cells.size() * folds.size(), 0.0);
    parallel_for(static_cast<int>(cells.size()) * fold_count, threads, [&](int task) {
        const int ci = task / fold_count;
        const int fi = task % fold_count;
        const InnerFold& fold = folds[static_cast<std::size_t>(fi)];
        if (!fold.admissible) return;
        const MethodModel model =
            train_with_cell(fold.train, cells[static_cast<std::size_t>(ci)],
                            mix_seed(seed, static_cast<std::uint64_t>(task) + 0x9e1d));
        auc[static_cast<std::size_t>(task)] =
            roc_auc(held_out_scores(model, fold.held), fold.held.class_labels);
    });

    GridSearchResult best;
    best.inner_score = -1.0;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        double total = 0.0;
        for (int fi = 0; fi < fold_count; ++fi)
            if (folds[static_cast<std::size_t>(fi)].admissible)
                total += auc[ci * folds.size() + static_cast<std::size_t>(fi)];
        const double mean = total / static_cast<double>(admissible);
        if (mean > best.inner_score) {
            best.inner_score = mean;
            best.cell = cells[ci];
        }
    }
    best.admissible_folds = admissible;
    return best;
}

EvalReport lodo_evaluate(const LabeledDataset& data, Method method, const GridSpec& grid,
                         std::uint64_t seed, int threads) {
    data.validate();
    grid.validate();
    if (data.class_count != 2)
        throw DataError("leave-one-dataset-out evaluation expects binary labels");
    if (data.dataset_count < 2)
        throw DataError("leave-one-dataset-out needs at least 2 datasets");
    if (method == Method::kDebias && data.dataset_count < 3)
        throw DataError(
            "debias evaluation needs >= 3 datasets so the entropy term sees >= 2 "
            "training datasets per fold; with 2 datasets run `train` with fixed "
            "hyperparameters instead");

    const std::vector<CeilingEntry> ceilings =
        within_dataset_ceiling(data, kCeilingL2, mix_seed(seed, 0xce111));

    EvalReport report;
    report.method = method_name(method);
    report.seed = seed;
    report.dataset_count = data.dataset_count;

    for (int d = 0; d < data.dataset_count; ++d) {
        FoldReport fold;
        fold.held_out = d;

        const LabeledDataset train_data = data.without_dataset(d);
        const GridSearchResult search = nested_grid_search(
            train_data, grid, method, mix_seed(seed, 0xa000 + static_cast<std::uint64_t>(d)),
            threads);
        fold.chosen = search.cell;
        fold.inner_score = search.inner_score;
        fold.inner_folds = search.admissible_folds;

        const MethodModel model = train_with_cell(
            train_data, search.cell, mix_seed(seed, 0xf17 + static_cast<std::uint64_t>(d)));
        fold.model_digest = digest_hex(method_digest(model));

        const LabeledDataset held = data.only_dataset(d);
        const std::vector<double> scores = held_out_scores(model, held);
        int hits = 0;
        for (int i = 0; i < held.row_count(); ++i)
            if (method_predict(model, held.features.row(i).transpose()) ==
                held.class_labels[i])
                ++hits;
        fold.accuracy = static_cast<double>(hits) / static_cast<double>(held.row_count());

        if (held.distinct_label_count() < 2) {
            fold.auc_skipped = true;
            fold.skip_reason = "single_class";
        } else {
            fold.auc = roc_auc(scores, held.class_labels);
        }

        const CeilingEntry& ceiling = ceilings[static_cast<std::size_t>(d)];
        fold.ceiling_skipped = ceiling.skipped;
        fold.ceiling_auc = ceiling.skipped ? 0.0 : ceiling.auc;
        if (!fold.auc_skipped && !ceiling.skipped && ceiling.auc > 0.0) {
            fold.drop_defined = true;
            fold.drop_pct = drop_percentage(fold.auc, ceiling.auc);
        }
        report.folds.push_back(fold);
    }
    return report;
}

} // namespace debias
