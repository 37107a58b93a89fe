#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "debias/baselines.hpp"
#include "debias/evaluation.hpp"
#include "debias/rng.hpp"
#include "debias/synth_data.hpp"

using namespace debias;

namespace {

// pairs (z, +1) / (-z, -1): exactly antisymmetric, so every intercept's
// subgradient cancels and intercepts stay pinned at zero
LabeledDataset antisymmetric_pairs(Rng& rng, int pairs, int n, int d_count) {
    LabeledDataset data;
    data.features.resize(2 * pairs, n);
    data.dataset_ids.resize(2 * pairs);
    data.class_labels.resize(2 * pairs);
    data.dataset_count = d_count;
    data.class_count = 2;
    for (int p = 0; p < pairs; ++p) {
        Vector z(n);
        for (int j = 0; j < n; ++j) z[j] = rng.gaussian();
        z[0] += 1.0;
        data.features.row(2 * p) = z.transpose();
        data.class_labels[2 * p] = 1;
        data.features.row(2 * p + 1) = -z.transpose();
        data.class_labels[2 * p + 1] = 0;
        const int d = p % d_count;
        data.dataset_ids[2 * p] = d;
        data.dataset_ids[2 * p + 1] = d;
    }
    return data;
}

LabeledDataset noise_data(Rng& rng, int m, int n) {
    LabeledDataset data;
    data.features.resize(m, n);
    data.dataset_ids.assign(m, 0);
    data.class_labels.resize(m);
    data.dataset_count = 1;
    data.class_count = 2;
    for (int i = 0; i < m; ++i) {
        data.class_labels[i] = i % 2;
        for (int j = 0; j < n; ++j) data.features(i, j) = rng.gaussian();
    }
    return data;
}

} // namespace

TEST_CASE("logistic: separable 1-D data is fit perfectly") {
    LabeledDataset data;
    const int m = 20;
    data.features.resize(m, 1);
    data.dataset_ids.assign(m, 0);
    data.class_labels.resize(m);
    data.dataset_count = 1;
    data.class_count = 2;
    for (int i = 0; i < m; ++i) {
        data.class_labels[i] = i < m / 2 ? 0 : 1;
        data.features(i, 0) = data.class_labels[i] == 1 ? 1.0 + 0.1 * i : -1.0 - 0.1 * i;
    }
    const LinearModel model = train_logistic(data, 0.01, 1);
    for (int i = 0; i < m; ++i) {
        const double score = model.score(data.features.row(i).transpose());
        CHECK((score > 0.0) == (data.class_labels[i] == 1));
    }
}

TEST_CASE("logistic: pure noise scores near chance on held-out rows") {
    Rng rng(41);
    LabeledDataset train = noise_data(rng, 200, 6);
    LabeledDataset held = noise_data(rng, 400, 6);
    const LinearModel model = train_logistic(train, 0.01, 2);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < held.row_count(); ++i) {
        scores.push_back(model.score(held.features.row(i).transpose()));
        labels.push_back(held.class_labels[i]);
    }
    const double auc = roc_auc(scores, labels);
    CHECK(auc > 0.4);
    CHECK(auc < 0.6);
}

TEST_CASE("logistic: crushing l2 sends weights to zero and predictions to the prior") {
    Rng rng(42);
    LabeledDataset data = noise_data(rng, 60, 4);
    // skew the prior: 2/3 positive
    for (int i = 0; i < data.row_count(); ++i) data.class_labels[i] = i % 3 == 0 ? 0 : 1;
    const LinearModel model = train_logistic(data, 1e6, 3);
    CHECK(model.weights.norm() < 1e-3);
    const double p = 1.0 / (1.0 + std::exp(-model.intercept));
    CHECK(p == doctest::Approx(2.0 / 3.0).epsilon(0.05));
}

TEST_CASE("logistic: single-class training data is rejected") {
    Rng rng(43);
    LabeledDataset data = noise_data(rng, 20, 3);
    for (int i = 0; i < data.row_count(); ++i) data.class_labels[i] = 1;
    CHECK_THROWS_AS(train_logistic(data, 0.01, 4), DataError);
}

TEST_CASE("svm: huge delta penalty pins the deltas and matches a pooled run") {
    Rng rng(44);
    LabeledDataset split = antisymmetric_pairs(rng, 40, 4, 3);
    LabeledDataset pooled = split;
    pooled.dataset_ids.assign(pooled.dataset_ids.size(), 0);
    pooled.dataset_count = 1;

    const UnbiasedSvmModel a = train_unbiased_svm(split, 1.0, 1.0, 1e18, 7);
    const UnbiasedSvmModel b = train_unbiased_svm(pooled, 1.0, 1.0, 1e18, 7);
    CHECK(a.dataset_deltas.norm() < 1e-9);

    Rng probe_rng(45);
    for (int probe = 0; probe < 50; ++probe) {
        Vector x(4);
        for (int j = 0; j < 4; ++j) x[j] = probe_rng.gaussian();
        CHECK(std::abs(a.score(x) - b.score(x)) < 1e-6);
    }
}

TEST_CASE("svm: opposite-sign nuisance offsets load the pooled fit, not the common weights") {
    // class signal on feature 0 in both datasets; feature 1 is a constant
    // per-dataset offset with opposite signs, anti-correlated with the class
    // balance, so the pooled fit reads it as signal while within a dataset it
    // is indistinguishable from the intercept
    Rng rng(46);
    LabeledDataset data;
    const int per = 160;
    data.features.resize(2 * per, 3);
    data.dataset_ids.resize(2 * per);
    data.class_labels.resize(2 * per);
    data.dataset_count = 2;
    data.class_count = 2;
    for (int i = 0; i < 2 * per; ++i) {
        const int d = i < per ? 0 : 1;
        const int y = d == 0 ? (i % 5 != 0 ? 1 : 0) : (i % 5 == 0 ? 1 : 0);
        const double sign = y == 1 ? 1.0 : -1.0;
        data.dataset_ids[i] = d;
        data.class_labels[i] = y;
        data.features(i, 0) = 0.6 * sign + 0.5 * rng.gaussian();
        data.features(i, 1) = (d == 0 ? 1.5 : -1.5) + 0.5 * rng.gaussian();
        data.features(i, 2) = rng.gaussian();
    }
    LabeledDataset pooled = data;
    pooled.dataset_ids.assign(pooled.dataset_ids.size(), 0);
    pooled.dataset_count = 1;

    const UnbiasedSvmModel unbiased = train_unbiased_svm(data, 0.2, 1.0, 1.0, 8);
    const UnbiasedSvmModel plain = train_unbiased_svm(pooled, 0.2, 1.0, 1e18, 8);

    const auto cosine_to_e1 = [](const Vector& w) {
        return std::abs(w[1]) / std::max(w.norm(), 1e-12);
    };
    CHECK(cosine_to_e1(unbiased.common_weights) < cosine_to_e1(plain.common_weights));
}

TEST_CASE("svm: held-out scoring uses only the common part") {
    Rng rng(47);
    LabeledDataset data = antisymmetric_pairs(rng, 30, 3, 2);
    const UnbiasedSvmModel model = train_unbiased_svm(data, 1.0, 1.0, 1.0, 9);
    Vector x(3);
    x << 0.4, -0.2, 1.0;
    CHECK(model.score(x) ==
          doctest::Approx(model.common_weights.dot(x) + model.common_intercept));
    // per-dataset scoring differs once deltas are nonzero
    CHECK(model.dataset_deltas.norm() > 0.0);
}

TEST_CASE("svm: single-class data is rejected") {
    Rng rng(48);
    LabeledDataset data = noise_data(rng, 20, 3);
    for (int i = 0; i < data.row_count(); ++i) data.class_labels[i] = 0;
    CHECK_THROWS_AS(train_unbiased_svm(data, 1.0, 1.0, 1.0, 1), DataError);
}

TEST_CASE("namer: zero-bias datasets stay near chance over 10 seeds") {
    GeneratorConfig config;
    config.dataset_count = 4;
    config.feature_count = 10;
    config.sizes = {60, 60, 60, 60};
    config.class_effect = Vector::Zero(10);
    config.class_effect[0] = 0.8;
    config.bias_offsets.assign(4, Vector::Zero(10));
    config.bias_scales.assign(4, Vector::Ones(10));
    config.noise_sigma = 1.0;
    config.class_balance = {0.5, 0.5, 0.5, 0.5};

    double mean_accuracy = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        config.seed = 100 + seed;
        const LabeledDataset data = generate(config);
        mean_accuracy += study_namer_cv(data, 0.01, seed).accuracy;
    }
    mean_accuracy /= 10.0;
    CHECK(std::abs(mean_accuracy - 0.25) < 0.1);
}

TEST_CASE("namer: disjoint feature supports are trivially nameable") {
    Rng rng(49);
    LabeledDataset data;
    const int per = 30, d_count = 3;
    data.features = Matrix::Zero(per * d_count, d_count);
    data.dataset_ids.resize(per * d_count);
    data.class_labels.resize(per * d_count);
    data.dataset_count = d_count;
    data.class_count = 2;
    for (int i = 0; i < per * d_count; ++i) {
        const int d = i / per;
        data.dataset_ids[i] = d;
        data.class_labels[i] = i % 2;
        data.features(i, d) = 5.0 + rng.gaussian();
    }
    const StudyNamingReport report = study_namer_cv(data, 0.01, 5);
    CHECK(report.accuracy >= 0.95);
    CHECK(report.chance == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("namer: confusion matrix counts every held-out row once") {
    Rng rng(50);
    LabeledDataset data = antisymmetric_pairs(rng, 40, 4, 2);
    const StudyNamingReport report = study_namer_cv(data, 0.01, 6);
    CHECK(report.confusion.sum() == data.row_count());
}

TEST_CASE("namer: datasets with fewer than two rows are rejected") {
    LabeledDataset data;
    data.features = Matrix::Zero(3, 2);
    data.dataset_ids = {0, 0, 1};
    data.class_labels = {0, 1, 0};
    data.dataset_count = 2;
    data.class_count = 2;
    CHECK_THROWS_AS(study_namer_cv(data, 0.01, 7), DataError);
}

TEST_CASE("ceiling: shuffled labels give chance-level AUC") {
    Rng rng(51);
    LabeledDataset data = noise_data(rng, 300, 5);
    const std::vector<CeilingEntry> entries = within_dataset_ceiling(data, kCeilingL2, 11);
    REQUIRE(entries.size() == 1);
    CHECK(!entries[0].skipped);
    CHECK(std::abs(entries[0].auc - 0.5) < 0.1);
}

TEST_CASE("ceiling: informative feature scores well within dataset") {
    Rng rng(52);
    LabeledDataset data = noise_data(rng, 200, 4);
    for (int i = 0; i < data.row_count(); ++i)
        data.features(i, 0) += data.class_labels[i] == 1 ? 1.5 : -1.5;
    const std::vector<CeilingEntry> entries = within_dataset_ceiling(data, kCeilingL2, 12);
    CHECK(entries[0].auc > 0.9);
}

TEST_CASE("ceiling: single-class dataset is skipped with a marker") {
    Rng rng(53);
    LabeledDataset data = noise_data(rng, 40, 3);
    for (int i = 0; i < 20; ++i) data.class_labels[i] = 1; // dataset 0 rows all positive
    data.dataset_ids.assign(40, 0);
    std::vector<int> ids(40, 0);
    for (int i = 20; i < 40; ++i) ids[i] = 1;
    data.dataset_ids = ids;
    data.dataset_count = 2;
    for (int i = 0; i < 20; ++i) data.class_labels[i] = 1;
    const std::vector<CeilingEntry> entries = within_dataset_ceiling(data, kCeilingL2, 13);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].skipped);
    CHECK(!entries[0].skip_reason.empty());
    CHECK(!entries[1].skipped);
}

TEST_CASE("two-fold split: stratified, even, deterministic") {
    std::vector<int> strata;
    for (int i = 0; i < 25; ++i) strata.push_back(i % 3);
    const std::vector<int> fold = two_fold_split(strata, 19);
    const std::vector<int> again = two_fold_split(strata, 19);
    CHECK(fold == again);
    for (int s = 0; s < 3; ++s) {
        int zero = 0, one = 0;
        for (std::size_t i = 0; i < strata.size(); ++i) {
            if (strata[i] != s) continue;
            (fold[i] == 0 ? zero : one)++;
        }
        CHECK(std::abs(zero - one) <= 1);
    }
}
