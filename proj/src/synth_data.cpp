#include "debias/synth_data.hpp"

#include <cmath>
#include <numeric>

#include "debias/errors.hpp"
#include "debias/rng.hpp"

namespace debias {

void GeneratorConfig::validate() const {
    const auto require = [](bool ok, const std::string& message) {
        if (!ok) throw ConfigError("generator config: " + message);
    };
    require(dataset_count >= 1, "dataset_count must be >= 1");
    require(feature_count >= 1, "feature_count must be >= 1");
    require(static_cast<int>(sizes.size()) == dataset_count,
            "sizes must list one entry per dataset");
    for (int d = 0; d < dataset_count; ++d)
        require(sizes[d] >= 1, "dataset " + std::to_string(d) + " size must be >= 1");
    require(class_effect.size() == feature_count, "class_effect length != feature_count");
    require(class_effect.allFinite(), "class_effect must be finite");
    require(static_cast<int>(bias_offsets.size()) == dataset_count,
            "bias_offsets must list one vector per dataset");
    require(static_cast<int>(bias_scales.size()) == dataset_count,
            "bias_scales must list one vector per dataset");
    for (int d = 0; d < dataset_count; ++d) {
        require(bias_offsets[d].size() == feature_count,
                "bias_offsets[" + std::to_string(d) + "] length != feature_count");
        require(bias_offsets[d].allFinite(),
                "bias_offsets[" + std::to_string(d) + "] must be finite");
        require(bias_scales[d].size() == feature_count,
                "bias_scales[" + std::to_string(d) + "] length != feature_count");
        require(bias_scales[d].allFinite() && (bias_scales[d].array() > 0.0).all(),
                "bias_scales[" + std::to_string(d) + "] must be positive");
    }
    require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "noise_sigma must be >= 0");
    require(static_cast<int>(class_balance.size()) == dataset_count,
            "class_balance must list one entry per dataset");
    for (int d = 0; d < dataset_count; ++d)
        require(class_balance[d] >= 0.0 && class_balance[d] <= 1.0,
                "class_balance[" + std::to_string(d) + "] must be in [0, 1]");
}

LabeledDataset generate(const GeneratorConfig& config) {
    config.validate();
    Rng rng(config.seed);

    const int total = std::accumulate(config.sizes.begin(), config.sizes.end(), 0);
    LabeledDataset data;
    data.features.resize(total, config.feature_count);
    data.dataset_ids.resize(static_cast<std::size_t>(total));
    data.class_labels.resize(static_cast<std::size_t>(total));
    data.dataset_count = config.dataset_count;
    data.class_count = 2;

    int row = 0;
    for (int d = 0; d < config.dataset_count; ++d) {
        const int base = row;
        for (int i = 0; i < config.sizes[d]; ++i, ++row) {
            const int label = rng.uniform() < config.class_balance[d] ? 1 : 0;
            const double sign = label == 1 ? 1.0 : -1.0;
            data.class_labels[static_cast<std::size_t>(row)] = label;
            data.dataset_ids[static_cast<std::size_t>(row)] = d;
            for (int n = 0; n < config.feature_count; ++n) {
                data.features(row, n) =
                    config.bias_offsets[d][n] +
                    config.bias_scales[d][n] * (sign * config.class_effect[n] / 2.0 +
                                                config.noise_sigma * rng.gaussian());
            }
        }
        // shuffle the block so labels carry no positional information
        std::vector<std::size_t> perm(static_cast<std::size_t>(config.sizes[d]));
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        const Matrix block = data.features.middleRows(base, config.sizes[d]);
        std::vector<int> labels_block(data.class_labels.begin() + base,
                                      data.class_labels.begin() + base + config.sizes[d]);
        for (int i = 0; i < config.sizes[d]; ++i) {
            data.features.row(base + i) = block.row(static_cast<int>(perm[static_cast<std::size_t>(i)]));
            data.class_labels[static_cast<std::size_t>(base + i)] =
                labels_block[perm[static_cast<std::size_t>(i)]];
        }
    }
    return data;
}

GeneratorConfig default_benchmark_config() {
    constexpr int kDatasets = 4;
    constexpr int kFeatures = 78;

    GeneratorConfig config;
    config.dataset_count = kDatasets;
    config.feature_count = kFeatures;
    config.sizes = {200, 150, 60, 250};
    config.noise_sigma = 1.0;
    config.class_balance = {0.8, 0.2, 1.0, 0.3};
    config.seed = 411;

    config.class_effect = Vector::Zero(kFeatures);
    config.class_effect[0] = 0.5;
    config.class_effect[1] = 0.5;
    config.class_effect[2] = 0.48;
    config.class_effect[3] = 0.43;

    // Features 0-1 carry a site confound anti-correlated with the class
    // balance: positive-rich datasets sit on the negative side of the axis,
    // so pooled training links the confound axis to the label and reverses
    // the within-dataset class effect on held-out data. Features 2-3 are
    // clean class signal. Feature 8+d is a per-dataset nuisance direction
    // that pooled training picks up through the class-balance imbalance but
    // that carries nothing on a held-out dataset. The remaining features are
    // low-amplitude noise so distances in feature space stay driven by the
    // structured dimensions.
    const double kConfoundScale = 1.1;
    const double confound[kDatasets] = {-kConfoundScale, kConfoundScale,
                                        -1.45 * kConfoundScale, 0.82 * kConfoundScale};
    const double scale[kDatasets] = {1.0, 1.06, 0.94, 1.03};

    config.bias_offsets.resize(kDatasets);
    config.bias_scales.resize(kDatasets);
    for (int d = 0; d < kDatasets; ++d) {
        Vector offset = Vector::Zero(kFeatures);
        offset[0] = confound[d];
        offset[1] = confound[d];
        offset[8 + d] = 1.1;
        Vector scales = Vector::Constant(kFeatures, 0.25);
        for (int n = 0; n < 4; ++n) scales[n] = scale[d];
        for (int n = 8; n < 12; ++n) scales[n] = scale[d];
        config.bias_offsets[d] = offset;
        config.bias_scales[d] = scales;
    }
    return config;
}

} // namespace debias
