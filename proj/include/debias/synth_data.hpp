#pragma once

#include <cstdint>
#include <vector>

#include "debias/types.hpp"

namespace debias {

// Controls for the multi-dataset generator. Each example is drawn as
//   x = bias_offsets[d] + bias_scales[d] .* (sign(y) * class_effect / 2
//                                            + gaussian(0, noise_sigma))
// with y ~ Bernoulli(class_balance[d]) and sign(y) in {-1, +1}.
struct GeneratorConfig {
    int dataset_count = 0;
    std::vector<int> sizes;           // rows per dataset
    int feature_count = 0;
    Vector class_effect;              // length N
    std::vector<Vector> bias_offsets; // D vectors of length N
    std::vector<Vector> bias_scales;  // D positive vectors of length N
    double noise_sigma = 1.0;
    std::vector<double> class_balance; // per dataset, P(y = 1)
    std::uint64_t seed = 0;

    void validate() const;
};

// Deterministic given the config (seed included); rows are shuffled within
// each dataset block so labels carry no positional information.
LabeledDataset generate(const GeneratorConfig& config);

// The committed benchmark: 4 datasets, 78 features, unequal sizes with one
// single-class dataset, a class-collinear confound that anti-correlates with
// the class balance, and per-dataset nuisance directions.
GeneratorConfig default_benchmark_config();

} // namespace debias
