#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "debias/core_model.hpp"
#include "debias/types.hpp"

namespace debias {

// Analytic gradient of the combined loss, shaped like the model.
struct GradientBundle {
    Matrix d_prototypes;    // K x N
    Matrix d_class_weights; // C x K
};

struct TraceRecord {
    int iteration = 0;
    LossBreakdown loss;
    double gradient_norm = 0.0;
};

struct TrainingTrace {
    std::vector<TraceRecord> records;
    int best_iteration = 0;
    double best_combined = 0.0;
};

// Divergence during training; carries the trace up to the failing iteration.
struct DivergenceError : NumericError {
    TrainingTrace trace;
    DivergenceError(const std::string& message, TrainingTrace t)
        : NumericError(message), trace(std::move(t)) {}
};

// Combined loss plus its gradient with respect to prototypes and class
// weights, chain-ruled through the softmax over negated squared distances.
std::pair<LossBreakdown, GradientBundle> loss_and_gradients(const PrototypeModel& model,
                                                            const LabeledDataset& data,
                                                            const HyperParams& hyper,
                                                            const Vector& priors);

// Central finite differences over every parameter coordinate. Returns the
// maximum relative error max(|a-f| / max(|a|, |f|, 1e-8)).
double finite_difference_check(const PrototypeModel& model, const LabeledDataset& data,
                               const HyperParams& hyper, const Vector& priors, double step);

struct GradientCheckReport {
    double max_rel_error = 0.0;       // worst case over the randomized instances
    double quadratic_rel_error = 0.0; // alphas zero, penalty-only configuration
    int instances = 0;
};

// Randomized finite-difference sweep: single-term activations (entropy,
// reconstruction, classification) plus mixed weightings over varied shapes.
// corrupt_one_entry doubles the largest analytic gradient entry per instance
// so a broken comparison is distinguishable from a passing one.
GradientCheckReport gradient_check_suite(std::uint64_t seed, bool corrupt_one_entry = false);

// K training rows sampled without replacement (with replacement when K > M),
// plus per-feature gaussian jitter of jitter_scale times the feature std.
Matrix initialize_prototypes(const LabeledDataset& data, int prototype_count,
                             std::uint64_t seed, double jitter_scale = 0.01);

// Full-batch Adam on the combined loss; deterministic given the seed,
// returns the best iterate seen. hyper.restarts > 1 reruns with derived
// seeds and keeps the lowest-loss model.
std::pair<PrototypeModel, TrainingTrace> train(const LabeledDataset& data,
                                               const HyperParams& hyper, const Vector& priors,
                                               std::uint64_t seed);

} // namespace debias
