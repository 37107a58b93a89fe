#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "debias/baselines.hpp"
#include "debias/evaluation.hpp"
#include "debias/synth_data.hpp"
#include "debias/types.hpp"

namespace debias {

// Round-trip exact decimal form (%.17g).
std::string format_double(double value);

// CSV with header dataset_id,label,f0,...,f{N-1}; LF line endings.
void write_dataset_csv(const LabeledDataset& data, const std::string& path);
LabeledDataset read_dataset_csv(const std::string& path);

GeneratorConfig load_generator_config(const std::string& path);
void save_generator_config(const GeneratorConfig& config, const std::string& path);

GridSpec load_grid_spec(const std::string& path);

// Single hyperparameter bundle for `train`; fields depend on the method.
HyperCell load_hyper_cell(const std::string& path, Method method);

// Persisted model: schema_version, kind, parameters, seed and hyperparameters.
struct SavedModel {
    int schema_version = 1;
    std::string kind; // prototype | logistic | unbiased_svm | study_namer
    std::variant<PrototypeModel, LinearModel, UnbiasedSvmModel, StudyNamingModel> model;
    HyperCell hyper;          // populated for the three classifier kinds
    double namer_l2 = 0.0;    // study_namer only
    std::uint64_t training_seed = 0;
    Vector priors;            // empirical dataset priors of the training data
};

void save_model(const SavedModel& saved, const std::string& path);
SavedModel load_model(const std::string& path);

void save_eval_report(const EvalReport& report, const std::string& path);

// Fixed-width text table of the same report for terminals.
std::string render_eval_report(const EvalReport& report);

} // namespace debias
