#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "debias/baselines.hpp"
#include "debias/core_model.hpp"
#include "debias/errors.hpp"
#include "debias/evaluation.hpp"
#include "debias/io.hpp"
#include "debias/optimizer.hpp"
#include "debias/rng.hpp"
#include "debias/synth_data.hpp"
#include "debias/types.hpp"

namespace {

using nlohmann::json;
using namespace debias;

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

std::string kind_for_method(Method method) {
    switch (method) {
        case Method::kDebias: return "prototype";
        case Method::kLogistic: return "logistic";
        case Method::kUnbiasedSvm: return "unbiased_svm";
    }
    return "";
}

json training_loss_json(const MethodModel& model, const LabeledDataset& data,
                        const HyperCell& cell, const Vector& priors) {
    json j;
    if (const auto* p = std::get_if<PrototypeModel>(&model)) {
        const LossBreakdown loss = combined_loss(*p, data, cell.debias, priors);
        j["entropy_j"] = loss.entropy_j;
        j["reconstruction_e"] = loss.reconstruction_e;
        j["classification_l"] = loss.classification_l;
        j["l2_penalty"] = loss.l2_penalty;
        j["combined"] = loss.combined;
    } else if (const auto* l = std::get_if<LinearModel>(&model)) {
        double nll = 0.0;
        for (int i = 0; i < data.row_count(); ++i) {
            const double s = l->score(data.features.row(i).transpose());
            const double y = data.class_labels[i] == 1 ? 1.0 : 0.0;
            // log(1 + e^s) - y s, computed from the stable softplus branch
            const double softplus = s > 0 ? s + std::log1p(std::exp(-s))
                                          : std::log1p(std::exp(s));
            nll += softplus - y * s;
        }
        j["mean_nll"] = nll / data.row_count();
        j["l2_penalty"] = cell.logistic_l2 * l->weights.squaredNorm();
    } else {
        const auto& s = std::get<UnbiasedSvmModel>(model);
        double common_hinge = 0.0;
        double specific_hinge = 0.0;
        for (int i = 0; i < data.row_count(); ++i) {
            const Vector x = data.features.row(i).transpose();
            const double y = data.class_labels[i] == 1 ? 1.0 : -1.0;
            common_hinge += std::max(0.0, 1.0 - y * s.score(x));
            specific_hinge +=
                std::max(0.0, 1.0 - y * s.dataset_score(x, data.dataset_ids[i]));
        }
        double delta_norms = s.dataset_deltas.squaredNorm();
        j["hinge_objective"] = 0.5 * s.common_weights.squaredNorm() +
                               0.5 * cell.svm_delta_penalty * delta_norms +
                               cell.svm_c_common * common_hinge +
                               cell.svm_c_specific * specific_hinge;
    }
    return j;
}

int cmd_generate(const std::string& config_path, const std::string& out_path,
                 const std::string& write_default) {
    if (!write_default.empty()) {
        save_generator_config(default_benchmark_config(), write_default);
        return 0;
    }
    if (config_path.empty() || out_path.empty())
        throw ConfigError("generate needs --config and --out (or --write-default-config)");
    const GeneratorConfig config = load_generator_config(config_path);
    write_dataset_csv(generate(config), out_path);
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& method_name,
              const std::string& config_path, const std::string& grid_path,
              std::uint64_t seed, int threads, const std::string& out_path) {
    if (config_path.empty() == grid_path.empty())
        throw ConfigError("train needs exactly one of --config or --grid");
    const LabeledDataset data = read_dataset_csv(data_path);
    const Method method = parse_method(method_name);

    HyperCell cell;
    if (!grid_path.empty()) {
        const GridSpec grid = load_grid_spec(grid_path);
        cell = nested_grid_search(data, grid, method, seed, threads).cell;
    } else {
        cell = load_hyper_cell(config_path, method);
    }
    if (method == Method::kDebias && data.dataset_count < 2)
        std::cerr << "warning: single dataset; the entropy term is constant and "
                     "cannot unlearn anything\n";

    const MethodModel model = train_with_cell(data, cell, seed);

    SavedModel saved;
    saved.kind = kind_for_method(method);
    saved.hyper = cell;
    saved.training_seed = seed;
    saved.priors = data.empirical_priors();
    std::visit([&](const auto& m) { saved.model = m; }, model);
    save_model(saved, out_path);

    json summary;
    summary["kind"] = saved.kind;
    summary["model_digest"] = digest_hex(method_digest(model));
    summary["training_loss"] = training_loss_json(model, data, cell, saved.priors);
    summary["out"] = out_path;
    print_json(summary);
    return 0;
}

int cmd_lodo(const std::string& data_path, const std::string& method_name,
             const std::string& grid_path, std::uint64_t seed, int threads,
             const std::string& out_path) {
    const LabeledDataset data = read_dataset_csv(data_path);
    const Method method = parse_method(method_name);
    const GridSpec grid = load_grid_spec(grid_path);
    const EvalReport report = lodo_evaluate(data, method, grid, seed, threads);
    save_eval_report(report, out_path);
    std::cout << render_eval_report(report);
    return 0;
}

int cmd_name_study(const std::string& data_path, std::uint64_t seed, double l2,
                   const std::string& out_path) {
    const LabeledDataset data = read_dataset_csv(data_path);
    const StudyNamingReport report = study_namer_cv(data, l2, seed);
    if (!out_path.empty()) {
        SavedModel saved;
        saved.kind = "study_namer";
        saved.model = train_study_namer(data, l2, mix_seed(seed, 0xa11));
        saved.namer_l2 = l2;
        saved.training_seed = seed;
        saved.priors = data.empirical_priors();
        save_model(saved, out_path);
    }
    json j;
    j["accuracy"] = report.accuracy;
    j["chance"] = report.chance;
    json confusion = json::array();
    for (int r = 0; r < report.confusion.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < report.confusion.cols(); ++c) row.push_back(report.confusion(r, c));
        confusion.push_back(row);
    }
    j["confusion"] = confusion;
    print_json(j);
    return 0;
}

int cmd_ceiling(const std::string& data_path, std::uint64_t seed, double l2,
                const std::string& out_path) {
    const LabeledDataset data = read_dataset_csv(data_path);
    const std::vector<CeilingEntry> entries = within_dataset_ceiling(data, l2, seed);
    json j;
    j["ceilings"] = json::array();
    for (const CeilingEntry& entry : entries) {
        json e;
        e["dataset"] = entry.dataset;
        if (entry.skipped) {
            e["auc"] = nullptr;
            e["skip_reason"] = entry.skip_reason;
        } else {
            e["auc"] = entry.auc;
        }
        j["ceilings"].push_back(e);
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw DataError("cannot open report file for writing: " + out_path);
        out << j.dump(2) << "\n";
    }
    print_json(j);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, bool corrupt) {
    constexpr double kTolerance = 1e-4;
    constexpr double kQuadraticTolerance = 1e-9;
    const GradientCheckReport report = gradient_check_suite(seed, corrupt);
    const bool pass = report.max_rel_error <= kTolerance &&
                      report.quadratic_rel_error <= kQuadraticTolerance;
    json j;
    j["instances"] = report.instances;
    j["max_rel_error"] = report.max_rel_error;
    j["quadratic_rel_error"] = report.quadratic_rel_error;
    j["tolerance"] = kTolerance;
    j["quadratic_tolerance"] = kQuadraticTolerance;
    j["pass"] = pass;
    print_json(j);
    return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prototype-based dataset debiasing toolkit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "sample a multi-dataset csv from a config");
    std::string gen_config, gen_out, gen_write_default;
    gen->add_option("--config", gen_config, "generator config json");
    gen->add_option("--out", gen_out, "output csv path");
    gen->add_option("--write-default-config", gen_write_default,
                    "write the built-in benchmark generator config to this path and exit");

    auto* train_cmd = app.add_subcommand("train", "fit one model on every row of --data");
    std::string train_data, train_method, train_config, train_grid, train_out;
    std::uint64_t train_seed = 0;
    int train_threads = 1;
    train_cmd->add_option("--data", train_data, "input csv")->required();
    train_cmd->add_option("--method", train_method, "debias | logistic | unbiased-svm")
        ->required();
    train_cmd->add_option("--config", train_config, "hyperparameter json");
    train_cmd->add_option("--grid", train_grid, "grid json; tunes before the final fit");
    train_cmd->add_option("--seed", train_seed, "rng seed");
    train_cmd->add_option("--threads", train_threads, "worker threads for the grid");
    train_cmd->add_option("--out", train_out, "model json path")->required();

    auto* lodo_cmd = app.add_subcommand("lodo", "leave-one-dataset-out evaluation");
    std::string lodo_data, lodo_method, lodo_grid, lodo_out;
    std::uint64_t lodo_seed = 0;
    int lodo_threads = 1;
    lodo_cmd->add_option("--data", lodo_data, "input csv")->required();
    lodo_cmd->add_option("--method", lodo_method, "debias | logistic | unbiased-svm")
        ->required();
    lodo_cmd->add_option("--grid", lodo_grid, "grid json")->required();
    lodo_cmd->add_option("--seed", lodo_seed, "rng seed");
    lodo_cmd->add_option("--threads", lodo_threads, "worker threads for the grid");
    lodo_cmd->add_option("--out", lodo_out, "report json path")->required();

    auto* name_cmd = app.add_subcommand("name-study", "dataset-identifiability probe");
    std::string name_data, name_out;
    std::uint64_t name_seed = 0;
    double name_l2 = 0.01;
    name_cmd->add_option("--data", name_data, "input csv")->required();
    name_cmd->add_option("--seed", name_seed, "rng seed");
    name_cmd->add_option("--l2", name_l2, "weight penalty");
    name_cmd->add_option("--out", name_out, "optional model json path");

    auto* ceiling_cmd = app.add_subcommand("ceiling", "within-dataset two-fold AUC");
    std::string ceiling_data, ceiling_out;
    std::uint64_t ceiling_seed = 0;
    double ceiling_l2 = kCeilingL2;
    ceiling_cmd->add_option("--data", ceiling_data, "input csv")->required();
    ceiling_cmd->add_option("--seed", ceiling_seed, "rng seed");
    ceiling_cmd->add_option("--l2", ceiling_l2, "weight penalty");
    ceiling_cmd->add_option("--out", ceiling_out, "optional report json path");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::uint64_t grad_seed = 0;
    bool grad_corrupt = false;
    grad_cmd->add_option("--seed", grad_seed, "rng seed");
    grad_cmd->add_flag("--corrupt-gradient", grad_corrupt)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_config, gen_out, gen_write_default);
        if (train_cmd->parsed())
            return cmd_train(train_data, train_method, train_config, train_grid, train_seed,
                             train_threads, train_out);
        if (lodo_cmd->parsed())
            return cmd_lodo(lodo_data, lodo_method, lodo_grid, lodo_seed, lodo_threads,
                            lodo_out);
        if (name_cmd->parsed()) return cmd_name_study(name_data, name_seed, name_l2, name_out);
        if (ceiling_cmd->parsed())
            return cmd_ceiling(ceiling_data, ceiling_seed, ceiling_l2, ceiling_out);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed, grad_corrupt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
