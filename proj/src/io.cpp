#include "debias/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"

#include "debias/errors.hpp"

namespace debias {
namespace {

using nlohmann::json;

std::string read_text_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(std::string("cannot open ") + what + " file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content, const char* what) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(std::string("cannot open ") + what + " file for writing: " + path);
    out << content;
    if (!out) throw DataError(std::string("failed writing ") + what + " file: " + path);
}

json parse_json_file(const std::string& path, const char* what) {
    const std::string text = read_text_file(path, what);
    try {
        return json::parse(text);
    } catch (const json::parse_error& err) {
        throw ConfigError(std::string("invalid JSON in ") + what + " file " + path + ": " +
                          err.what());
    }
}

json require_key(const json& j, const char* key, const char* what) {
    if (!j.contains(key))
        throw ConfigError(std::string(what) + ": missing key '" + key + "'");
    return j.at(key);
}

double require_number(const json& j, const char* key, const char* what) {
    const json value = require_key(j, key, what);
    if (!value.is_number())
        throw ConfigError(std::string(what) + ": key '" + key + "' must be a number");
    return value.get<double>();
}

int require_int(const json& j, const char* key, const char* what) {
    const json value = require_key(j, key, what);
    if (!value.is_number_integer())
        throw ConfigError(std::string(what) + ": key '" + key + "' must be an integer");
    return value.get<int>();
}

Vector to_vector(const json& j, const char* what) {
    if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array");
    Vector out(static_cast<Eigen::Index>(j.size()));
    Eigen::Index i = 0;
    for (const auto& item : j) {
        if (!item.is_number())
            throw ConfigError(std::string(what) + ": expected numeric entries");
        out[i++] = item.get<double>();
    }
    return out;
}

json from_vector(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Matrix to_matrix(const json& j, const char* what) {
    if (!j.is_array() || j.empty())
        throw ConfigError(std::string(what) + ": expected a non-empty array of rows");
    const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
    if (cols == 0) throw ConfigError(std::string(what) + ": rows must be non-empty arrays");
    Matrix out(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    Eigen::Index r = 0;
    for (const auto& row : j) {
        if (!row.is_array() || row.size() != cols)
            throw ConfigError(std::string(what) + ": ragged rows");
        Eigen::Index c = 0;
        for (const auto& item : row) {
            if (!item.is_number())
                throw ConfigError(std::string(what) + ": expected numeric entries");
            out(r, c++) = item.get<double>();
        }
        ++r;
    }
    return out;
}

json from_matrix(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

int parse_csv_int(const std::string& field, int line_no, const char* what) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw DataError("csv line " + std::to_string(line_no) + ": bad " + what + " '" +
                        field + "'");
    return value;
}

double parse_csv_double(const std::string& field, int line_no, int column) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw DataError("csv line " + std::to_string(line_no) + ": bad number '" + field +
                        "' in column f" + std::to_string(column));
    return value;
}

json hyper_cell_to_json(const HyperCell& cell) {
    json j;
    switch (cell.method) {
        case Method::kDebias:
            j["alpha_j"] = cell.debias.alpha_j;
            j["alpha_e"] = cell.debias.alpha_e;
            j["alpha_l"] = cell.debias.alpha_l;
            j["lambda"] = cell.debias.lambda;
            j["prototype_count"] = cell.debias.prototype_count;
            j["step_size"] = cell.debias.step_size;
            j["max_iterations"] = cell.debias.max_iterations;
            j["tolerance"] = cell.debias.tolerance;
            j["restarts"] = cell.debias.restarts;
            break;
        case Method::kLogistic:
            j["l2"] = cell.logistic_l2;
            break;
        case Method::kUnbiasedSvm:
            j["c_common"] = cell.svm_c_common;
            j["c_specific"] = cell.svm_c_specific;
            j["delta_penalty"] = cell.svm_delta_penalty;
            break;
    }
    return j;
}

HyperCell hyper_cell_from_json(const json& j, Method method, const char* what) {
    HyperCell cell;
    cell.method = method;
    switch (method) {
        case Method::kDebias:
            cell.debias.alpha_j = require_number(j, "alpha_j", what);
            cell.debias.alpha_e = require_number(j, "alpha_e", what);
            cell.debias.alpha_l = require_number(j, "alpha_l", what);
            cell.debias.lambda = require_number(j, "lambda", what);
            cell.debias.prototype_count = require_int(j, "prototype_count", what);
            if (j.contains("step_size"))
                cell.debias.step_size = require_number(j, "step_size", what);
            if (j.contains("max_iterations"))
                cell.debias.max_iterations = require_int(j, "max_iterations", what);
            if (j.contains("tolerance"))
                cell.debias.tolerance = require_number(j, "tolerance", what);
            if (j.contains("restarts"))
                cell.debias.restarts = require_int(j, "restarts", what);
            cell.debias.validate();
            break;
        case Method::kLogistic:
            cell.logistic_l2 = require_number(j, "l2", what);
            if (cell.logistic_l2 < 0.0)
                throw ConfigError(std::string(what) + ": l2 must be >= 0");
            break;
        case Method::kUnbiasedSvm:
            cell.svm_c_common = require_number(j, "c_common", what);
            cell.svm_c_specific = require_number(j, "c_specific", what);
            cell.svm_delta_penalty = require_number(j, "delta_penalty", what);
            if (cell.svm_c_common < 0.0 || cell.svm_c_specific < 0.0 ||
                cell.svm_delta_penalty < 0.0)
                throw ConfigError(std::string(what) + ": SVM penalties must be >= 0");
            break;
    }
    return cell;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

} // namespace

std::string format_double(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

void write_dataset_csv(const LabeledDataset& data, const std::string& path) {
    data.validate();
    std::ostringstream out;
    out << "dataset_id,label";
    for (int n = 0; n < data.feature_count(); ++n) out << ",f" << n;
    out << "\n";
    for (int m = 0; m < data.row_count(); ++m) {
        out << data.dataset_ids[static_cast<std::size_t>(m)] << ','
            << data.class_labels[static_cast<std::size_t>(m)];
        for (int n = 0; n < data.feature_count(); ++n)
            out << ',' << format_double(data.features(m, n));
        out << "\n";
    }
    write_text_file(path, out.str(), "csv");
}

LabeledDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open csv file: " + path);

    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw DataError("csv file is empty: " + path);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "dataset_id" || header[1] != "label")
        throw DataError("csv header must start with dataset_id,label,f0,...");
    const int n_feat = static_cast<int>(header.size()) - 2;
    for (int n = 0; n < n_feat; ++n) {
        if (header[static_cast<std::size_t>(n + 2)] != "f" + std::to_string(n))
            throw DataError("csv header column " + std::to_string(n + 2) +
                            " must be f" + std::to_string(n));
    }

    std::vector<int> ids;
    std::vector<int> labels;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (in.eof()) break;
            throw DataError("csv line " + std::to_string(line_no) + ": empty line");
        }
        const std::vector<std::string> fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != n_feat + 2)
            throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(n_feat + 2) + " fields, got " +
                            std::to_string(fields.size()));
        const int id = parse_csv_int(fields[0], line_no, "dataset_id");
        const int label = parse_csv_int(fields[1], line_no, "label");
        if (id < 0)
            throw DataError("csv line " + std::to_string(line_no) + ": negative dataset_id");
        if (label < 0)
            throw DataError("csv line " + std::to_string(line_no) + ": negative label");
        ids.push_back(id);
        labels.push_back(label);
        for (int n = 0; n < n_feat; ++n)
            values.push_back(parse_csv_double(fields[static_cast<std::size_t>(n + 2)],
                                              line_no, n));
    }
    if (ids.empty()) throw DataError("csv file has no data rows: " + path);

    LabeledDataset data;
    const int rows = static_cast<int>(ids.size());
    data.features.resize(rows, n_feat);
    for (int m = 0; m < rows; ++m)
        for (int n = 0; n < n_feat; ++n)
            data.features(m, n) = values[static_cast<std::size_t>(m) * n_feat +
                                         static_cast<std::size_t>(n)];
    data.dataset_ids = ids;
    data.class_labels = labels;
    data.dataset_count = *std::max_element(ids.begin(), ids.end()) + 1;
    data.class_count = std::max(2, *std::max_element(labels.begin(), labels.end()) + 1);
    data.validate();
    return data;
}

GeneratorConfig load_generator_config(const std::string& path) {
    const json j = parse_json_file(path, "generator config");
    const char* what = "generator config";
    GeneratorConfig config;
    config.dataset_count = require_int(j, "dataset_count", what);
    config.feature_count = require_int(j, "feature_count", what);
    {
        const json sizes = require_key(j, "sizes", what);
        if (!sizes.is_array()) throw ConfigError("generator config: sizes must be an array");
        for (const auto& s : sizes) config.sizes.push_back(s.get<int>());
    }
    config.class_effect = to_vector(require_key(j, "class_effect", what),
                                    "generator config class_effect");
    {
        const json offsets = require_key(j, "bias_offsets", what);
        if (!offsets.is_array())
            throw ConfigError("generator config: bias_offsets must be an array");
        for (const auto& o : offsets)
            config.bias_offsets.push_back(to_vector(o, "generator config bias_offsets"));
        const json scales = require_key(j, "bias_scales", what);
        if (!scales.is_array())
            throw ConfigError("generator config: bias_scales must be an array");
        for (const auto& s : scales)
            config.bias_scales.push_back(to_vector(s, "generator config bias_scales"));
    }
    config.noise_sigma = require_number(j, "noise_sigma", what);
    {
        const json balance = require_key(j, "class_balance", what);
        if (!balance.is_array())
            throw ConfigError("generator config: class_balance must be an array");
        for (const auto& b : balance) config.class_balance.push_back(b.get<double>());
    }
    const json seed = require_key(j, "seed", what);
    if (!seed.is_number_unsigned() && !seed.is_number_integer())
        throw ConfigError("generator config: seed must be an integer");
    config.seed = seed.get<std::uint64_t>();
    config.validate();
    return config;
}

void save_generator_config(const GeneratorConfig& config, const std::string& path) {
    config.validate();
    json j;
    j["dataset_count"] = config.dataset_count;
    j["feature_count"] = config.feature_count;
    j["sizes"] = config.sizes;
    j["class_effect"] = from_vector(config.class_effect);
    j["bias_offsets"] = json::array();
    j["bias_scales"] = json::array();
    for (const auto& o : config.bias_offsets) j["bias_offsets"].push_back(from_vector(o));
    for (const auto& s : config.bias_scales) j["bias_scales"].push_back(from_vector(s));
    j["noise_sigma"] = config.noise_sigma;
    j["class_balance"] = config.class_balance;
    j["seed"] = config.seed;
    write_text_file(path, dump_json(j), "generator config");
}

GridSpec load_grid_spec(const std::string& path) {
    const json j = parse_json_file(path, "grid");
    GridSpec grid;
    const auto doubles = [&](const char* key, std::vector<double>& target) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_array()) throw ConfigError(std::string("grid: ") + key +
                                                     " must be an array");
        target.clear();
        for (const auto& item : j.at(key)) target.push_back(item.get<double>());
    };
    doubles("alpha_j", grid.alpha_j);
    doubles("alpha_e", grid.alpha_e);
    doubles("alpha_l", grid.alpha_l);
    doubles("lambda", grid.lambda);
    doubles("svm_c_common", grid.svm_c_common);
    doubles("svm_c_specific", grid.svm_c_specific);
    doubles("svm_delta_penalty", grid.svm_delta_penalty);
    if (j.contains("prototype_count")) {
        grid.prototype_count.clear();
        for (const auto& item : j.at("prototype_count"))
            grid.prototype_count.push_back(item.get<int>());
    }
    if (j.contains("step_size")) grid.step_size = j.at("step_size").get<double>();
    if (j.contains("max_iterations")) grid.max_iterations = j.at("max_iterations").get<int>();
    if (j.contains("tolerance")) grid.tolerance = j.at("tolerance").get<double>();
    if (j.contains("restarts")) grid.restarts = j.at("restarts").get<int>();
    grid.validate();
    return grid;
}

HyperCell load_hyper_cell(const std::string& path, Method method) {
    const json j = parse_json_file(path, "hyperparameter config");
    return hyper_cell_from_json(j, method, "hyperparameter config");
}

void save_model(const SavedModel& saved, const std::string& path) {
    json j;
    j["schema_version"] = saved.schema_version;
    j["training_seed"] = saved.training_seed;
    j["priors"] = from_vector(saved.priors);

    json params;
    std::string kind;
    if (const auto* p = std::get_if<PrototypeModel>(&saved.model)) {
        kind = "prototype";
        params["prototype_count"] = p->prototype_count;
        params["prototypes"] = from_matrix(p->prototypes);
        params["class_weights"] = from_matrix(p->class_weights);
        j["hyperparameters"] = hyper_cell_to_json(saved.hyper);
    } else if (const auto* l = std::get_if<LinearModel>(&saved.model)) {
        kind = "logistic";
        params["weights"] = from_vector(l->weights);
        params["intercept"] = l->intercept;
        j["hyperparameters"] = hyper_cell_to_json(saved.hyper);
    } else if (const auto* s = std::get_if<UnbiasedSvmModel>(&saved.model)) {
        kind = "unbiased_svm";
        params["common_weights"] = from_vector(s->common_weights);
        params["common_intercept"] = s->common_intercept;
        params["dataset_deltas"] = from_matrix(s->dataset_deltas);
        params["delta_intercepts"] = from_vector(s->delta_intercepts);
        j["hyperparameters"] = hyper_cell_to_json(saved.hyper);
    } else {
        const auto& n = std::get<StudyNamingModel>(saved.model);
        kind = "study_namer";
        params["weights"] = from_matrix(n.weights);
        params["intercepts"] = from_vector(n.intercepts);
        j["hyperparameters"] = json{{"l2", saved.namer_l2}};
    }
    j["kind"] = kind;
    j["model"] = params;
    write_text_file(path, dump_json(j), "model");
}

SavedModel load_model(const std::string& path) {
    const json j = parse_json_file(path, "model");
    const char* what = "model";
    SavedModel saved;
    saved.schema_version = require_int(j, "schema_version", what);
    if (saved.schema_version != 1)
        throw ConfigError("model: unsupported schema_version " +
                          std::to_string(saved.schema_version));
    saved.kind = require_key(j, "kind", what).get<std::string>();
    const json seed = require_key(j, "training_seed", what);
    saved.training_seed = seed.get<std::uint64_t>();
    saved.priors = to_vector(require_key(j, "priors", what), "model priors");
    const json params = require_key(j, "model", what);
    const json hyper = require_key(j, "hyperparameters", what);

    if (saved.kind == "prototype") {
        PrototypeModel p;
        p.prototype_count = require_int(params, "prototype_count", what);
        p.prototypes = to_matrix(require_key(params, "prototypes", what), "model prototypes");
        p.class_weights =
            to_matrix(require_key(params, "class_weights", what), "model class_weights");
        p.validate();
        saved.model = p;
        saved.hyper = hyper_cell_from_json(hyper, Method::kDebias, what);
    } else if (saved.kind == "logistic") {
        LinearModel l;
        l.weights = to_vector(require_key(params, "weights", what), "model weights");
        l.intercept = require_number(params, "intercept", what);
        saved.model = l;
        saved.hyper = hyper_cell_from_json(hyper, Method::kLogistic, what);
    } else if (saved.kind == "unbiased_svm") {
        UnbiasedSvmModel s;
        s.common_weights =
            to_vector(require_key(params, "common_weights", what), "model common_weights");
        s.common_intercept = require_number(params, "common_intercept", what);
        s.dataset_deltas =
            to_matrix(require_key(params, "dataset_deltas", what), "model dataset_deltas");
        s.delta_intercepts = to_vector(require_key(params, "delta_intercepts", what),
                                       "model delta_intercepts");
        saved.model = s;
        saved.hyper = hyper_cell_from_json(hyper, Method::kUnbiasedSvm, what);
    } else if (saved.kind == "study_namer") {
        StudyNamingModel n;
        n.weights = to_matrix(require_key(params, "weights", what), "model weights");
        n.intercepts =
            to_vector(require_key(params, "intercepts", what), "model intercepts");
        saved.model = n;
        saved.namer_l2 = require_number(hyper, "l2", what);
    } else {
        throw ConfigError("model: unknown kind '" + saved.kind + "'");
    }
    return saved;
}

void save_eval_report(const EvalReport& report, const std::string& path) {
    json j;
    j["schema_version"] = 1;
    j["method"] = report.method;
    j["seed"] = report.seed;
    j["dataset_count"] = report.dataset_count;
    j["folds"] = json::array();
    for (const FoldReport& fold : report.folds) {
        json f;
        f["held_out"] = fold.held_out;
        f["chosen"] = hyper_cell_to_json(fold.chosen);
        f["inner_score"] = fold.inner_folds > 0 ? json(fold.inner_score) : json(nullptr);
        f["inner_folds"] = fold.inner_folds;
        if (fold.auc_skipped) {
            f["auc"] = nullptr;
            f["skip_reason"] = fold.skip_reason;
        } else {
            f["auc"] = fold.auc;
        }
        f["accuracy"] = fold.accuracy;
        f["ceiling_auc"] = fold.ceiling_skipped ? json(nullptr) : json(fold.ceiling_auc);
        f["drop_pct"] = fold.drop_defined ? json(fold.drop_pct) : json(nullptr);
        f["model_digest"] = fold.model_digest;
        j["folds"].push_back(f);
    }
    write_text_file(path, dump_json(j), "report");
}

std::string render_eval_report(const EvalReport& report) {
    std::ostringstream out;
    out << "method: " << report.method << "  seed: " << report.seed
        << "  datasets: " << report.dataset_count << "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-6s %-10s %-10s %-10s %-10s %s\n", "fold", "auc",
                  "ceiling", "drop_pct", "accuracy", "digest");
    out << line;
    for (const FoldReport& fold : report.folds) {
        char auc[16], ceiling[16], drop[16];
        if (fold.auc_skipped)
            std::snprintf(auc, sizeof(auc), "%s", "skip");
        else
            std::snprintf(auc, sizeof(auc), "%.4f", fold.auc);
        if (fold.ceiling_skipped)
            std::snprintf(ceiling, sizeof(ceiling), "%s", "skip");
        else
            std::snprintf(ceiling, sizeof(ceiling), "%.4f", fold.ceiling_auc);
        if (fold.drop_defined)
            std::snprintf(drop, sizeof(drop), "%.2f", fold.drop_pct);
        else
            std::snprintf(drop, sizeof(drop), "%s", "-");
        std::snprintf(line, sizeof(line), "%-6d %-10s %-10s %-10s %-10.4f %s\n",
                      fold.held_out, auc, ceiling, drop, fold.accuracy,
                      fold.model_digest.c_str());
        out << line;
    }
    return out.str();
}

} // namespace debias
