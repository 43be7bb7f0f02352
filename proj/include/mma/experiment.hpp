#pragma once

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mma/checkpoint.hpp"
#include "mma/core.hpp"
#include "mma/dataset.hpp"
#include "mma/ensemble.hpp"
#include "mma/eval.hpp"
#include "mma/model.hpp"

namespace mma {

struct DatasetSpec {
    std::string path;
    std::string format = "tab";   // tab | dcolon | csv | custom
    std::string delimiter = "\t";  // only consulted for format = custom
    double scale_min = 1.0;
    double scale_max = 5.0;

    RatingScale scale() const { return {scale_min, scale_max}; }
};

struct SplitSpec {
    std::array<double, 3> ratios{0.7, 0.1, 0.2};
    std::uint64_t seed = 42;
};

struct OutputSpec {
    std::string dir = "mma-out";
    bool dump_splits = false;
};

/// Flat key=value experiment description. Norms never appear here: a run
/// always trains the four fixed variants, sharing the model.* block, with
/// optional per-variant lambda / learning-rate overrides.
struct ExperimentConfig {
    DatasetSpec dataset;
    SplitSpec split;
    BaseModelConfig shared;
    std::array<std::optional<double>, 4> lambda_override;
    std::array<std::optional<double>, 4> lr_override;
    std::uint64_t train_seed = 7;
    double delta = 20.0;
    OutputSpec output;

    std::array<BaseModelConfig, 4> variant_configs() const {
        auto out = make_variant_configs(shared);
        for (int t = 0; t < 4; ++t) {
            if (lambda_override[t]) out[t].lambda = *lambda_override[t];
            if (lr_override[t]) out[t].learning_rate = *lr_override[t];
        }
        return out;
    }

    void validate() const {
        if (dataset.path.empty()) throw ConfigError("dataset.path is required");
        if (dataset.format != "tab" && dataset.format != "dcolon" && dataset.format != "csv" &&
            dataset.format != "custom") {
            throw ConfigError("dataset.format must be tab, dcolon, csv or custom, got '" +
                              dataset.format + "'");
        }
        if (dataset.format == "custom" && dataset.delimiter.empty()) {
            throw ConfigError("dataset.delimiter must be nonempty for format = custom");
        }
        if (!(dataset.scale_min < dataset.scale_max)) {
            throw ConfigError("dataset.scale_min must be below dataset.scale_max");
        }
        double sum = 0.0;
        for (double r : split.ratios) {
            if (r < 0.0 || r > 1.0) throw ConfigError("split ratios must lie in [0, 1]");
            sum += r;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
        if (delta <= 0.0) throw ConfigError("ensemble.delta must be positive");
        for (const auto& cfg : variant_configs()) cfg.validate();
    }
};

namespace detail {

inline bool parse_u64(const std::string& s, std::uint64_t& out) {
    if (s.empty() || s[0] == '-' || s[0] == '+') return false;
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    out = v;
    return true;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string fmt_f64(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ConfigSetter {
    ExperimentConfig* cfg;
    std::string where;  // "path:line" for error messages

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(msg + " at " + where);
    }

    double f64(const std::string& key, const std::string& value) const {
        double v;
        if (!parse_f64(value, v)) fail("invalid number '" + value + "' for " + key);
        return v;
    }

    std::int64_t i64(const std::string& key, const std::string& value) const {
        std::int64_t v;
        if (!parse_i64(value, v)) fail("invalid integer '" + value + "' for " + key);
        return v;
    }

    std::uint64_t u64(const std::string& key, const std::string& value) const {
        std::uint64_t v;
        if (!parse_u64(value, v)) fail("invalid seed '" + value + "' for " + key);
        return v;
    }

    bool boolean(const std::string& key, const std::string& value) const {
        if (value == "true") return true;
        if (value == "false") return false;
        fail("invalid boolean '" + value + "' for " + key + " (use true or false)");
    }

    void apply(const std::string& key, const std::string& value) const {
        ExperimentConfig& c = *cfg;
        if (key == "dataset.path") {
            c.dataset.path = value;
        } else if (key == "dataset.format") {
            c.dataset.format = value;
        } else if (key == "dataset.delimiter") {
            c.dataset.delimiter = value == "\\t" ? "\t" : value;
        } else if (key == "dataset.scale_min") {
            c.dataset.scale_min = f64(key, value);
        } else if (key == "dataset.scale_max") {
            c.dataset.scale_max = f64(key, value);
        } else if (key == "split.train") {
            c.split.ratios[0] = f64(key, value);
        } else if (key == "split.valid") {
            c.split.ratios[1] = f64(key, value);
        } else if (key == "split.test") {
            c.split.ratios[2] = f64(key, value);
        } else if (key == "split.seed") {
            c.split.seed = u64(key, value);
        } else if (key == "model.hidden_dim") {
            c.shared.hidden_dim = static_cast<int>(i64(key, value));
        } else if (key == "model.learning_rate") {
            c.shared.learning_rate = f64(key, value);
        } else if (key == "model.lambda") {
            c.shared.lambda = f64(key, value);
        } else if (key == "model.batch_size") {
            c.shared.batch_size = static_cast<int>(i64(key, value));
        } else if (key == "train.epochs") {
            c.shared.epochs = static_cast<int>(i64(key, value));
        } else if (key == "train.seed") {
            c.train_seed = u64(key, value);
        } else if (key == "ensemble.delta") {
            c.delta = f64(key, value);
        } else if (key == "output.dir") {
            c.output.dir = value;
        } else if (key == "output.dump_splits") {
            c.output.dump_splits = boolean(key, value);
        } else {
            // model1..model4 per-variant overrides
            for (int t = 0; t < 4; ++t) {
                std::string prefix = "model" + std::to_string(t + 1) + ".";
                if (key.rfind(prefix, 0) != 0) continue;
                std::string field = key.substr(prefix.size());
                if (field == "lambda") {
                    c.lambda_override[t] = f64(key, value);
                } else if (field == "learning_rate") {
                    c.lr_override[t] = f64(key, value);
                } else {
                    fail("unknown config key '" + key + "'");
                }
                return;
            }
            fail("unknown config key '" + key + "'");
        }
    }
};

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        detail::ConfigSetter setter{&cfg, origin + ":" + std::to_string(lineno)};
        if (eq == std::string::npos) setter.fail("expected key = value, got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) setter.fail("empty config key");
        setter.apply(key, value);
    }
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

/// Canonical serialization of the effective settings; parses back to the same
/// configuration.
inline std::string config_snapshot(const ExperimentConfig& cfg) {
    using detail::fmt_f64;
    std::string out;
    out += "dataset.path = " + cfg.dataset.path + "\n";
    out += "dataset.format = " + cfg.dataset.format + "\n";
    if (cfg.dataset.format == "custom") {
        out += "dataset.delimiter = " +
               (cfg.dataset.delimiter == "\t" ? std::string("\\t") : cfg.dataset.delimiter) + "\n";
    }
    out += "dataset.scale_min = " + fmt_f64(cfg.dataset.scale_min) + "\n";
    out += "dataset.scale_max = " + fmt_f64(cfg.dataset.scale_max) + "\n";
    out += "split.train = " + fmt_f64(cfg.split.ratios[0]) + "\n";
    out += "split.valid = " + fmt_f64(cfg.split.ratios[1]) + "\n";
    out += "split.test = " + fmt_f64(cfg.split.ratios[2]) + "\n";
    out += "split.seed = " + std::to_string(cfg.split.seed) + "\n";
    out += "model.hidden_dim = " + std::to_string(cfg.shared.hidden_dim) + "\n";
    out += "model.learning_rate = " + fmt_f64(cfg.shared.learning_rate) + "\n";
    out += "model.lambda = " + fmt_f64(cfg.shared.lambda) + "\n";
    out += "model.batch_size = " + std::to_string(cfg.shared.batch_size) + "\n";
    for (int t = 0; t < 4; ++t) {
        if (cfg.lambda_override[t]) {
            out += "model" + std::to_string(t + 1) + ".lambda = " +
                   fmt_f64(*cfg.lambda_override[t]) + "\n";
        }
        if (cfg.lr_override[t]) {
            out += "model" + std::to_string(t + 1) + ".learning_rate = " +
                   fmt_f64(*cfg.lr_override[t]) + "\n";
        }
    }
    out += "train.epochs = " + std::to_string(cfg.shared.epochs) + "\n";
    out += "train.seed = " + std::to_string(cfg.train_seed) + "\n";
    out += "ensemble.delta = " + fmt_f64(cfg.delta) + "\n";
    out += "output.dir = " + cfg.output.dir + "\n";
    out += "output.dump_splits = " + std::string(cfg.output.dump_splits ? "true" : "false") + "\n";
    return out;
}

inline RatingDataset load_dataset(const DatasetSpec& spec) {
    if (spec.format == "tab") return parse_tab_separated(spec.path, spec.scale());
    if (spec.format == "dcolon") return parse_double_colon_separated(spec.path, spec.scale());
    if (spec.format == "csv") return read_canonical_csv(spec.path, spec.scale());
    if (spec.format == "custom") return parse_delimited(spec.path, spec.scale(), spec.delimiter);
    throw ConfigError("dataset.format must be tab, dcolon, csv or custom, got '" + spec.format +
                      "'");
}

/// Per-model and ensemble metrics of a model snapshot on one partition.
inline EvalReport evaluate_models(const std::array<ModelParams, 4>& models,
                                  const std::array<double, 4>& weights,
                                  const RatingDataset& train, const RatingDataset& part,
                                  const std::string& partition_name) {
    std::array<PredictionMatrix, 4> preds;
    for (int t = 0; t < 4; ++t) preds[t] = predict_full(models[t], train);
    std::array<const PredictionMatrix*, 4> pp{&preds[0], &preds[1], &preds[2], &preds[3]};

    EvalReport rep;
    rep.partition = partition_name;
    rep.count = part.triples.size();
    for (int t = 0; t < 4; ++t) {
        rep.per_model_rmse[t] = rmse(preds[t], part);
        rep.per_model_mae[t] = mae(preds[t], part);
    }
    auto ens = ensemble_predict(pp, weights);
    rep.ensemble_rmse = rmse(ens, part);
    rep.ensemble_mae = mae(ens, part);
    return rep;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("write failed: " + path.string());
}

inline std::string weights_csv(const std::array<double, 4>& w) {
    return fmt_f64(w[0]) + "," + fmt_f64(w[1]) + "," + fmt_f64(w[2]) + "," + fmt_f64(w[3]);
}

inline void run_train(const std::string& config_path) {
    ExperimentConfig cfg = parse_config_file(config_path);
    if (const char* env_dir = std::getenv("MMA_OUTPUT_DIR")) {
        if (*env_dir != '\0') cfg.output.dir = env_dir;
    }
    cfg.validate();

    RatingDataset data = load_dataset(cfg.dataset);
    SplitDataset split = split_dataset(data, cfg.split.ratios, cfg.split.seed);
    std::cout << "dataset: " << cfg.dataset.path << " users=" << data.num_users
              << " items=" << data.num_items << " ratings=" << data.observed_count()
              << " train/valid/test=" << split.train.observed_count() << "/"
              << split.valid.observed_count() << "/" << split.test.observed_count() << "\n";

    std::filesystem::path out_dir(cfg.output.dir);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " +
                            ec.message());

    write_text_file(out_dir / "config.snapshot", config_snapshot(cfg));
    if (cfg.output.dump_splits) {
        write_canonical_csv(split.train, (out_dir / "train.csv").string());
        write_canonical_csv(split.valid, (out_dir / "valid.csv").string());
        write_canonical_csv(split.test, (out_dir / "test.csv").string());
    }

    auto configs = cfg.variant_configs();
    JointTrainingResult res = run_joint_training(
        configs, split, cfg.delta, cfg.shared.epochs, cfg.train_seed,
        [&](const EpochTraceRow& row) {
            char line[256];
            std::snprintf(line, sizeof(line),
                          "epoch %d/%d  valid_rmse=%.6f  valid_mae=%.6f  eps=%.4f,%.4f,%.4f,%.4f",
                          row.epoch, cfg.shared.epochs, row.valid_rmse, row.valid_mae, row.eps[0],
                          row.eps[1], row.eps[2], row.eps[3]);
            std::cout << line << std::endl;
        });

    std::string trace = EpochTraceRow::csv_header() + "\n";
    for (const auto& row : res.trace) trace += row.csv_row() + "\n";
    write_text_file(out_dir / "trace.csv", trace);

    EvalReport valid_rep =
        evaluate_models(res.models, res.weights, split.train, split.valid, "valid");
    EvalReport test_rep = evaluate_models(res.models, res.weights, split.train, split.test, "test");

    std::string report;
    report += "epochs = " + std::to_string(cfg.shared.epochs) + "\n";
    report += "best_epoch = " + std::to_string(res.best_epoch) + "\n";
    report += "delta = " + fmt_f64(cfg.delta) + "\n";
    report += "weights = " + weights_csv(res.weights) + "\n";
    report += "\n" + valid_rep.to_text() + "\n" + test_rep.to_text();
    write_text_file(out_dir / "report.txt", report);

    Checkpoint ck;
    ck.dataset_path = cfg.dataset.path;
    ck.dataset_format = cfg.dataset.format;
    ck.delimiter = cfg.dataset.delimiter;
    ck.scale = cfg.dataset.scale();
    ck.ratios = cfg.split.ratios;
    ck.split_seed = cfg.split.seed;
    ck.train_seed = cfg.train_seed;
    ck.delta = cfg.delta;
    ck.best_epoch = res.best_epoch;
    ck.weights = res.weights;
    ck.accumulative_loss = res.state.accumulative_loss;
    ck.sl_history = res.state.separate_loss_history;
    ck.user_raw_ids = data.user_raw_ids;
    ck.item_raw_ids = data.item_raw_ids;
    ck.configs = configs;
    ck.models = res.models;
    ck.valid_report = valid_rep;
    ck.test_report = test_rep;
    save_checkpoint(ck, (out_dir / "checkpoint.bin").string());

    std::cout << "best_epoch=" << res.best_epoch << " valid_rmse=" << valid_rep.ensemble_rmse
              << " valid_mae=" << valid_rep.ensemble_mae << " test_rmse=" << test_rep.ensemble_rmse
              << " test_mae=" << test_rep.ensemble_mae << "\n";
    std::cout << "artifacts written to " << out_dir.string() << "\n";
}

/// Reloads the dataset a checkpoint was trained on and reproduces its split.
inline SplitDataset reload_split(const Checkpoint& ck) {
    DatasetSpec spec;
    spec.path = ck.dataset_path;
    spec.format = ck.dataset_format;
    spec.delimiter = ck.delimiter;
    spec.scale_min = ck.scale.min_rating;
    spec.scale_max = ck.scale.max_rating;
    RatingDataset data = load_dataset(spec);
    if (data.user_raw_ids != ck.user_raw_ids || data.item_raw_ids != ck.item_raw_ids) {
        throw DataError("checkpoint does not match dataset at " + ck.dataset_path);
    }
    return split_dataset(data, ck.ratios, ck.split_seed);
}

inline void run_evaluate(const std::string& checkpoint_path, const std::string& split_name) {
    if (split_name != "valid" && split_name != "test") {
        throw ConfigError("split must be 'valid' or 'test', got '" + split_name + "'");
    }
    Checkpoint ck = load_checkpoint(checkpoint_path);
    SplitDataset split = reload_split(ck);
    const RatingDataset& part = split_name == "valid" ? split.valid : split.test;
    EvalReport rep = evaluate_models(ck.models, ck.weights, split.train, part, split_name);
    std::cout << "checkpoint = " << checkpoint_path << "\n";
    std::cout << "best_epoch = " << ck.best_epoch << "\n";
    std::cout << "weights = " << weights_csv(ck.weights) << "\n";
    std::cout << rep.to_text();
}

inline void run_predict(const std::string& checkpoint_path, std::int64_t user_raw,
                        std::int64_t item_raw) {
    Checkpoint ck = load_checkpoint(checkpoint_path);

    auto find_dense = [](const std::vector<std::int64_t>& table, std::int64_t raw,
                         const char* kind) {
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (table[i] == raw) return static_cast<int>(i);
        }
        throw DataError(std::string("unknown ") + kind + " id " + std::to_string(raw));
    };
    int user = find_dense(ck.user_raw_ids, user_raw, "user");
    int item = find_dense(ck.item_raw_ids, item_raw, "item");

    SplitDataset split = reload_split(ck);
    const ItemColumn& column = item_column(split.train, item);

    double combined = 0.0;
    for (int t = 0; t < 4; ++t) {
        std::vector<double> h = hidden_activations(ck.models[t], column);
        const double* w = ck.models[t].decoder_w.row(user);
        double pred = ck.models[t].decoder_b[user];
        for (std::size_t k = 0; k < h.size(); ++k) pred += w[k] * h[k];
        pred = ck.scale.clip(pred);
        combined += ck.weights[t] * pred;
        char line[64];
        std::snprintf(line, sizeof(line), "MMA-%d = %.9f", t + 1, pred);
        std::cout << line << "\n";
    }
    char line[96];
    std::snprintf(line, sizeof(line), "prediction = %.9f", combined);
    std::cout << "user = " << user_raw << "\nitem = " << item_raw << "\n" << line << "\n";
}

template <typename F>
int run_command(F&& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace detail

inline int cmd_train(const std::string& config_path) {
    return detail::run_command([&] { detail::run_train(config_path); });
}

inline int cmd_evaluate(const std::string& checkpoint_path, const std::string& split_name) {
    return detail::run_command([&] { detail::run_evaluate(checkpoint_path, split_name); });
}

inline int cmd_predict(const std::string& checkpoint_path, std::int64_t user_raw,
                       std::int64_t item_raw) {
    return detail::run_command([&] { detail::run_predict(checkpoint_path, user_raw, item_raw); });
}

}  // namespace mma
