#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "mma/core.hpp"
#include "mma/dataset.hpp"
#include "mma/eval.hpp"
#include "mma/model.hpp"

namespace mma {

constexpr int kNumBaseModels = 4;

/// Per-epoch separate losses, their running sums, and the exponential weights
/// they induce over the four base models.
struct EnsembleState {
    double delta = 20.0;  // balance factor; larger concentrates weight faster
    std::vector<std::array<double, 4>> separate_loss_history;
    std::array<double, 4> accumulative_loss{0.0, 0.0, 0.0, 0.0};
    std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};
};

/// Validation RMSE of each base model at the current epoch.
template <PredictionAccessor P>
std::array<double, 4> separate_loss(const std::array<const P*, 4>& preds,
                                    const RatingDataset& valid) {
    if (valid.triples.empty()) throw DataError("separate_loss: empty validation set");
    std::array<double, 4> sl{};
    for (int t = 0; t < 4; ++t) sl[t] = rmse(*preds[t], valid);
    return sl;
}

/// Adds one epoch's separate losses to the running totals.
inline void accumulate(EnsembleState& state, const std::array<double, 4>& sl) {
    for (double v : sl) {
        if (!std::isfinite(v) || v < 0.0) {
            throw TrainingError("accumulate: separate loss must be finite and nonnegative");
        }
    }
    for (int t = 0; t < 4; ++t) state.accumulative_loss[t] += sl[t];
    state.separate_loss_history.push_back(sl);
}

/// Softmax of -delta * accumulative loss. The smallest loss is subtracted
/// before exponentiation; softmax is shift-invariant, so this changes nothing
/// mathematically but keeps the exponentials bounded as the sums grow.
inline std::array<double, 4> ensemble_weights(EnsembleState& state) {
    if (state.delta <= 0.0) throw ConfigError("ensemble delta must be positive");
    double lo = state.accumulative_loss[0];
    for (double a : state.accumulative_loss) {
        if (!std::isfinite(a)) throw TrainingError("ensemble_weights: non-finite accumulative loss");
        lo = std::min(lo, a);
    }
    std::array<double, 4> w{};
    double sum = 0.0;
    for (int t = 0; t < 4; ++t) {
        w[t] = std::exp(-state.delta * (state.accumulative_loss[t] - lo));
        sum += w[t];
    }
    for (int t = 0; t < 4; ++t) w[t] /= sum;
    state.weights = w;
    return w;
}

/// Convex combination of the four base predictions.
template <PredictionAccessor P>
class EnsemblePrediction {
public:
    EnsemblePrediction(const std::array<const P*, 4>& preds, const std::array<double, 4>& weights)
        : preds_(preds), weights_(weights) {
        double sum = weights[0] + weights[1] + weights[2] + weights[3];
        if (std::abs(sum - 1.0) > 1e-9) {
            throw TrainingError("ensemble weights must sum to 1, got " + std::to_string(sum));
        }
    }

    double at(int user, int item) const {
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) acc += weights_[t] * preds_[t]->at(user, item);
        return acc;
    }

private:
    std::array<const P*, 4> preds_;
    std::array<double, 4> weights_;
};

template <PredictionAccessor P>
EnsemblePrediction<P> ensemble_predict(const std::array<const P*, 4>& preds,
                                       const std::array<double, 4>& weights) {
    return EnsemblePrediction<P>(preds, weights);
}

/// One row of the training trace; the CSV layout is part of the tool interface.
struct EpochTraceRow {
    int epoch = 0;
    std::array<double, 4> sl{};
    std::array<double, 4> al{};
    std::array<double, 4> eps{};
    double valid_rmse = 0.0;
    double valid_mae = 0.0;

    static std::string csv_header() {
        return "epoch,sl1,sl2,sl3,sl4,al1,al2,al3,al4,eps1,eps2,eps3,eps4,valid_rmse,valid_mae";
    }

    std::string csv_row() const {
        char buf[640];
        std::snprintf(buf, sizeof(buf),
                      "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                      "%.17g,%.17g,%.17g",
                      epoch, sl[0], sl[1], sl[2], sl[3], al[0], al[1], al[2], al[3], eps[0], eps[1],
                      eps[2], eps[3], valid_rmse, valid_mae);
        return buf;
    }
};

struct JointTrainingResult {
    // Snapshot at the epoch with the best ensemble validation RMSE; the
    // initial untrained state when epochs == 0.
    std::array<ModelParams, 4> models;
    std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};
    int best_epoch = 0;  // 1-based; 0 means no epoch ran
    double best_valid_rmse = std::numeric_limits<double>::quiet_NaN();
    double best_valid_mae = std::numeric_limits<double>::quiet_NaN();

    EnsembleState state;  // full history over all epochs
    std::vector<EpochTraceRow> trace;
};

/// Trains the four variants jointly: each epoch runs train_epoch per model (in
/// parallel workers), scores them on the validation partition, updates the
/// accumulative losses and ensemble weights, and logs a trace row. The test
/// partition is never consulted; weighting reads validation data only.
using EpochCallback = std::function<void(const EpochTraceRow&)>;

inline JointTrainingResult run_joint_training(const std::array<BaseModelConfig, 4>& configs,
                                              const RatingDataset& train,
                                              const RatingDataset& valid, double delta, int epochs,
                                              std::uint64_t seed,
                                              const EpochCallback& on_epoch = {}) {
    for (const auto& cfg : configs) cfg.validate();
    if (delta <= 0.0) throw ConfigError("ensemble delta must be positive");
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");

    JointTrainingResult res;
    res.state.delta = delta;

    std::array<ModelParams, 4> params;
    std::array<AdamState, 4> opt;
    std::vector<Rng> order_rngs;
    for (int t = 0; t < 4; ++t) {
        params[t] = init_params(configs[t], train.num_users, derive_seed(seed, t));
        opt[t] = AdamState(train.num_users, configs[t].hidden_dim);
        order_rngs.emplace_back(derive_seed(seed, 16 + t));
    }
    res.models = params;

    std::array<PredictionMatrix, 4> preds;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        std::array<std::exception_ptr, 4> errors{};
        std::vector<std::thread> workers;
        workers.reserve(4);
        for (int t = 0; t < 4; ++t) {
            workers.emplace_back([&, t]() {
                try {
                    train_epoch(params[t], opt[t], train, configs[t], order_rngs[t]);
                    preds[t] = predict_full(params[t], train);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        for (int t = 0; t < 4; ++t) {
            if (errors[t]) {
                try {
                    std::rethrow_exception(errors[t]);
                } catch (const std::exception& e) {
                    throw TrainingError(variant_name(configs[t]) + " failed at epoch " +
                                        std::to_string(epoch) + ": " + e.what());
                }
            }
        }

        std::array<const PredictionMatrix*, 4> pp{&preds[0], &preds[1], &preds[2], &preds[3]};
        EpochTraceRow row;
        row.epoch = epoch;
        row.sl = separate_loss(pp, valid);
        accumulate(res.state, row.sl);
        row.al = res.state.accumulative_loss;
        row.eps = ensemble_weights(res.state);

        auto ens = ensemble_predict(pp, row.eps);
        row.valid_rmse = rmse(ens, valid);
        row.valid_mae = mae(ens, valid);
        res.trace.push_back(row);
        if (on_epoch) on_epoch(row);

        if (!(row.valid_rmse >= res.best_valid_rmse)) {  // NaN-aware: first epoch always wins
            res.best_valid_rmse = row.valid_rmse;
            res.best_valid_mae = row.valid_mae;
            res.best_epoch = epoch;
            res.models = params;
            res.weights = row.eps;
        }
    }
    return res;
}

inline JointTrainingResult run_joint_training(const std::array<BaseModelConfig, 4>& configs,
                                              const SplitDataset& split, double delta, int epochs,
                                              std::uint64_t seed,
                                              const EpochCallback& on_epoch = {}) {
    return run_joint_training(configs, split.train, split.valid, delta, epochs, seed, on_epoch);
}

}  // namespace mma
