#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <string>

#include "mma/core.hpp"
#include "mma/dataset.hpp"

namespace mma {

template <typename P>
concept PredictionAccessor = requires(const P& p, int user, int item) {
    { p.at(user, item) } -> std::convertible_to<double>;
};

/// Root mean square error over the observed entries of a partition.
template <PredictionAccessor P>
double rmse(const P& preds, const RatingDataset& part) {
    if (part.triples.empty()) throw DataError("rmse: empty partition");
    KahanSum sum;
    for (const auto& t : part.triples) {
        double r = t.rating - preds.at(t.user_id, t.item_id);
        sum.add(r * r);
    }
    return std::sqrt(sum.value() / static_cast<double>(part.triples.size()));
}

/// Mean absolute error over the observed entries of a partition.
template <PredictionAccessor P>
double mae(const P& preds, const RatingDataset& part) {
    if (part.triples.empty()) throw DataError("mae: empty partition");
    KahanSum sum;
    for (const auto& t : part.triples) {
        sum.add(std::abs(t.rating - preds.at(t.user_id, t.item_id)));
    }
    return sum.value() / static_cast<double>(part.triples.size());
}

/// RMSE/MAE of the four base models and the ensemble on one partition.
struct EvalReport {
    std::string partition;  // "valid" or "test"
    std::array<double, 4> per_model_rmse{};
    std::array<double, 4> per_model_mae{};
    double ensemble_rmse = 0.0;
    double ensemble_mae = 0.0;
    std::size_t count = 0;

    /// Flat key-value block.
    std::string to_text() const {
        char buf[128];
        std::string out;
        out += "partition=" + partition + "\n";
        out += "count=" + std::to_string(count) + "\n";
        for (int t = 0; t < 4; ++t) {
            std::snprintf(buf, sizeof(buf), "model%d.rmse=%.12f\nmodel%d.mae=%.12f\n", t + 1,
                          per_model_rmse[t], t + 1, per_model_mae[t]);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), "ensemble.rmse=%.12f\nensemble.mae=%.12f\n", ensemble_rmse,
                      ensemble_mae);
        out += buf;
        return out;
    }

    static std::string csv_header() {
        return "partition,count,m1_rmse,m1_mae,m2_rmse,m2_mae,m3_rmse,m3_mae,m4_rmse,m4_mae,"
               "ensemble_rmse,ensemble_mae";
    }

    std::string csv_row() const {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "%s,%zu,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f",
                      partition.c_str(), count, per_model_rmse[0], per_model_mae[0],
                      per_model_rmse[1], per_model_mae[1], per_model_rmse[2], per_model_mae[2],
                      per_model_rmse[3], per_model_mae[3], ensemble_rmse, ensemble_mae);
        return buf;
    }
};

}  // namespace mma
