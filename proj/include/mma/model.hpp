#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mma/core.hpp"
#include "mma/dataset.hpp"

namespace mma {

enum class Norm { L1, L2 };

inline const char* norm_name(Norm n) { return n == Norm::L1 ? "L1" : "L2"; }

/// Hyperparameters of one base autoencoder. The four (loss_norm, reg_norm)
/// combinations are the four variant models.
struct BaseModelConfig {
    Norm loss_norm = Norm::L2;
    Norm reg_norm = Norm::L2;
    double lambda = 0.01;
    int hidden_dim = 500;
    double learning_rate = 1e-3;
    int epochs = 100;
    int batch_size = 64;  // <= 1 trains per item column

    void validate() const {
        if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
        if (lambda < 0) throw ConfigError("lambda must be nonnegative");
        if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
        if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    }
};

/// 1..4: (L1,L1) (L1,L2) (L2,L1) (L2,L2).
inline int variant_index(const BaseModelConfig& cfg) {
    int i = cfg.loss_norm == Norm::L1 ? 0 : 2;
    int j = cfg.reg_norm == Norm::L1 ? 0 : 1;
    return 1 + i + j;
}

inline std::string variant_name(const BaseModelConfig& cfg) {
    return "MMA-" + std::to_string(variant_index(cfg));
}

/// The four variants sharing one set of hyperparameters.
inline std::array<BaseModelConfig, 4> make_variant_configs(const BaseModelConfig& shared) {
    std::array<BaseModelConfig, 4> out{shared, shared, shared, shared};
    out[0].loss_norm = Norm::L1;
    out[0].reg_norm = Norm::L1;
    out[1].loss_norm = Norm::L1;
    out[1].reg_norm = Norm::L2;
    out[2].loss_norm = Norm::L2;
    out[2].reg_norm = Norm::L1;
    out[3].loss_norm = Norm::L2;
    out[3].reg_norm = Norm::L2;
    return out;
}

/// Parameters of one item-based autoencoder reconstructing user-rating columns.
///
/// The encoder weight matrix is stored transposed: encoder_w.row(u) holds the
/// hidden-layer weights fed by user u's rating, so the sparse encoder pass
/// touches contiguous rows. decoder_w.row(u) produces user u's reconstruction.
struct ModelParams {
    int num_users = 0;
    int hidden_dim = 0;
    Matrix encoder_w;               // num_users x hidden_dim
    std::vector<double> encoder_b;  // hidden_dim
    Matrix decoder_w;               // num_users x hidden_dim
    std::vector<double> decoder_b;  // num_users

    bool same_shape(const ModelParams& o) const {
        return num_users == o.num_users && hidden_dim == o.hidden_dim;
    }
};

/// Partial derivatives, shape-congruent with ModelParams.
struct GradientSet {
    Matrix encoder_w;
    std::vector<double> encoder_b;
    Matrix decoder_w;
    std::vector<double> decoder_b;

    GradientSet() = default;
    GradientSet(int num_users, int hidden_dim)
        : encoder_w(num_users, hidden_dim),
          encoder_b(hidden_dim, 0.0),
          decoder_w(num_users, hidden_dim),
          decoder_b(num_users, 0.0) {}

    void zero() {
        encoder_w.fill(0.0);
        std::fill(encoder_b.begin(), encoder_b.end(), 0.0);
        decoder_w.fill(0.0);
        std::fill(decoder_b.begin(), decoder_b.end(), 0.0);
    }
};

/// Glorot-uniform weights in +-sqrt(6 / (num_users + hidden_dim)), zero biases.
/// Deterministic under seed: encoder then decoder, row-major order.
inline ModelParams init_params(const BaseModelConfig& cfg, int num_users, std::uint64_t seed) {
    cfg.validate();
    if (num_users < 1) throw ConfigError("num_users must be >= 1");

    ModelParams p;
    p.num_users = num_users;
    p.hidden_dim = cfg.hidden_dim;
    p.encoder_w = Matrix(num_users, cfg.hidden_dim);
    p.encoder_b.assign(cfg.hidden_dim, 0.0);
    p.decoder_w = Matrix(num_users, cfg.hidden_dim);
    p.decoder_b.assign(num_users, 0.0);

    const double bound = std::sqrt(6.0 / (static_cast<double>(num_users) + cfg.hidden_dim));
    Rng rng(seed);
    double* enc = p.encoder_w.data();
    for (std::size_t i = 0; i < p.encoder_w.size(); ++i) enc[i] = rng.uniform(-bound, bound);
    double* dec = p.decoder_w.data();
    for (std::size_t i = 0; i < p.decoder_w.size(); ++i) dec[i] = rng.uniform(-bound, bound);
    return p;
}

/// Encoder pre-activation z = V x + mu; unobserved inputs contribute zero.
inline std::vector<double> hidden_preactivation(const ModelParams& p, const ItemColumn& column) {
    std::vector<double> z = p.encoder_b;
    for (const auto& [user, rating] : column) {
        const double* row = p.encoder_w.row(user);
        for (int t = 0; t < p.hidden_dim; ++t) z[t] += rating * row[t];
    }
    return z;
}

inline std::vector<double> hidden_activations(const ModelParams& p, const ItemColumn& column) {
    std::vector<double> h = hidden_preactivation(p, column);
    for (double& v : h) v = sigmoid(v);
    return h;
}

/// Dense reconstruction of an item column: W sigmoid(V x + mu) + b.
inline std::vector<double> forward(const ModelParams& p, const ItemColumn& column) {
    const std::vector<double> h = hidden_activations(p, column);
    std::vector<double> out(p.num_users);
    for (int u = 0; u < p.num_users; ++u) {
        const double* row = p.decoder_w.row(u);
        double acc = p.decoder_b[u];
        for (int t = 0; t < p.hidden_dim; ++t) acc += row[t] * h[t];
        out[u] = acc;
    }
    return out;
}

/// Reconstruction loss over observed entries only.
inline double masked_loss(const std::vector<double>& pred, const ItemColumn& column,
                          Norm loss_norm) {
    double loss = 0.0;
    for (const auto& [user, rating] : column) {
        double r = rating - pred[user];
        loss += loss_norm == Norm::L1 ? std::abs(r) : r * r;
    }
    return loss;
}

/// (lambda/2) * (|V| + |W|) in the chosen norm; biases excluded.
inline double regularization_term(const ModelParams& p, Norm reg_norm, double lambda) {
    if (lambda < 0) throw ConfigError("lambda must be nonnegative");
    double sum = 0.0;
    const Matrix* mats[2] = {&p.encoder_w, &p.decoder_w};
    for (const Matrix* m : mats) {
        const double* a = m->data();
        if (reg_norm == Norm::L1) {
            for (std::size_t i = 0; i < m->size(); ++i) sum += std::abs(a[i]);
        } else {
            for (std::size_t i = 0; i < m->size(); ++i) sum += a[i] * a[i];
        }
    }
    return 0.5 * lambda * sum;
}

namespace detail {

/// Adds the gradient of this column's masked loss into `grad`; returns the loss.
/// Loss gradients flow only through observed input and output entries.
inline double accumulate_column_gradient(const ModelParams& p, const ItemColumn& column,
                                         Norm loss_norm, GradientSet& grad,
                                         std::vector<double>& h_buf,
                                         std::vector<double>& dh_buf) {
    const int hidden = p.hidden_dim;

    h_buf = hidden_preactivation(p, column);
    for (double& v : h_buf) v = sigmoid(v);

    dh_buf.assign(hidden, 0.0);
    double loss = 0.0;
    for (const auto& [user, rating] : column) {
        const double* wrow = p.decoder_w.row(user);
        double pred = p.decoder_b[user];
        for (int t = 0; t < hidden; ++t) pred += wrow[t] * h_buf[t];

        const double resid = rating - pred;
        double g;  // d loss / d pred
        if (loss_norm == Norm::L1) {
            loss += std::abs(resid);
            g = sign0(pred - rating);
        } else {
            loss += resid * resid;
            g = 2.0 * (pred - rating);
        }

        grad.decoder_b[user] += g;
        double* gw = grad.decoder_w.row(user);
        for (int t = 0; t < hidden; ++t) {
            gw[t] += g * h_buf[t];
            dh_buf[t] += g * wrow[t];
        }
    }

    // Through the sigmoid, then into encoder weights of observed users.
    for (int t = 0; t < hidden; ++t) {
        dh_buf[t] *= h_buf[t] * (1.0 - h_buf[t]);
        grad.encoder_b[t] += dh_buf[t];
    }
    for (const auto& [user, rating] : column) {
        double* gv = grad.encoder_w.row(user);
        for (int t = 0; t < hidden; ++t) gv[t] += rating * dh_buf[t];
    }
    return loss;
}

/// Adds the (sub)gradient of regularization_term into `grad`.
inline void add_regularization_gradient(const ModelParams& p, Norm reg_norm, double lambda,
                                        GradientSet& grad) {
    if (lambda == 0.0) return;
    const Matrix* mats[2] = {&p.encoder_w, &p.decoder_w};
    Matrix* grads[2] = {&grad.encoder_w, &grad.decoder_w};
    for (int k = 0; k < 2; ++k) {
        const double* w = mats[k]->data();
        double* g = grads[k]->data();
        const std::size_t n = mats[k]->size();
        if (reg_norm == Norm::L1) {
            const double c = 0.5 * lambda;
            for (std::size_t i = 0; i < n; ++i) g[i] += c * sign0(w[i]);
        } else {
            for (std::size_t i = 0; i < n; ++i) g[i] += lambda * w[i];
        }
    }
}

}  // namespace detail

/// Exact (sub)gradient of masked_loss + regularization_term for one column.
inline GradientSet backward(const ModelParams& p, const ItemColumn& column,
                            const BaseModelConfig& cfg) {
    if (column.empty()) {
        throw DataError("backward: column has no observations");
    }
    GradientSet grad(p.num_users, p.hidden_dim);
    std::vector<double> h_buf, dh_buf;
    detail::accumulate_column_gradient(p, column, cfg.loss_norm, grad, h_buf, dh_buf);
    detail::add_regularization_gradient(p, cfg.reg_norm, cfg.lambda, grad);
    return grad;
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct AdamState {
    std::int64_t step = 0;
    GradientSet first_moment;
    GradientSet second_moment;

    AdamState() = default;
    AdamState(int num_users, int hidden_dim)
        : first_moment(num_users, hidden_dim), second_moment(num_users, hidden_dim) {}
};

namespace detail {

inline void adam_update_block(double* p, const double* g, double* m, double* v, std::size_t n,
                              double lr, double corr1, double corr2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + kAdamEps);
    }
}

}  // namespace detail

/// One Adam step (beta1 0.9, beta2 0.999, eps 1e-8) over all parameter blocks.
/// Aborts with TrainingError on non-finite gradients, leaving params untouched.
inline void optimizer_step(ModelParams& p, const GradientSet& grad, AdamState& state,
                           const BaseModelConfig& cfg) {
    if (!p.encoder_w.same_shape(grad.encoder_w) || !p.decoder_w.same_shape(grad.decoder_w) ||
        p.encoder_b.size() != grad.encoder_b.size() || p.decoder_b.size() != grad.decoder_b.size()) {
        throw ConfigError("optimizer_step: gradient shape mismatch");
    }
    if (state.first_moment.encoder_w.size() == 0) {
        state = AdamState(p.num_users, p.hidden_dim);
    }
    // Scan every block before mutating anything, so a bad gradient leaves both
    // the parameters and the moment estimates untouched.
    if (!all_finite(grad.encoder_w) || !all_finite(grad.encoder_b) ||
        !all_finite(grad.decoder_w) || !all_finite(grad.decoder_b)) {
        throw TrainingError("optimizer_step: non-finite gradient, training aborted");
    }

    const double t = static_cast<double>(state.step + 1);
    const double corr1 = 1.0 - std::pow(kAdamBeta1, t);
    const double corr2 = 1.0 - std::pow(kAdamBeta2, t);
    const double lr = cfg.learning_rate;

    AdamState& s = state;
    detail::adam_update_block(p.encoder_w.data(), grad.encoder_w.data(),
                              s.first_moment.encoder_w.data(), s.second_moment.encoder_w.data(),
                              p.encoder_w.size(), lr, corr1, corr2);
    detail::adam_update_block(p.encoder_b.data(), grad.encoder_b.data(),
                              s.first_moment.encoder_b.data(), s.second_moment.encoder_b.data(),
                              p.encoder_b.size(), lr, corr1, corr2);
    detail::adam_update_block(p.decoder_w.data(), grad.decoder_w.data(),
                              s.first_moment.decoder_w.data(), s.second_moment.decoder_w.data(),
                              p.decoder_w.size(), lr, corr1, corr2);
    detail::adam_update_block(p.decoder_b.data(), grad.decoder_b.data(),
                              s.first_moment.decoder_b.data(), s.second_moment.decoder_b.data(),
                              p.decoder_b.size(), lr, corr1, corr2);
    state.step += 1;
}

/// One pass over all non-empty item columns in a seeded shuffled order.
/// Each optimizer step minimizes the batch's column losses plus one
/// regularization term; batch_size <= 1 reduces to backward() per column.
/// Returns the mean per-column objective: mean masked loss at visit time plus
/// the regularization term at end-of-epoch parameters.
inline double train_epoch(ModelParams& params, AdamState& opt, const RatingDataset& train,
                          const BaseModelConfig& cfg, Rng& order_rng) {
    if (train.triples.empty()) {
        throw DataError("train_epoch: empty training partition");
    }

    std::vector<int> items;
    items.reserve(train.num_items);
    for (int k = 0; k < train.num_items; ++k) {
        if (!train.item_columns[k].empty()) items.push_back(k);
    }
    order_rng.shuffle(items);

    const std::size_t batch = cfg.batch_size <= 1 ? 1 : static_cast<std::size_t>(cfg.batch_size);
    GradientSet grad(params.num_users, params.hidden_dim);
    std::vector<double> h_buf, dh_buf;

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < items.size(); start += batch) {
        const std::size_t end = std::min(items.size(), start + batch);
        grad.zero();
        for (std::size_t i = start; i < end; ++i) {
            loss_sum += detail::accumulate_column_gradient(params, train.item_columns[items[i]],
                                                           cfg.loss_norm, grad, h_buf, dh_buf);
        }
        detail::add_regularization_gradient(params, cfg.reg_norm, cfg.lambda, grad);
        optimizer_step(params, grad, opt, cfg);
    }

    return loss_sum / static_cast<double>(items.size()) +
           regularization_term(params, cfg.reg_norm, cfg.lambda);
}

/// Immutable full-matrix prediction view. Hidden codes are cached per item;
/// entries are decoded on demand and clipped to the rating scale. Items with
/// no training observations decode from sigmoid(mu), the empty-column code.
class PredictionMatrix {
public:
    PredictionMatrix() = default;
    PredictionMatrix(const ModelParams& p, const RatingDataset& train)
        : num_users_(p.num_users),
          num_items_(train.num_items),
          scale_(train.scale),
          codes_(train.num_items, p.hidden_dim),
          decoder_w_(p.decoder_w),
          decoder_b_(p.decoder_b) {
        for (int k = 0; k < train.num_items; ++k) {
            std::vector<double> h = hidden_activations(p, train.item_columns[k]);
            std::copy(h.begin(), h.end(), codes_.row(k));
        }
    }

    int num_users() const { return num_users_; }
    int num_items() const { return num_items_; }
    const RatingScale& scale() const { return scale_; }

    double at(int user, int item) const {
        if (user < 0 || user >= num_users_ || item < 0 || item >= num_items_) {
            throw DataError("prediction index out of range (" + std::to_string(user) + ", " +
                            std::to_string(item) + ")");
        }
        const double* w = decoder_w_.row(user);
        const double* h = codes_.row(item);
        double acc = decoder_b_[user];
        for (int t = 0; t < decoder_w_.cols(); ++t) acc += w[t] * h[t];
        return scale_.clip(acc);
    }

    /// Clipped reconstruction of one item column.
    std::vector<double> column(int item) const {
        std::vector<double> out(num_users_);
        for (int u = 0; u < num_users_; ++u) out[u] = at(u, item);
        return out;
    }

private:
    int num_users_ = 0;
    int num_items_ = 0;
    RatingScale scale_;
    Matrix codes_;  // num_items x hidden
    Matrix decoder_w_;
    std::vector<double> decoder_b_;
};

/// Predictions for every (user, item) entry, reconstructed from the training
/// columns and clipped to the rating scale.
inline PredictionMatrix predict_full(const ModelParams& params, const RatingDataset& train) {
    return PredictionMatrix(params, train);
}

}  // namespace mma
