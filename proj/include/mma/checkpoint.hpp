#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mma/core.hpp"
#include "mma/dataset.hpp"
#include "mma/ensemble.hpp"
#include "mma/eval.hpp"
#include "mma/model.hpp"

namespace mma {

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xffffffffu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i64(std::int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        buf_.append(s);
    }
    void f64_array(const double* p, std::size_t n) {
        u64(n);
        raw(p, n * 8);
    }
    void i64_array(const std::vector<std::int64_t>& v) {
        u64(v.size());
        raw(v.data(), v.size() * 8);
    }
    const std::string& bytes() const { return buf_; }

private:
    void raw(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const char* p, std::size_t n) : p_(p), n_(n) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() { return read_as<std::uint32_t>(); }
    std::uint64_t u64() { return read_as<std::uint64_t>(); }
    std::int64_t i64() { return read_as<std::int64_t>(); }
    double f64() { return read_as<double>(); }
    std::string str() {
        std::uint64_t n = u64();
        const char* p = take(n);
        return std::string(p, n);
    }
    std::vector<double> f64_array() {
        std::uint64_t n = u64();
        const char* p = take(n * 8);
        std::vector<double> v(n);
        std::memcpy(v.data(), p, n * 8);
        return v;
    }
    std::vector<std::int64_t> i64_array() {
        std::uint64_t n = u64();
        const char* p = take(n * 8);
        std::vector<std::int64_t> v(n);
        std::memcpy(v.data(), p, n * 8);
        return v;
    }
    bool exhausted() const { return pos_ == n_; }

private:
    template <typename T>
    T read_as() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(std::size_t n) {
        if (pos_ + n > n_) throw DataError("checkpoint truncated");
        const char* p = p_ + pos_;
        pos_ += n;
        return p;
    }
    const char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Everything needed to reload a trained run: dataset reference, split seeds,
/// the four variant configs and parameter blocks, ensemble state, and the
/// training-time reports.
struct Checkpoint {
    std::string dataset_path;
    std::string dataset_format;  // "tab", "dcolon", "csv" or "custom"
    std::string delimiter;       // used when dataset_format == "custom"
    RatingScale scale;
    std::array<double, 3> ratios{0.7, 0.1, 0.2};
    std::uint64_t split_seed = 0;
    std::uint64_t train_seed = 0;

    double delta = 20.0;
    int best_epoch = 0;
    std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};
    std::array<double, 4> accumulative_loss{};
    std::vector<std::array<double, 4>> sl_history;

    std::vector<std::int64_t> user_raw_ids;
    std::vector<std::int64_t> item_raw_ids;

    std::array<BaseModelConfig, 4> configs;
    std::array<ModelParams, 4> models;

    EvalReport valid_report;
    EvalReport test_report;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'M', 'A', 'C', 'K', 'P', 'T', '1'};

inline void write_config(ByteWriter& w, const BaseModelConfig& c) {
    w.u8(c.loss_norm == Norm::L1 ? 1 : 2);
    w.u8(c.reg_norm == Norm::L1 ? 1 : 2);
    w.f64(c.lambda);
    w.u32(static_cast<std::uint32_t>(c.hidden_dim));
    w.f64(c.learning_rate);
    w.u32(static_cast<std::uint32_t>(c.epochs));
    w.u32(static_cast<std::uint32_t>(c.batch_size));
}

inline BaseModelConfig read_config(ByteReader& r) {
    BaseModelConfig c;
    c.loss_norm = r.u8() == 1 ? Norm::L1 : Norm::L2;
    c.reg_norm = r.u8() == 1 ? Norm::L1 : Norm::L2;
    c.lambda = r.f64();
    c.hidden_dim = static_cast<int>(r.u32());
    c.learning_rate = r.f64();
    c.epochs = static_cast<int>(r.u32());
    c.batch_size = static_cast<int>(r.u32());
    return c;
}

inline void write_params(ByteWriter& w, const ModelParams& p) {
    w.u32(static_cast<std::uint32_t>(p.num_users));
    w.u32(static_cast<std::uint32_t>(p.hidden_dim));
    w.f64_array(p.encoder_w.data(), p.encoder_w.size());
    w.f64_array(p.encoder_b.data(), p.encoder_b.size());
    w.f64_array(p.decoder_w.data(), p.decoder_w.size());
    w.f64_array(p.decoder_b.data(), p.decoder_b.size());
}

inline ModelParams read_params(ByteReader& r) {
    ModelParams p;
    p.num_users = static_cast<int>(r.u32());
    p.hidden_dim = static_cast<int>(r.u32());
    auto load_matrix = [&](Matrix& m, int rows, int cols) {
        std::vector<double> a = r.f64_array();
        if (a.size() != static_cast<std::size_t>(rows) * cols) {
            throw DataError("checkpoint parameter block has wrong size");
        }
        m = Matrix(rows, cols);
        std::memcpy(m.data(), a.data(), a.size() * 8);
    };
    load_matrix(p.encoder_w, p.num_users, p.hidden_dim);
    p.encoder_b = r.f64_array();
    load_matrix(p.decoder_w, p.num_users, p.hidden_dim);
    p.decoder_b = r.f64_array();
    if (p.encoder_b.size() != static_cast<std::size_t>(p.hidden_dim) ||
        p.decoder_b.size() != static_cast<std::size_t>(p.num_users)) {
        throw DataError("checkpoint bias block has wrong size");
    }
    return p;
}

inline void write_report(ByteWriter& w, const EvalReport& rep) {
    w.str(rep.partition);
    w.u64(rep.count);
    for (int t = 0; t < 4; ++t) w.f64(rep.per_model_rmse[t]);
    for (int t = 0; t < 4; ++t) w.f64(rep.per_model_mae[t]);
    w.f64(rep.ensemble_rmse);
    w.f64(rep.ensemble_mae);
}

inline EvalReport read_report(ByteReader& r) {
    EvalReport rep;
    rep.partition = r.str();
    rep.count = r.u64();
    for (int t = 0; t < 4; ++t) rep.per_model_rmse[t] = r.f64();
    for (int t = 0; t < 4; ++t) rep.per_model_mae[t] = r.f64();
    rep.ensemble_rmse = r.f64();
    rep.ensemble_mae = r.f64();
    return rep;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    detail::ByteWriter w;
    w.str(ck.dataset_path);
    w.str(ck.dataset_format);
    w.str(ck.delimiter);
    w.f64(ck.scale.min_rating);
    w.f64(ck.scale.max_rating);
    for (double r : ck.ratios) w.f64(r);
    w.u64(ck.split_seed);
    w.u64(ck.train_seed);
    w.f64(ck.delta);
    w.u32(static_cast<std::uint32_t>(ck.best_epoch));
    for (double v : ck.weights) w.f64(v);
    for (double v : ck.accumulative_loss) w.f64(v);
    w.u64(ck.sl_history.size());
    for (const auto& sl : ck.sl_history) {
        for (double v : sl) w.f64(v);
    }
    w.i64_array(ck.user_raw_ids);
    w.i64_array(ck.item_raw_ids);
    for (int t = 0; t < 4; ++t) detail::write_config(w, ck.configs[t]);
    for (int t = 0; t < 4; ++t) detail::write_params(w, ck.models[t]);
    detail::write_report(w, ck.valid_report);
    detail::write_report(w, ck.test_report);

    const std::string& payload = w.bytes();
    std::uint32_t crc =
        detail::crc32(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(detail::kCheckpointMagic, 8);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&crc), 4);
    if (!out) throw DataError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0) {
        throw DataError("checkpoint integrity error: bad magic in " + path);
    }
    const std::size_t payload_size = bytes.size() - 12;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + 8 + payload_size, 4);
    std::uint32_t crc = detail::crc32(
        reinterpret_cast<const unsigned char*>(bytes.data()) + 8, payload_size);
    if (crc != stored_crc) {
        throw DataError("checkpoint integrity error: checksum mismatch in " + path);
    }

    detail::ByteReader r(bytes.data() + 8, payload_size);
    Checkpoint ck;
    ck.dataset_path = r.str();
    ck.dataset_format = r.str();
    ck.delimiter = r.str();
    ck.scale.min_rating = r.f64();
    ck.scale.max_rating = r.f64();
    for (double& v : ck.ratios) v = r.f64();
    ck.split_seed = r.u64();
    ck.train_seed = r.u64();
    ck.delta = r.f64();
    ck.best_epoch = static_cast<int>(r.u32());
    for (double& v : ck.weights) v = r.f64();
    for (double& v : ck.accumulative_loss) v = r.f64();
    std::uint64_t hist = r.u64();
    ck.sl_history.resize(hist);
    for (auto& sl : ck.sl_history) {
        for (double& v : sl) v = r.f64();
    }
    ck.user_raw_ids = r.i64_array();
    ck.item_raw_ids = r.i64_array();
    for (int t = 0; t < 4; ++t) ck.configs[t] = detail::read_config(r);
    for (int t = 0; t < 4; ++t) ck.models[t] = detail::read_params(r);
    ck.valid_report = detail::read_report(r);
    ck.test_report = detail::read_report(r);
    if (!r.exhausted()) {
        throw DataError("checkpoint integrity error: trailing bytes in " + path);
    }
    return ck;
}

}  // namespace mma
