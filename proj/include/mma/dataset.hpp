#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mma/core.hpp"

namespace mma {

/// One observed rating, with ids remapped to dense 0-based indices.
struct RatingTriple {
    int user_id = 0;
    int item_id = 0;
    double rating = 0.0;

    friend bool operator==(const RatingTriple&, const RatingTriple&) = default;
};

using ItemColumn = std::vector<std::pair<int, double>>;  // (user_id, rating), sorted by user

/// Sparse user-item rating matrix stored as triples plus per-item column views.
struct RatingDataset {
    int num_users = 0;
    int num_items = 0;
    RatingScale scale;
    std::vector<RatingTriple> triples;
    std::vector<ItemColumn> item_columns;
    // Remapping tables: dense index -> raw id from the source file.
    std::vector<std::int64_t> user_raw_ids;
    std::vector<std::int64_t> item_raw_ids;

    std::size_t observed_count() const { return triples.size(); }

    double density() const {
        if (num_users == 0 || num_items == 0) return 0.0;
        return static_cast<double>(triples.size()) /
               (static_cast<double>(num_users) * static_cast<double>(num_items));
    }

    /// Rebuilds item_columns from triples (sorted by user within each column).
    void build_columns() {
        item_columns.assign(num_items, {});
        for (const auto& t : triples) {
            item_columns[t.item_id].emplace_back(t.user_id, t.rating);
        }
        for (auto& col : item_columns) {
            std::sort(col.begin(), col.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
        }
    }
};

/// All observed ratings of one item, sorted by user_id; empty for cold items.
inline const ItemColumn& item_column(const RatingDataset& data, int item_id) {
    if (item_id < 0 || item_id >= data.num_items) {
        throw DataError("item_column: item index " + std::to_string(item_id) +
                        " out of range [0, " + std::to_string(data.num_items) + ")");
    }
    return data.item_columns[item_id];
}

/// Train/validation/test partitions sharing one (num_users, num_items, scale) header.
struct SplitDataset {
    RatingDataset train;
    RatingDataset valid;
    RatingDataset test;
    std::uint64_t split_seed = 0;
    std::array<double, 3> ratios{0.7, 0.1, 0.2};
};

namespace detail {

inline bool parse_i64(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

inline bool parse_f64(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

inline std::vector<std::string> split_fields(const std::string& line, const std::string& delim) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + delim.size();
    }
    return fields;
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace detail

/// Parses a delimiter-separated rating file: `user<delim>item<delim>rating` with an
/// optional trailing timestamp field (discarded). Raw ids are remapped to dense
/// 0-based indices in first-appearance order.
///
/// `required_fields` of 4 demands the timestamp (MovieLens layouts); 0 accepts
/// either 3 or 4 fields (generic triple exports).
inline RatingDataset parse_delimited(const std::string& path, RatingScale scale,
                                     const std::string& delim, int required_fields = 0,
                                     bool skip_header = false) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open rating file: " + path);
    }

    RatingDataset data;
    data.scale = scale;
    std::unordered_map<std::int64_t, int> user_index;
    std::unordered_map<std::int64_t, int> item_index;
    std::unordered_set<std::uint64_t> seen_pairs;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        if (skip_header && line_no == 1) continue;

        auto fields = detail::split_fields(line, delim);
        bool field_count_ok =
            required_fields > 0 ? static_cast<int>(fields.size()) == required_fields
                                : (fields.size() == 3 || fields.size() == 4);
        if (!field_count_ok) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            (required_fields > 0 ? std::to_string(required_fields)
                                                 : std::string("3 or 4")) +
                            " fields, got " + std::to_string(fields.size()));
        }

        std::int64_t raw_user, raw_item;
        double rating;
        if (!detail::parse_i64(fields[0], raw_user) || !detail::parse_i64(fields[1], raw_item) ||
            !detail::parse_f64(fields[2], rating)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed line");
        }
        if (!scale.contains(rating)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": rating " +
                            std::to_string(rating) + " outside scale [" +
                            std::to_string(scale.min_rating) + ", " +
                            std::to_string(scale.max_rating) + "]");
        }

        auto [uit, user_new] = user_index.try_emplace(raw_user, data.num_users);
        if (user_new) {
            ++data.num_users;
            data.user_raw_ids.push_back(raw_user);
        }
        auto [iit, item_new] = item_index.try_emplace(raw_item, data.num_items);
        if (item_new) {
            ++data.num_items;
            data.item_raw_ids.push_back(raw_item);
        }
        int u = uit->second;
        int i = iit->second;

        std::uint64_t key =
            (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
            static_cast<std::uint32_t>(i);
        if (!seen_pairs.insert(key).second) {
            throw DataError(path + ":" + std::to_string(line_no) + ": duplicate (user, item) pair (" +
                            std::to_string(raw_user) + ", " + std::to_string(raw_item) + ")");
        }

        data.triples.push_back(RatingTriple{u, i, rating});
    }

    if (data.triples.empty()) {
        throw DataError(path + ": empty dataset (no rating lines)");
    }
    data.build_columns();
    return data;
}

/// MovieLens-100k `u.data` layout: `user<TAB>item<TAB>rating<TAB>timestamp`.
inline RatingDataset parse_tab_separated(const std::string& path, RatingScale scale) {
    return parse_delimited(path, scale, "\t", 4);
}

/// MovieLens-1M `ratings.dat` layout: `user::item::rating::timestamp`.
inline RatingDataset parse_double_colon_separated(const std::string& path, RatingScale scale) {
    return parse_delimited(path, scale, "::", 4);
}

/// Canonical dump: `user_id,item_id,rating` with a one-line header, raw ids.
inline void write_canonical_csv(const RatingDataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write canonical dump: " + path);
    }
    out << "user_id,item_id,rating\n";
    char buf[96];
    for (const auto& t : data.triples) {
        std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g\n",
                      static_cast<long long>(data.user_raw_ids[t.user_id]),
                      static_cast<long long>(data.item_raw_ids[t.item_id]), t.rating);
        out << buf;
    }
}

/// Reloads a canonical dump written by write_canonical_csv.
inline RatingDataset read_canonical_csv(const std::string& path, RatingScale scale) {
    return parse_delimited(path, scale, ",", 3, /*skip_header=*/true);
}

/// Partitions triples by a seeded uniform permutation. Identical input and seed
/// reproduce identical partitions. Partition sizes are llround(ratio * n) for
/// train and valid, remainder for test.
inline SplitDataset split_dataset(const RatingDataset& data, std::array<double, 3> ratios,
                                  std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
    }
    if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
        throw ConfigError("split ratios must be nonnegative");
    }
    if (data.triples.empty()) {
        throw DataError("split_dataset: empty dataset");
    }

    const std::size_t n = data.triples.size();
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(seed);
    rng.shuffle(order);

    std::size_t n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
    std::size_t n_valid = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_valid = std::min(n_valid, n - n_train);

    SplitDataset split;
    split.split_seed = seed;
    split.ratios = ratios;
    RatingDataset* parts[3] = {&split.train, &split.valid, &split.test};
    std::size_t bounds[4] = {0, n_train, n_train + n_valid, n};
    for (int p = 0; p < 3; ++p) {
        RatingDataset& part = *parts[p];
        part.num_users = data.num_users;
        part.num_items = data.num_items;
        part.scale = data.scale;
        part.user_raw_ids = data.user_raw_ids;
        part.item_raw_ids = data.item_raw_ids;
        part.triples.reserve(bounds[p + 1] - bounds[p]);
        for (std::size_t i = bounds[p]; i < bounds[p + 1]; ++i) {
            part.triples.push_back(data.triples[order[i]]);
        }
        part.build_columns();
    }
    return split;
}

}  // namespace mma
