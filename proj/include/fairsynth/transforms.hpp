#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"
#include "fairsynth/rng.hpp"

namespace fairsynth {

inline Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.schema = dataset.schema;
    out.rows.reserve(indices.size());
    if (dataset.has_weights()) out.weights.reserve(indices.size());
    for (std::size_t i : indices) {
        out.rows.push_back(dataset.rows[i]);
        if (dataset.has_weights()) out.weights.push_back(dataset.weights[i]);
    }
    return out;
}

inline Dataset concat(const Dataset& a, const Dataset& b) {
    if (!(a.schema == b.schema)) throw DataError("cannot concatenate datasets with different schemas");
    Dataset out;
    out.schema = a.schema;
    out.rows = a.rows;
    out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
    if (a.has_weights() || b.has_weights()) {
        out.weights.reserve(out.rows.size());
        for (std::size_t i = 0; i < a.size(); ++i) out.weights.push_back(a.weight(i));
        for (std::size_t i = 0; i < b.size(); ++i) out.weights.push_back(b.weight(i));
    }
    return out;
}

struct SplitResult {
    Dataset train;
    Dataset test;
};

// Disjoint partition with |test| = round(fraction * N). Identical seeds give
// identical partitions; rows keep their original relative order.
inline SplitResult split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
    if (dataset.size() == 0) throw ConfigError("cannot split an empty dataset");
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw ConfigError("test_fraction must lie strictly between 0 and 1");
    const std::size_t n = dataset.size();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_test >= n)
        throw ConfigError("split would leave an empty side (n=" + std::to_string(n) +
                          ", fraction=" + std::to_string(test_fraction) + ")");

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);

    std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    return SplitResult{subset(dataset, train_idx), subset(dataset, test_idx)};
}

enum class BinStrategy { EqualWidth, Quantile };

struct ColumnBinning {
    std::vector<double> edges;  // explicit outer edges; empty means derive from data
    int bin_count = 0;          // used when edges is empty
    BinStrategy strategy = BinStrategy::EqualWidth;
    bool reject_out_of_range = false;  // explicit edges only; default is clamp

    void validate() const {
        if (!edges.empty()) {
            if (edges.size() < 3) throw ConfigError("explicit bin edges must describe at least 2 bins");
            for (std::size_t i = 1; i < edges.size(); ++i)
                if (!(edges[i] > edges[i - 1]))
                    throw ConfigError("bin edges must be strictly increasing");
        } else if (bin_count < 2) {
            throw ConfigError("bin count must be >= 2");
        }
    }
};

struct BinningPolicy {
    std::map<std::string, ColumnBinning> columns;

    bool covers(const std::string& name) const { return columns.count(name) != 0; }
};

// Type-7 quantile (linear interpolation between order statistics).
inline double quantile_interp(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ConfigError("quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    double t = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(t));
    if (lo >= sorted.size() - 1) return sorted.back();
    double frac = t - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

namespace detail {

inline std::vector<double> derive_edges(const std::vector<double>& values, const ColumnBinning& spec) {
    if (!spec.edges.empty()) return spec.edges;
    if (values.empty()) throw ConfigError("cannot derive bin edges from an empty column");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const int k = spec.bin_count;
    std::vector<double> edges;
    edges.reserve(static_cast<std::size_t>(k) + 1);
    if (spec.strategy == BinStrategy::EqualWidth) {
        double lo = sorted.front(), hi = sorted.back();
        for (int i = 0; i <= k; ++i)
            edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k));
    } else {
        edges.push_back(sorted.front());
        for (int i = 1; i < k; ++i)
            edges.push_back(quantile_interp(sorted, static_cast<double>(i) / static_cast<double>(k)));
        edges.push_back(sorted.back());
    }
    return edges;
}

// Largest i with edges[i] <= v, capped to the last bin. Derived (possibly
// non-strict) edges are always clamped; explicit ones honor the reject flag.
inline int bin_index(double v, const std::vector<double>& edges, bool reject, const std::string& col) {
    const int k = static_cast<int>(edges.size()) - 1;
    if (v < edges.front() || v > edges.back()) {
        if (reject)
            throw DataError("value " + render_number(v) + " outside bin edges for column '" + col + "'");
        return v < edges.front() ? 0 : k - 1;
    }
    int idx = 0;
    for (int i = 1; i <= k; ++i) {
        if (edges[static_cast<std::size_t>(i)] <= v) idx = i;
        else break;
    }
    return std::min(idx, k - 1);
}

} // namespace detail

// Numeric columns named by the policy become categorical bin labels b0..b{k-1};
// everything else passes through untouched. Row count is preserved.
inline Dataset discretize(const Dataset& dataset, const BinningPolicy& policy) {
    for (const auto& [name, spec] : policy.columns) {
        if (dataset.schema.index_of(name) < 0)
            throw ConfigError("binning policy names unknown column '" + name + "'");
        spec.validate();
    }

    Dataset out;
    out.schema = dataset.schema;
    out.rows = dataset.rows;
    out.weights = dataset.weights;

    for (std::size_t c = 0; c < out.schema.columns.size(); ++c) {
        ColumnSpec& col = out.schema.columns[c];
        if (col.is_discrete() || !policy.covers(col.name)) continue;
        const ColumnBinning& spec = policy.columns.at(col.name);

        std::vector<double> values;
        values.reserve(dataset.size());
        for (const Row& row : dataset.rows) values.push_back(row[c].number);
        std::vector<double> edges = detail::derive_edges(values, spec);
        const bool reject = !spec.edges.empty() && spec.reject_out_of_range;

        const int k = static_cast<int>(edges.size()) - 1;
        col.kind = k == 2 ? ColumnKind::Binary : ColumnKind::Categorical;
        col.categories.clear();
        for (int i = 0; i < k; ++i) col.categories.push_back("b" + std::to_string(i));

        for (std::size_t r = 0; r < out.rows.size(); ++r)
            out.rows[r][c] = make_level(detail::bin_index(dataset.rows[r][c].number, edges, reject, col.name));
    }
    return out;
}

// Numeric outcome -> binary {0,1} at a config-supplied threshold (> maps to 1).
inline Dataset binarize_outcome(const Dataset& dataset, const std::string& column, double threshold) {
    int ci = dataset.schema.index_of(column);
    if (ci < 0) throw ConfigError("binarize: unknown column '" + column + "'");
    const auto c = static_cast<std::size_t>(ci);
    if (dataset.schema.columns[c].is_discrete())
        throw ConfigError("binarize: column '" + column + "' is already discrete");

    Dataset out;
    out.schema = dataset.schema;
    out.schema.columns[c].kind = ColumnKind::Binary;
    out.schema.columns[c].categories = {"0", "1"};
    out.rows = dataset.rows;
    out.weights = dataset.weights;
    for (std::size_t r = 0; r < out.rows.size(); ++r)
        out.rows[r][c] = make_level(dataset.rows[r][c].number > threshold ? 1 : 0);
    return out;
}

} // namespace fairsynth
