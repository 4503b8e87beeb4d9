#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"

namespace fairsynth {

struct FidelityReport {
    struct ColumnEntry {
        std::string column;
        double value = 0.0;
    };
    std::vector<ColumnEntry> categorical_tv;  // total-variation distance per discrete column
    std::vector<ColumnEntry> numeric_ks;      // two-sample KS statistic per numeric column
    double max_corr_diff = 0.0;               // max |corr_real - corr_synthetic| over column pairs
};

namespace detail {

inline std::vector<double> level_shares(const Dataset& d, std::size_t col, std::size_t n_levels) {
    std::vector<double> shares(n_levels, 0.0);
    for (const Row& r : d.rows) shares[static_cast<std::size_t>(r[col].level)] += 1.0;
    for (double& s : shares) s /= static_cast<double>(d.size());
    return shares;
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double ks = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        ks = std::max(ks, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                                   static_cast<double>(j) / static_cast<double>(b.size())));
    }
    return ks;
}

// Pearson correlation with discrete columns read as level indices; a constant
// column correlates 0 with everything by convention.
inline double column_corr(const Dataset& d, std::size_t a, std::size_t b) {
    auto value = [&](const Row& r, std::size_t c) {
        return d.schema.columns[c].is_discrete() ? static_cast<double>(r[c].level) : r[c].number;
    };
    const double n = static_cast<double>(d.size());
    double ma = 0.0, mb = 0.0;
    for (const Row& r : d.rows) {
        ma += value(r, a);
        mb += value(r, b);
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (const Row& r : d.rows) {
        double da = value(r, a) - ma, db = value(r, b) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace detail

// Distributional distance between two datasets over the same schema,
// computed on raw (undiscretized) columns.
inline FidelityReport fidelity(const Dataset& real, const Dataset& synthetic) {
    if (!(real.schema == synthetic.schema)) throw ConfigError("fidelity requires identical schemas");
    if (real.size() == 0 || synthetic.size() == 0) throw ConfigError("fidelity requires non-empty datasets");

    FidelityReport rep;
    const Schema& schema = real.schema;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        const ColumnSpec& col = schema.columns[c];
        if (col.is_discrete()) {
            auto pr = detail::level_shares(real, c, col.categories.size());
            auto ps = detail::level_shares(synthetic, c, col.categories.size());
            double tv = 0.0;
            for (std::size_t l = 0; l < pr.size(); ++l) tv += std::abs(pr[l] - ps[l]);
            rep.categorical_tv.push_back({col.name, 0.5 * tv});
        } else {
            std::vector<double> a, b;
            for (const Row& r : real.rows) a.push_back(r[c].number);
            for (const Row& r : synthetic.rows) b.push_back(r[c].number);
            rep.numeric_ks.push_back({col.name, detail::ks_statistic(std::move(a), std::move(b))});
        }
    }
    for (std::size_t a = 0; a < schema.columns.size(); ++a)
        for (std::size_t b = a + 1; b < schema.columns.size(); ++b) {
            double diff = std::abs(detail::column_corr(real, a, b) - detail::column_corr(synthetic, a, b));
            rep.max_corr_diff = std::max(rep.max_corr_diff, diff);
        }
    return rep;
}

struct BalanceEntry {
    std::string column;
    std::string majority_level;  // the real data's most frequent level
    double real_share = 0.0;
    double synthetic_share = 0.0;
};

inline std::vector<BalanceEntry> balance_report(const Dataset& real, const Dataset& synthetic,
                                                const std::vector<std::string>& columns) {
    if (!(real.schema == synthetic.schema)) throw ConfigError("balance report requires identical schemas");
    std::vector<BalanceEntry> out;
    for (const std::string& name : columns) {
        int ci = real.schema.index_of(name);
        if (ci < 0) throw ConfigError("balance report column '" + name + "' not in schema");
        const ColumnSpec& col = real.schema.columns[static_cast<std::size_t>(ci)];
        if (!col.is_discrete())
            throw ConfigError("balance report column '" + name + "' must be categorical");
        auto pr = detail::level_shares(real, static_cast<std::size_t>(ci), col.categories.size());
        auto ps = detail::level_shares(synthetic, static_cast<std::size_t>(ci), col.categories.size());
        std::size_t maj = 0;
        for (std::size_t l = 1; l < pr.size(); ++l)
            if (pr[l] > pr[maj]) maj = l;
        out.push_back({name, col.categories[maj], pr[maj], ps[maj]});
    }
    return out;
}

} // namespace fairsynth
