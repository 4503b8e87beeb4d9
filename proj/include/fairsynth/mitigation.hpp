#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"
#include "fairsynth/transforms.hpp"

namespace fairsynth {

struct MitigationOutcome {
    Dataset data;
    struct AuditEntry {
        std::string column;
        std::string action;  // dropped | kept | residualized | repaired | weighted
        double value = 0.0;
    };
    std::vector<AuditEntry> audit;
    std::string method;
};

namespace detail {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

inline double cramers_v(const Dataset& d, std::size_t a, std::size_t b) {
    const std::size_t ra = d.schema.columns[a].categories.size();
    const std::size_t rb = d.schema.columns[b].categories.size();
    std::vector<double> table(ra * rb, 0.0), rowsum(ra, 0.0), colsum(rb, 0.0);
    const double n = static_cast<double>(d.size());
    for (const Row& r : d.rows) {
        const auto la = static_cast<std::size_t>(r[a].level);
        const auto lb = static_cast<std::size_t>(r[b].level);
        table[la * rb + lb] += 1.0;
        rowsum[la] += 1.0;
        colsum[lb] += 1.0;
    }
    double chi2 = 0.0;
    for (std::size_t i = 0; i < ra; ++i)
        for (std::size_t j = 0; j < rb; ++j) {
            const double expect = rowsum[i] * colsum[j] / n;
            if (expect <= 0.0) continue;
            const double diff = table[i * rb + j] - expect;
            chi2 += diff * diff / expect;
        }
    std::size_t robs = 0, cobs = 0;
    for (double v : rowsum) robs += v > 0.0;
    for (double v : colsum) cobs += v > 0.0;
    const auto k = static_cast<double>(std::min(robs, cobs));
    if (k < 2.0) return 0.0;  // a constant column carries no association
    return std::sqrt(chi2 / (n * (k - 1.0)));
}

// max |pearson| of a numeric column against each sensitive level indicator
inline double point_biserial_max(const Dataset& d, std::size_t num_col, std::size_t sens_col) {
    std::vector<double> v;
    v.reserve(d.size());
    for (const Row& r : d.rows) v.push_back(r[num_col].number);
    double best = 0.0;
    const std::size_t levels = d.schema.columns[sens_col].categories.size();
    for (std::size_t l = 0; l < levels; ++l) {
        std::vector<double> ind;
        ind.reserve(d.size());
        for (const Row& r : d.rows)
            ind.push_back(r[sens_col].level == static_cast<int>(l) ? 1.0 : 0.0);
        best = std::max(best, std::abs(pearson(v, ind)));
    }
    return best;
}

inline Dataset drop_columns(const Dataset& d, const std::vector<std::size_t>& drops) {
    std::vector<bool> dead(d.schema.columns.size(), false);
    for (std::size_t c : drops) dead[c] = true;
    Dataset out;
    for (std::size_t c = 0; c < d.schema.columns.size(); ++c)
        if (!dead[c]) out.schema.columns.push_back(d.schema.columns[c]);
    out.rows.reserve(d.size());
    for (const Row& r : d.rows) {
        Row slim;
        slim.reserve(out.schema.columns.size());
        for (std::size_t c = 0; c < r.size(); ++c)
            if (!dead[c]) slim.push_back(r[c]);
        out.rows.push_back(std::move(slim));
    }
    out.weights = d.weights;
    return out;
}

// solve A x = b by Gaussian elimination with partial pivoting; A is small
inline std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t k = b.size();
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < k; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-12)
            throw DataError("rank-deficient sensitive design in correlation remover");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < k; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < k; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(k, 0.0);
    for (std::size_t r = k; r-- > 0;) {
        double acc = b[r];
        for (std::size_t c = r + 1; c < k; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    return x;
}

} // namespace detail

// Drop the sensitive column plus every feature associated with it beyond the
// threshold (point-biserial for numerics, Cramer's V for categoricals).
inline MitigationOutcome suppress(const Dataset& dataset, const SfmRoles& roles,
                                  double corr_threshold = 0.45) {
    if (!(corr_threshold > 0.0 && corr_threshold <= 1.0))
        throw ConfigError("corr_threshold must be in (0, 1]");
    roles.validate(dataset.schema);
    if (dataset.size() == 0) throw ConfigError("cannot suppress on an empty dataset");
    const auto sx = static_cast<std::size_t>(dataset.schema.index_of(roles.sensitive));
    const auto oy = static_cast<std::size_t>(dataset.schema.index_of(roles.outcome));

    MitigationOutcome out;
    out.method = "suppress";
    std::vector<std::size_t> drops = {sx};
    out.audit.push_back({roles.sensitive, "dropped", 1.0});
    std::size_t features_left = 0;
    for (std::size_t c = 0; c < dataset.schema.columns.size(); ++c) {
        if (c == sx || c == oy) continue;
        const double assoc = dataset.schema.columns[c].is_discrete()
                                 ? detail::cramers_v(dataset, c, sx)
                                 : detail::point_biserial_max(dataset, c, sx);
        if (assoc > corr_threshold) {
            drops.push_back(c);
            out.audit.push_back({dataset.schema.columns[c].name, "dropped", assoc});
        } else {
            ++features_left;
            out.audit.push_back({dataset.schema.columns[c].name, "kept", assoc});
        }
    }
    if (features_left == 0)
        throw DataError("suppression would drop every feature column");
    out.data = detail::drop_columns(dataset, drops);
    return out;
}

// v' = v - alpha * S bhat per numeric feature, with S the centered one-hot of
// the sensitive column less its first observed level. alpha=0 must leave the
// dataset byte-identical, so rows are copied before any arithmetic.
inline MitigationOutcome correlation_remover(const Dataset& dataset, const SfmRoles& roles,
                                             double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
    roles.validate(dataset.schema);
    if (dataset.size() == 0) throw ConfigError("cannot transform an empty dataset");
    const auto sx = static_cast<std::size_t>(dataset.schema.index_of(roles.sensitive));
    const auto oy = static_cast<std::size_t>(dataset.schema.index_of(roles.outcome));

    MitigationOutcome out;
    out.method = "correlation_remover";
    out.data = dataset;

    std::vector<std::size_t> numeric_cols;
    for (std::size_t c = 0; c < dataset.schema.columns.size(); ++c)
        if (c != sx && c != oy && !dataset.schema.columns[c].is_discrete()) numeric_cols.push_back(c);
    if (numeric_cols.empty()) throw ConfigError("correlation remover needs at least one numeric feature");

    std::vector<int> observed;
    {
        std::vector<bool> seen(dataset.schema.columns[sx].categories.size(), false);
        for (const Row& r : dataset.rows) seen[static_cast<std::size_t>(r[sx].level)] = true;
        for (std::size_t l = 0; l < seen.size(); ++l)
            if (seen[l]) observed.push_back(static_cast<int>(l));
    }
    if (observed.size() < 2)
        throw DataError("rank-deficient sensitive design in correlation remover: one observed level");

    const std::size_t n = dataset.size();
    const std::size_t k = observed.size() - 1;  // first observed level dropped
    std::vector<std::vector<double>> s(k, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < k; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s[j][i] = dataset.rows[i][sx].level == observed[j + 1] ? 1.0 : 0.0;
            mean += s[j][i];
        }
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) s[j][i] -= mean;
    }

    std::vector<std::vector<double>> ata(k, std::vector<double>(k, 0.0));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a; b < k; ++b) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += s[a][i] * s[b][i];
            ata[a][b] = ata[b][a] = acc;
        }

    for (std::size_t c : numeric_cols) {
        double mean = 0.0;
        for (const Row& r : dataset.rows) mean += r[c].number;
        mean /= static_cast<double>(n);
        std::vector<double> atb(k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += s[j][i] * (dataset.rows[i][c].number - mean);
            atb[j] = acc;
        }
        std::vector<double> beta = detail::solve_linear(ata, atb);
        if (alpha > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                double proj = 0.0;
                for (std::size_t j = 0; j < k; ++j) proj += s[j][i] * beta[j];
                out.data.rows[i][c].number = dataset.rows[i][c].number - alpha * proj;
            }
        }
        out.audit.push_back({dataset.schema.columns[c].name, "residualized", alpha});
    }
    return out;
}

// Midrank within-group CDF, interpolated quantiles, and the median quantile
// function across groups: x in group g maps to (1-lambda) x + lambda Q(F_g(x)).
inline MitigationOutcome disparate_impact_remover(const Dataset& dataset, const SfmRoles& roles,
                                                  double repair_level) {
    if (!(repair_level >= 0.0 && repair_level <= 1.0))
        throw ConfigError("repair_level must be in [0, 1]");
    roles.validate(dataset.schema);
    if (dataset.size() == 0) throw ConfigError("cannot repair an empty dataset");
    const auto sx = static_cast<std::size_t>(dataset.schema.index_of(roles.sensitive));
    const auto oy = static_cast<std::size_t>(dataset.schema.index_of(roles.outcome));
    const ColumnSpec& sens = dataset.schema.columns[sx];

    MitigationOutcome out;
    out.method = "disparate_impact_remover";
    out.data = dataset;

    std::vector<std::vector<std::size_t>> group_rows(sens.categories.size());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        group_rows[static_cast<std::size_t>(dataset.rows[i][sx].level)].push_back(i);
    std::vector<std::size_t> groups;
    for (std::size_t g = 0; g < group_rows.size(); ++g) {
        if (group_rows[g].empty()) continue;
        if (group_rows[g].size() < 2)
            throw DataError("group '" + sens.categories[g] + "' has fewer than 2 rows, quantiles undefined");
        groups.push_back(g);
    }

    for (std::size_t c = 0; c < dataset.schema.columns.size(); ++c) {
        if (c == sx || c == oy || dataset.schema.columns[c].is_discrete()) continue;
        if (repair_level > 0.0) {
            std::vector<std::vector<double>> sorted(groups.size());
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                for (std::size_t i : group_rows[groups[gi]]) sorted[gi].push_back(dataset.rows[i][c].number);
                std::sort(sorted[gi].begin(), sorted[gi].end());
            }
            auto median_quantile = [&](double q) {
                std::vector<double> vals;
                vals.reserve(groups.size());
                for (const auto& sv : sorted) vals.push_back(quantile_interp(sv, q));
                std::sort(vals.begin(), vals.end());
                return quantile_interp(vals, 0.5);
            };
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                const auto& sv = sorted[gi];
                const double denom = static_cast<double>(sv.size() - 1);
                for (std::size_t i : group_rows[groups[gi]]) {
                    const double x = dataset.rows[i][c].number;
                    const auto lo = std::lower_bound(sv.begin(), sv.end(), x) - sv.begin();
                    const auto hi = std::upper_bound(sv.begin(), sv.end(), x) - sv.begin();
                    const double rank =
                        (static_cast<double>(lo) + (static_cast<double>(hi - lo) - 1.0) / 2.0) / denom;
                    out.data.rows[i][c].number =
                        (1.0 - repair_level) * x + repair_level * median_quantile(rank);
                }
            }
        }
        out.audit.push_back({dataset.schema.columns[c].name, "repaired", repair_level});
    }
    return out;
}

// w(a, y) = P(a) P(y) / P(a, y), multiplied onto any existing row weights.
inline MitigationOutcome reweigh(const Dataset& dataset, const SfmRoles& roles) {
    roles.validate(dataset.schema);
    roles.require_binary_outcome(dataset.schema);
    if (dataset.size() == 0) throw ConfigError("cannot reweigh an empty dataset");
    const auto sx = static_cast<std::size_t>(dataset.schema.index_of(roles.sensitive));
    const auto oy = static_cast<std::size_t>(dataset.schema.index_of(roles.outcome));
    const std::size_t na = dataset.schema.columns[sx].categories.size();

    std::vector<double> n_ay(na * 2, 0.0), n_a(na, 0.0);
    double n_y[2] = {0.0, 0.0}, total = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto a = static_cast<std::size_t>(dataset.rows[i][sx].level);
        const auto y = static_cast<std::size_t>(dataset.rows[i][oy].level);
        const double w = dataset.weight(i);
        n_ay[a * 2 + y] += w;
        n_a[a] += w;
        n_y[y] += w;
        total += w;
    }
    if (n_y[0] <= 0.0 || n_y[1] <= 0.0) throw DataError("reweighing needs both outcome classes");

    MitigationOutcome out;
    out.method = "reweigh";
    out.data = dataset;
    std::vector<double> factor(na * 2, 1.0);
    for (std::size_t a = 0; a < na; ++a) {
        if (n_a[a] <= 0.0) continue;  // unobserved level never multiplies anything
        for (std::size_t y = 0; y < 2; ++y) {
            if (n_ay[a * 2 + y] <= 0.0)
                throw DataError("empty (a=" + dataset.schema.columns[sx].categories[a] +
                                ", y=" + dataset.schema.columns[oy].categories[y] +
                                ") cell, reweighing undefined");
            factor[a * 2 + y] = n_a[a] * n_y[y] / (total * n_ay[a * 2 + y]);
            out.audit.push_back({dataset.schema.columns[sx].categories[a] + "," +
                                     dataset.schema.columns[oy].categories[y],
                                 "weighted", factor[a * 2 + y]});
        }
    }
    out.data.weights.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto a = static_cast<std::size_t>(dataset.rows[i][sx].level);
        const auto y = static_cast<std::size_t>(dataset.rows[i][oy].level);
        out.data.weights[i] = dataset.weight(i) * factor[a * 2 + y];
    }
    return out;
}

} // namespace fairsynth
