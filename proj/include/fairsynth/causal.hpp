#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"
#include "fairsynth/rng.hpp"
#include "fairsynth/transforms.hpp"

namespace fairsynth {

// Plug-in nuisance estimates over discretized (x, z, w) cells. x ranges over
// the two contrast levels only; z and w are mixed-radix joint indices over
// the mediator and confounder columns.
struct EffectModel {
    std::string x0, x1;
    std::size_t nz = 1, nw = 1;
    double alpha = 0.5;

    std::vector<double> mu;        // [2 * nw * nz], shrunk toward the global mean
    std::vector<double> pz_xw;     // [2 * nw * nz], sums to 1 over z per (x, w)
    std::vector<double> pw_x;      // [2 * nw], sums to 1 over w per x
    std::vector<double> support;   // [2 * nw * nz], weighted cell counts
    double group_mean0 = 0.0, group_mean1 = 0.0;  // unsmoothed, for raw_tv
    std::vector<std::string> warnings;

    std::size_t cell(int x, std::size_t w, std::size_t z) const {
        return (static_cast<std::size_t>(x) * nw + w) * nz + z;
    }
};

struct CausalEffects {
    double tv = 0.0, de = 0.0, ie = 0.0, se = 0.0;
    double raw_tv = 0.0;
    struct Spread {
        double tv = 0.0, de = 0.0, ie = 0.0, se = 0.0, raw_tv = 0.0;
    };
    std::optional<Spread> sd;
};

namespace detail {

struct CellLayout {
    std::vector<std::size_t> z_cols, w_cols;
    std::vector<std::size_t> z_card, w_card;
    std::size_t nz = 1, nw = 1;
};

inline CellLayout effect_layout(const Schema& schema, const SfmRoles& roles) {
    CellLayout layout;
    auto add = [&](const std::string& name, std::vector<std::size_t>& cols,
                   std::vector<std::size_t>& cards, std::size_t& total, const char* kind) {
        int ci = schema.index_of(name);
        const ColumnSpec& col = schema.columns[static_cast<std::size_t>(ci)];
        if (!col.is_discrete())
            throw ConfigError(std::string(kind) + " column '" + name +
                              "' is numeric; provide a binning policy for it");
        cols.push_back(static_cast<std::size_t>(ci));
        cards.push_back(col.categories.size());
        total *= col.categories.size();
    };
    for (const std::string& m : roles.mediators) add(m, layout.z_cols, layout.z_card, layout.nz, "mediator");
    for (const std::string& w : roles.confounders(schema))
        add(w, layout.w_cols, layout.w_card, layout.nw, "confounder");
    if (layout.nz * layout.nw > 1000000)
        throw ConfigError("joint (z, w) cell space has " + std::to_string(layout.nz * layout.nw) +
                          " cells, limit is 1000000");
    return layout;
}

inline std::size_t joint_index(const Row& row, const std::vector<std::size_t>& cols,
                               const std::vector<std::size_t>& cards) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < cols.size(); ++i)
        idx = idx * cards[i] + static_cast<std::size_t>(row[cols[i]].level);
    return idx;
}

} // namespace detail

// Fit the nuisance model from covariates plus a target vector of labels or
// scores in [0, 1]. Weighted rows contribute their weight to every count.
inline EffectModel fit_effect_model(const Dataset& dataset, const SfmRoles& roles,
                                    const std::vector<double>& target, const BinningPolicy& binning,
                                    double alpha = 0.5) {
    if (alpha < 0.0 || !std::isfinite(alpha)) throw ConfigError("smoothing alpha must be >= 0");
    if (target.size() != dataset.size())
        throw ConfigError("target vector length " + std::to_string(target.size()) +
                          " does not match dataset size " + std::to_string(dataset.size()));
    roles.validate(dataset.schema);
    for (double y : target)
        if (!(y >= 0.0 && y <= 1.0))
            throw DataError("target value " + render_number(y) + " outside [0, 1]");

    Dataset data = binning.columns.empty() ? dataset : discretize(dataset, binning);
    const Schema& schema = data.schema;
    const auto sx = static_cast<std::size_t>(schema.index_of(roles.sensitive));
    const ColumnSpec& xcol = schema.columns[sx];
    const int l0 = xcol.level_of(roles.baseline_level);
    const int l1 = xcol.level_of(roles.comparison_level);

    detail::CellLayout layout = detail::effect_layout(schema, roles);
    EffectModel model;
    model.x0 = roles.baseline_level;
    model.x1 = roles.comparison_level;
    model.nz = layout.nz;
    model.nw = layout.nw;
    model.alpha = alpha;

    const std::size_t cells = 2 * layout.nw * layout.nz;
    std::vector<double> n_xwz(cells, 0.0), y_xwz(cells, 0.0);
    std::vector<double> n_xw(2 * layout.nw, 0.0);
    double n_x[2] = {0.0, 0.0}, y_x[2] = {0.0, 0.0};
    double n_all = 0.0, y_all = 0.0;

    for (std::size_t r = 0; r < data.size(); ++r) {
        const Row& row = data.rows[r];
        const int xl = row[sx].level;
        int x;
        if (xl == l0) x = 0;
        else if (xl == l1) x = 1;
        else continue;  // other sensitive levels sit outside this contrast
        const double wgt = data.weight(r);
        const std::size_t z = detail::joint_index(row, layout.z_cols, layout.z_card);
        const std::size_t w = detail::joint_index(row, layout.w_cols, layout.w_card);
        const std::size_t c = model.cell(x, w, z);
        n_xwz[c] += wgt;
        y_xwz[c] += wgt * target[r];
        n_xw[static_cast<std::size_t>(x) * layout.nw + w] += wgt;
        n_x[x] += wgt;
        y_x[x] += wgt * target[r];
        n_all += wgt;
        y_all += wgt * target[r];
    }

    if (n_x[0] <= 0.0)
        throw DataError("sensitive level '" + roles.baseline_level + "' absent from the data");
    if (n_x[1] <= 0.0)
        throw DataError("sensitive level '" + roles.comparison_level + "' absent from the data");

    const double global_mean = y_all / n_all;
    model.group_mean0 = y_x[0] / n_x[0];
    model.group_mean1 = y_x[1] / n_x[1];
    model.support = n_xwz;
    model.mu.resize(cells);
    model.pz_xw.resize(cells);
    model.pw_x.resize(2 * layout.nw);

    std::size_t warned_mu = 0, warned_pz = 0;
    for (int x = 0; x < 2; ++x) {
        for (std::size_t w = 0; w < layout.nw; ++w) {
            const std::size_t xw = static_cast<std::size_t>(x) * layout.nw + w;
            const double nw_count = n_xw[xw];
            model.pw_x[xw] = alpha > 0.0
                                 ? (nw_count + alpha) / (n_x[x] + alpha * static_cast<double>(layout.nw))
                                 : nw_count / n_x[x];
            for (std::size_t z = 0; z < layout.nz; ++z) {
                const std::size_t c = model.cell(x, w, z);
                if (alpha > 0.0) {
                    model.pz_xw[c] = (n_xwz[c] + alpha) / (nw_count + alpha * static_cast<double>(layout.nz));
                    model.mu[c] = (y_xwz[c] + alpha * global_mean) / (n_xwz[c] + alpha);
                } else {
                    if (nw_count > 0.0) {
                        model.pz_xw[c] = n_xwz[c] / nw_count;
                    } else {
                        model.pz_xw[c] = 1.0 / static_cast<double>(layout.nz);
                        ++warned_pz;
                    }
                    if (n_xwz[c] > 0.0) {
                        model.mu[c] = y_xwz[c] / n_xwz[c];
                    } else {
                        model.mu[c] = global_mean;
                        ++warned_mu;
                    }
                }
            }
        }
    }
    if (warned_pz > 0)
        model.warnings.push_back("alpha=0 with " + std::to_string(warned_pz) +
                                 " empty (x, w) conditioning cells: used uniform P(z | x, w)");
    if (warned_mu > 0)
        model.warnings.push_back("alpha=0 with " + std::to_string(warned_mu) +
                                 " empty (x, z, w) cells: used the global mean for mu");
    return model;
}

// Target taken from a column: binary labels or numeric scores in [0, 1].
inline EffectModel fit_effect_model(const Dataset& dataset, const SfmRoles& roles,
                                    const std::string& target_column, const BinningPolicy& binning,
                                    double alpha = 0.5) {
    int ci = dataset.schema.index_of(target_column);
    if (ci < 0) throw ConfigError("target column '" + target_column + "' not in schema");
    const ColumnSpec& col = dataset.schema.columns[static_cast<std::size_t>(ci)];
    std::vector<double> target;
    target.reserve(dataset.size());
    if (col.kind == ColumnKind::Binary) {
        for (const Row& row : dataset.rows)
            target.push_back(static_cast<double>(row[static_cast<std::size_t>(ci)].level));
    } else if (col.kind == ColumnKind::Numeric) {
        for (const Row& row : dataset.rows) target.push_back(row[static_cast<std::size_t>(ci)].number);
    } else {
        throw ConfigError("target column '" + target_column + "' must be binary or numeric scores");
    }
    return fit_effect_model(dataset, roles, target, binning, alpha);
}

inline CausalEffects estimate_effects(const EffectModel& model, const std::string& x0,
                                      const std::string& x1) {
    if (x0 != model.x0 || x1 != model.x1)
        throw ConfigError("effect model was fitted for contrast (" + model.x0 + ", " + model.x1 +
                          "), not (" + x0 + ", " + x1 + ")");
    CausalEffects fx;
    for (std::size_t w = 0; w < model.nw; ++w) {
        const double pw0 = model.pw_x[w];
        const double pw1 = model.pw_x[model.nw + w];
        double de_inner = 0.0, ie_inner = 0.0, se_inner = 0.0;
        for (std::size_t z = 0; z < model.nz; ++z) {
            const double pz0 = model.pz_xw[model.cell(0, w, z)];
            const double pz1 = model.pz_xw[model.cell(1, w, z)];
            const double mu0 = model.mu[model.cell(0, w, z)];
            const double mu1 = model.mu[model.cell(1, w, z)];
            de_inner += pz0 * (mu1 - mu0);
            ie_inner += (pz0 - pz1) * mu1;
            se_inner += pz1 * mu1;
        }
        fx.de += pw0 * de_inner;
        fx.ie += pw0 * ie_inner;
        fx.se += (pw0 - pw1) * se_inner;
    }
    fx.tv = fx.de - fx.ie - fx.se;
    fx.raw_tv = model.group_mean1 - model.group_mean0;
    return fx;
}

using ScorerFn = std::function<std::vector<double>(const Dataset&)>;
using TrainerFn = std::function<ScorerFn(const Dataset&, const SfmRoles&, std::uint64_t)>;

struct RepeatOptions {
    double test_fraction = 0.3;
    BinningPolicy binning;
    double alpha = 0.5;
    bool vary_split = true;  // false pins every repeat to the same partition
};

// Mean and sd over n_repeats of: split, train, score the held-out side, fit
// the effect model on (test covariates, scores), estimate.
inline CausalEffects repeat_effects(const Dataset& dataset, const SfmRoles& roles,
                                    const TrainerFn& trainer, int n_repeats, std::uint64_t seed,
                                    const RepeatOptions& opts = {}) {
    if (n_repeats < 2) throw ConfigError("n_repeats must be >= 2");
    std::vector<CausalEffects> runs;
    runs.reserve(static_cast<std::size_t>(n_repeats));
    for (int r = 0; r < n_repeats; ++r) {
        const std::uint64_t rseed = opts.vary_split ? mix_seed(seed, static_cast<std::uint64_t>(r)) : seed;
        SplitResult sp = split(dataset, opts.test_fraction, rseed);
        ScorerFn scorer;
        try {
            scorer = trainer(sp.train, roles, rseed);
        } catch (const std::exception& e) {
            throw DataError("classifier training failed on repeat " + std::to_string(r) + ": " + e.what());
        }
        std::vector<double> scores = scorer(sp.test);
        EffectModel model = fit_effect_model(sp.test, roles, scores, opts.binning, opts.alpha);
        runs.push_back(estimate_effects(model, roles.baseline_level, roles.comparison_level));
    }

    auto stat = [&](auto pick) {
        double mean = 0.0;
        for (const CausalEffects& fx : runs) mean += pick(fx);
        mean /= static_cast<double>(runs.size());
        double ss = 0.0;
        for (const CausalEffects& fx : runs) {
            double d = pick(fx) - mean;
            ss += d * d;
        }
        double sd = std::sqrt(ss / static_cast<double>(runs.size() - 1));
        return std::pair<double, double>(mean, sd);
    };

    CausalEffects out;
    CausalEffects::Spread sd;
    std::tie(out.tv, sd.tv) = stat([](const CausalEffects& f) { return f.tv; });
    std::tie(out.de, sd.de) = stat([](const CausalEffects& f) { return f.de; });
    std::tie(out.ie, sd.ie) = stat([](const CausalEffects& f) { return f.ie; });
    std::tie(out.se, sd.se) = stat([](const CausalEffects& f) { return f.se; });
    std::tie(out.raw_tv, sd.raw_tv) = stat([](const CausalEffects& f) { return f.raw_tv; });
    out.sd = sd;
    return out;
}

} // namespace fairsynth
