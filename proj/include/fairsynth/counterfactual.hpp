#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fairsynth/classifiers.hpp"
#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"

namespace fairsynth {

enum class MetricBasis { Scores, HardLabels };

inline std::string basis_name(MetricBasis b) {
    return b == MetricBasis::Scores ? "scores" : "hard_labels";
}

struct CounterfactualMetrics {
    double ftu = 0.0;
    double dp = 0.0;
    MetricBasis ftu_basis = MetricBasis::Scores;
    MetricBasis dp_basis = MetricBasis::HardLabels;
    double threshold = 0.5;
};

// |P(yhat=1 | X=x1) - P(yhat=1 | X=x0)| over the test set, with the scores
// basis swapping the indicator for the raw score.
inline double demographic_parity(const Classifier& clf, const Dataset& test, const SfmRoles& roles,
                                 double threshold = 0.5, MetricBasis basis = MetricBasis::HardLabels) {
    roles.validate(test.schema);
    const auto sx = static_cast<std::size_t>(test.schema.index_of(roles.sensitive));
    const ColumnSpec& col = test.schema.columns[sx];
    const int l0 = col.level_of(roles.baseline_level);
    const int l1 = col.level_of(roles.comparison_level);

    double sum0 = 0.0, sum1 = 0.0, n0 = 0.0, n1 = 0.0;
    std::vector<double> scores = clf.score(test);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const int xl = test.rows[i][sx].level;
        if (xl != l0 && xl != l1) continue;
        double v = basis == MetricBasis::HardLabels ? (scores[i] > threshold ? 1.0 : 0.0) : scores[i];
        if (xl == l0) {
            sum0 += v;
            n0 += 1.0;
        } else {
            sum1 += v;
            n1 += 1.0;
        }
    }
    if (n0 == 0.0) throw DataError("sensitive level '" + roles.baseline_level + "' absent from test set");
    if (n1 == 0.0) throw DataError("sensitive level '" + roles.comparison_level + "' absent from test set");
    return std::abs(sum1 / n1 - sum0 / n0);
}

// Attribute substitution on a model trained WITH the sensitive feature: every
// row is scored once with the sensitive column forced to x1 and once forced
// to x0; ftu is the absolute difference of the two mean outputs.
inline double ftu(const Classifier& clf, const Dataset& test, const SfmRoles& roles,
                  double threshold = 0.5, MetricBasis basis = MetricBasis::Scores) {
    roles.validate(test.schema);
    const auto sx = static_cast<std::size_t>(test.schema.index_of(roles.sensitive));
    const ColumnSpec& col = test.schema.columns[sx];
    const int l0 = col.level_of(roles.baseline_level);
    const int l1 = col.level_of(roles.comparison_level);

    bool encodes_sensitive = false;
    for (const auto& f : clf.encoder.features) encodes_sensitive = encodes_sensitive || f.column == sx;
    if (!encodes_sensitive)
        throw ConfigError("ftu is undefined: the classifier was trained without the sensitive feature");

    if (test.size() == 0) throw ConfigError("test set is empty");
    double mean1 = 0.0, mean0 = 0.0;
    Row probe;
    for (const Row& row : test.rows) {
        probe = row;
        probe[sx] = make_level(l1);
        double s1 = clf.score_row(probe);
        probe[sx] = make_level(l0);
        double s0 = clf.score_row(probe);
        if (basis == MetricBasis::HardLabels) {
            s1 = s1 > threshold ? 1.0 : 0.0;
            s0 = s0 > threshold ? 1.0 : 0.0;
        }
        mean1 += s1;
        mean0 += s0;
    }
    mean1 /= static_cast<double>(test.size());
    mean0 /= static_cast<double>(test.size());
    return std::abs(mean1 - mean0);
}

inline CounterfactualMetrics counterfactual_metrics(const Classifier& clf, const Dataset& test,
                                                    const SfmRoles& roles, double threshold = 0.5) {
    CounterfactualMetrics m;
    m.threshold = threshold;
    m.dp = demographic_parity(clf, test, roles, threshold, m.dp_basis);
    m.ftu = ftu(clf, test, roles, threshold, m.ftu_basis);
    return m;
}

} // namespace fairsynth
