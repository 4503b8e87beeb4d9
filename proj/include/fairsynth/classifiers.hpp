#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"

namespace fairsynth {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow
inline double softplus(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

// One-hot over every level of each discrete column, standardized numerics.
// The map is frozen at fit time; predict-time rows must match the schema.
struct FeatureEncoder {
    struct Feature {
        std::size_t column = 0;
        int level = -1;       // >= 0 marks a one-hot indicator
        double mean = 0.0, sd = 1.0;
        std::string name;
    };
    std::vector<Feature> features;

    static FeatureEncoder fit(const Dataset& data, const std::string& label,
                              const std::vector<std::string>& exclude = {}) {
        FeatureEncoder enc;
        for (std::size_t c = 0; c < data.schema.columns.size(); ++c) {
            const ColumnSpec& col = data.schema.columns[c];
            if (col.name == label) continue;
            bool skipped = false;
            for (const std::string& e : exclude) skipped = skipped || e == col.name;
            if (skipped) continue;
            if (col.is_discrete()) {
                for (std::size_t l = 0; l < col.categories.size(); ++l)
                    enc.features.push_back(
                        {c, static_cast<int>(l), 0.0, 1.0, col.name + "=" + col.categories[l]});
            } else {
                double mean = 0.0;
                for (const Row& r : data.rows) mean += r[c].number;
                mean /= static_cast<double>(data.size());
                double ss = 0.0;
                for (const Row& r : data.rows) {
                    double d = r[c].number - mean;
                    ss += d * d;
                }
                double sd = std::sqrt(ss / static_cast<double>(data.size()));
                enc.features.push_back({c, -1, mean, sd, col.name});
            }
        }
        if (enc.features.empty()) throw ConfigError("no usable feature columns");
        return enc;
    }

    std::size_t dim() const { return features.size(); }

    void encode(const Row& row, std::vector<double>& out) const {
        out.resize(features.size());
        for (std::size_t i = 0; i < features.size(); ++i) {
            const Feature& f = features[i];
            if (f.level >= 0)
                out[i] = row[f.column].level == f.level ? 1.0 : 0.0;
            else
                out[i] = f.sd > 0.0 ? (row[f.column].number - f.mean) / f.sd : 0.0;
        }
    }

    std::vector<double> encode(const Row& row) const {
        std::vector<double> out;
        encode(row, out);
        return out;
    }
};

struct Stump {
    std::size_t feature = 0;
    double threshold = 0.0;
    double left = 0.0, right = 0.0;  // added to the score: left if x <= threshold

    double value(const std::vector<double>& x) const {
        return x[feature] <= threshold ? left : right;
    }
};

struct Classifier {
    enum class Kind { Logistic, BoostedStumps };
    Kind kind = Kind::Logistic;
    FeatureEncoder encoder;
    std::string label;

    std::vector<double> weights;  // logistic
    double bias = 0.0;

    std::vector<Stump> stumps;  // boosting
    double base_score = 0.0;

    double score_encoded(const std::vector<double>& x) const {
        if (kind == Kind::Logistic) {
            double z = bias;
            for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
            return sigmoid(z);
        }
        double f = base_score;
        for (const Stump& s : stumps) f += s.value(x);
        return sigmoid(f);
    }

    double score_row(const Row& row) const { return score_encoded(encoder.encode(row)); }

    std::vector<double> score(const Dataset& data) const {
        std::vector<double> out;
        out.reserve(data.size());
        std::vector<double> x;
        for (const Row& row : data.rows) {
            encoder.encode(row, x);
            out.push_back(score_encoded(x));
        }
        return out;
    }
};

namespace detail {

struct TrainBatch {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    std::vector<double> w;
    double wsum = 0.0;
};

inline TrainBatch make_batch(const Dataset& train, const std::string& label,
                             const FeatureEncoder& enc) {
    int li = train.schema.index_of(label);
    if (li < 0) throw ConfigError("label column '" + label + "' not in schema");
    if (train.schema.columns[static_cast<std::size_t>(li)].kind != ColumnKind::Binary)
        throw ConfigError("label column '" + label + "' must be binary");
    if (train.size() == 0) throw ConfigError("training set is empty");
    TrainBatch b;
    b.x.reserve(train.size());
    bool saw0 = false, saw1 = false;
    for (std::size_t r = 0; r < train.size(); ++r) {
        b.x.push_back(enc.encode(train.rows[r]));
        double y = static_cast<double>(train.rows[r][static_cast<std::size_t>(li)].level);
        (y == 0.0 ? saw0 : saw1) = true;
        b.y.push_back(y);
        double wgt = train.weight(r);
        b.w.push_back(wgt);
        b.wsum += wgt;
    }
    if (!saw0 || !saw1) throw DataError("training labels are all one class");
    return b;
}

} // namespace detail

// theta = [bias, weights...]; weighted mean log-loss. Exposed for the
// finite-difference gradient check in the tests.
inline double logistic_loss(const detail::TrainBatch& b, const std::vector<double>& theta) {
    double loss = 0.0;
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        double z = theta[0];
        for (std::size_t j = 0; j < b.x[i].size(); ++j) z += theta[j + 1] * b.x[i][j];
        loss += b.w[i] * (softplus(z) - b.y[i] * z);
    }
    return loss / b.wsum;
}

inline std::vector<double> logistic_grad(const detail::TrainBatch& b, const std::vector<double>& theta) {
    std::vector<double> g(theta.size(), 0.0);
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        double z = theta[0];
        for (std::size_t j = 0; j < b.x[i].size(); ++j) z += theta[j + 1] * b.x[i][j];
        double err = b.w[i] * (sigmoid(z) - b.y[i]);
        g[0] += err;
        for (std::size_t j = 0; j < b.x[i].size(); ++j) g[j + 1] += err * b.x[i][j];
    }
    for (double& v : g) v /= b.wsum;
    return g;
}

// Batch gradient descent from zero weights. The step is rejected and the rate
// halved (at most 20 times overall) whenever it would increase the loss, so
// accepted losses are non-increasing. The seed only keeps the signature
// uniform across trainers; the optimization itself is deterministic.
inline Classifier fit_logistic(const Dataset& train, const std::string& label, double lr = 0.5,
                               int max_iters = 500, double tol = 1e-7,
                               std::uint64_t seed = 0) {
    (void)seed;
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    Classifier clf;
    clf.kind = Classifier::Kind::Logistic;
    clf.label = label;
    clf.encoder = FeatureEncoder::fit(train, label);
    detail::TrainBatch batch = detail::make_batch(train, label, clf.encoder);

    std::vector<double> theta(clf.encoder.dim() + 1, 0.0);
    double loss = logistic_loss(batch, theta);
    int halvings = 0;
    for (int it = 0; it < max_iters; ++it) {
        std::vector<double> g = logistic_grad(batch, theta);
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        if (gmax < tol) break;
        std::vector<double> cand(theta.size());
        for (std::size_t j = 0; j < theta.size(); ++j) cand[j] = theta[j] - lr * g[j];
        double cand_loss = logistic_loss(batch, cand);
        if (cand_loss > loss) {
            if (++halvings > 20) break;
            lr *= 0.5;
            continue;
        }
        theta = std::move(cand);
        loss = cand_loss;
    }
    for (double v : theta)
        if (!std::isfinite(v)) throw DataError("logistic training produced non-finite weights");
    clf.bias = theta[0];
    clf.weights.assign(theta.begin() + 1, theta.end());
    return clf;
}

// Gradient boosting with depth-1 trees on log-loss. Split search minimizes
// the weighted squared error of the residuals; committed leaf values are
// Newton steps scaled by the shrinkage.
inline Classifier fit_boosted_stumps(const Dataset& train, const std::string& label, int n_rounds = 50,
                                     double shrinkage = 0.3, std::uint64_t seed = 0) {
    (void)seed;
    if (n_rounds < 1) throw ConfigError("n_rounds must be >= 1");
    if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must be in (0, 1]");
    Classifier clf;
    clf.kind = Classifier::Kind::BoostedStumps;
    clf.label = label;
    clf.encoder = FeatureEncoder::fit(train, label);
    detail::TrainBatch batch = detail::make_batch(train, label, clf.encoder);

    const std::size_t n = batch.x.size();
    const std::size_t d = clf.encoder.dim();
    double prior = 0.0;
    for (std::size_t i = 0; i < n; ++i) prior += batch.w[i] * batch.y[i];
    prior = std::clamp(prior / batch.wsum, 1e-6, 1.0 - 1e-6);
    clf.base_score = std::log(prior / (1.0 - prior));

    std::vector<double> f(n, clf.base_score);
    std::vector<std::size_t> order(n);
    for (int round = 0; round < n_rounds; ++round) {
        std::vector<double> r(n), h(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = sigmoid(f[i]);
            r[i] = batch.y[i] - p[i];
            h[i] = p[i] * (1.0 - p[i]);
        }

        double total_w = 0.0, total_wr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total_w += batch.w[i];
            total_wr += batch.w[i] * r[i];
        }
        const double base_obj = total_wr * total_wr / total_w;

        double best_gain = 0.0;
        Stump best;
        bool found = false;
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return batch.x[a][j] < batch.x[b][j];
            });
            double wl = 0.0, wrl = 0.0;
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const std::size_t i = order[k];
                wl += batch.w[i];
                wrl += batch.w[i] * r[i];
                const double xv = batch.x[i][j];
                const double xnext = batch.x[order[k + 1]][j];
                if (xv == xnext) continue;
                const double wr_side = total_w - wl;
                if (wl <= 0.0 || wr_side <= 0.0) continue;
                const double swr = total_wr - wrl;
                const double gain = wrl * wrl / wl + swr * swr / wr_side - base_obj;
                if (gain > best_gain + 1e-12) {
                    best_gain = gain;
                    best.feature = j;
                    best.threshold = 0.5 * (xv + xnext);
                    found = true;
                }
            }
        }
        if (!found) break;  // no split improves the fit; later rounds cannot either

        double lw = 0.0, lh = 0.0, rw = 0.0, rh = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (batch.x[i][best.feature] <= best.threshold) {
                lw += batch.w[i] * r[i];
                lh += batch.w[i] * h[i];
            } else {
                rw += batch.w[i] * r[i];
                rh += batch.w[i] * h[i];
            }
        }
        best.left = shrinkage * lw / (lh + 1e-12);
        best.right = shrinkage * rw / (rh + 1e-12);
        for (std::size_t i = 0; i < n; ++i)
            f[i] += batch.x[i][best.feature] <= best.threshold ? best.left : best.right;
        clf.stumps.push_back(best);
    }
    return clf;
}

// Tie-aware rank statistic: (#concordant + 0.5 #tied) / (#pos * #neg).
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ConfigError("auroc: scores/labels length mismatch");
    std::size_t npos = 0, nneg = 0;
    for (int y : labels) (y == 1 ? npos : nneg) += 1;
    if (npos == 0 || nneg == 0) throw DataError("auroc needs both classes present");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double u = 0.0;
    double neg_below = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::size_t tie_pos = 0, tie_neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? tie_pos : tie_neg) += 1;
            ++j;
        }
        u += static_cast<double>(tie_pos) * (neg_below + 0.5 * static_cast<double>(tie_neg));
        neg_below += static_cast<double>(tie_neg);
        i = j;
    }
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

struct UtilityReport {
    double precision = 0.0, recall = 0.0, auroc = 0.0, accuracy = 0.0;
    double threshold = 0.5;
};

inline std::vector<int> label_column(const Dataset& data, const std::string& label) {
    int li = data.schema.index_of(label);
    if (li < 0) throw ConfigError("label column '" + label + "' not in schema");
    if (data.schema.columns[static_cast<std::size_t>(li)].kind != ColumnKind::Binary)
        throw ConfigError("label column '" + label + "' must be binary");
    std::vector<int> y;
    y.reserve(data.size());
    for (const Row& r : data.rows) y.push_back(r[static_cast<std::size_t>(li)].level);
    return y;
}

inline UtilityReport utility_from_scores(const std::vector<double>& scores,
                                         const std::vector<int>& labels, double threshold = 0.5) {
    if (scores.empty()) throw ConfigError("test set is empty");
    UtilityReport rep;
    rep.threshold = threshold;
    rep.auroc = auroc(scores, labels);
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] > threshold;
        if (pred && labels[i] == 1) ++tp;
        else if (pred) ++fp;
        else if (labels[i] == 1) ++fn;
        else ++tn;
    }
    rep.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    rep.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    rep.accuracy = (tp + tn) / static_cast<double>(scores.size());
    return rep;
}

inline UtilityReport evaluate_utility(const Classifier& clf, const Dataset& test,
                                      double threshold = 0.5) {
    return utility_from_scores(clf.score(test), label_column(test, clf.label), threshold);
}

} // namespace fairsynth
