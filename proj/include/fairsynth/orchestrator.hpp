#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairsynth/causal.hpp"
#include "fairsynth/classifiers.hpp"
#include "fairsynth/counterfactual.hpp"
#include "fairsynth/csv.hpp"
#include "fairsynth/fidelity.hpp"
#include "fairsynth/generation.hpp"
#include "fairsynth/prompting.hpp"
#include "fairsynth/transforms.hpp"

namespace fairsynth {

struct Thresholds {
    double max_abs_tv = 1.0;
    double max_abs_de = 1.0;
    double max_abs_ie = 1.0;
    double max_abs_se = 1.0;
    double max_dp = 1.0;
    double max_ftu = 1.0;
    double min_precision = 0.0;
    double min_recall = 0.0;
    double min_auroc = 0.0;
    double max_fidelity_tv = 1.0;

    void validate() const {
        for (double v : {max_abs_tv, max_abs_de, max_abs_ie, max_abs_se, max_dp, max_ftu,
                         max_fidelity_tv})
            if (!std::isfinite(v)) throw ConfigError("thresholds must be finite");
        for (double v : {min_precision, min_recall, min_auroc})
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("minimum thresholds must be in [0, 1]");
    }
};

struct Violation {
    std::string metric;
    double value = 0.0;
    double bound = 0.0;
    double margin = 0.0;  // positive distance past the bound
};

struct EvalOptions {
    BinningPolicy binning;
    double alpha = 0.5;
    std::size_t n_repeats = 3;
    double test_fraction = 0.3;
    double class_threshold = 0.5;
    Classifier::Kind classifier = Classifier::Kind::Logistic;
    std::uint64_t seed = 0;
};

struct IterationMetrics {
    CausalEffects causal;
    CounterfactualMetrics counterfactual;
    UtilityReport utility;
    FidelityReport fidelity;
    std::vector<BalanceEntry> balance;
    std::vector<Violation> violations;
    std::vector<std::string> warnings;
};

struct IterationRecord {
    std::uint64_t prompt_fingerprint = 0;
    GenerationDiagnostics diagnostics;
    IterationMetrics metrics;
};

enum class RunStatus { Converged, BudgetExhausted, BackendFailure };

inline std::string run_status_name(RunStatus s) {
    switch (s) {
        case RunStatus::Converged: return "converged";
        case RunStatus::BudgetExhausted: return "budget_exhausted";
        default: return "backend_error";
    }
}

struct RunReport {
    std::vector<IterationRecord> iterations;
    RunStatus status = RunStatus::BudgetExhausted;
    std::string error;
    Dataset final_data;
};

inline TrainerFn make_trainer(Classifier::Kind kind) {
    return [kind](const Dataset& train, const SfmRoles& roles, std::uint64_t seed) -> ScorerFn {
        Classifier clf = kind == Classifier::Kind::Logistic
                             ? fit_logistic(train, roles.outcome, 0.5, 500, 1e-7, seed)
                             : fit_boosted_stumps(train, roles.outcome, 50, 0.3, seed);
        return [clf](const Dataset& data) { return clf.score(data); };
    };
}

namespace detail {

inline std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline void check_max(std::vector<Violation>& out, const std::string& metric, double value,
                      double bound) {
    if (std::abs(value) > bound) out.push_back({metric, value, bound, std::abs(value) - bound});
}

inline void check_min(std::vector<Violation>& out, const std::string& metric, double value,
                      double bound) {
    if (value < bound) out.push_back({metric, value, bound, bound - value});
}

} // namespace detail

// Runs every evaluator against one synthetic batch: path-specific effects on
// the synthetic rows, utility and counterfactual metrics for a classifier
// trained on real-train + synthetic and tested on held-out real rows, and
// distributional fidelity against the full real reference.
inline IterationMetrics evaluate_iteration(const Dataset& synthetic, const Dataset& real,
                                           const SfmRoles& roles, const EvalOptions& eval,
                                           const Thresholds& thresholds) {
    thresholds.validate();
    if (!(synthetic.schema == real.schema))
        throw ConfigError("synthetic and real schemas differ");

    IterationMetrics m;

    RepeatOptions ropt;
    ropt.test_fraction = eval.test_fraction;
    ropt.binning = eval.binning;
    ropt.alpha = eval.alpha;
    m.causal = repeat_effects(synthetic, roles, make_trainer(eval.classifier), eval.n_repeats,
                              mix_seed(eval.seed, 0xCA), ropt);

    SplitResult holdout = split(real, eval.test_fraction, mix_seed(eval.seed, 0x5B));
    Dataset mixed = concat(holdout.train, synthetic);
    Classifier clf = eval.classifier == Classifier::Kind::Logistic
                         ? fit_logistic(mixed, roles.outcome, 0.5, 500, 1e-7, eval.seed)
                         : fit_boosted_stumps(mixed, roles.outcome, 50, 0.3, eval.seed);
    m.utility = evaluate_utility(clf, holdout.test, eval.class_threshold);
    m.counterfactual = counterfactual_metrics(clf, holdout.test, roles, eval.class_threshold);

    m.fidelity = fidelity(real, synthetic);
    m.balance = balance_report(real, synthetic, {roles.sensitive});

    detail::check_max(m.violations, "tv", m.causal.tv, thresholds.max_abs_tv);
    detail::check_max(m.violations, "de", m.causal.de, thresholds.max_abs_de);
    detail::check_max(m.violations, "ie", m.causal.ie, thresholds.max_abs_ie);
    detail::check_max(m.violations, "se", m.causal.se, thresholds.max_abs_se);
    detail::check_max(m.violations, "dp", m.counterfactual.dp, thresholds.max_dp);
    detail::check_max(m.violations, "ftu", m.counterfactual.ftu, thresholds.max_ftu);
    detail::check_min(m.violations, "precision", m.utility.precision, thresholds.min_precision);
    detail::check_min(m.violations, "recall", m.utility.recall, thresholds.min_recall);
    detail::check_min(m.violations, "auroc", m.utility.auroc, thresholds.min_auroc);
    for (const auto& e : m.fidelity.categorical_tv)
        detail::check_max(m.violations, "fidelity_tv:" + e.column, e.value,
                          thresholds.max_fidelity_tv);
    return m;
}

// Fixed priority order: rebalance the ICL pool when causal structure or dp is
// off, then describe every violated bound in a single directive, then inject
// contrastive pairs when the counterfactual metrics are the problem.
inline PromptSpec refine(const PromptSpec& spec, const std::vector<Violation>& violations,
                         const Dataset& real, const SfmRoles& roles, std::uint64_t seed,
                         std::size_t contrastive_pairs = 4) {
    if (violations.empty()) throw ConfigError("refine called without violations");

    bool causal_or_dp = false, dp_or_ftu = false;
    for (const Violation& v : violations) {
        causal_or_dp = causal_or_dp || v.metric == "tv" || v.metric == "de" || v.metric == "ie" ||
                       v.metric == "se" || v.metric == "dp";
        dp_or_ftu = dp_or_ftu || v.metric == "dp" || v.metric == "ftu";
    }

    PromptSpec next = spec;
    if (causal_or_dp) next.icl_weighting = IclWeighting::GroupBalanced;

    std::string directive = "Refinement:";
    for (std::size_t i = 0; i < violations.size(); ++i) {
        const Violation& v = violations[i];
        directive += (i ? ";" : "");
        const bool is_min = v.metric == "precision" || v.metric == "recall" || v.metric == "auroc";
        directive += " " + v.metric + " is " + detail::fmt4(v.value) +
                     (is_min ? ", raise it to at least " : ", keep its magnitude within ") +
                     detail::fmt4(v.bound);
    }
    directive += ".";
    next = add_refinement(next, directive);

    if (dp_or_ftu && contrastive_pairs > 0) {
        const auto sx = static_cast<std::size_t>(real.schema.index_of(roles.sensitive));
        const ColumnSpec& sens = real.schema.columns[sx];
        const int l0 = sens.level_of(roles.baseline_level);
        const int l1 = sens.level_of(roles.comparison_level);

        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < real.size(); ++i)
            if (real.rows[i][sx].level == l0 || real.rows[i][sx].level == l1)
                candidates.push_back(i);
        Rng rng(seed);
        rng.shuffle(candidates);

        next.contrastive_rows.clear();
        const std::size_t pairs = std::min(contrastive_pairs, candidates.size());
        for (std::size_t k = 0; k < pairs; ++k) {
            Row original = real.rows[candidates[k]];
            Row flipped = original;
            flipped[sx] = make_level(original[sx].level == l0 ? l1 : l0);
            next.contrastive_rows.push_back(std::move(original));
            next.contrastive_rows.push_back(std::move(flipped));
        }
    }
    return next;
}

struct RunConfig {
    Dataset real;
    SfmRoles roles;
    PromptSpec prompt;
    SamplingParams params;
    BatchOptions batch;
    EvalOptions eval;
    Thresholds thresholds;
    std::size_t max_iterations = 5;
    std::size_t contrastive_pairs = 4;
    std::uint64_t seed = 0;
    std::string out_dir;          // empty: keep everything in memory
    std::string config_snapshot;  // verbatim config text persisted for audit
};

// ---- report serialization ----------------------------------------------

inline nlohmann::json to_json(const Violation& v) {
    return {{"metric", v.metric}, {"value", v.value}, {"bound", v.bound}, {"margin", v.margin}};
}

inline nlohmann::json to_json(const CausalEffects& e) {
    nlohmann::json j{{"tv", e.tv}, {"de", e.de}, {"ie", e.ie}, {"se", e.se}, {"raw_tv", e.raw_tv}};
    if (e.sd) {
        j["sd"] = {{"tv", e.sd->tv},
                   {"de", e.sd->de},
                   {"ie", e.sd->ie},
                   {"se", e.sd->se},
                   {"raw_tv", e.sd->raw_tv}};
    }
    return j;
}

inline nlohmann::json to_json(const CounterfactualMetrics& c) {
    return {{"ftu", c.ftu},
            {"dp", c.dp},
            {"ftu_basis", basis_name(c.ftu_basis)},
            {"dp_basis", basis_name(c.dp_basis)},
            {"threshold", c.threshold}};
}

inline nlohmann::json to_json(const UtilityReport& u) {
    return {{"precision", u.precision},
            {"recall", u.recall},
            {"auroc", u.auroc},
            {"accuracy", u.accuracy},
            {"threshold", u.threshold}};
}

inline nlohmann::json to_json(const FidelityReport& f) {
    nlohmann::json cat = nlohmann::json::array();
    for (const auto& e : f.categorical_tv) cat.push_back({{"column", e.column}, {"tv", e.value}});
    nlohmann::json num = nlohmann::json::array();
    for (const auto& e : f.numeric_ks) num.push_back({{"column", e.column}, {"ks", e.value}});
    return {{"categorical_tv", cat}, {"numeric_ks", num}, {"max_corr_diff", f.max_corr_diff}};
}

inline nlohmann::json to_json(const std::vector<BalanceEntry>& entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : entries)
        arr.push_back({{"column", b.column},
                       {"majority_level", b.majority_level},
                       {"real_share", b.real_share},
                       {"synthetic_share", b.synthetic_share}});
    return arr;
}

inline nlohmann::json to_json(const GenerationDiagnostics& d) {
    nlohmann::json rej = nlohmann::json::array();
    for (const auto& [text, reason] : d.rejected)
        rej.push_back({{"row", text}, {"reason", reason}});
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : d.per_request)
        per.push_back({{"parsed", s.parsed},
                       {"rejected", s.rejected},
                       {"copied_dropped", s.copied_dropped},
                       {"retries", s.retries}});
    nlohmann::json j{{"requested", d.requested},
                     {"parsed_ok", d.parsed_ok},
                     {"rejected", rej},
                     {"copied_dropped", d.copied_dropped},
                     {"raw_responses_retained", d.raw_responses_retained},
                     {"retries", d.retries},
                     {"status", d.status},
                     {"per_request", per}};
    if (!d.note.empty()) j["note"] = d.note;
    return j;
}

inline nlohmann::json to_json(const IterationMetrics& m) {
    nlohmann::json viol = nlohmann::json::array();
    for (const auto& v : m.violations) viol.push_back(to_json(v));
    nlohmann::json j{{"causal", to_json(m.causal)},
                     {"counterfactual", to_json(m.counterfactual)},
                     {"utility", to_json(m.utility)},
                     {"fidelity", to_json(m.fidelity)},
                     {"balance", to_json(m.balance)},
                     {"violations", viol}};
    if (!m.warnings.empty()) j["warnings"] = m.warnings;
    return j;
}

inline nlohmann::json to_json(const RunReport& r) {
    char fp[24];
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : r.iterations) {
        std::snprintf(fp, sizeof fp, "%016llx",
                      static_cast<unsigned long long>(it.prompt_fingerprint));
        iters.push_back({{"prompt_fingerprint", fp},
                         {"diagnostics", to_json(it.diagnostics)},
                         {"metrics", to_json(it.metrics)}});
    }
    nlohmann::json j{{"status", run_status_name(r.status)},
                     {"iterations", iters},
                     {"final_rows", r.final_data.size()}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
    f << text;
}

inline std::string iteration_tag(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu", i + 1);
    return buf;
}

} // namespace detail

// The loop: generate a batch, score it on every axis, stop on a clean pass,
// otherwise refine the prompt and go again until max_iterations.
inline RunReport run(const GeneratorBackend& backend, const RunConfig& cfg) {
    if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    cfg.thresholds.validate();
    cfg.roles.validate(cfg.real.schema);

    namespace fs = std::filesystem;
    const bool persist = !cfg.out_dir.empty();
    if (persist) {
        fs::create_directories(cfg.out_dir);
        if (!cfg.config_snapshot.empty())
            detail::write_text(fs::path(cfg.out_dir) / "config.json", cfg.config_snapshot);
    }

    RunReport report;
    PromptSpec spec = cfg.prompt;
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        BatchResult batch;
        try {
            batch = generate_batch(backend, cfg.real, spec, cfg.params, cfg.batch,
                                   mix_seed(cfg.seed, it));
        } catch (const BackendError& e) {
            report.status = RunStatus::BackendFailure;
            report.error = e.what();
            break;
        }
        if (persist) {
            const std::string tag = detail::iteration_tag(it);
            detail::write_text(fs::path(cfg.out_dir) / ("iteration_" + tag + "_prompt.txt"),
                               batch.prompt.system_role + "\n\n" + batch.prompt.user_body);
            for (std::size_t r = 0; r < batch.raw_responses.size(); ++r)
                detail::write_text(fs::path(cfg.out_dir) /
                                       ("iteration_" + tag + "_response_" + std::to_string(r + 1) +
                                        ".txt"),
                                   batch.raw_responses[r]);
        }

        EvalOptions eval = cfg.eval;
        eval.seed = mix_seed(cfg.seed, 0xE000 + it);
        IterationRecord rec;
        rec.prompt_fingerprint = prompt_fingerprint(batch.prompt);
        rec.diagnostics = batch.diagnostics;
        rec.metrics = evaluate_iteration(batch.data, cfg.real, cfg.roles, eval, cfg.thresholds);
        for (const std::string& w : batch.warnings) rec.metrics.warnings.push_back(w);
        report.iterations.push_back(rec);
        report.final_data = std::move(batch.data);

        if (rec.metrics.violations.empty()) {
            report.status = RunStatus::Converged;
            break;
        }
        if (it + 1 < cfg.max_iterations)
            spec = refine(spec, rec.metrics.violations, cfg.real, cfg.roles,
                          mix_seed(cfg.seed, 0xF000 + it), cfg.contrastive_pairs);
    }

    if (persist) {
        detail::write_text(fs::path(cfg.out_dir) / "report.json", to_json(report).dump(2) + "\n");
        if (report.final_data.size() > 0)
            save_csv(report.final_data, (fs::path(cfg.out_dir) / "final.csv").string());
    }
    return report;
}

} // namespace fairsynth
