#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairsynth/config.hpp"
#include "fairsynth/http_transport.hpp"
#include "fairsynth/mitigation.hpp"
#include "fairsynth/orchestrator.hpp"

namespace fairsynth {

inline std::unique_ptr<GeneratorBackend> make_backend(const EngineConfig& cfg) {
    if (cfg.backend.kind == BackendConfig::Kind::Mock) return make_mock_backend(cfg.backend);
    return std::make_unique<HttpChatBackend>(cfg.backend.endpoint, cfg.backend.credential_env,
                                             make_http_transport());
}

namespace cli_detail {

namespace fs = std::filesystem;

inline fs::path out_root(const EngineConfig& cfg) {
    fs::path out = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
    fs::create_directories(out);
    return out;
}

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
    f << text;
}

// Re-scan a CSV that failed to parse, collecting one diagnostic per bad row.
inline std::vector<std::string> collect_csv_errors(const std::string& text, const Schema& schema) {
    std::vector<std::string> errors;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool weighted = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1) {
            weighted = line == schema.header_line() + ",weight";
            if (!weighted && line != schema.header_line())
                errors.push_back("row 1 header does not match the configured schema");
            continue;
        }
        std::string row_part = line;
        if (weighted) {
            std::vector<std::string> fields = split_csv_line(line);
            if (fields.size() == schema.columns.size() + 1) {
                try {
                    std::size_t used = 0;
                    (void)std::stod(fields.back(), &used);
                    if (used != fields.back().size()) throw std::invalid_argument("weight");
                } catch (const std::exception&) {
                    errors.push_back("row " + std::to_string(line_no) + " has an invalid weight '" +
                                     fields.back() + "'");
                    continue;
                }
                row_part.clear();
                for (std::size_t i = 0; i + 1 < fields.size(); ++i)
                    row_part += (i ? "," : "") + escape_csv_field(fields[i]);
            }
        }
        try {
            (void)parse_row_line(row_part, schema, line_no);
        } catch (const DataError& e) {
            errors.push_back(e.what());
        }
    }
    if (errors.empty()) errors.push_back("CSV failed to parse");
    return errors;
}

// Non-finite metric values must never appear without a warning alongside.
inline void warn_non_finite(const IterationMetrics& m, std::vector<std::string>& warnings) {
    auto check = [&](const char* name, double v) {
        if (!std::isfinite(v)) warnings.push_back(std::string("metric ") + name +
                                                  " is not finite on this input");
    };
    check("tv", m.causal.tv);
    check("de", m.causal.de);
    check("ie", m.causal.ie);
    check("se", m.causal.se);
    check("dp", m.counterfactual.dp);
    check("ftu", m.counterfactual.ftu);
    check("precision", m.utility.precision);
    check("recall", m.utility.recall);
    check("auroc", m.utility.auroc);
}

inline std::string csv_number(double v) {
    std::ostringstream s;
    s.precision(12);
    s << v;
    return s.str();
}

// metric,value pairs for external plotting
inline std::string metrics_table(const IterationMetrics& m) {
    std::ostringstream t;
    t << "metric,value\n";
    t << "tv," << csv_number(m.causal.tv) << "\n";
    t << "de," << csv_number(m.causal.de) << "\n";
    t << "ie," << csv_number(m.causal.ie) << "\n";
    t << "se," << csv_number(m.causal.se) << "\n";
    t << "raw_tv," << csv_number(m.causal.raw_tv) << "\n";
    if (m.causal.sd) {
        t << "tv_sd," << csv_number(m.causal.sd->tv) << "\n";
        t << "de_sd," << csv_number(m.causal.sd->de) << "\n";
        t << "ie_sd," << csv_number(m.causal.sd->ie) << "\n";
        t << "se_sd," << csv_number(m.causal.sd->se) << "\n";
    }
    t << "dp," << csv_number(m.counterfactual.dp) << "\n";
    t << "ftu," << csv_number(m.counterfactual.ftu) << "\n";
    t << "precision," << csv_number(m.utility.precision) << "\n";
    t << "recall," << csv_number(m.utility.recall) << "\n";
    t << "auroc," << csv_number(m.utility.auroc) << "\n";
    t << "accuracy," << csv_number(m.utility.accuracy) << "\n";
    t << "max_corr_diff," << csv_number(m.fidelity.max_corr_diff) << "\n";
    return t.str();
}

inline std::string fidelity_table(const FidelityReport& f) {
    std::ostringstream t;
    t << "column,statistic,value\n";
    for (const auto& e : f.categorical_tv)
        t << escape_csv_field(e.column) << ",tv," << csv_number(e.value) << "\n";
    for (const auto& e : f.numeric_ks)
        t << escape_csv_field(e.column) << ",ks," << csv_number(e.value) << "\n";
    return t.str();
}

inline std::string balance_table(const std::vector<BalanceEntry>& entries) {
    std::ostringstream t;
    t << "column,majority_level,real_share,synthetic_share\n";
    for (const auto& b : entries)
        t << escape_csv_field(b.column) << "," << escape_csv_field(b.majority_level) << ","
          << csv_number(b.real_share) << "," << csv_number(b.synthetic_share) << "\n";
    return t.str();
}

} // namespace cli_detail

// exit 0: rows written; 1: configuration problem; 2: the backend yielded no rows
inline int cmd_generate(const EngineConfig& cfg) {
    try {
        Dataset real = load_real_data(cfg);
        PromptSpec spec = make_prompt_spec(cfg);
        std::unique_ptr<GeneratorBackend> backend = make_backend(cfg);

        BatchResult batch;
        try {
            batch = generate_batch(*backend, real, spec, cfg.params, cfg.batch, cfg.seed);
        } catch (const BackendError& e) {
            std::cerr << "generate: backend error, no rows produced: " << e.what() << "\n";
            return 2;
        }

        namespace fs = std::filesystem;
        const fs::path out = cli_detail::out_root(cfg);
        nlohmann::json diag = to_json(batch.diagnostics);
        if (!batch.warnings.empty()) diag["warnings"] = batch.warnings;
        cli_detail::write_file(out / "diagnostics.json", diag.dump(2) + "\n");
        save_csv(batch.data, (out / "synthetic.csv").string());
        if (cfg.batch.retain_raw)
            for (std::size_t r = 0; r < batch.raw_responses.size(); ++r)
                cli_detail::write_file(out / ("response_" + std::to_string(r + 1) + ".txt"),
                                       batch.raw_responses[r]);

        if (batch.data.size() == 0) {
            std::cerr << "generate: the backend yielded no usable rows (see "
                      << (out / "diagnostics.json").string() << ")\n";
            return 2;
        }
        std::cout << "generate: wrote " << batch.data.size() << " rows to "
                  << (out / "synthetic.csv").string() << "\n";
        return 0;
    } catch (const std::runtime_error& e) {
        std::cerr << "generate: " << e.what() << "\n";
        return 1;
    }
}

// exit 0: metrics written; 1: config problem, schema mismatch, or a malformed CSV
inline int cmd_evaluate(const EngineConfig& cfg, const std::string& synthetic_path) {
    try {
        Dataset real = load_real_data(cfg);

        std::ifstream in(synthetic_path, std::ios::binary);
        if (!in) throw ConfigError("cannot open synthetic CSV '" + synthetic_path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();

        Dataset synthetic;
        try {
            synthetic = parse_csv_text(buf.str(), cfg.schema);
        } catch (const DataError&) {
            for (const std::string& msg : cli_detail::collect_csv_errors(buf.str(), cfg.schema))
                std::cerr << "evaluate: " << synthetic_path << ": " << msg << "\n";
            return 1;
        }

        EvalOptions eval = cfg.eval;
        eval.seed = cfg.seed;
        IterationMetrics m = evaluate_iteration(synthetic, real, cfg.roles, eval, cfg.thresholds);

        // the per-run balance report covers every categorical column, not
        // just the sensitive attribute
        std::vector<std::string> discrete;
        for (const ColumnSpec& col : cfg.schema.columns)
            if (col.is_discrete()) discrete.push_back(col.name);
        m.balance = balance_report(real, synthetic, discrete);
        cli_detail::warn_non_finite(m, m.warnings);

        namespace fs = std::filesystem;
        const fs::path out = cli_detail::out_root(cfg);
        cli_detail::write_file(out / "metrics.json", to_json(m).dump(2) + "\n");
        cli_detail::write_file(out / "metrics.csv", cli_detail::metrics_table(m));
        cli_detail::write_file(out / "fidelity.csv", cli_detail::fidelity_table(m.fidelity));
        cli_detail::write_file(out / "balance.csv", cli_detail::balance_table(m.balance));

        std::cout << "evaluate: wrote metrics for " << synthetic.size() << " rows to "
                  << (out / "metrics.json").string() << "\n";
        return 0;
    } catch (const std::runtime_error& e) {
        std::cerr << "evaluate: " << e.what() << "\n";
        return 1;
    }
}

// exit 0: converged; 1: config problem; 3: budget exhausted; 4: backend error
inline int cmd_run(const EngineConfig& cfg) {
    try {
        Dataset real = load_real_data(cfg);
        std::unique_ptr<GeneratorBackend> backend = make_backend(cfg);
        RunConfig rc = make_run_config(cfg, std::move(real));
        if (rc.out_dir.empty()) rc.out_dir = ".";  // the report is always persisted

        RunReport rep = run(*backend, rc);
        std::cout << "run: " << run_status_name(rep.status) << " after " << rep.iterations.size()
                  << " iteration(s), report in " << rc.out_dir << "\n";
        switch (rep.status) {
            case RunStatus::Converged: return 0;
            case RunStatus::BudgetExhausted: return 3;
            default:
                std::cerr << "run: backend error: " << rep.error << "\n";
                return 4;
        }
    } catch (const std::runtime_error& e) {
        std::cerr << "run: " << e.what() << "\n";
        return 1;
    }
}

struct MitigateParams {
    std::string method;
    double alpha = 1.0;            // cor
    double repair_level = 1.0;     // dir
    double corr_threshold = 0.45;  // sup
    bool evaluate = false;
};

namespace cli_detail {

inline nlohmann::json evaluate_mitigated(const Dataset& data, const SfmRoles& roles,
                                         const EvalOptions& eval, std::uint64_t seed) {
    SplitResult sp = split(data, eval.test_fraction, mix_seed(seed, 0x317));
    Classifier clf = eval.classifier == Classifier::Kind::Logistic
                         ? fit_logistic(sp.train, roles.outcome, 0.5, 500, 1e-7, seed)
                         : fit_boosted_stumps(sp.train, roles.outcome, 50, 0.3, seed);

    nlohmann::json doc;
    doc["utility"] = to_json(evaluate_utility(clf, sp.test, eval.class_threshold));
    try {
        doc["counterfactual"] =
            to_json(counterfactual_metrics(clf, sp.test, roles, eval.class_threshold));
    } catch (const std::runtime_error& e) {
        doc["warnings"] = std::vector<std::string>{
            std::string("counterfactual metrics unavailable after mitigation: ") + e.what()};
    }
    return doc;
}

} // namespace cli_detail

// exit 0: transformed dataset + audit written; 1: unknown method or config problem
inline int cmd_mitigate(const EngineConfig& cfg, const MitigateParams& params) {
    if (params.method != "sup" && params.method != "cor" && params.method != "dir" &&
        params.method != "rw") {
        std::cerr << "mitigate: unknown method '" << params.method
                  << "' (valid: sup, cor, dir, rw)\n";
        return 1;
    }
    try {
        Dataset real = load_real_data(cfg);

        MitigationOutcome outcome;
        nlohmann::json used_params = nlohmann::json::object();
        if (params.method == "sup") {
            outcome = suppress(real, cfg.roles, params.corr_threshold);
            used_params["corr_threshold"] = params.corr_threshold;
        } else if (params.method == "cor") {
            outcome = correlation_remover(real, cfg.roles, params.alpha);
            used_params["alpha"] = params.alpha;
        } else if (params.method == "dir") {
            outcome = disparate_impact_remover(real, cfg.roles, params.repair_level);
            used_params["repair_level"] = params.repair_level;
        } else {
            outcome = reweigh(real, cfg.roles);
        }

        namespace fs = std::filesystem;
        const fs::path out = cli_detail::out_root(cfg);
        save_csv(outcome.data, (out / "mitigated.csv").string());

        nlohmann::json audit;
        audit["method"] = outcome.method;
        audit["params"] = used_params;
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& e : outcome.audit)
            entries.push_back({{"column", e.column}, {"action", e.action}, {"value", e.value}});
        audit["entries"] = entries;
        if (params.evaluate)
            audit["evaluation"] =
                cli_detail::evaluate_mitigated(outcome.data, cfg.roles, cfg.eval, cfg.seed);
        cli_detail::write_file(out / "mitigation_audit.json", audit.dump(2) + "\n");

        std::cout << "mitigate: " << outcome.method << " wrote "
                  << (out / "mitigated.csv").string() << "\n";
        return 0;
    } catch (const std::runtime_error& e) {
        std::cerr << "mitigate: " << e.what() << "\n";
        return 1;
    }
}

} // namespace fairsynth
