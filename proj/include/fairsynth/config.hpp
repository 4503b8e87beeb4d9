#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairsynth/data.hpp"
#include "fairsynth/generation.hpp"
#include "fairsynth/orchestrator.hpp"
#include "fairsynth/prompting.hpp"
#include "fairsynth/scm.hpp"
#include "fairsynth/transforms.hpp"

namespace fairsynth {

struct BackendConfig {
    enum class Kind { Mock, Remote };
    Kind kind = Kind::Mock;

    std::string scm_path;  // mock
    std::size_t rows_per_request = 50;
    std::string knob;
    double knob_step = 0.25;

    std::string endpoint;  // remote
    std::string credential_env = "FAIRSYNTH_API_KEY";
};

// One JSON document drives every command; flags may override scalars only.
struct EngineConfig {
    std::string real_csv;
    std::size_t sample_n = 0;  // >0: draw the real reference from the mock SCM instead
    std::uint64_t sample_seed = 1;
    Schema schema;
    SfmRoles roles;
    BinningPolicy binning;

    std::string dataset_description;
    std::size_t ic_count = 40;
    IclWeighting icl_weighting = IclWeighting::Uniform;
    std::vector<std::string> extra_directives;

    BackendConfig backend;
    SamplingParams params;
    Thresholds thresholds;
    BatchOptions batch;
    EvalOptions eval;
    std::size_t max_iterations = 5;
    std::size_t contrastive_pairs = 4;
    std::uint64_t seed = 0;
    std::string out_dir;

    std::string raw_text;  // document as loaded, persisted verbatim into run dirs
};

namespace detail {

inline const nlohmann::json& need(const nlohmann::json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end())
        throw ConfigError(std::string("config: missing '") + key + "' in " + where);
    return *it;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

inline Schema schema_from_config(const nlohmann::json& j) {
    Schema schema;
    for (const auto& jc : need(j, "columns", "schema")) {
        ColumnSpec col;
        col.name = need(jc, "name", "schema column").get<std::string>();
        col.kind = kind_from_name(need(jc, "kind", "schema column").get<std::string>());
        if (col.is_discrete())
            col.categories = need(jc, "categories", "schema column")
                                 .get<std::vector<std::string>>();
        col.units = get_or<std::string>(jc, "units", "");
        schema.columns.push_back(std::move(col));
    }
    schema.validate();
    return schema;
}

inline SfmRoles roles_from_config(const nlohmann::json& j) {
    SfmRoles roles;
    roles.sensitive = need(j, "sensitive", "roles").get<std::string>();
    roles.baseline_level = need(j, "baseline_level", "roles").get<std::string>();
    roles.comparison_level = need(j, "comparison_level", "roles").get<std::string>();
    roles.mediators = get_or<std::vector<std::string>>(j, "mediators", {});
    roles.outcome = need(j, "outcome", "roles").get<std::string>();
    return roles;
}

inline BinningPolicy binning_from_config(const nlohmann::json& j, const Schema& schema) {
    BinningPolicy policy;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (schema.index_of(it.key()) < 0)
            throw ConfigError("config: binning names unknown column '" + it.key() + "'");
        ColumnBinning b;
        b.edges = get_or<std::vector<double>>(*it, "edges", {});
        b.bin_count = get_or<int>(*it, "bins", 0);
        const std::string strat = get_or<std::string>(*it, "strategy", "equal_width");
        if (strat == "equal_width") b.strategy = BinStrategy::EqualWidth;
        else if (strat == "quantile") b.strategy = BinStrategy::Quantile;
        else throw ConfigError("config: unknown binning strategy '" + strat + "'");
        b.reject_out_of_range = get_or<bool>(*it, "reject_out_of_range", false);
        b.validate();
        policy.columns[it.key()] = std::move(b);
    }
    return policy;
}

inline BackendConfig backend_from_config(const nlohmann::json& j) {
    const bool has_mock = j.contains("mock");
    const bool has_remote = j.contains("remote");
    if (has_mock == has_remote)
        throw ConfigError("config: select exactly one backend ('mock' or 'remote')");

    BackendConfig b;
    if (has_mock) {
        const auto& jm = j["mock"];
        b.kind = BackendConfig::Kind::Mock;
        b.scm_path = need(jm, "scm", "backend.mock").get<std::string>();
        b.rows_per_request = get_or<std::size_t>(jm, "rows_per_request", 50);
        b.knob = get_or<std::string>(jm, "knob", "");
        b.knob_step = get_or<double>(jm, "knob_step", 0.25);
    } else {
        const auto& jr = j["remote"];
        b.kind = BackendConfig::Kind::Remote;
        b.endpoint = need(jr, "endpoint", "backend.remote").get<std::string>();
        b.credential_env = get_or<std::string>(jr, "credential_env", "FAIRSYNTH_API_KEY");
        if (b.credential_env.empty())
            throw ConfigError("config: backend.remote.credential_env is empty");
    }
    return b;
}

inline Thresholds thresholds_from_config(const nlohmann::json& j) {
    Thresholds t;
    t.max_abs_tv = get_or<double>(j, "max_abs_tv", t.max_abs_tv);
    t.max_abs_de = get_or<double>(j, "max_abs_de", t.max_abs_de);
    t.max_abs_ie = get_or<double>(j, "max_abs_ie", t.max_abs_ie);
    t.max_abs_se = get_or<double>(j, "max_abs_se", t.max_abs_se);
    t.max_dp = get_or<double>(j, "max_dp", t.max_dp);
    t.max_ftu = get_or<double>(j, "max_ftu", t.max_ftu);
    t.min_precision = get_or<double>(j, "min_precision", t.min_precision);
    t.min_recall = get_or<double>(j, "min_recall", t.min_recall);
    t.min_auroc = get_or<double>(j, "min_auroc", t.min_auroc);
    t.max_fidelity_tv = get_or<double>(j, "max_fidelity_tv", t.max_fidelity_tv);
    t.validate();
    return t;
}

} // namespace detail

inline EngineConfig engine_config_from_json(const nlohmann::json& doc, std::string raw_text = "") {
    EngineConfig cfg;
    cfg.raw_text = std::move(raw_text);
    try {
        cfg.backend = detail::backend_from_config(detail::need(doc, "backend", "config"));

        const auto& jd = detail::need(doc, "data", "config");
        cfg.real_csv = detail::get_or<std::string>(jd, "real_csv", "");
        if (jd.contains("sample_from_scm")) {
            if (cfg.backend.kind != BackendConfig::Kind::Mock)
                throw ConfigError("config: data.sample_from_scm requires the mock backend");
            cfg.sample_n = detail::need(jd["sample_from_scm"], "n", "data.sample_from_scm")
                               .get<std::size_t>();
            cfg.sample_seed = detail::get_or<std::uint64_t>(jd["sample_from_scm"], "seed", 1);
        }
        if (cfg.real_csv.empty() == (cfg.sample_n == 0))
            throw ConfigError(
                "config: provide exactly one of data.real_csv or data.sample_from_scm");

        if (jd.contains("schema")) {
            cfg.schema = detail::schema_from_config(jd["schema"]);
        } else if (cfg.backend.kind == BackendConfig::Kind::Mock) {
            cfg.schema = schema_from_scm(load_scm(cfg.backend.scm_path));
        } else {
            throw ConfigError("config: data.schema is required with the remote backend");
        }

        cfg.roles = detail::roles_from_config(detail::need(doc, "roles", "config"));
        cfg.roles.validate(cfg.schema);

        if (doc.contains("binning"))
            cfg.binning = detail::binning_from_config(doc["binning"], cfg.schema);

        const auto& jp = detail::need(doc, "prompt", "config");
        cfg.dataset_description =
            detail::need(jp, "dataset_description", "prompt").get<std::string>();
        cfg.ic_count = detail::get_or<std::size_t>(jp, "ic_count", 40);
        cfg.icl_weighting = icl_weighting_from_name(
            detail::get_or<std::string>(jp, "icl_weighting", "uniform"));
        cfg.extra_directives = detail::get_or<std::vector<std::string>>(jp, "directives", {});

        if (doc.contains("sampling")) {
            const auto& js = doc["sampling"];
            cfg.params.temperature = detail::get_or<double>(js, "temperature", 0.9);
            cfg.params.top_p = detail::get_or<double>(js, "top_p", 1.0);
            cfg.params.max_tokens = detail::get_or<std::size_t>(js, "max_tokens", 4096);
            cfg.params.model_id = detail::get_or<std::string>(js, "model", "mock");
        } else {
            cfg.params.model_id = "mock";
        }
        cfg.params.validate();

        const auto& jg = detail::need(doc, "generation", "config");
        cfg.batch.target_n = detail::need(jg, "target_n", "generation").get<std::size_t>();
        cfg.batch.budget = detail::get_or<std::size_t>(jg, "request_budget", 1);
        cfg.batch.concurrency = detail::get_or<std::size_t>(jg, "concurrency", 2);
        cfg.batch.retain_raw = detail::get_or<bool>(jg, "retain_raw", false);
        cfg.batch.filter_copies = detail::get_or<bool>(jg, "filter_copies", true);

        if (doc.contains("evaluation")) {
            const auto& je = doc["evaluation"];
            cfg.eval.n_repeats = detail::get_or<std::size_t>(je, "n_repeats", 3);
            cfg.eval.test_fraction = detail::get_or<double>(je, "test_fraction", 0.3);
            cfg.eval.alpha = detail::get_or<double>(je, "alpha", 0.5);
            cfg.eval.class_threshold = detail::get_or<double>(je, "class_threshold", 0.5);
            const std::string clf = detail::get_or<std::string>(je, "classifier", "logistic");
            if (clf == "logistic") cfg.eval.classifier = Classifier::Kind::Logistic;
            else if (clf == "boosted_stumps") cfg.eval.classifier = Classifier::Kind::BoostedStumps;
            else throw ConfigError("config: unknown classifier '" + clf + "'");
        }
        cfg.eval.binning = cfg.binning;

        if (doc.contains("thresholds"))
            cfg.thresholds = detail::thresholds_from_config(doc["thresholds"]);

        if (doc.contains("loop")) {
            const auto& jl = doc["loop"];
            cfg.max_iterations = detail::get_or<std::size_t>(jl, "max_iterations", 5);
            cfg.contrastive_pairs = detail::get_or<std::size_t>(jl, "contrastive_pairs", 4);
        }
        if (cfg.max_iterations < 1) throw ConfigError("config: loop.max_iterations must be >= 1");

        cfg.seed = detail::get_or<std::uint64_t>(doc, "seed", 0);
        cfg.out_dir = detail::get_or<std::string>(doc, "out_dir", "");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: malformed document: ") + e.what());
    }
    return cfg;
}

inline EngineConfig load_engine_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return engine_config_from_json(doc, buf.str());
}

// The real reference: an on-disk CSV, or rows drawn from the mock SCM.
inline Dataset load_real_data(const EngineConfig& cfg) {
    if (cfg.sample_n > 0) {
        DiscreteScm scm = load_scm(cfg.backend.scm_path);
        Dataset data = sample(scm, cfg.sample_n, cfg.sample_seed);
        if (!(data.schema == cfg.schema))
            throw ConfigError("config: SCM schema does not match the configured schema");
        return data;
    }
    return load_csv(cfg.real_csv, cfg.schema);
}

inline PromptSpec make_prompt_spec(const EngineConfig& cfg) {
    PromptSpec spec;
    spec.dataset_description = cfg.dataset_description;
    spec.sensitive_feature = cfg.roles.sensitive;
    spec.mediators = cfg.roles.mediators;
    spec.label = cfg.roles.outcome;
    spec.header = cfg.schema.header_line();
    spec.ic_count = cfg.ic_count;
    spec.icl_weighting = cfg.icl_weighting;
    spec.extra_directives = cfg.extra_directives;
    spec.validate(cfg.schema);
    return spec;
}

inline std::unique_ptr<GeneratorBackend> make_mock_backend(const BackendConfig& b) {
    if (b.kind != BackendConfig::Kind::Mock)
        throw ConfigError("mock backend requested but config selects remote");
    return std::make_unique<MockScmBackend>(load_scm(b.scm_path), b.rows_per_request, b.knob,
                                            b.knob_step);
}

inline RunConfig make_run_config(const EngineConfig& cfg, Dataset real) {
    RunConfig rc;
    rc.real = std::move(real);
    rc.roles = cfg.roles;
    rc.prompt = make_prompt_spec(cfg);
    rc.params = cfg.params;
    rc.batch = cfg.batch;
    rc.eval = cfg.eval;
    rc.thresholds = cfg.thresholds;
    rc.max_iterations = cfg.max_iterations;
    rc.contrastive_pairs = cfg.contrastive_pairs;
    rc.seed = cfg.seed;
    rc.out_dir = cfg.out_dir;
    rc.config_snapshot = cfg.raw_text;
    return rc;
}

} // namespace fairsynth
