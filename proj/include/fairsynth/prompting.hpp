#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairsynth/csv.hpp"
#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"
#include "fairsynth/rng.hpp"

namespace fairsynth {

enum class IclWeighting { Uniform, GroupBalanced };

inline std::string icl_weighting_name(IclWeighting w) {
    return w == IclWeighting::Uniform ? "uniform" : "group_balanced";
}

inline IclWeighting icl_weighting_from_name(const std::string& name) {
    if (name == "uniform") return IclWeighting::Uniform;
    if (name == "group_balanced") return IclWeighting::GroupBalanced;
    throw ConfigError("unknown icl_weighting '" + name + "' (use uniform or group_balanced)");
}

struct PromptSpec {
    std::string dataset_description;
    std::string sensitive_feature;
    std::vector<std::string> mediators;
    std::string label;
    std::string header;  // rendered schema line shown in the prompt
    std::size_t ic_count = 40;
    std::vector<std::string> extra_directives;
    IclWeighting icl_weighting = IclWeighting::Uniform;
    std::vector<Row> contrastive_rows;  // injected below the sampled examples

    void validate(const Schema& schema) const {
        if (ic_count < 1) throw ConfigError("ic_count must be >= 1");
        if (dataset_description.empty()) throw ConfigError("dataset_description is empty");
        if (header.empty()) throw ConfigError("prompt header is empty");
        if (schema.index_of(sensitive_feature) < 0)
            throw ConfigError("sensitive_feature '" + sensitive_feature + "' not in schema");
        if (schema.index_of(label) < 0)
            throw ConfigError("label '" + label + "' not in schema");
        for (const std::string& m : mediators)
            if (schema.index_of(m) < 0) throw ConfigError("mediator '" + m + "' not in schema");
        for (const std::string& d : extra_directives)
            if (d.empty()) throw ConfigError("empty refinement directive");
    }
};

struct PromptText {
    std::string system_role;
    std::string user_body;
};

inline std::uint64_t prompt_fingerprint(const PromptText& p) {
    // FNV-1a over both parts, separator avoids ambiguity
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0x1f;
        h *= 1099511628211ull;
    };
    mix(p.system_role);
    mix(p.user_body);
    return h;
}

// ic_count distinct rows. group_balanced draws each row with probability
// proportional to the inverse of its (sensitive x outcome) cell frequency,
// renormalized over the remaining rows after every draw, so depleted cells
// stay attractive until they run dry. An empty cell breaks the balancing
// premise and selection falls back to uniform with a warning.
inline std::vector<Row> select_icl_samples(const Dataset& dataset, const PromptSpec& spec,
                                           std::uint64_t seed,
                                           std::vector<std::string>* warnings = nullptr) {
    spec.validate(dataset.schema);
    if (dataset.size() < spec.ic_count)
        throw DataError("dataset has " + std::to_string(dataset.size()) +
                        " rows, fewer than ic_count=" + std::to_string(spec.ic_count));

    bool balanced = false;
    std::vector<std::size_t> row_cell(dataset.size(), 0);
    std::vector<double> cell_left;
    if (spec.icl_weighting == IclWeighting::GroupBalanced) {
        const auto sx = static_cast<std::size_t>(dataset.schema.index_of(spec.sensitive_feature));
        const auto oy = static_cast<std::size_t>(dataset.schema.index_of(spec.label));
        const ColumnSpec& sens = dataset.schema.columns[sx];
        const ColumnSpec& out = dataset.schema.columns[oy];
        if (!sens.is_discrete() || !out.is_discrete())
            throw ConfigError("group_balanced selection needs discrete sensitive and label columns");
        const std::size_t ny = out.categories.size();
        cell_left.assign(sens.categories.size() * ny, 0.0);
        std::vector<bool> sens_seen(sens.categories.size(), false), out_seen(ny, false);
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const Row& r = dataset.rows[i];
            row_cell[i] =
                static_cast<std::size_t>(r[sx].level) * ny + static_cast<std::size_t>(r[oy].level);
            cell_left[row_cell[i]] += 1.0;
            sens_seen[static_cast<std::size_t>(r[sx].level)] = true;
            out_seen[static_cast<std::size_t>(r[oy].level)] = true;
        }
        bool broken = false;
        for (std::size_t a = 0; a < sens.categories.size() && !broken; ++a)
            for (std::size_t y = 0; y < ny && !broken; ++y)
                broken = sens_seen[a] && out_seen[y] && cell_left[a * ny + y] == 0.0;
        if (broken) {
            if (warnings)
                warnings->push_back(
                    "group_balanced: a sensitive-outcome cell is empty, falling back to uniform");
        } else {
            balanced = true;
        }
    }

    // sequential draws without replacement; weights refreshed per draw
    Rng rng(seed);
    std::vector<std::size_t> alive(dataset.size());
    for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;

    std::vector<Row> picked;
    picked.reserve(spec.ic_count);
    for (std::size_t k = 0; k < spec.ic_count; ++k) {
        double total = 0.0;
        for (std::size_t i : alive) total += balanced ? 1.0 / cell_left[row_cell[i]] : 1.0;
        double u = rng.real01() * total;
        std::size_t slot = alive.size() - 1;
        for (std::size_t j = 0; j < alive.size(); ++j) {
            u -= balanced ? 1.0 / cell_left[row_cell[alive[j]]] : 1.0;
            if (u <= 0.0) {
                slot = j;
                break;
            }
        }
        const std::size_t idx = alive[slot];
        picked.push_back(dataset.rows[idx]);
        if (balanced) cell_left[row_cell[idx]] -= 1.0;
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(slot));
    }
    return picked;
}

namespace detail {

inline std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    return out.empty() ? "none" : out;
}

} // namespace detail

inline constexpr const char* kAntiCopyClause =
    "DO NOT COPY THE EXAMPLES but generate realistic but new AND diverse samples which have the "
    "correct label conditioned on the features.";

// Fills the fixed template; icl_rows render as comma-separated lines under the
// header, contrastive rows (if any) follow them inside the same example block.
inline PromptText build_prompt(const PromptSpec& spec, const std::vector<Row>& icl_rows,
                               const Schema& schema) {
    spec.validate(schema);
    if (icl_rows.size() != spec.ic_count)
        throw ConfigError("expected ic_count=" + std::to_string(spec.ic_count) + " example rows, got " +
                          std::to_string(icl_rows.size()));
    if (spec.sensitive_feature.empty() || spec.label.empty())
        throw ConfigError("prompt slot value is empty");

    PromptText out;
    out.system_role = "You are a tabular synthetic data generation model.";

    std::string b;
    b += "You are a synthetic data generator. Your goal is to produce data which mirrors the given "
         "examples in causal fairness within a structural causal model (SCM) framework and feature "
         "and label distributions but also produce as diverse samples as possible. I will give you "
         "real examples first.\n\n";
    b += "Context: Leverage your knowledge about " + spec.dataset_description +
         " and causal fairness to generate realistic but diverse samples. Generated data should "
         "consider " +
         spec.sensitive_feature + " as the sensitive attribute (X), " +
         detail::join_names(spec.mediators) + " as the mediators (Z), " + spec.label +
         " as the target variable/Outcome (Y), and the rest of the features as the confounder "
         "attribute (W).\n\n";
    b += "Generated data must be structured to allow evaluation of fairness through causal pathways, "
         "capturing both direct and indirect effects of the sensitive attribute on the target "
         "variable, as well as possible confounding influences.\n\n";
    b += "The output should be a markdown code snippet formatted in the following schema:\n";
    b += spec.header + "\n\n";
    b += "example date:\n";
    for (const Row& r : icl_rows) b += render_row_line(r, schema) + "\n";
    for (const Row& r : spec.contrastive_rows) b += render_row_line(r, schema) + "\n";
    b += "\n";
    b += kAntiCopyClause;
    for (const std::string& d : spec.extra_directives) b += "\n" + d;
    b += "\n";
    out.user_body = std::move(b);
    return out;
}

inline PromptSpec add_refinement(const PromptSpec& spec, const std::string& directive) {
    if (directive.empty()) throw ConfigError("empty refinement directive");
    PromptSpec next = spec;
    next.extra_directives.push_back(directive);
    return next;
}

} // namespace fairsynth
