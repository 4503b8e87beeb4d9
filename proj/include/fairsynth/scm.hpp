#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"
#include "fairsynth/rng.hpp"

namespace fairsynth {

enum class VariableRole { Sensitive, Mediator, Confounder, Outcome };

inline std::string role_name(VariableRole r) {
    switch (r) {
        case VariableRole::Sensitive: return "sensitive";
        case VariableRole::Mediator: return "mediator";
        case VariableRole::Confounder: return "confounder";
        case VariableRole::Outcome: return "outcome";
    }
    return "?";
}

inline VariableRole role_from_name(const std::string& s) {
    if (s == "sensitive") return VariableRole::Sensitive;
    if (s == "mediator") return VariableRole::Mediator;
    if (s == "confounder") return VariableRole::Confounder;
    if (s == "outcome") return VariableRole::Outcome;
    throw ConfigError("unknown variable role '" + s + "'");
}

// CPT rows are indexed mixed-radix over the parent levels, first parent most
// significant. Row p of a variable with parents (A, B) covers A=p/|B|, B=p%|B|.
struct ScmVariable {
    std::string name;
    std::vector<std::string> levels;
    std::vector<int> parents;  // indices of earlier variables
    std::vector<std::vector<double>> cpt;
    VariableRole role = VariableRole::Confounder;

    int level_of(const std::string& label) const {
        for (std::size_t i = 0; i < levels.size(); ++i)
            if (levels[i] == label) return static_cast<int>(i);
        return -1;
    }
};

struct KnobTarget {
    int variable = -1;
    std::vector<std::pair<int, int>> given;  // (parent variable index, level)
    std::vector<double> fair;                // distribution the knob pulls toward
};

struct Knob {
    std::string name;
    std::vector<KnobTarget> targets;
};

struct GroundTruthEffects {
    double tv = 0.0;
    double de = 0.0;
    double ie = 0.0;
    double se = 0.0;
};

namespace detail {

inline void check_distribution(const std::vector<double>& p, const std::string& what) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError(what + " has an invalid probability entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ConfigError(what + " sums to " + render_number(sum) + ", expected 1");
}

} // namespace detail

struct DiscreteScm {
    std::vector<ScmVariable> variables;
    std::vector<Knob> knobs;

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < variables.size(); ++i)
            if (variables[i].name == name) return static_cast<int>(i);
        return -1;
    }

    std::size_t cpt_rows_for(std::size_t vi) const {
        std::size_t rows = 1;
        for (int p : variables[vi].parents) rows *= variables[static_cast<std::size_t>(p)].levels.size();
        return rows;
    }

    std::size_t cpt_row_index(std::size_t vi, const std::vector<int>& assignment) const {
        std::size_t row = 0;
        for (int p : variables[vi].parents) {
            const auto& parent = variables[static_cast<std::size_t>(p)];
            row = row * parent.levels.size() + static_cast<std::size_t>(assignment[static_cast<std::size_t>(p)]);
        }
        return row;
    }

    void validate() const {
        if (variables.empty()) throw ConfigError("SCM has no variables");
        for (std::size_t i = 0; i < variables.size(); ++i) {
            const ScmVariable& v = variables[i];
            if (v.name.empty()) throw ConfigError("SCM variable with empty name");
            for (std::size_t j = 0; j < i; ++j)
                if (variables[j].name == v.name)
                    throw ConfigError("duplicate SCM variable '" + v.name + "'");
            if (v.levels.size() < 2)
                throw ConfigError("variable '" + v.name + "' needs at least 2 levels");
            for (std::size_t a = 0; a < v.levels.size(); ++a)
                for (std::size_t b = a + 1; b < v.levels.size(); ++b)
                    if (v.levels[a] == v.levels[b])
                        throw ConfigError("variable '" + v.name + "' repeats level '" + v.levels[a] + "'");
            for (int p : v.parents)
                if (p < 0 || static_cast<std::size_t>(p) >= i)
                    throw ConfigError("variable '" + v.name + "' lists a parent that does not precede it");
            if (v.cpt.size() != cpt_rows_for(i))
                throw ConfigError("variable '" + v.name + "' has " + std::to_string(v.cpt.size()) +
                                  " CPT rows, expected " + std::to_string(cpt_rows_for(i)));
            for (std::size_t r = 0; r < v.cpt.size(); ++r) {
                if (v.cpt[r].size() != v.levels.size())
                    throw ConfigError("variable '" + v.name + "' CPT row " + std::to_string(r) +
                                      " has wrong arity");
                detail::check_distribution(v.cpt[r], "variable '" + v.name + "' CPT row " + std::to_string(r));
            }
        }
        for (std::size_t k = 0; k < knobs.size(); ++k) {
            const Knob& knob = knobs[k];
            if (knob.name.empty()) throw ConfigError("SCM knob with empty name");
            for (std::size_t j = 0; j < k; ++j)
                if (knobs[j].name == knob.name) throw ConfigError("duplicate SCM knob '" + knob.name + "'");
            if (knob.targets.empty())
                throw ConfigError("knob '" + knob.name + "' has no targets");
            for (const KnobTarget& t : knob.targets) {
                if (t.variable < 0 || static_cast<std::size_t>(t.variable) >= variables.size())
                    throw ConfigError("knob '" + knob.name + "' targets an unknown variable");
                const ScmVariable& v = variables[static_cast<std::size_t>(t.variable)];
                for (const auto& [pv, lvl] : t.given) {
                    bool is_parent = false;
                    for (int p : v.parents) is_parent = is_parent || p == pv;
                    if (!is_parent)
                        throw ConfigError("knob '" + knob.name + "' conditions on a non-parent of '" +
                                          v.name + "'");
                    const ScmVariable& pvar = variables[static_cast<std::size_t>(pv)];
                    if (lvl < 0 || static_cast<std::size_t>(lvl) >= pvar.levels.size())
                        throw ConfigError("knob '" + knob.name + "' conditions '" + pvar.name +
                                          "' on an unknown level");
                }
                if (t.fair.size() != v.levels.size())
                    throw ConfigError("knob '" + knob.name + "' fair distribution arity mismatch for '" +
                                      v.name + "'");
                detail::check_distribution(t.fair, "knob '" + knob.name + "' fair distribution");
            }
        }
    }
};

inline Schema schema_from_scm(const DiscreteScm& scm) {
    Schema schema;
    for (const ScmVariable& v : scm.variables) {
        ColumnSpec col;
        col.name = v.name;
        col.kind = v.levels.size() == 2 ? ColumnKind::Binary : ColumnKind::Categorical;
        col.categories = v.levels;
        schema.columns.push_back(std::move(col));
    }
    schema.validate();
    return schema;
}

inline SfmRoles roles_from_scm(const DiscreteScm& scm, const std::string& x0, const std::string& x1) {
    SfmRoles roles;
    for (const ScmVariable& v : scm.variables) {
        switch (v.role) {
            case VariableRole::Sensitive:
                if (!roles.sensitive.empty())
                    throw ConfigError("SCM declares more than one sensitive variable");
                roles.sensitive = v.name;
                break;
            case VariableRole::Mediator: roles.mediators.push_back(v.name); break;
            case VariableRole::Outcome:
                if (!roles.outcome.empty())
                    throw ConfigError("SCM declares more than one outcome variable");
                roles.outcome = v.name;
                break;
            case VariableRole::Confounder: break;
        }
    }
    if (roles.sensitive.empty()) throw ConfigError("SCM declares no sensitive variable");
    if (roles.outcome.empty()) throw ConfigError("SCM declares no outcome variable");
    roles.baseline_level = x0;
    roles.comparison_level = x1;
    return roles;
}

inline Dataset sample(const DiscreteScm& scm, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("sample size must be >= 1");
    Dataset out;
    out.schema = schema_from_scm(scm);
    out.rows.reserve(n);
    Rng rng(seed);
    std::vector<int> assignment(scm.variables.size(), 0);
    for (std::size_t r = 0; r < n; ++r) {
        Row row(scm.variables.size());
        for (std::size_t vi = 0; vi < scm.variables.size(); ++vi) {
            const ScmVariable& v = scm.variables[vi];
            const std::vector<double>& dist = v.cpt[scm.cpt_row_index(vi, assignment)];
            double u = rng.real01();
            double acc = 0.0;
            int drawn = static_cast<int>(v.levels.size()) - 1;
            for (std::size_t l = 0; l < dist.size(); ++l) {
                acc += dist[l];
                if (u < acc) {
                    drawn = static_cast<int>(l);
                    break;
                }
            }
            assignment[vi] = drawn;
            row[vi] = make_level(drawn);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

// Copy of the SCM with each knob target row moved toward its fair
// distribution: row' = (1-k)*row + k*fair on every row matching `given`.
inline DiscreteScm apply_knobs(const DiscreteScm& scm, const std::map<std::string, double>& knob_values) {
    for (const auto& [name, value] : knob_values) {
        bool declared = false;
        for (const Knob& k : scm.knobs) declared = declared || k.name == name;
        if (!declared) throw ConfigError("unknown knob '" + name + "'");
        if (!(value >= 0.0 && value <= 1.0))
            throw ConfigError("knob '" + name + "' = " + render_number(value) + " outside [0, 1]");
    }

    DiscreteScm tuned = scm;
    for (const Knob& knob : scm.knobs) {
        auto it = knob_values.find(knob.name);
        if (it == knob_values.end() || it->second == 0.0) continue;
        const double k = it->second;
        for (const KnobTarget& t : knob.targets) {
            ScmVariable& v = tuned.variables[static_cast<std::size_t>(t.variable)];
            const std::size_t rows = tuned.cpt_rows_for(static_cast<std::size_t>(t.variable));
            for (std::size_t r = 0; r < rows; ++r) {
                // decode this row's parent levels to test the partial match
                bool matches = true;
                std::size_t rem = r;
                std::vector<int> parent_level(v.parents.size());
                for (std::size_t pi = v.parents.size(); pi-- > 0;) {
                    const auto& pvar = tuned.variables[static_cast<std::size_t>(v.parents[pi])];
                    parent_level[pi] = static_cast<int>(rem % pvar.levels.size());
                    rem /= pvar.levels.size();
                }
                for (const auto& [pv, lvl] : t.given) {
                    for (std::size_t pi = 0; pi < v.parents.size(); ++pi)
                        if (v.parents[pi] == pv && parent_level[pi] != lvl) matches = false;
                }
                if (!matches) continue;
                for (std::size_t l = 0; l < v.cpt[r].size(); ++l)
                    v.cpt[r][l] = (1.0 - k) * v.cpt[r][l] + k * t.fair[l];
            }
        }
    }
    tuned.validate();
    return tuned;
}

inline Dataset mock_generate(const DiscreteScm& scm, const std::map<std::string, double>& knob_values,
                             std::size_t n, std::uint64_t seed) {
    return sample(apply_knobs(scm, knob_values), n, seed);
}

// Exact path-specific effects by full-joint enumeration, using the true
// conditionals mu(x,z,w)=E[Y|x,z,w], P(z|x,w), P(w|x). tv is computed
// independently as E[Y|x1]-E[Y|x0] so the decomposition identity stays a
// meaningful check on the formulas rather than a restatement of them.
inline GroundTruthEffects exact_effects(const DiscreteScm& scm, const std::string& x0,
                                        const std::string& x1) {
    scm.validate();
    int sx = -1, oy = -1;
    std::vector<std::size_t> med, conf;
    for (std::size_t i = 0; i < scm.variables.size(); ++i) {
        switch (scm.variables[i].role) {
            case VariableRole::Sensitive:
                if (sx >= 0) throw ConfigError("SCM declares more than one sensitive variable");
                sx = static_cast<int>(i);
                break;
            case VariableRole::Outcome:
                if (oy >= 0) throw ConfigError("SCM declares more than one outcome variable");
                oy = static_cast<int>(i);
                break;
            case VariableRole::Mediator: med.push_back(i); break;
            case VariableRole::Confounder: conf.push_back(i); break;
        }
    }
    if (sx < 0) throw ConfigError("SCM declares no sensitive variable");
    if (oy < 0) throw ConfigError("SCM declares no outcome variable");
    const ScmVariable& xvar = scm.variables[static_cast<std::size_t>(sx)];
    const ScmVariable& yvar = scm.variables[static_cast<std::size_t>(oy)];
    if (yvar.levels.size() != 2)
        throw ConfigError("outcome variable '" + yvar.name + "' must be binary");
    const int l0 = xvar.level_of(x0);
    const int l1 = xvar.level_of(x1);
    if (l0 < 0) throw ConfigError("sensitive level '" + x0 + "' not declared");
    if (l1 < 0) throw ConfigError("sensitive level '" + x1 + "' not declared");
    if (l0 == l1) throw ConfigError("baseline and comparison levels must differ");

    std::size_t nw = 1, nz = 1;
    for (std::size_t c : conf) nw *= scm.variables[c].levels.size();
    for (std::size_t m : med) nz *= scm.variables[m].levels.size();
    if (nw * nz > 1000000)
        throw ConfigError("joint (W, Z) space has " + std::to_string(nw * nz) +
                          " cells, enumeration limit is 1000000");

    // joint accumulators, indexed w*nz+z
    std::vector<double> pzw0(nw * nz, 0.0), pzw1(nw * nz, 0.0);
    std::vector<double> ey0(nw * nz, 0.0), ey1(nw * nz, 0.0);
    std::vector<double> pw0(nw, 0.0), pw1(nw, 0.0);
    double px0 = 0.0, px1 = 0.0, eytot0 = 0.0, eytot1 = 0.0;

    const std::size_t nvars = scm.variables.size();
    std::vector<int> assignment(nvars, 0);
    bool done = false;
    while (!done) {
        double p = 1.0;
        for (std::size_t vi = 0; vi < nvars; ++vi) {
            p *= scm.variables[vi].cpt[scm.cpt_row_index(vi, assignment)]
                                      [static_cast<std::size_t>(assignment[vi])];
            if (p == 0.0) break;
        }
        if (p != 0.0) {
            const int xl = assignment[static_cast<std::size_t>(sx)];
            const bool ypos = assignment[static_cast<std::size_t>(oy)] == 1;
            if (xl == l0 || xl == l1) {
                std::size_t w = 0, z = 0;
                for (std::size_t c : conf)
                    w = w * scm.variables[c].levels.size() + static_cast<std::size_t>(assignment[c]);
                for (std::size_t m : med)
                    z = z * scm.variables[m].levels.size() + static_cast<std::size_t>(assignment[m]);
                const std::size_t wz = w * nz + z;
                if (xl == l0) {
                    px0 += p;
                    pw0[w] += p;
                    pzw0[wz] += p;
                    if (ypos) { ey0[wz] += p; eytot0 += p; }
                } else {
                    px1 += p;
                    pw1[w] += p;
                    pzw1[wz] += p;
                    if (ypos) { ey1[wz] += p; eytot1 += p; }
                }
            }
        }
        // odometer over all variable levels
        std::size_t vi = nvars;
        while (vi-- > 0) {
            if (++assignment[vi] < static_cast<int>(scm.variables[vi].levels.size())) break;
            assignment[vi] = 0;
            if (vi == 0) done = true;
        }
    }

    if (px0 <= 0.0) throw DataError("P(X=" + x0 + ") is zero, effects undefined");
    if (px1 <= 0.0) throw DataError("P(X=" + x1 + ") is zero, effects undefined");

    auto mu = [&](const std::vector<double>& ey, const std::vector<double>& pzw, std::size_t wz,
                  const char* which) {
        if (pzw[wz] == 0.0)
            throw DataError(std::string("zero-probability conditioning cell for mu(") + which + ", z, w)");
        return ey[wz] / pzw[wz];
    };

    GroundTruthEffects fx;
    fx.tv = eytot1 / px1 - eytot0 / px0;

    for (std::size_t w = 0; w < nw; ++w) {
        const double pwx0 = pw0[w] / px0;
        const double pwx1 = pw1[w] / px1;
        for (std::size_t z = 0; z < nz; ++z) {
            const std::size_t wz = w * nz + z;
            // de: weight P(z,w|x0) on mu(x1)-mu(x0)
            if (pzw0[wz] != 0.0) {
                const double weight = pzw0[wz] / px0;
                fx.de += weight * (mu(ey1, pzw1, wz, "x1") - ey0[wz] / pzw0[wz]);
            }
            // ie: weight P(w|x0)[P(z|x0,w)-P(z|x1,w)] on mu(x1)
            if (pwx0 != 0.0) {
                if (pw1[w] == 0.0)
                    throw DataError("zero-probability conditioning cell for P(z | x1, w)");
                const double coeff = pzw0[wz] / px0 - pwx0 * (pzw1[wz] / pw1[w]);
                if (coeff != 0.0) fx.ie += coeff * mu(ey1, pzw1, wz, "x1");
            }
            // se: weight [P(w|x0)-P(w|x1)] P(z|x1,w) on mu(x1)
            if (pwx0 - pwx1 != 0.0) {
                if (pw1[w] == 0.0)
                    throw DataError("zero-probability conditioning cell for P(z | x1, w)");
                if (pzw1[wz] != 0.0)
                    fx.se += (pwx0 - pwx1) * (pzw1[wz] / pw1[w]) * (ey1[wz] / pzw1[wz]);
            }
        }
    }
    return fx;
}

inline DiscreteScm scm_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("variables"))
        throw ConfigError("SCM document must be an object with a 'variables' array");
    DiscreteScm scm;
    for (const auto& jv : doc.at("variables")) {
        ScmVariable v;
        v.name = jv.at("name").get<std::string>();
        v.levels = jv.at("levels").get<std::vector<std::string>>();
        v.role = role_from_name(jv.value("role", "confounder"));
        if (jv.contains("parents"))
            for (const auto& jp : jv.at("parents")) {
                int pi = scm.index_of(jp.get<std::string>());
                if (pi < 0)
                    throw ConfigError("variable '" + v.name + "' lists unknown or later parent '" +
                                      jp.get<std::string>() + "'");
                v.parents.push_back(pi);
            }
        v.cpt = jv.at("cpt").get<std::vector<std::vector<double>>>();
        scm.variables.push_back(std::move(v));
    }
    if (doc.contains("knobs"))
        for (const auto& jk : doc.at("knobs")) {
            Knob knob;
            knob.name = jk.at("name").get<std::string>();
            for (const auto& jt : jk.at("targets")) {
                KnobTarget t;
                const std::string vname = jt.at("variable").get<std::string>();
                t.variable = scm.index_of(vname);
                if (t.variable < 0)
                    throw ConfigError("knob '" + knob.name + "' targets unknown variable '" + vname + "'");
                const ScmVariable& v = scm.variables[static_cast<std::size_t>(t.variable)];
                if (jt.contains("given"))
                    for (const auto& [pname, jlvl] : jt.at("given").items()) {
                        int pi = scm.index_of(pname);
                        if (pi < 0)
                            throw ConfigError("knob '" + knob.name + "' conditions on unknown variable '" +
                                              pname + "'");
                        int lvl = scm.variables[static_cast<std::size_t>(pi)].level_of(
                            jlvl.get<std::string>());
                        if (lvl < 0)
                            throw ConfigError("knob '" + knob.name + "' conditions '" + pname +
                                              "' on unknown level '" + jlvl.get<std::string>() + "'");
                        t.given.emplace_back(pi, lvl);
                    }
                t.fair = jt.at("fair").get<std::vector<double>>();
                if (t.fair.size() != v.levels.size())
                    throw ConfigError("knob '" + knob.name + "' fair distribution arity mismatch for '" +
                                      vname + "'");
                knob.targets.push_back(std::move(t));
            }
            scm.knobs.push_back(std::move(knob));
        }
    scm.validate();
    return scm;
}

inline DiscreteScm load_scm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open SCM file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("SCM file '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        return scm_from_json(doc);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("SCM file '" + path + "' is malformed: " + e.what());
    }
}

} // namespace fairsynth
