#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fairsynth/rng.hpp"
#include "fairsynth/scm.hpp"

namespace testsupport {

inline std::vector<double> random_distribution(fairsynth::Rng& rng, std::size_t k) {
    // entries stay comfortably away from 0 and 1 so plug-in estimators behave
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& v : p) {
        v = rng.real01() + 0.3;
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

// W -> X, W -> Z, W -> Y, X -> Z -> Y: a random instance of the standard
// fairness layout with small discrete domains.
inline fairsynth::DiscreteScm make_random_scm(fairsynth::Rng& rng, int n_conf, int n_med,
                                              bool with_balance_knob = false) {
    using namespace fairsynth;
    DiscreteScm scm;

    auto add = [&](ScmVariable v) {
        std::size_t rows = 1;
        for (int p : v.parents) rows *= scm.variables[std::size_t(p)].levels.size();
        for (std::size_t r = 0; r < rows; ++r)
            v.cpt.push_back(random_distribution(rng, v.levels.size()));
        scm.variables.push_back(std::move(v));
        return int(scm.variables.size()) - 1;
    };

    std::vector<int> w_idx;
    for (int i = 0; i < n_conf; ++i) {
        ScmVariable w;
        w.name = "W" + std::to_string(i);
        w.levels = rng.below(2) == 0 ? std::vector<std::string>{"0", "1"}
                                     : std::vector<std::string>{"lo", "mid", "hi"};
        w.role = VariableRole::Confounder;
        w_idx.push_back(add(std::move(w)));
    }

    ScmVariable x;
    x.name = "X";
    x.levels = {"0", "1"};
    x.role = VariableRole::Sensitive;
    x.parents = w_idx;
    int x_idx = add(std::move(x));

    std::vector<int> z_idx;
    for (int i = 0; i < n_med; ++i) {
        ScmVariable z;
        z.name = "Z" + std::to_string(i);
        z.levels = rng.below(2) == 0 ? std::vector<std::string>{"0", "1"}
                                     : std::vector<std::string>{"a", "b", "c"};
        z.role = VariableRole::Mediator;
        z.parents.push_back(x_idx);
        for (int w : w_idx)
            if (rng.below(2) == 0) z.parents.push_back(w);
        z_idx.push_back(add(std::move(z)));
    }

    ScmVariable y;
    y.name = "Y";
    y.levels = {"0", "1"};
    y.role = VariableRole::Outcome;
    y.parents.push_back(x_idx);
    for (int z : z_idx) y.parents.push_back(z);
    for (int w : w_idx) y.parents.push_back(w);
    add(std::move(y));

    if (with_balance_knob) {
        Knob balance;
        balance.name = "balance";
        KnobTarget t;
        t.variable = x_idx;
        t.fair = std::vector<double>(2, 0.5);
        balance.targets.push_back(std::move(t));
        scm.knobs.push_back(std::move(balance));
    }

    scm.validate();
    return scm;
}

// Fixed two-variable chain X -> Z -> Y with no confounders; effects are
// known in closed form (see the unit test that freezes them).
inline fairsynth::DiscreteScm no_confounder_scm() {
    using namespace fairsynth;
    DiscreteScm scm;
    ScmVariable x;
    x.name = "X";
    x.levels = {"0", "1"};
    x.role = VariableRole::Sensitive;
    x.cpt = {{0.5, 0.5}};
    scm.variables.push_back(x);

    ScmVariable z;
    z.name = "Z";
    z.levels = {"0", "1"};
    z.role = VariableRole::Mediator;
    z.parents = {0};
    z.cpt = {{0.8, 0.2}, {0.2, 0.8}};  // P(Z=1|X) = 0.2 + 0.6 X
    scm.variables.push_back(z);

    ScmVariable y;
    y.name = "Y";
    y.levels = {"0", "1"};
    y.role = VariableRole::Outcome;
    y.parents = {0, 1};
    // P(Y=1|x,z) = 0.1 + 0.5x + 0.3z, rows ordered (x,z) = 00,01,10,11
    y.cpt = {{0.9, 0.1}, {0.6, 0.4}, {0.4, 0.6}, {0.1, 0.9}};
    scm.variables.push_back(y);

    scm.validate();
    return scm;
}

// Regularized lower incomplete gamma P(a, x): series expansion below a+1,
// Lentz continued fraction above.
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) return 0.0;
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term, ap = a;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-14) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-14) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

// upper-tail p-value of a chi-square statistic
inline double chi_square_pvalue(double stat, double df) {
    return 1.0 - gamma_p(df / 2.0, stat / 2.0);
}

// The balance-knob scenario: an unfair cohort (majority share 0.8, tv 0.56)
// whose "balance" knob interpolates every CPT toward exact fairness (tv 0).
inline fairsynth::DiscreteScm balance_scenario_scm() {
    using namespace fairsynth;
    DiscreteScm scm;

    ScmVariable x;
    x.name = "group";
    x.role = VariableRole::Sensitive;
    x.levels = {"maj", "min"};
    x.cpt = {{0.8, 0.2}};
    scm.variables.push_back(x);

    ScmVariable z;
    z.name = "priors";
    z.role = VariableRole::Mediator;
    z.levels = {"low", "high"};
    z.parents = {0};
    z.cpt = {{0.8, 0.2}, {0.3, 0.7}};
    scm.variables.push_back(z);

    ScmVariable y;
    y.name = "outcome";
    y.role = VariableRole::Outcome;
    y.levels = {"0", "1"};
    y.parents = {0, 1};
    y.cpt = {{0.85, 0.15}, {0.6, 0.4}, {0.45, 0.55}, {0.15, 0.85}};
    scm.variables.push_back(y);

    Knob knob;
    knob.name = "balance";
    knob.targets.push_back({0, {}, {0.5, 0.5}});
    knob.targets.push_back({1, {}, {0.55, 0.45}});
    knob.targets.push_back({2, {{1, 0}}, {0.65, 0.35}});
    knob.targets.push_back({2, {{1, 1}}, {0.35, 0.65}});
    scm.knobs = {knob};

    scm.validate();
    return scm;
}

// Self-deleting scratch directory for persistence tests.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("fairsynth_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("missing file: " + p.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

} // namespace testsupport
