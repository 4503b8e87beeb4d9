#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fairsynth/causal.hpp"
#include "fairsynth/scm.hpp"
#include "support.hpp"

using namespace fairsynth;

namespace {

SfmRoles chain_roles() {
    SfmRoles roles;
    roles.sensitive = "X";
    roles.baseline_level = "0";
    roles.comparison_level = "1";
    roles.mediators = {"Z"};
    roles.outcome = "Y";
    return roles;
}

std::vector<double> outcome_as_target(const Dataset& d, const std::string& column) {
    auto ci = std::size_t(d.schema.index_of(column));
    std::vector<double> t;
    for (const Row& r : d.rows) t.push_back(double(r[ci].level));
    return t;
}

// scores each row with the true P(Y=1 | x, z) of the no-confounder chain
ScorerFn chain_oracle_scorer() {
    return [](const Dataset& d) {
        auto xi = std::size_t(d.schema.index_of("X"));
        auto zi = std::size_t(d.schema.index_of("Z"));
        std::vector<double> s;
        for (const Row& r : d.rows) s.push_back(0.1 + 0.5 * r[xi].level + 0.3 * r[zi].level);
        return s;
    };
}

} // namespace

TEST_CASE("zero smoothing reproduces empirical cell means exactly", "[causal]") {
    Dataset d = sample(testsupport::no_confounder_scm(), 500, 21);
    SfmRoles roles = chain_roles();
    EffectModel m = fit_effect_model(d, roles, "Y", {}, 0.0);

    // hand count one cell: x=1, z=0
    double n = 0, y = 0, nx = 0, nxz0 = 0;
    for (const Row& r : d.rows) {
        if (r[0].level != 1) continue;
        nx += 1;
        if (r[1].level != 0) continue;
        nxz0 += 1;
        n += 1;
        y += r[2].level;
    }
    CHECK(m.mu[m.cell(1, 0, 0)] == Catch::Approx(y / n).margin(0));
    CHECK(m.pz_xw[m.cell(1, 0, 0)] == Catch::Approx(nxz0 / nx).margin(0));
    CHECK(m.support[m.cell(1, 0, 0)] == n);
    CHECK(m.warnings.empty());
}

TEST_CASE("smoothing shrinks toward the global mean and fills empty cells", "[causal]") {
    Schema s;
    s.columns = {
        {"X", ColumnKind::Binary, {"0", "1"}, ""},
        {"Z", ColumnKind::Binary, {"0", "1"}, ""},
        {"Y", ColumnKind::Binary, {"0", "1"}, ""},
    };
    Dataset d;
    d.schema = s;
    // no (x=1, z=1) rows at all
    d.rows = {
        {make_level(0), make_level(0), make_level(1)}, {make_level(0), make_level(0), make_level(0)},
        {make_level(0), make_level(1), make_level(1)}, {make_level(1), make_level(0), make_level(1)},
        {make_level(1), make_level(0), make_level(0)}, {make_level(0), make_level(1), make_level(0)},
    };
    SfmRoles roles = chain_roles();

    EffectModel smoothed = fit_effect_model(d, roles, "Y", {}, 0.5);
    double global = 3.0 / 6.0;
    CHECK(smoothed.mu[smoothed.cell(1, 0, 1)] == Catch::Approx(global).margin(1e-15));
    // occupied cell shrinks partway: (y + a*g) / (n + a) with n=2, y=1
    CHECK(smoothed.mu[smoothed.cell(1, 0, 0)] == Catch::Approx((1.0 + 0.25) / 2.5).margin(1e-15));
    CHECK(smoothed.warnings.empty());

    EffectModel raw = fit_effect_model(d, roles, "Y", {}, 0.0);
    CHECK(raw.mu[raw.cell(1, 0, 1)] == Catch::Approx(global).margin(1e-15));
    REQUIRE_FALSE(raw.warnings.empty());

    // conditionals stay normalized either way
    for (int x = 0; x < 2; ++x) {
        double sum = 0;
        for (std::size_t z = 0; z < 2; ++z) sum += smoothed.pz_xw[smoothed.cell(x, 0, z)];
        CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("uniform fallback kicks in for an empty conditioning cell at alpha zero", "[causal]") {
    Schema s;
    s.columns = {
        {"X", ColumnKind::Binary, {"0", "1"}, ""},
        {"W", ColumnKind::Binary, {"0", "1"}, ""},
        {"Z", ColumnKind::Binary, {"0", "1"}, ""},
        {"Y", ColumnKind::Binary, {"0", "1"}, ""},
    };
    Dataset d;
    d.schema = s;
    // x=1 never observed with w=1
    d.rows = {
        {make_level(0), make_level(0), make_level(0), make_level(0)},
        {make_level(0), make_level(1), make_level(1), make_level(1)},
        {make_level(1), make_level(0), make_level(1), make_level(1)},
        {make_level(1), make_level(0), make_level(0), make_level(0)},
    };
    SfmRoles roles = chain_roles();

    EffectModel m = fit_effect_model(d, roles, "Y", {}, 0.0);
    CHECK(m.pz_xw[m.cell(1, 1, 0)] == Catch::Approx(0.5).margin(1e-15));
    CHECK(m.pz_xw[m.cell(1, 1, 1)] == Catch::Approx(0.5).margin(1e-15));
    bool mentions_uniform = false;
    for (const auto& w : m.warnings) mentions_uniform = mentions_uniform || w.find("uniform") != std::string::npos;
    CHECK(mentions_uniform);
}

TEST_CASE("absent sensitive level is an error", "[causal]") {
    Dataset d = sample(testsupport::no_confounder_scm(), 50, 3);
    for (Row& r : d.rows) r[0] = make_level(0);
    CHECK_THROWS_WITH(fit_effect_model(d, chain_roles(), "Y", {}, 0.5),
                      Catch::Matchers::ContainsSubstring("absent"));
}

TEST_CASE("estimates recover the chain oracle at large n", "[causal][oracle]") {
    DiscreteScm scm = testsupport::no_confounder_scm();
    GroundTruthEffects truth = exact_effects(scm, "0", "1");
    Dataset d = sample(scm, 200000, 77);
    EffectModel m = fit_effect_model(d, chain_roles(), "Y", {}, 0.0);
    CausalEffects fx = estimate_effects(m, "0", "1");

    CHECK(std::abs(fx.tv - truth.tv) < 0.02);
    CHECK(std::abs(fx.de - truth.de) < 0.02);
    CHECK(std::abs(fx.ie - truth.ie) < 0.02);
    CHECK(std::abs(fx.se - truth.se) < 0.02);
    CHECK(std::abs(fx.tv - 0.68) < 0.02);

    // identity is built in; with alpha=0 and full support tv also matches raw_tv
    CHECK(std::abs(fx.tv - (fx.de - fx.ie - fx.se)) < 1e-9);
    CHECK(std::abs(fx.tv - fx.raw_tv) < 1e-9);
}

TEST_CASE("estimates track exact effects on confounded random models", "[causal][oracle]") {
    Rng rng(2718);
    for (int trial = 0; trial < 3; ++trial) {
        DiscreteScm scm = testsupport::make_random_scm(rng, 1, 1);
        GroundTruthEffects truth = exact_effects(scm, "0", "1");
        Dataset d = sample(scm, 100000, mix_seed(99, std::uint64_t(trial)));
        SfmRoles roles = roles_from_scm(scm, "0", "1");
        EffectModel m = fit_effect_model(d, roles, "Y", {}, 0.0);
        CausalEffects fx = estimate_effects(m, "0", "1");
        CHECK(std::abs(fx.tv - truth.tv) < 0.02);
        CHECK(std::abs(fx.de - truth.de) < 0.02);
        CHECK(std::abs(fx.ie - truth.ie) < 0.02);
        CHECK(std::abs(fx.se - truth.se) < 0.02);
    }
}

TEST_CASE("inert pathways estimate to zero", "[causal]") {
    DiscreteScm scm;
    ScmVariable x{"X", {"0", "1"}, {}, {{0.4, 0.6}}, VariableRole::Sensitive};
    ScmVariable z{"Z", {"0", "1"}, {}, {{0.5, 0.5}}, VariableRole::Mediator};
    ScmVariable y{"Y", {"0", "1"}, {1}, {{0.7, 0.3}, {0.4, 0.6}}, VariableRole::Outcome};
    scm.variables = {x, z, y};
    scm.validate();
    Dataset d = sample(scm, 100000, 5);
    EffectModel m = fit_effect_model(d, chain_roles(), "Y", {}, 0.5);
    CausalEffects fx = estimate_effects(m, "0", "1");
    CHECK(std::abs(fx.tv) < 0.02);
    CHECK(std::abs(fx.de) < 0.02);
    CHECK(std::abs(fx.ie) < 0.02);
    CHECK(std::abs(fx.se) < 0.02);
}

TEST_CASE("severed paths zero their own component", "[causal]") {
    SECTION("mu independent of x kills de") {
        DiscreteScm scm;
        ScmVariable x{"X", {"0", "1"}, {}, {{0.5, 0.5}}, VariableRole::Sensitive};
        ScmVariable z{"Z", {"0", "1"}, {0}, {{0.8, 0.2}, {0.3, 0.7}}, VariableRole::Mediator};
        // rows (x,z): y depends on z only
        ScmVariable y{"Y", {"0", "1"}, {0, 1},
                      {{0.7, 0.3}, {0.2, 0.8}, {0.7, 0.3}, {0.2, 0.8}}, VariableRole::Outcome};
        scm.variables = {x, z, y};
        scm.validate();
        Dataset d = sample(scm, 100000, 8);
        CausalEffects fx = estimate_effects(fit_effect_model(d, chain_roles(), "Y", {}, 0.0), "0", "1");
        CHECK(std::abs(fx.de) <= 0.02);
    }
    SECTION("z independent of x kills ie") {
        DiscreteScm scm;
        ScmVariable x{"X", {"0", "1"}, {}, {{0.5, 0.5}}, VariableRole::Sensitive};
        ScmVariable z{"Z", {"0", "1"}, {}, {{0.6, 0.4}}, VariableRole::Mediator};
        ScmVariable y{"Y", {"0", "1"}, {0, 1},
                      {{0.8, 0.2}, {0.4, 0.6}, {0.5, 0.5}, {0.1, 0.9}}, VariableRole::Outcome};
        scm.variables = {x, z, y};
        scm.validate();
        Dataset d = sample(scm, 100000, 9);
        CausalEffects fx = estimate_effects(fit_effect_model(d, chain_roles(), "Y", {}, 0.0), "0", "1");
        CHECK(std::abs(fx.ie) <= 0.02);
    }
    SECTION("w independent of x kills se") {
        DiscreteScm scm;
        ScmVariable w{"W", {"0", "1"}, {}, {{0.5, 0.5}}, VariableRole::Confounder};
        ScmVariable x{"X", {"0", "1"}, {}, {{0.5, 0.5}}, VariableRole::Sensitive};  // no W parent
        ScmVariable z{"Z", {"0", "1"}, {1}, {{0.7, 0.3}, {0.2, 0.8}}, VariableRole::Mediator};
        ScmVariable y{"Y", {"0", "1"}, {0, 1, 2},
                      {{0.8, 0.2}, {0.5, 0.5}, {0.6, 0.4}, {0.3, 0.7},
                       {0.7, 0.3}, {0.4, 0.6}, {0.5, 0.5}, {0.2, 0.8}}, VariableRole::Outcome};
        scm.variables = {w, x, z, y};
        scm.validate();
        Dataset d = sample(scm, 100000, 10);
        SfmRoles roles = roles_from_scm(scm, "0", "1");
        CausalEffects fx = estimate_effects(fit_effect_model(d, roles, "Y", {}, 0.0), "0", "1");
        CHECK(std::abs(fx.se) <= 0.02);
    }
}

TEST_CASE("numeric mediators need a binning policy and accept one", "[causal]") {
    Dataset d = sample(testsupport::no_confounder_scm(), 2000, 13);
    CausalEffects discrete_fx =
        estimate_effects(fit_effect_model(d, chain_roles(), "Y", {}, 0.0), "0", "1");

    // rewrite Z as a noisy numeric that bins back to the same levels
    Dataset numeric = d;
    numeric.schema.columns[1] = ColumnSpec{"Z", ColumnKind::Numeric, {}, ""};
    Rng rng(4);
    for (Row& r : numeric.rows) r[1] = make_number(10.0 * r[1].level + 5.0 * rng.real01());

    CHECK_THROWS_WITH(fit_effect_model(numeric, chain_roles(), "Y", {}, 0.0),
                      Catch::Matchers::ContainsSubstring("binning"));

    BinningPolicy policy;
    policy.columns["Z"] = ColumnBinning{{0.0, 7.5, 15.0}, 0, BinStrategy::EqualWidth, false};
    CausalEffects binned_fx =
        estimate_effects(fit_effect_model(numeric, chain_roles(), "Y", policy, 0.0), "0", "1");
    CHECK(binned_fx.tv == Catch::Approx(discrete_fx.tv).margin(1e-12));
    CHECK(binned_fx.de == Catch::Approx(discrete_fx.de).margin(1e-12));
}

TEST_CASE("weighted rows shift the estimates", "[causal]") {
    Dataset d = sample(testsupport::no_confounder_scm(), 5000, 17);
    EffectModel plain = fit_effect_model(d, chain_roles(), "Y", {}, 0.0);

    // doubling every weight changes nothing
    Dataset doubled = d;
    doubled.weights.assign(d.size(), 2.0);
    EffectModel scaled = fit_effect_model(doubled, chain_roles(), "Y", {}, 0.0);
    CausalEffects a = estimate_effects(plain, "0", "1");
    CausalEffects b = estimate_effects(scaled, "0", "1");
    CHECK(a.tv == Catch::Approx(b.tv).margin(1e-12));

    // upweighting x=1 rows moves P(w|x)? no w here, but group means shift raw_tv's basis
    Dataset tilted = d;
    tilted.weights.assign(d.size(), 1.0);
    auto yi = std::size_t(2);
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.rows[i][0].level == 1 && d.rows[i][yi].level == 1) tilted.weights[i] = 3.0;
    EffectModel t = fit_effect_model(tilted, chain_roles(), "Y", {}, 0.0);
    CHECK(t.group_mean1 > plain.group_mean1);
}

TEST_CASE("repeat effects aggregate mean and sd over fresh splits", "[causal]") {
    DiscreteScm scm = testsupport::no_confounder_scm();
    GroundTruthEffects truth = exact_effects(scm, "0", "1");
    Dataset d = sample(scm, 40000, 23);
    SfmRoles roles = chain_roles();

    TrainerFn oracle_trainer = [](const Dataset&, const SfmRoles&, std::uint64_t) {
        return chain_oracle_scorer();
    };
    RepeatOptions opts;
    opts.alpha = 0.0;
    CausalEffects fx = repeat_effects(d, roles, oracle_trainer, 5, 1234, opts);
    REQUIRE(fx.sd.has_value());
    CHECK(std::abs(fx.tv - truth.tv) < 0.03);
    CHECK(std::abs(fx.de - truth.de) < 0.03);
    CHECK(std::abs(fx.ie - truth.ie) < 0.03);
    CHECK(std::abs(fx.se - truth.se) < 0.03);
    CHECK(fx.sd->tv > 0.0);
    CHECK(fx.sd->tv < 0.05);
}

TEST_CASE("pinned splits with a deterministic scorer have zero spread", "[causal]") {
    Dataset d = sample(testsupport::no_confounder_scm(), 2000, 29);
    TrainerFn oracle_trainer = [](const Dataset&, const SfmRoles&, std::uint64_t) {
        return chain_oracle_scorer();
    };
    RepeatOptions opts;
    opts.vary_split = false;
    CausalEffects fx = repeat_effects(d, chain_roles(), oracle_trainer, 4, 55, opts);
    REQUIRE(fx.sd.has_value());
    CHECK(fx.sd->tv == 0.0);
    CHECK(fx.sd->de == 0.0);
    CHECK(fx.sd->ie == 0.0);
    CHECK(fx.sd->se == 0.0);
}

TEST_CASE("repeat effects validates and propagates failures", "[causal]") {
    Dataset d = sample(testsupport::no_confounder_scm(), 500, 31);
    TrainerFn fine = [](const Dataset&, const SfmRoles&, std::uint64_t) { return chain_oracle_scorer(); };
    CHECK_THROWS_AS(repeat_effects(d, chain_roles(), fine, 1, 1), ConfigError);

    TrainerFn broken = [](const Dataset&, const SfmRoles&, std::uint64_t) -> ScorerFn {
        throw std::runtime_error("optimizer diverged");
    };
    CHECK_THROWS_WITH(repeat_effects(d, chain_roles(), broken, 3, 1),
                      Catch::Matchers::ContainsSubstring("repeat 0") &&
                          Catch::Matchers::ContainsSubstring("optimizer diverged"));
}
