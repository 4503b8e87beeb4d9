#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string>
#include <vector>

#include "fairsynth/generation.hpp"
#include "support.hpp"

using namespace fairsynth;

namespace {

Schema small_schema() {
    Schema s;
    s.columns = {
        {"X", ColumnKind::Binary, {"a", "b"}, ""},
        {"v", ColumnKind::Numeric, {}, ""},
        {"Y", ColumnKind::Binary, {"0", "1"}, ""},
    };
    s.validate();
    return s;
}

Dataset small_data(std::size_t n, std::uint64_t seed) {
    Dataset d;
    d.schema = small_schema();
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
        d.rows.push_back({make_level(static_cast<int>(rng.below(2))),
                          make_number(static_cast<double>(rng.below(1000))),
                          make_level(static_cast<int>(rng.below(2)))});
    d.validate();
    return d;
}

PromptSpec small_spec(std::size_t ic_count) {
    PromptSpec p;
    p.dataset_description = "a tiny auditing benchmark";
    p.sensitive_feature = "X";
    p.label = "Y";
    p.header = small_schema().header_line();
    p.ic_count = ic_count;
    return p;
}

SamplingParams params_fixture() {
    SamplingParams p;
    p.model_id = "test-model";
    return p;
}

} // namespace

TEST_CASE("parse keeps valid rows and explains bad ones", "[generation]") {
    Schema s = small_schema();

    SECTION("fenced block with header and two valid rows") {
        auto [rows, diag] = parse_response("```\nX,v,Y\na,1,0\nb,2,1\n```\n", s);
        REQUIRE(rows.size() == 2);
        CHECK(diag.parsed_ok == 2);
        CHECK(diag.rejected.empty());
        CHECK(rows[0][0].level == 0);
        CHECK(rows[1][1].number == 2.0);
    }

    SECTION("wrong arity among three rows") {
        auto [rows, diag] = parse_response("```\na,1,0\nb,2\nb,3,1\n```", s);
        REQUIRE(rows.size() == 2);
        REQUIRE(diag.rejected.size() == 1);
        CHECK(diag.rejected[0].first == "b,2");
        CHECK(diag.rejected[0].second.find("arity") != std::string::npos);
    }

    SECTION("unknown category is rejected with the row number") {
        auto [rows, diag] = parse_response("```\na,1,0\nzz,2,1\n```", s);
        REQUIRE(rows.size() == 1);
        REQUIRE(diag.rejected.size() == 1);
        CHECK(diag.rejected[0].second.find("row 2") != std::string::npos);
    }

    SECTION("prose only yields nothing plus a note") {
        auto [rows, diag] = parse_response("Sorry, I cannot help with that request.", s);
        CHECK(rows.empty());
        CHECK(diag.parsed_ok == 0);
        CHECK(diag.note == "no tabular content");
    }

    SECTION("prose around the fence is ignored") {
        auto [rows, diag] =
            parse_response("Here you go:\n```csv\nX,v,Y\na,4,1\n```\nHope that helps!", s);
        REQUIRE(rows.size() == 1);
        CHECK(diag.rejected.empty());
    }
}

TEST_CASE("render and parse are inverse on valid datasets", "[generation]") {
    Rng rng(88);
    for (int trial = 0; trial < 25; ++trial) {
        Dataset d = small_data(1 + rng.below(40), 1000 + static_cast<std::uint64_t>(trial));
        const std::string fenced = "```\n" + render_csv(d) + "```\n";
        auto [rows, diag] = parse_response(fenced, d.schema);
        REQUIRE(diag.rejected.empty());
        REQUIRE(rows.size() == d.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            REQUIRE(rows_equal(rows[i], d.rows[i], d.schema));

        // unfenced text parses identically
        auto [rows2, diag2] = parse_response(render_csv(d), d.schema);
        REQUIRE(rows2.size() == d.size());
    }
}

TEST_CASE("memorization filter drops only exact copies", "[generation]") {
    Schema s = small_schema();
    std::vector<Row> icl = {
        {make_level(0), make_number(5), make_level(1)},
        {make_level(1), make_number(7), make_level(0)},
    };
    std::vector<Row> fresh = {
        {make_level(0), make_number(6), make_level(1)},
        {make_level(1), make_number(7), make_level(1)},  // one field differs
    };
    auto [kept_fresh, dropped_fresh] = filter_memorized(fresh, icl, s);
    CHECK(kept_fresh.size() == 2);
    CHECK(dropped_fresh == 0);

    std::vector<Row> mixed = fresh;
    mixed.push_back(icl[0]);
    auto [kept_mixed, dropped_mixed] = filter_memorized(mixed, icl, s);
    CHECK(kept_mixed.size() == 2);
    CHECK(dropped_mixed == 1);
}

TEST_CASE("mock backend emits parseable rows and honors refinement lines", "[generation]") {
    MockScmBackend mock(testsupport::no_confounder_scm(), 10);
    PromptText prompt{"sys", "body with no refinements"};
    RawResponse r = mock.generate(prompt, params_fixture(), 4);
    auto [rows, diag] = parse_response(r.text, mock.schema());
    REQUIRE(rows.size() == 10);
    CHECK(diag.rejected.empty());

    // deterministic per seed
    RawResponse again = mock.generate(prompt, params_fixture(), 4);
    CHECK(again.text == r.text);
    RawResponse other = mock.generate(prompt, params_fixture(), 5);
    CHECK(other.text != r.text);

    // knob counting saturates at 1
    fairsynth::Rng rng(3);
    MockScmBackend knobbed(testsupport::make_random_scm(rng, 1, 1, true), 10, "balance");
    PromptText two{"sys", "Refinement: a\nRefinement: b\n"};
    CHECK(knobbed.knob_value(two) == Catch::Approx(0.5));
    PromptText six{"sys", "Refinement: 1\nRefinement: 2\nRefinement: 3\nRefinement: 4\n"
                          "Refinement: 5\nRefinement: 6\n"};
    CHECK(knobbed.knob_value(six) == 1.0);
}

namespace {

struct ScriptedTransport {
    // each entry consumed in order; the last repeats forever
    std::vector<HttpResult> script;
    mutable std::mutex mu;
    mutable std::size_t calls = 0;

    HttpResult operator()(const std::string&,
                          const std::vector<std::pair<std::string, std::string>>&,
                          const std::string&) const {
        std::lock_guard<std::mutex> lock(mu);
        const HttpResult& r = script[std::min(calls, script.size() - 1)];
        ++calls;
        return r;
    }
};

std::string chat_body(const std::string& content) {
    nlohmann::json j;
    j["choices"] = nlohmann::json::array({{{"message", {{"content", content}}}}});
    return j.dump();
}

struct EnvVar {
    std::string name;
    EnvVar(const std::string& n, const std::string& value) : name(n) {
        setenv(name.c_str(), value.c_str(), 1);
    }
    ~EnvVar() { unsetenv(name.c_str()); }
};

} // namespace

TEST_CASE("remote backend retries transient failures with backoff", "[generation]") {
    EnvVar cred("FAIRSYNTH_TEST_KEY", "sk-test");
    auto transport = std::make_shared<ScriptedTransport>();
    transport->script = {
        {true, "connection reset", 0, ""},
        {false, "", 503, "busy"},
        {false, "", 200, chat_body("```\na,1,0\n```")},
    };
    std::vector<long> sleeps;
    HttpChatBackend backend(
        "https://api.example.test/v1/chat/completions", "FAIRSYNTH_TEST_KEY",
        [transport](const std::string& u, const std::vector<std::pair<std::string, std::string>>& h,
                    const std::string& b) { return (*transport)(u, h, b); },
        [&sleeps](std::chrono::milliseconds ms) { sleeps.push_back(ms.count()); });

    RawResponse r = backend.generate({"sys", "user"}, params_fixture(), 1);
    CHECK(r.text == "```\na,1,0\n```");
    CHECK(r.retries == 2);
    CHECK(transport->calls == 3);
    CHECK(sleeps == std::vector<long>{1000, 2000});
}

TEST_CASE("remote backend fails fast on non-retryable statuses", "[generation]") {
    EnvVar cred("FAIRSYNTH_TEST_KEY", "sk-test");
    auto transport = std::make_shared<ScriptedTransport>();
    transport->script = {{false, "", 401, "bad key"}};
    std::vector<long> sleeps;
    HttpChatBackend backend(
        "https://api.example.test/v1", "FAIRSYNTH_TEST_KEY",
        [transport](const std::string& u, const std::vector<std::pair<std::string, std::string>>& h,
                    const std::string& b) { return (*transport)(u, h, b); },
        [&sleeps](std::chrono::milliseconds ms) { sleeps.push_back(ms.count()); });

    CHECK_THROWS_WITH(backend.generate({"sys", "user"}, params_fixture(), 1),
                      Catch::Matchers::ContainsSubstring("401"));
    CHECK(transport->calls == 1);
    CHECK(sleeps.empty());
}

TEST_CASE("remote backend surfaces an exhausted retry budget", "[generation]") {
    EnvVar cred("FAIRSYNTH_TEST_KEY", "sk-test");
    auto transport = std::make_shared<ScriptedTransport>();
    transport->script = {{false, "", 503, "busy"}};
    std::vector<long> sleeps;
    HttpChatBackend backend(
        "https://api.example.test/v1", "FAIRSYNTH_TEST_KEY",
        [transport](const std::string& u, const std::vector<std::pair<std::string, std::string>>& h,
                    const std::string& b) { return (*transport)(u, h, b); },
        [&sleeps](std::chrono::milliseconds ms) { sleeps.push_back(ms.count()); });

    CHECK_THROWS_WITH(backend.generate({"sys", "user"}, params_fixture(), 1),
                      Catch::Matchers::ContainsSubstring("exhausted"));
    CHECK(transport->calls == 5);
    CHECK(sleeps == std::vector<long>{1000, 2000, 4000, 8000});
}

TEST_CASE("remote backend demands its credential before any network call", "[generation]") {
    unsetenv("FAIRSYNTH_MISSING_KEY");
    auto transport = std::make_shared<ScriptedTransport>();
    transport->script = {{false, "", 200, chat_body("x")}};
    HttpChatBackend backend(
        "https://api.example.test/v1", "FAIRSYNTH_MISSING_KEY",
        [transport](const std::string& u, const std::vector<std::pair<std::string, std::string>>& h,
                    const std::string& b) { return (*transport)(u, h, b); });

    CHECK_THROWS_WITH(backend.generate({"sys", "user"}, params_fixture(), 1),
                      Catch::Matchers::ContainsSubstring("FAIRSYNTH_MISSING_KEY"));
    CHECK(transport->calls == 0);
}

TEST_CASE("remote backend rejects malformed completion payloads", "[generation]") {
    EnvVar cred("FAIRSYNTH_TEST_KEY", "sk-test");
    auto transport = std::make_shared<ScriptedTransport>();
    transport->script = {{false, "", 200, "{\"unexpected\":true}"}};
    HttpChatBackend backend(
        "https://api.example.test/v1", "FAIRSYNTH_TEST_KEY",
        [transport](const std::string& u, const std::vector<std::pair<std::string, std::string>>& h,
                    const std::string& b) { return (*transport)(u, h, b); });

    CHECK_THROWS_AS(backend.generate({"sys", "user"}, params_fixture(), 1), BackendError);
}

TEST_CASE("batch accumulation stops at the target within one request", "[generation]") {
    Dataset real = small_data(30, 6);
    MockScmBackend mock(testsupport::no_confounder_scm(), 200);
    // the mock emits its own 3-column schema; align the real data to it
    Dataset ref = sample(testsupport::no_confounder_scm(), 60, 99);

    PromptSpec spec;
    spec.dataset_description = "a fixed synthetic chain";
    spec.sensitive_feature = "X";
    spec.label = "Y";
    spec.header = ref.schema.header_line();
    spec.ic_count = 10;

    BatchOptions opt;
    opt.target_n = 50;
    opt.budget = 4;
    // three binary columns span only 8 patterns, so exact-copy filtering
    // would reject most of the batch; the SCM mock runs with it off
    opt.filter_copies = false;
    BatchResult out = generate_batch(mock, ref, spec, params_fixture(), opt, 17);
    CHECK(out.data.size() == 50);
    CHECK(out.diagnostics.requested == 1);
    CHECK(out.diagnostics.status == "ok");
    CHECK(out.diagnostics.per_request.size() == 1);

    // fully deterministic per seed
    BatchResult again = generate_batch(mock, ref, spec, params_fixture(), opt, 17);
    CHECK(render_csv(again.data) == render_csv(out.data));
    CHECK(again.prompt.user_body == out.prompt.user_body);
}

namespace {

// emits `valid` good rows then `junk` malformed lines per request
class NoisyBackend : public GeneratorBackend {
public:
    NoisyBackend(Schema schema, std::size_t valid, std::size_t junk)
        : schema_(std::move(schema)), valid_(valid), junk_(junk) {}
    std::string name() const override { return "noisy"; }
    RawResponse generate(const PromptText&, const SamplingParams&,
                         std::uint64_t seed) const override {
        std::string text = "```\n";
        Rng rng(seed);
        for (std::size_t i = 0; i < valid_; ++i)
            text += std::string(rng.below(2) ? "a," : "b,") + std::to_string(rng.below(50)) +
                    (rng.below(2) ? ",1\n" : ",0\n");
        for (std::size_t i = 0; i < junk_; ++i) text += "not,a\n";
        text += "```";
        return {std::move(text), 0};
    }

private:
    Schema schema_;
    std::size_t valid_, junk_;
};

// every response throws once a counter passes the fuse
class FusedBackend : public GeneratorBackend {
public:
    FusedBackend(Schema schema, std::size_t fuse) : schema_(std::move(schema)), fuse_(fuse) {}
    std::string name() const override { return "fused"; }
    RawResponse generate(const PromptText&, const SamplingParams&, std::uint64_t) const override {
        if (++calls_ > fuse_) throw BackendError("remote service melted");
        return {"```\na,1,0\na,2,0\n```", 0};
    }
    mutable std::atomic<std::size_t> calls_{0};

private:
    Schema schema_;
    std::size_t fuse_;
};

} // namespace

TEST_CASE("batch accumulates across requests and logs per-request rejects", "[generation]") {
    Dataset real = small_data(40, 14);
    NoisyBackend backend(real.schema, 16, 16);

    PromptSpec spec = small_spec(8);
    BatchOptions opt;
    opt.target_n = 40;
    opt.budget = 10;
    BatchResult out = generate_batch(backend, real, spec, params_fixture(), opt, 5);

    CHECK(out.data.size() == 40);
    CHECK(out.diagnostics.status == "ok");
    CHECK(out.diagnostics.requested >= 3);
    REQUIRE(out.diagnostics.per_request.size() == out.diagnostics.requested);
    std::size_t rejected_total = 0;
    for (const auto& s : out.diagnostics.per_request) {
        CHECK(s.rejected == 16);
        rejected_total += s.rejected;
    }
    CHECK(out.diagnostics.rejected.size() == rejected_total);
    CHECK(out.diagnostics.parsed_ok + out.diagnostics.rejected.size() ==
          out.diagnostics.requested * 32);
}

TEST_CASE("budget exhaustion is a status, not an error", "[generation]") {
    Dataset real = small_data(30, 2);
    MockScmBackend mock(testsupport::no_confounder_scm(), 10);
    Dataset ref = sample(testsupport::no_confounder_scm(), 30, 1);

    PromptSpec spec;
    spec.dataset_description = "a fixed synthetic chain";
    spec.sensitive_feature = "X";
    spec.label = "Y";
    spec.header = ref.schema.header_line();
    spec.ic_count = 5;

    BatchOptions opt;
    opt.target_n = 1000;
    opt.budget = 1;
    opt.filter_copies = false;
    BatchResult out = generate_batch(mock, ref, spec, params_fixture(), opt, 3);
    CHECK(out.data.size() == 10);
    CHECK(out.diagnostics.status == "budget_exhausted");
}

TEST_CASE("exact copies of prompt examples never reach the batch", "[generation]") {
    // the reference set has 5 rows and ic_count=5, so every row is an example
    Dataset ref;
    ref.schema = small_schema();
    for (int i = 0; i < 5; ++i)
        ref.rows.push_back({make_level(i % 2), make_number(i), make_level((i / 2) % 2)});
    ref.validate();

    class EchoBackend : public GeneratorBackend {
    public:
        explicit EchoBackend(const Dataset& ref) : ref_(ref) {}
        std::string name() const override { return "echo"; }
        RawResponse generate(const PromptText&, const SamplingParams&,
                             std::uint64_t) const override {
            // one verbatim copy of a reference row among fresh rows
            std::string text = "```\n" + render_row_line(ref_.rows[0], ref_.schema) + "\n";
            text += "a,100,1\nb,200,0\nb,300,1\n```";
            return {std::move(text), 0};
        }

    private:
        const Dataset& ref_;
    };

    EchoBackend backend(ref);
    PromptSpec spec = small_spec(5);
    BatchOptions opt;
    opt.target_n = 3;
    opt.budget = 1;
    BatchResult out = generate_batch(backend, ref, spec, params_fixture(), opt, 8);
    CHECK(out.data.size() == 3);
    CHECK(out.diagnostics.copied_dropped == 1);
    for (const Row& r : out.data.rows) CHECK(r[1].number >= 100.0);
}

TEST_CASE("hard backend errors propagate out of the batch loop", "[generation]") {
    Dataset real = small_data(30, 4);
    FusedBackend backend(real.schema, 1);  // first request fine, second melts

    PromptSpec spec = small_spec(6);
    BatchOptions opt;
    opt.target_n = 100;
    opt.budget = 6;
    CHECK_THROWS_AS(generate_batch(backend, real, spec, params_fixture(), opt, 10), BackendError);
}

TEST_CASE("request order, not completion order, fixes the merged batch", "[generation]") {
    // rows encode the request seed, so the merged sequence exposes ordering
    class SeedStampBackend : public GeneratorBackend {
    public:
        std::string name() const override { return "stamp"; }
        RawResponse generate(const PromptText&, const SamplingParams&,
                             std::uint64_t seed) const override {
            std::string text = "```\n";
            for (int i = 0; i < 4; ++i)
                text += "a," + std::to_string(seed % 997) + ",1\n";
            text += "```";
            return {std::move(text), 0};
        }
    };

    Dataset real = small_data(30, 7);
    SeedStampBackend backend;
    PromptSpec spec = small_spec(6);
    BatchOptions opt;
    opt.target_n = 20;
    opt.budget = 8;

    opt.concurrency = 3;
    BatchResult wide = generate_batch(backend, real, spec, params_fixture(), opt, 123);
    opt.concurrency = 1;
    BatchResult narrow = generate_batch(backend, real, spec, params_fixture(), opt, 123);

    REQUIRE(wide.data.size() == 20);
    CHECK(render_csv(wide.data) == render_csv(narrow.data));

    BatchResult repeat = generate_batch(backend, real, spec, params_fixture(), opt, 123);
    CHECK(render_csv(repeat.data) == render_csv(narrow.data));
}
