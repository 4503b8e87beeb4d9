#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <future>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairsynth/csv.hpp"
#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"
#include "fairsynth/prompting.hpp"
#include "fairsynth/rng.hpp"
#include "fairsynth/scm.hpp"

namespace fairsynth {

struct SamplingParams {
    double temperature = 0.9;
    double top_p = 1.0;
    std::size_t max_tokens = 4096;
    std::string model_id;

    void validate() const {
        if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
        if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
        if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
        if (model_id.empty()) throw ConfigError("model_id is empty");
    }
};

struct GenerationDiagnostics {
    std::size_t requested = 0;  // generator requests issued
    std::size_t parsed_ok = 0;
    std::vector<std::pair<std::string, std::string>> rejected;  // (row_text, reason)
    std::size_t copied_dropped = 0;
    bool raw_responses_retained = false;
    std::size_t retries = 0;
    std::string status = "ok";
    std::string note;

    struct RequestStats {
        std::size_t parsed = 0;
        std::size_t rejected = 0;
        std::size_t copied_dropped = 0;
        std::size_t retries = 0;
    };
    std::vector<RequestStats> per_request;
};

struct RawResponse {
    std::string text;
    std::size_t retries = 0;
};

// Backends must be safely callable from multiple threads.
class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual std::string name() const = 0;
    virtual RawResponse generate(const PromptText& prompt, const SamplingParams& params,
                                 std::uint64_t seed) const = 0;
};

// Samples its bound SCM and renders the rows in the same fenced markdown
// format the parser accepts. Each "Refinement:" line in the prompt advances
// the named knob by knob_step, saturating at 1.
class MockScmBackend : public GeneratorBackend {
public:
    MockScmBackend(DiscreteScm scm, std::size_t rows_per_request, std::string knob_name = "",
                   double knob_step = 0.25)
        : scm_(std::move(scm)),
          schema_(schema_from_scm(scm_)),
          rows_per_request_(rows_per_request),
          knob_name_(std::move(knob_name)),
          knob_step_(knob_step) {
        if (rows_per_request_ < 1) throw ConfigError("rows_per_request must be >= 1");
        if (!(knob_step_ > 0.0 && knob_step_ <= 1.0)) throw ConfigError("knob_step must be in (0, 1]");
        scm_.validate();
    }

    std::string name() const override { return "mock"; }

    double knob_value(const PromptText& prompt) const {
        if (knob_name_.empty()) return 0.0;
        std::size_t count = 0, pos = 0;
        while ((pos = prompt.user_body.find("Refinement:", pos)) != std::string::npos) {
            ++count;
            pos += 11;
        }
        return std::min(1.0, knob_step_ * static_cast<double>(count));
    }

    RawResponse generate(const PromptText& prompt, const SamplingParams& params,
                         std::uint64_t seed) const override {
        params.validate();
        const double k = knob_value(prompt);
        Dataset sampled = k > 0.0 ? mock_generate(scm_, {{knob_name_, k}}, rows_per_request_, seed)
                                  : sample(scm_, rows_per_request_, seed);
        std::string text = "```\n" + schema_.header_line() + "\n";
        for (const Row& r : sampled.rows) text += render_row_line(r, schema_) + "\n";
        text += "```\n";
        return {std::move(text), 0};
    }

    const Schema& schema() const { return schema_; }

private:
    DiscreteScm scm_;
    Schema schema_;
    std::size_t rows_per_request_;
    std::string knob_name_;
    double knob_step_;
};

struct HttpResult {
    bool transport_error = false;
    std::string error;
    int status = 0;
    std::string body;
};

using HttpTransport = std::function<HttpResult(
    const std::string& endpoint, const std::vector<std::pair<std::string, std::string>>& headers,
    const std::string& json_body)>;

using SleepFn = std::function<void(std::chrono::milliseconds)>;

// Chat-completions client. The transport and sleep hooks are injectable so
// retry behavior is testable without a network; both must be thread-safe.
class HttpChatBackend : public GeneratorBackend {
public:
    HttpChatBackend(std::string endpoint, std::string credential_env, HttpTransport transport,
                    SleepFn sleep = [](std::chrono::milliseconds) {})
        : endpoint_(std::move(endpoint)),
          credential_env_(std::move(credential_env)),
          transport_(std::move(transport)),
          sleep_(std::move(sleep)) {
        if (endpoint_.empty()) throw ConfigError("remote backend endpoint is empty");
        if (credential_env_.empty()) throw ConfigError("remote backend credential_env is empty");
        if (!transport_) throw ConfigError("remote backend has no transport");
    }

    std::string name() const override { return "remote"; }

    RawResponse generate(const PromptText& prompt, const SamplingParams& params,
                         std::uint64_t seed) const override {
        params.validate();
        const char* cred = std::getenv(credential_env_.c_str());
        if (cred == nullptr || *cred == '\0')
            throw ConfigError("credential environment variable " + credential_env_ + " is not set");

        nlohmann::json body;
        body["model"] = params.model_id;
        body["messages"] = nlohmann::json::array(
            {{{"role", "system"}, {"content", prompt.system_role}},
             {{"role", "user"}, {"content", prompt.user_body}}});
        body["temperature"] = params.temperature;
        body["top_p"] = params.top_p;
        body["max_tokens"] = params.max_tokens;
        body["seed"] = seed;

        const std::vector<std::pair<std::string, std::string>> headers = {
            {"Authorization", "Bearer " + std::string(cred)},
            {"Content-Type", "application/json"},
        };

        std::string last_cause;
        for (std::size_t attempt = 1; attempt <= kMaxAttempts; ++attempt) {
            HttpResult r = transport_(endpoint_, headers, body.dump());
            if (!r.transport_error && r.status == 200) {
                return {extract_content(r.body), attempt - 1};
            }
            if (!r.transport_error && !retryable(r.status)) {
                throw BackendError("HTTP " + std::to_string(r.status) + " from " + endpoint_ + ": " +
                                   snippet(r.body));
            }
            last_cause = r.transport_error ? r.error
                                           : "HTTP " + std::to_string(r.status) + ": " + snippet(r.body);
            if (attempt < kMaxAttempts)
                sleep_(std::chrono::milliseconds(kBackoffBaseMs << (attempt - 1)));
        }
        throw BackendError("retry budget exhausted after " + std::to_string(kMaxAttempts) +
                           " attempts, last cause: " + last_cause);
    }

    static constexpr std::size_t kMaxAttempts = 5;
    static constexpr long kBackoffBaseMs = 1000;

private:
    static bool retryable(int status) {
        return status == 429 || status == 500 || status == 502 || status == 503 || status == 504;
    }

    static std::string snippet(const std::string& body) {
        return body.size() <= 200 ? body : body.substr(0, 200) + "...";
    }

    static std::string extract_content(const std::string& body) {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
            j["choices"].empty() || !j["choices"][0].contains("message") ||
            !j["choices"][0]["message"].contains("content"))
            throw BackendError("malformed completion payload: " + snippet(body));
        return j["choices"][0]["message"]["content"].get<std::string>();
    }

    std::string endpoint_;
    std::string credential_env_;
    HttpTransport transport_;
    SleepFn sleep_;
};

namespace detail {

inline std::string trim_ws(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

inline bool is_header_line(const std::string& line, const Schema& schema) {
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != schema.size()) return false;
    for (std::size_t i = 0; i < fields.size(); ++i)
        if (trim_ws(fields[i]) != schema.columns[i].name) return false;
    return true;
}

} // namespace detail

// Extracts the first fenced code block (the whole text when unfenced), skips
// a leading header line, and parses the rest under the schema. Bad lines are
// recorded in diagnostics, never silently dropped.
inline std::pair<std::vector<Row>, GenerationDiagnostics> parse_response(const std::string& raw,
                                                                         const Schema& schema) {
    std::vector<std::string> lines = detail::split_lines(raw);

    std::size_t begin = 0, end = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (detail::trim_ws(lines[i]).rfind("```", 0) == 0) {
            begin = i + 1;
            end = lines.size();
            for (std::size_t j = begin; j < lines.size(); ++j) {
                if (detail::trim_ws(lines[j]).rfind("```", 0) == 0) {
                    end = j;
                    break;
                }
            }
            break;
        }
    }

    std::vector<Row> rows;
    GenerationDiagnostics diag;
    bool header_skipped = false;
    for (std::size_t i = begin; i < end; ++i) {
        const std::string line = detail::trim_ws(lines[i]);
        if (line.empty()) continue;
        if (!header_skipped) {
            header_skipped = true;
            if (detail::is_header_line(line, schema)) continue;
        }
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != schema.size()) {
            diag.rejected.emplace_back(line, "arity: has " + std::to_string(fields.size()) +
                                                 " values, expected " + std::to_string(schema.size()));
            continue;
        }
        try {
            rows.push_back(parse_row_line(line, schema, i - begin + 1));
            ++diag.parsed_ok;
        } catch (const DataError& e) {
            diag.rejected.emplace_back(line, e.what());
        }
    }
    if (diag.parsed_ok == 0) diag.note = "no tabular content";
    return {std::move(rows), std::move(diag)};
}

// Exact-match memorization filter against the prompt's example rows.
inline std::pair<std::vector<Row>, std::size_t> filter_memorized(const std::vector<Row>& rows,
                                                                 const std::vector<Row>& icl_rows,
                                                                 const Schema& schema) {
    std::vector<Row> kept;
    kept.reserve(rows.size());
    std::size_t dropped = 0;
    for (const Row& r : rows) {
        bool copy = false;
        for (const Row& icl : icl_rows)
            if (rows_equal(r, icl, schema)) {
                copy = true;
                break;
            }
        if (copy)
            ++dropped;
        else
            kept.push_back(r);
    }
    return {std::move(kept), dropped};
}

struct BatchOptions {
    std::size_t target_n = 0;
    std::size_t budget = 1;  // max generator requests
    std::size_t concurrency = 2;
    bool retain_raw = false;
    // Low-cardinality discrete schemas (the SCM mock) collide with prompt
    // examples constantly, so the exact-copy filter can be switched off.
    bool filter_copies = true;
};

struct BatchResult {
    Dataset data;
    GenerationDiagnostics diagnostics;
    PromptText prompt;
    std::vector<Row> icl_rows;
    std::vector<std::string> raw_responses;
    std::vector<std::string> warnings;
};

// Accumulates parsed, filtered rows until target_n or the request budget is
// spent. The first request goes out alone (one request often suffices); later
// requests run in waves of `concurrency`, merged strictly in request order.
inline BatchResult generate_batch(const GeneratorBackend& backend, const Dataset& real,
                                  const PromptSpec& spec, const SamplingParams& params,
                                  const BatchOptions& opt, std::uint64_t seed) {
    if (opt.target_n < 1) throw ConfigError("target_n must be >= 1");
    if (opt.budget < 1) throw ConfigError("request budget must be >= 1");
    if (opt.concurrency < 1) throw ConfigError("concurrency must be >= 1");
    params.validate();

    BatchResult out;
    out.icl_rows = select_icl_samples(real, spec, mix_seed(seed, 0xDC1), &out.warnings);
    out.prompt = build_prompt(spec, out.icl_rows, real.schema);
    out.data.schema = real.schema;
    out.diagnostics.raw_responses_retained = opt.retain_raw;

    std::vector<Row> example_rows = out.icl_rows;
    example_rows.insert(example_rows.end(), spec.contrastive_rows.begin(),
                        spec.contrastive_rows.end());

    std::size_t issued = 0;
    while (out.data.rows.size() < opt.target_n && issued < opt.budget) {
        const std::size_t wave =
            issued == 0 ? 1 : std::min(opt.concurrency, opt.budget - issued);
        std::vector<std::future<RawResponse>> inflight;
        inflight.reserve(wave);
        for (std::size_t w = 0; w < wave; ++w) {
            const std::uint64_t rseed = mix_seed(seed, issued + w + 1);
            inflight.push_back(std::async(std::launch::async, [&backend, &out, &params, rseed] {
                return backend.generate(out.prompt, params, rseed);
            }));
        }
        // drain the whole wave before rethrowing so no future blocks in its dtor
        std::vector<RawResponse> responses(wave);
        std::exception_ptr first_error;
        for (std::size_t w = 0; w < wave; ++w) {
            try {
                responses[w] = inflight[w].get();
            } catch (...) {
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) std::rethrow_exception(first_error);

        for (std::size_t w = 0; w < wave; ++w) {
            ++issued;
            auto [rows, diag] = parse_response(responses[w].text, real.schema);
            auto [kept, dropped] =
                opt.filter_copies ? filter_memorized(rows, example_rows, real.schema)
                                  : std::make_pair(std::move(rows), std::size_t{0});
            GenerationDiagnostics::RequestStats stats;
            stats.parsed = diag.parsed_ok;
            stats.rejected = diag.rejected.size();
            stats.copied_dropped = dropped;
            stats.retries = responses[w].retries;
            out.diagnostics.per_request.push_back(stats);
            out.diagnostics.parsed_ok += diag.parsed_ok;
            out.diagnostics.copied_dropped += dropped;
            out.diagnostics.retries += responses[w].retries;
            for (auto& rej : diag.rejected) out.diagnostics.rejected.push_back(std::move(rej));
            if (opt.retain_raw) out.raw_responses.push_back(std::move(responses[w].text));
            for (Row& r : kept) {
                if (out.data.rows.size() >= opt.target_n) break;
                out.data.rows.push_back(std::move(r));
            }
        }
    }
    out.diagnostics.requested = issued;
    out.diagnostics.status = out.data.rows.size() >= opt.target_n ? "ok" : "budget_exhausted";
    if (out.diagnostics.parsed_ok == 0) out.diagnostics.note = "no tabular content";
    out.data.validate();
    return out;
}

} // namespace fairsynth
