#pragma once

#include "perturbrag/errors.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace perturbrag {

struct SamplingParams {
    double temperature = 0.6;
    double top_p = 0.9;
    int max_tokens = 2048;
    std::string model = "llama3-8b-instruct";

    /// Throws ArgumentError unless temperature >= 0, top_p in (0,1],
    /// max_tokens > 0 and model is non-empty.
    void validate() const;
};

/// Digest of everything that determines a response. Two requests share a
/// cache entry iff their hashes match.
std::string prompt_hash(std::string_view template_id, std::string_view prompt,
                        const SamplingParams& params, std::uint64_t run_seed);

struct CompletionRequest {
    std::string template_id;
    std::string prompt;
    SamplingParams params;
    std::uint64_t run_seed = 0;
    std::string hash;
};

CompletionRequest make_request(std::string template_id, std::string prompt, const SamplingParams& params,
                               std::uint64_t run_seed);

/// Moves one request over the wire (or pretends to). Implementations
/// throw TransportError for retryable failures and EmptyResponseError when
/// the endpoint answers with no content.
class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string send(const CompletionRequest& request) = 0;
    virtual std::string_view name() const = 0;
};

struct HttpConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{600};
};

/// POST {base_url}/chat/completions with a single user message.
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(HttpConfig config);
    std::string send(const CompletionRequest& request) override;
    std::string_view name() const override { return "http"; }

    /// The JSON body sent for `request`.
    static std::string request_body(const CompletionRequest& request);

    /// choices[0].message.content of a response body.
    static std::string extract_content(std::string_view body);

private:
    HttpConfig config_;
    std::string origin_; // scheme://host[:port]
    std::string path_prefix_;
};

/// Scripted responses, for tests and offline runs.
///
/// Rules are tried in order: exact prompt_hash rules first, then regex
/// rules over the prompt text. A rule answers with a fixed response, or a
/// list indexed by run_seed modulo its length, or a scripted failure.
class MockTransport final : public Transport {
public:
    struct Rule {
        std::optional<std::string> hash;
        std::optional<std::regex> pattern;
        std::string pattern_text;
        std::vector<std::string> responses;
        std::optional<std::string> error;
    };

    MockTransport() = default;
    explicit MockTransport(std::function<std::string(const CompletionRequest&)> responder);

    /// Loads a line-delimited script of
    /// {"prompt_hash"|"pattern": str, "response": str | [str], "error": str?}.
    static std::unique_ptr<MockTransport> from_script(const std::filesystem::path& path);

    void add_rule(Rule rule);

    std::string send(const CompletionRequest& request) override;
    std::string_view name() const override { return "mock"; }

    std::size_t calls() const { return calls_.load(); }

private:
    std::vector<Rule> hash_rules_;
    std::vector<Rule> pattern_rules_;
    std::function<std::string(const CompletionRequest&)> responder_;
    std::atomic<std::size_t> calls_{0};
};

struct CompletionRecord {
    std::string prompt_hash;
    std::string response;
    std::string created_at;
    std::string transport;
};

/// Content-addressed, append-only response store. Concurrent readers,
/// serialized writers. With an empty path the cache lives in memory only.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path path);

    std::optional<std::string> lookup(const std::string& hash) const;

    /// Stores `record` unless the hash is already present; returns the
    /// response that is now canonical for the hash.
    std::string insert(const CompletionRecord& record);

    std::size_t size() const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::string> entries_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{250};
    std::chrono::milliseconds max_delay{8000};

    /// Delay before attempt `attempt` (1-based retry count), capped.
    std::chrono::milliseconds delay(int attempt) const;
};

struct BatchItem {
    std::string template_id;
    std::string prompt;
    std::uint64_t run_seed = 0;
};

struct BatchResult {
    std::optional<std::string> text;
    std::optional<ErrorKind> error_kind;
    std::string error;
    bool ok() const { return text.has_value(); }
};

struct GatewayStats {
    std::size_t transport_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
};

/// Chat-completion front door: cache, then bounded retries over a transport.
class LlmGateway {
public:
    LlmGateway(std::unique_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache,
               RetryPolicy retry = {}, std::size_t max_in_flight = 4);

    /// Cached text for the request, or a fresh completion that is then cached.
    std::string complete(std::string_view template_id, std::string_view prompt,
                         const SamplingParams& params, std::uint64_t run_seed);

    std::string complete(std::string_view prompt, const SamplingParams& params, std::uint64_t run_seed) {
        return complete({}, prompt, params, run_seed);
    }

    /// Results aligned with `items`; failures are reported per item.
    std::vector<BatchResult> batch_complete(const std::vector<BatchItem>& items,
                                            const SamplingParams& params);

    /// Throws ArgumentError when the lengths differ.
    std::vector<BatchResult> batch_complete(const std::vector<std::string>& prompts,
                                            const SamplingParams& params,
                                            const std::vector<std::uint64_t>& seeds);

    GatewayStats stats() const;
    std::string_view transport_name() const { return transport_->name(); }
    std::size_t max_in_flight() const { return max_in_flight_; }

private:
    std::unique_ptr<Transport> transport_;
    std::shared_ptr<ResponseCache> cache_;
    RetryPolicy retry_;
    std::size_t max_in_flight_;
    std::atomic<std::size_t> transport_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    std::atomic<std::size_t> cache_misses_{0};
};

} // namespace perturbrag
