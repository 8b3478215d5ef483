#include "perturbrag/llm_gateway.hpp"

#include "perturbrag/hashing.hpp"
#include "perturbrag/jsonl.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

namespace perturbrag {

void SamplingParams::validate() const {
    if (!(temperature >= 0.0)) {
        throw ArgumentError("temperature must be >= 0");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) {
        throw ArgumentError("top_p must be in (0, 1]");
    }
    if (max_tokens <= 0) {
        throw ArgumentError("max_tokens must be positive");
    }
    if (model.empty()) {
        throw ArgumentError("model id must be set");
    }
}

std::string prompt_hash(std::string_view template_id, std::string_view prompt,
                        const SamplingParams& params, std::uint64_t run_seed) {
    const nlohmann::json key = {
        {"template_id", template_id}, {"prompt", prompt},       {"model", params.model},
        {"temperature", params.temperature}, {"top_p", params.top_p}, {"max_tokens", params.max_tokens},
        {"run_seed", run_seed},
    };
    return sha256_hex(jsonl::dump(key));
}

CompletionRequest make_request(std::string template_id, std::string prompt, const SamplingParams& params,
                               std::uint64_t run_seed) {
    CompletionRequest r{std::move(template_id), std::move(prompt), params, run_seed, {}};
    r.hash = prompt_hash(r.template_id, r.prompt, r.params, r.run_seed);
    return r;
}

// ---------------------------------------------------------------------------
// HTTP

HttpTransport::HttpTransport(HttpConfig config) : config_(std::move(config)) {
    const std::string& url = config_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ArgumentError("base_url must include a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
        path_prefix_.pop_back();
    }
}

std::string HttpTransport::request_body(const CompletionRequest& request) {
    const nlohmann::json body = {
        {"model", request.params.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.params.temperature},
        {"top_p", request.params.top_p},
        {"max_tokens", request.params.max_tokens},
    };
    return body.dump();
}

std::string HttpTransport::extract_content(std::string_view body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw TransportError(std::string("response is not JSON: ") + e.what());
    }
    const auto* content = [&]() -> const nlohmann::json* {
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
            return nullptr;
        }
        const auto& choice = j["choices"][0];
        if (!choice.contains("message") || !choice["message"].contains("content")) {
            return nullptr;
        }
        return &choice["message"]["content"];
    }();
    if (content == nullptr || !content->is_string() || content->get_ref<const std::string&>().empty()) {
        throw EmptyResponseError("endpoint returned no choices[0].message.content");
    }
    return content->get<std::string>();
}

std::string HttpTransport::send(const CompletionRequest& request) {
    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, request_body(request),
                           "application/json");
    if (!res) {
        throw TransportError("request to " + origin_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        std::string snippet = res->body.substr(0, 200);
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + origin_ + ": " + snippet);
    }
    return extract_content(res->body);
}

// ---------------------------------------------------------------------------
// Mock

MockTransport::MockTransport(std::function<std::string(const CompletionRequest&)> responder)
    : responder_(std::move(responder)) {}

void MockTransport::add_rule(Rule rule) {
    if (rule.hash) {
        hash_rules_.push_back(std::move(rule));
    } else {
        pattern_rules_.push_back(std::move(rule));
    }
}

std::unique_ptr<MockTransport> MockTransport::from_script(const std::filesystem::path& path) {
    auto mock = std::make_unique<MockTransport>();
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) {
        Rule rule;
        if (auto it = j.find("prompt_hash"); it != j.end()) {
            rule.hash = it->get<std::string>();
        } else if (auto pit = j.find("pattern"); pit != j.end()) {
            rule.pattern_text = pit->get<std::string>();
            try {
                rule.pattern.emplace(rule.pattern_text, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw ParseError("bad pattern \"" + rule.pattern_text + "\": " + e.what());
            }
        } else {
            throw ParseError("mock rule needs \"prompt_hash\" or \"pattern\"");
        }
        if (auto it = j.find("error"); it != j.end()) {
            rule.error = it->get<std::string>();
        } else if (auto rit = j.find("response"); rit != j.end()) {
            if (rit->is_array()) {
                rule.responses = rit->get<std::vector<std::string>>();
            } else {
                rule.responses.push_back(rit->get<std::string>());
            }
            if (rule.responses.empty()) {
                throw ParseError("mock rule has an empty response list");
            }
        } else {
            throw ParseError("mock rule needs \"response\" or \"error\"");
        }
        mock->add_rule(std::move(rule));
    });
    return mock;
}

std::string MockTransport::send(const CompletionRequest& request) {
    ++calls_;
    auto answer = [&](const Rule& rule) -> std::string {
        if (rule.error) {
            throw TransportError("mock: " + *rule.error);
        }
        return rule.responses[request.run_seed % rule.responses.size()];
    };
    for (const auto& rule : hash_rules_) {
        if (*rule.hash == request.hash) {
            return answer(rule);
        }
    }
    for (const auto& rule : pattern_rules_) {
        if (std::regex_search(request.prompt, *rule.pattern)) {
            return answer(rule);
        }
    }
    if (responder_) {
        return responder_(request);
    }
    throw TransportError("mock: no scripted response for prompt_hash " + request.hash);
}

// ---------------------------------------------------------------------------
// Cache

namespace {

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

} // namespace

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.empty() || !std::filesystem::exists(path_)) {
        return;
    }
    jsonl::for_each(path_, [&](const nlohmann::json& j, std::size_t) {
        // First record for a hash wins, matching insert().
        entries_.emplace(jsonl::require_string(j, "prompt_hash"), jsonl::require_string(j, "response"));
    });
}

std::optional<std::string> ResponseCache::lookup(const std::string& hash) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(hash);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string ResponseCache::insert(const CompletionRecord& record) {
    std::unique_lock lock(mutex_);
    auto [it, inserted] = entries_.emplace(record.prompt_hash, record.response);
    if (inserted && !path_.empty()) {
        if (path_.has_parent_path()) {
            std::filesystem::create_directories(path_.parent_path());
        }
        jsonl::append(path_, {{"prompt_hash", record.prompt_hash},
                              {"response", record.response},
                              {"created_at", record.created_at},
                              {"transport", record.transport}});
    }
    return it->second;
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

// ---------------------------------------------------------------------------
// Gateway

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
    auto d = base_delay;
    for (int i = 1; i < attempt && d < max_delay; ++i) {
        d *= 2;
    }
    return std::min(d, max_delay);
}

LlmGateway::LlmGateway(std::unique_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache,
                       RetryPolicy retry, std::size_t max_in_flight)
    : transport_(std::move(transport)),
      cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
      retry_(retry),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {
    if (!transport_) {
        throw ArgumentError("gateway needs a transport");
    }
    if (retry_.max_attempts < 1) {
        throw ArgumentError("max_attempts must be at least 1");
    }
}

std::string LlmGateway::complete(std::string_view template_id, std::string_view prompt,
                                 const SamplingParams& params, std::uint64_t run_seed) {
    params.validate();
    const auto request = make_request(std::string(template_id), std::string(prompt), params, run_seed);
    if (auto hit = cache_->lookup(request.hash)) {
        ++cache_hits_;
        return *hit;
    }
    ++cache_misses_;

    std::string last_error;
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(retry_.delay(attempt - 1));
        }
        ++transport_calls_;
        try {
            std::string response = transport_->send(request);
            if (response.empty()) {
                throw EmptyResponseError("transport returned an empty response");
            }
            return cache_->insert({request.hash, std::move(response), utc_now(),
                                   std::string(transport_->name())});
        } catch (const TransportError& e) {
            last_error = e.what();
        }
    }
    throw TransportError("giving up after " + std::to_string(retry_.max_attempts) +
                         " attempt(s): " + last_error);
}

std::vector<BatchResult> LlmGateway::batch_complete(const std::vector<BatchItem>& items,
                                                    const SamplingParams& params) {
    std::vector<BatchResult> results(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            try {
                results[i].text = complete(items[i].template_id, items[i].prompt, params, items[i].run_seed);
            } catch (const Error& e) {
                results[i].error_kind = e.kind();
                results[i].error = e.what();
            }
        }
    };
    const std::size_t n_threads = std::min(max_in_flight_, items.size());
    if (n_threads <= 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back(worker);
    }
    pool.clear(); // joins
    return results;
}

std::vector<BatchResult> LlmGateway::batch_complete(const std::vector<std::string>& prompts,
                                                    const SamplingParams& params,
                                                    const std::vector<std::uint64_t>& seeds) {
    if (prompts.size() != seeds.size()) {
        throw ArgumentError("batch_complete: " + std::to_string(prompts.size()) + " prompts but " +
                            std::to_string(seeds.size()) + " seeds");
    }
    std::vector<BatchItem> items;
    items.reserve(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        items.push_back({{}, prompts[i], seeds[i]});
    }
    return batch_complete(items, params);
}

GatewayStats LlmGateway::stats() const {
    return {transport_calls_.load(), cache_hits_.load(), cache_misses_.load()};
}

} // namespace perturbrag
