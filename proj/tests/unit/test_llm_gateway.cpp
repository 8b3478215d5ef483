#include "perturbrag/errors.hpp"
#include "perturbrag/llm_gateway.hpp"

#include "test_support.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <doctest.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace perturbrag;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

RetryPolicy fast_retry(int attempts) {
    return {attempts, std::chrono::milliseconds(1), std::chrono::milliseconds(2)};
}

/// Fails the first `failures` calls, then echoes the prompt.
class FlakyTransport final : public Transport {
public:
    explicit FlakyTransport(int failures, int* calls) : failures_(failures), calls_(calls) {}
    std::string send(const CompletionRequest& request) override {
        if ((*calls_)++ < failures_) {
            throw TransportError("flaky");
        }
        return "echo: " + request.prompt;
    }
    std::string_view name() const override { return "flaky"; }

private:
    int failures_;
    int* calls_;
};

} // namespace

TEST_SUITE("llm_gateway") {

TEST_CASE("prompt hash covers every input") {
    SamplingParams p;
    const auto base = prompt_hash("qa_de", "hello", p, 1);
    CHECK(base.size() == 64);
    CHECK(prompt_hash("qa_de", "hello", p, 1) == base);
    CHECK(prompt_hash("qa_dir", "hello", p, 1) != base);
    CHECK(prompt_hash("qa_de", "hello!", p, 1) != base);
    CHECK(prompt_hash("qa_de", "hello", p, 2) != base);
    SamplingParams q = p;
    q.temperature = 0.7;
    CHECK(prompt_hash("qa_de", "hello", q, 1) != base);
    q = p;
    q.model = "other";
    CHECK(prompt_hash("qa_de", "hello", q, 1) != base);
}

TEST_CASE("sampling params validation") {
    SamplingParams p;
    CHECK_NOTHROW(p.validate());
    p.top_p = 0.0;
    CHECK_THROWS_AS(p.validate(), ArgumentError);
    p = {};
    p.temperature = -1;
    CHECK_THROWS_AS(p.validate(), ArgumentError);
    p = {};
    p.max_tokens = 0;
    CHECK_THROWS_AS(p.validate(), ArgumentError);
}

TEST_CASE("mock script: hash rules win, lists index by seed, errors surface") {
    TempDir dir;
    SamplingParams p;
    const auto hashed = make_request("t", "special prompt", p, 0);
    nlohmann::json rules[] = {
        {{"pattern", "special"}, {"response", "by pattern"}},
        {{"prompt_hash", hashed.hash}, {"response", "by hash"}},
        {{"pattern", "^list"}, {"response", {"zero", "one", "two"}}},
        {{"pattern", "broken"}, {"error", "scripted outage"}},
    };
    std::string script;
    for (const auto& r : rules) {
        script += r.dump() + "\n";
    }
    write_file(dir / "script.jsonl", script);
    auto mock = MockTransport::from_script(dir / "script.jsonl");
    CHECK(mock->send(hashed) == "by hash");
    CHECK(mock->send(make_request("t", "special prompt", p, 1)) == "by pattern");
    CHECK(mock->send(make_request("t", "list me", p, 4)) == "one");
    CHECK(mock->send(make_request("t", "list me", p, 5)) == "two");
    CHECK_THROWS_AS(mock->send(make_request("t", "broken", p, 0)), TransportError);
    CHECK_THROWS_AS(mock->send(make_request("t", "unscripted", p, 0)), TransportError);
    CHECK(mock->calls() == 6);

    write_file(dir / "bad.jsonl", "{\"pattern\": \"(\", \"response\": \"x\"}\n");
    CHECK_THROWS_AS(MockTransport::from_script(dir / "bad.jsonl"), ParseError);
    write_file(dir / "bad2.jsonl", "{\"response\": \"x\"}\n");
    CHECK_THROWS_AS(MockTransport::from_script(dir / "bad2.jsonl"), ParseError);
}

TEST_CASE("cache: first writer wins and survives reload") {
    TempDir dir;
    {
        ResponseCache cache(dir / "c" / "cache.jsonl");
        CHECK(cache.insert({"h1", "first", "t", "mock"}) == "first");
        CHECK(cache.insert({"h1", "second", "t", "mock"}) == "first");
        CHECK(cache.insert({"h2", "other", "t", "mock"}) == "other");
    }
    ResponseCache reloaded(dir / "c" / "cache.jsonl");
    CHECK(reloaded.size() == 2);
    CHECK(reloaded.lookup("h1") == std::optional<std::string>("first"));
    CHECK_FALSE(reloaded.lookup("h3").has_value());
    const auto text = testsupport::read_file(dir / "c" / "cache.jsonl");
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("gateway serves repeats from cache") {
    int calls = 0;
    auto cache = std::make_shared<ResponseCache>();
    LlmGateway gw(std::make_unique<FlakyTransport>(0, &calls), cache, fast_retry(3));
    SamplingParams p;
    CHECK(gw.complete("a", p, 1) == "echo: a");
    CHECK(gw.complete("a", p, 1) == "echo: a");
    CHECK(gw.complete("a", p, 2) == "echo: a");
    CHECK(calls == 2);
    auto s = gw.stats();
    CHECK(s.transport_calls == 2);
    CHECK(s.cache_hits == 1);
    CHECK(s.cache_misses == 2);
}

TEST_CASE("gateway retries transport errors and then gives up") {
    int calls = 0;
    LlmGateway ok(std::make_unique<FlakyTransport>(2, &calls), nullptr, fast_retry(3));
    CHECK(ok.complete("x", {}, 0) == "echo: x");
    CHECK(calls == 3);

    calls = 0;
    LlmGateway bad(std::make_unique<FlakyTransport>(5, &calls), nullptr, fast_retry(2));
    CHECK_THROWS_AS(bad.complete("x", {}, 0), TransportError);
    CHECK(calls == 2);
    CHECK_THROWS_AS(LlmGateway(std::make_unique<FlakyTransport>(0, &calls), nullptr, fast_retry(0)),
                    ArgumentError);
}

TEST_CASE("empty responses are not cached or retried") {
    auto mock = std::make_unique<MockTransport>([](const CompletionRequest&) { return std::string(); });
    auto* raw = mock.get();
    auto cache = std::make_shared<ResponseCache>();
    LlmGateway gw(std::move(mock), cache, fast_retry(3));
    CHECK_THROWS_AS(gw.complete("x", {}, 0), EmptyResponseError);
    CHECK(raw->calls() == 1);
    CHECK(cache->size() == 0);
}

TEST_CASE("batch respects the in-flight bound and reports per-item failures") {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    auto mock = std::make_unique<MockTransport>([&](const CompletionRequest& r) -> std::string {
        const int now = ++in_flight;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --in_flight;
        if (r.prompt == "fail") {
            throw TransportError("no");
        }
        return "ok " + r.prompt;
    });
    LlmGateway gw(std::move(mock), nullptr, fast_retry(1), 3);
    std::vector<std::string> prompts;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < 20; ++i) {
        prompts.push_back(i == 7 ? "fail" : std::to_string(i));
        seeds.push_back(static_cast<std::uint64_t>(i));
    }
    auto results = gw.batch_complete(prompts, {}, seeds);
    REQUIRE(results.size() == 20);
    for (int i = 0; i < 20; ++i) {
        if (i == 7) {
            CHECK_FALSE(results[i].ok());
            CHECK(results[i].error_kind == ErrorKind::transport);
        } else {
            CHECK(results[i].text == "ok " + std::to_string(i));
        }
    }
    CHECK(peak.load() <= 3);
    CHECK(peak.load() >= 2);
    seeds.pop_back();
    CHECK_THROWS_AS(gw.batch_complete(prompts, {}, seeds), ArgumentError);
}

TEST_CASE("retry delays double up to the cap") {
    RetryPolicy r{5, std::chrono::milliseconds(100), std::chrono::milliseconds(350)};
    CHECK(r.delay(1).count() == 100);
    CHECK(r.delay(2).count() == 200);
    CHECK(r.delay(3).count() == 350);
    CHECK(r.delay(9).count() == 350);
}

TEST_CASE("http body and response extraction") {
    SamplingParams p;
    p.model = "m1";
    auto body = nlohmann::json::parse(HttpTransport::request_body(make_request("t", "hi", p, 3)));
    CHECK(body["model"] == "m1");
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "hi");
    CHECK(body["temperature"] == 0.6);
    CHECK(body["top_p"] == 0.9);
    CHECK(body["max_tokens"] == 2048);
    CHECK(HttpTransport::extract_content(R"({"choices":[{"message":{"content":"yo"}}]})") == "yo");
    CHECK_THROWS_AS(HttpTransport::extract_content("nope"), TransportError);
    CHECK_THROWS_AS(HttpTransport::extract_content(R"({"choices":[]})"), EmptyResponseError);
    CHECK_THROWS_AS(HttpTransport(HttpConfig{"localhost:80", "", std::chrono::seconds(1)}), ArgumentError);
}

TEST_CASE("http transport retries a 500 against a local server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
            return;
        }
        seen_auth = req.get_header_value("Authorization");
        auto body = nlohmann::json::parse(req.body);
        const std::string reply = "got " + body["messages"][0]["content"].get<std::string>();
        res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", reply}}}}}}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("PERTURBRAG_TEST_KEY", "sekret", 1);
    HttpConfig cfg{"http://127.0.0.1:" + std::to_string(port) + "/v1/", "PERTURBRAG_TEST_KEY",
                   std::chrono::seconds(5)};
    LlmGateway gw(std::make_unique<HttpTransport>(cfg), nullptr, fast_retry(3));
    const auto text = gw.complete("ping", {}, 0);
    server.stop();
    th.join();
    CHECK(text == "got ping");
    CHECK(hits.load() == 2);
    CHECK(gw.stats().transport_calls == 2);
    CHECK(seen_auth == "Bearer sekret");
}

TEST_CASE("http transport reports connection failures as transport errors") {
    httplib::Server probe;
    const int port = probe.bind_to_any_port("127.0.0.1");
    probe.stop();
    HttpConfig cfg{"http://127.0.0.1:" + std::to_string(port), "", std::chrono::seconds(1)};
    HttpTransport t(cfg);
    CHECK_THROWS_AS(t.send(make_request("t", "x", {}, 0)), TransportError);
}

}
