#include "perturbrag/config.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/jsonl.hpp"

#include <cstdlib>
#include <initializer_list>
#include <set>

namespace perturbrag {

using nlohmann::json;

void RunConfig::validate() const {
    sampling.validate();
    if (k == 0) {
        throw ArgumentError("k must be positive");
    }
    if (n_runs == 0) {
        throw ArgumentError("n_runs must be positive");
    }
    if (max_in_flight == 0) {
        throw ArgumentError("max_in_flight must be positive");
    }
    if (retry.max_attempts < 1) {
        throw ArgumentError("retry.max_attempts must be at least 1");
    }
    if (transport != "http" && transport != "mock") {
        throw ArgumentError("endpoint.transport must be http or mock, got " + transport);
    }
    if (transport == "mock" && mock_script.empty()) {
        throw ArgumentError("endpoint.mock_script is required with the mock transport");
    }
    if (!(bench.p_pos > 0.0 && bench.p_pos <= bench.p_neg && bench.p_neg < 1.0)) {
        throw ArgumentError("bench thresholds need 0 < p_pos <= p_neg < 1");
    }
    if (!(bench.frac_test > 0.0 && bench.frac_test < 1.0)) {
        throw ArgumentError("bench.frac_test must lie strictly between 0 and 1");
    }
}

json interpolate_env(const json& j) {
    if (j.is_object()) {
        json out = json::object();
        for (auto it = j.begin(); it != j.end(); ++it) {
            out[it.key()] = interpolate_env(it.value());
        }
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) {
            out.push_back(interpolate_env(v));
        }
        return out;
    }
    if (!j.is_string()) {
        return j;
    }
    const auto& s = j.get_ref<const std::string&>();
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
        if (s.compare(i, 2, "${") == 0) {
            const auto close = s.find('}', i + 2);
            if (close == std::string::npos) {
                throw ArgumentError("unterminated ${ in \"" + s + "\"");
            }
            const std::string name = s.substr(i + 2, close - i - 2);
            const char* value = std::getenv(name.c_str());
            if (value == nullptr) {
                throw ArgumentError("environment variable " + name + " is not set");
            }
            out += value;
            i = close + 1;
        } else {
            out += s[i++];
        }
    }
    return out;
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ArgumentError(where + " must be an object");
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!ok.count(it.key())) {
            throw ArgumentError("unknown config key " + where + "." + it.key());
        }
    }
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return;
    }
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ArgumentError("config key " + where + "." + key + " has the wrong type");
    }
}

struct PathReader {
    std::filesystem::path base;

    std::filesystem::path resolve(const std::string& s) const {
        std::filesystem::path p(s);
        if (p.empty() || p.is_absolute() || base.empty()) {
            return p;
        }
        return base / p;
    }

    void operator()(const json& j, const char* key, const std::string& where, std::filesystem::path& out) const {
        std::string s;
        read(j, key, where, s);
        if (!s.empty()) {
            out = resolve(s);
        }
    }

    void list(const json& j, const char* key, const std::string& where,
              std::vector<std::filesystem::path>& out) const {
        auto it = j.find(key);
        if (it == j.end()) {
            return;
        }
        std::vector<std::string> items;
        if (it->is_string()) {
            items.push_back(it->get<std::string>());
        } else {
            read(j, key, where, items);
        }
        out.clear();
        for (const auto& s : items) {
            out.push_back(resolve(s));
        }
    }

    void matrix(const json& j, const char* key, const std::string& where, MatrixPaths& out) const {
        auto it = j.find(key);
        if (it == j.end()) {
            return;
        }
        const std::string w = where + "." + key;
        check_keys(*it, w, {"triples", "cells", "genes", "metadata"});
        (*this)(*it, "triples", w, out.triples);
        (*this)(*it, "cells", w, out.cells);
        (*this)(*it, "genes", w, out.genes);
        (*this)(*it, "metadata", w, out.metadata);
        if (out.triples.empty() || out.cells.empty() || out.genes.empty() || out.metadata.empty()) {
            throw ArgumentError(w + " needs triples, cells, genes and metadata");
        }
    }
};

} // namespace

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    const PathReader path{base_dir};
    check_keys(j, "config",
               {"inputs", "artifacts", "endpoint", "sampling", "n_runs", "base_seed", "k", "dataset", "bench"});

    if (!base_dir.empty()) {
        // Defaults are relative to the config file too.
        for (auto* p : {&c.graph_dir, &c.index, &c.summaries, &c.cache, &c.out_dir}) {
            *p = base_dir / *p;
        }
    }
    if (auto it = j.find("inputs"); it != j.end()) {
        const auto& in = *it;
        check_keys(in, "inputs", {"nodes", "edges", "corpus", "gene_sets", "matrix", "replicate"});
        path.list(in, "nodes", "inputs", c.node_files);
        path.list(in, "edges", "inputs", c.edge_files);
        path(in, "corpus", "inputs", c.corpus);
        path(in, "gene_sets", "inputs", c.gene_sets);
        path.matrix(in, "matrix", "inputs", c.matrix);
        path.matrix(in, "replicate", "inputs", c.replicate);
    }
    if (auto it = j.find("artifacts"); it != j.end()) {
        const auto& a = *it;
        check_keys(a, "artifacts", {"graph_dir", "index", "summaries", "cache", "out_dir", "templates"});
        path(a, "graph_dir", "artifacts", c.graph_dir);
        path(a, "index", "artifacts", c.index);
        path(a, "summaries", "artifacts", c.summaries);
        path(a, "cache", "artifacts", c.cache);
        path(a, "out_dir", "artifacts", c.out_dir);
        path(a, "templates", "artifacts", c.templates);
    }
    if (auto it = j.find("endpoint"); it != j.end()) {
        const auto& e = *it;
        check_keys(e, "endpoint",
                   {"transport", "mock_script", "base_url", "api_key_env", "timeout_s", "models", "max_in_flight",
                    "retry"});
        read(e, "transport", "endpoint", c.transport);
        path(e, "mock_script", "endpoint", c.mock_script);
        read(e, "base_url", "endpoint", c.http.base_url);
        read(e, "api_key_env", "endpoint", c.http.api_key_env);
        long long timeout = c.http.timeout.count();
        read(e, "timeout_s", "endpoint", timeout);
        c.http.timeout = std::chrono::seconds(timeout);
        read(e, "max_in_flight", "endpoint", c.max_in_flight);
        if (auto m = e.find("models"); m != e.end()) {
            check_keys(*m, "endpoint.models", {"summarize", "qa", "enrich"});
            read(*m, "summarize", "endpoint.models", c.summarize_model);
            read(*m, "qa", "endpoint.models", c.qa_model);
            read(*m, "enrich", "endpoint.models", c.enrich_model);
        }
        if (auto r = e.find("retry"); r != e.end()) {
            check_keys(*r, "endpoint.retry", {"max_attempts", "base_delay_ms", "max_delay_ms"});
            read(*r, "max_attempts", "endpoint.retry", c.retry.max_attempts);
            long long base = c.retry.base_delay.count();
            long long max = c.retry.max_delay.count();
            read(*r, "base_delay_ms", "endpoint.retry", base);
            read(*r, "max_delay_ms", "endpoint.retry", max);
            c.retry.base_delay = std::chrono::milliseconds(base);
            c.retry.max_delay = std::chrono::milliseconds(max);
        }
    }
    if (auto it = j.find("sampling"); it != j.end()) {
        check_keys(*it, "sampling", {"temperature", "top_p", "max_tokens"});
        read(*it, "temperature", "sampling", c.sampling.temperature);
        read(*it, "top_p", "sampling", c.sampling.top_p);
        read(*it, "max_tokens", "sampling", c.sampling.max_tokens);
    }
    read(j, "n_runs", "config", c.n_runs);
    read(j, "base_seed", "config", c.base_seed);
    read(j, "k", "config", c.k);
    read(j, "dataset", "config", c.dataset);
    if (auto it = j.find("bench"); it != j.end()) {
        auto& b = c.bench;
        check_keys(*it, "bench",
                   {"p_pos", "p_neg", "p_replicated", "filter_alpha", "min_degs", "n_controls", "k_pos", "k_neg",
                    "frac_test", "control_id"});
        read(*it, "p_pos", "bench", b.p_pos);
        read(*it, "p_neg", "bench", b.p_neg);
        read(*it, "p_replicated", "bench", b.p_replicated);
        read(*it, "filter_alpha", "bench", b.filter_alpha);
        read(*it, "min_degs", "bench", b.min_degs);
        read(*it, "n_controls", "bench", b.n_controls);
        read(*it, "k_pos", "bench", b.k_pos);
        read(*it, "k_neg", "bench", b.k_neg);
        read(*it, "frac_test", "bench", b.frac_test);
        read(*it, "control_id", "bench", b.control_id);
    }
    c.bench.seed = c.base_seed;
    c.sampling.model = c.qa_model;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(jsonl::read_text(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return config_from_json(interpolate_env(j), path.parent_path());
}

json to_json(const RunConfig& c) {
    auto strs = [](const std::vector<std::filesystem::path>& ps) {
        std::vector<std::string> out;
        for (const auto& p : ps) {
            out.push_back(p.string());
        }
        return out;
    };
    return {
        {"inputs", {{"nodes", strs(c.node_files)}, {"edges", strs(c.edge_files)}, {"corpus", c.corpus.string()}}},
        {"endpoint",
         {{"transport", c.transport},
          {"base_url", c.http.base_url},
          {"models", {{"summarize", c.summarize_model}, {"qa", c.qa_model}, {"enrich", c.enrich_model}}}}},
        {"sampling",
         {{"temperature", c.sampling.temperature},
          {"top_p", c.sampling.top_p},
          {"max_tokens", c.sampling.max_tokens}}},
        {"n_runs", c.n_runs},
        {"base_seed", c.base_seed},
        {"k", c.k},
        {"dataset", c.dataset},
        {"bench",
         {{"p_pos", c.bench.p_pos},
          {"p_neg", c.bench.p_neg},
          {"p_replicated", c.bench.p_replicated},
          {"filter_alpha", c.bench.filter_alpha},
          {"min_degs", c.bench.min_degs},
          {"n_controls", c.bench.n_controls},
          {"k_pos", c.bench.k_pos},
          {"k_neg", c.bench.k_neg},
          {"frac_test", c.bench.frac_test}}},
    };
}

} // namespace perturbrag
