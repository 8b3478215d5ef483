#pragma once

#include "perturbrag/bench_builder.hpp"
#include "perturbrag/llm_gateway.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace perturbrag {

struct MatrixPaths {
    std::filesystem::path triples;
    std::filesystem::path cells;
    std::filesystem::path genes;
    std::filesystem::path metadata;

    bool empty() const { return triples.empty(); }
};

struct RunConfig {
    // inputs
    std::vector<std::filesystem::path> node_files;
    std::vector<std::filesystem::path> edge_files;
    std::filesystem::path corpus;
    std::filesystem::path gene_sets;
    MatrixPaths matrix;
    MatrixPaths replicate;

    // artifacts
    std::filesystem::path graph_dir = "artifacts/graph";
    std::filesystem::path index = "artifacts/index.jsonl";
    std::filesystem::path summaries = "artifacts/summaries.jsonl";
    std::filesystem::path cache = "artifacts/cache.jsonl";
    std::filesystem::path out_dir = "artifacts/runs";
    std::filesystem::path templates; // empty: bundled templates

    // endpoint
    std::string transport = "http"; // http | mock
    std::filesystem::path mock_script;
    HttpConfig http;
    std::string summarize_model = "llama3-8b-instruct";
    std::string qa_model = "llama3-8b-instruct";
    std::string enrich_model = "llama3-8b-instruct";
    SamplingParams sampling;
    RetryPolicy retry;
    std::size_t max_in_flight = 4;

    // run
    std::size_t n_runs = 3;
    std::uint64_t base_seed = 0;
    std::size_t k = 10;
    std::string dataset = "K562";

    BenchParams bench;

    /// Throws ArgumentError for out-of-range values.
    void validate() const;
};

/// Replaces ${NAME} with the environment variable NAME in every string.
/// An unset variable is an ArgumentError naming it.
nlohmann::json interpolate_env(const nlohmann::json& j);

/// Missing keys keep their defaults; unknown keys are ArgumentErrors.
/// Relative paths resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Reads, interpolates and parses a JSON config file.
RunConfig load_config(const std::filesystem::path& path);

/// Everything that shapes outputs, for manifests.
nlohmann::json to_json(const RunConfig& c);

} // namespace perturbrag
