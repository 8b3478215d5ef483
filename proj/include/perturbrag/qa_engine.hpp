#pragma once

#include "perturbrag/corpus.hpp"
#include "perturbrag/llm_gateway.hpp"
#include "perturbrag/neighbor_index.hpp"
#include "perturbrag/summarizer.hpp"
#include "perturbrag/templates.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace perturbrag {

struct CellLine {
    std::string name;        // e.g. "K562 cells", used inside the question
    std::string description; // context sentence
};

/// Built-in context sentences for K562, K562-Set, RPE1, HepG2 and Jurkat.
/// Throws NotFoundError for anything else.
CellLine known_cell_line(std::string_view dataset);

enum class ParsedAnswer { positive, negative, abstain, unparseable };

std::string_view to_string(ParsedAnswer a);
ParsedAnswer parse_parsed_answer(std::string_view text);

/// "A) Knockdown of P does not impact G." and its siblings. For the
/// direction task a missing label is an ArgumentError.
std::string render_outcome_line(std::string_view pert, std::string_view gene, std::optional<int> label,
                                Task task);
std::string render_outcome_line(const RetrievedExample& example, Task task);

/// The answer option sentence the prompt offers for `answer`
/// (positive/negative/abstain). Unparseable has no option.
std::string render_answer_option(std::string_view pert, std::string_view gene, ParsedAnswer answer,
                                 Task task);

/// Instantiates the QA template. Summaries are neighborhood level: pert and
/// example perturbations as_perturbation, gene and example genes as_downstream.
std::string build_de_prompt(const TemplateSet& templates, Task task, std::string_view pert,
                            std::string_view gene, const SummaryStore& summaries,
                            const RetrievalBundle& bundle, const CellLine& cell_line);

/// Scans from the last line upward for the first line that is one of the
/// canonical options, after dropping markdown, "Final answer:"-style
/// prefixes, option letters, case and trailing punctuation.
ParsedAnswer parse_answer(std::string_view text, Task task);

struct Aggregate {
    double score = 0.0;
    bool fallback = false;
    std::size_t n_abstain = 0; // abstain + unparseable
};

/// Mean of positive=1 / negative=0 over the informative answers, or
/// `gene_mean` with fallback set when there are none.
Aggregate aggregate(const std::vector<ParsedAnswer>& answers, double gene_mean);

struct PredictionRecord {
    std::string pert;
    std::string gene;
    Task task = Task::de;
    double score = 0.0;
    std::size_t n_runs = 0;
    std::size_t n_abstain = 0;
    bool fallback = false;
    std::vector<ParsedAnswer> run_answers;
    std::size_t n_errors = 0; // transport failures, counted as unparseable
};

nlohmann::json to_json(const PredictionRecord& r);
PredictionRecord prediction_from_json(const nlohmann::json& j);
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

struct AbstainStats {
    std::size_t n_pairs = 0;
    std::size_t n_attempts = 0;
    std::size_t n_abstain = 0;     // explicit abstain answers
    std::size_t n_unparseable = 0; // includes transport failures
    std::size_t n_errors = 0;
    std::size_t n_fallback = 0;

    /// (abstain + unparseable) / attempts, the quantity summed from records.
    double abstain_rate() const;
};

AbstainStats abstain_stats(const std::vector<PredictionRecord>& records);

struct QaContext {
    const TemplateSet& templates;
    const SummaryStore& summaries;
    const NeighborIndex& index;
    const std::vector<LabeledPair>& corpus; // train pairs are the retrieval pool
    LlmGateway& gateway;
    SamplingParams params;
    CellLine cell_line;
};

struct QaOptions {
    Task task = Task::de;
    std::size_t n_runs = 3;
    std::uint64_t base_seed = 0;
};

/// Prompt for run `run_index` of (pert, gene); what --dry-run prints.
std::string build_run_prompt(const QaContext& ctx, const QaOptions& opts, std::string_view pert,
                             std::string_view gene, std::size_t run_index);

/// Retrieve, prompt, complete and parse n_runs times per pair, then
/// aggregate with the gene-mean fallback. Direction predictions are refused
/// (ArgumentError) for pairs without y_de == 1.
std::vector<PredictionRecord> predict_dataset(const QaContext& ctx, const std::vector<LabeledPair>& pairs,
                                              const QaOptions& opts);

} // namespace perturbrag
