#pragma once

#include "perturbrag/corpus.hpp"
#include "perturbrag/kg_store.hpp"
#include "perturbrag/neighbor_index.hpp"
#include "perturbrag/qa_engine.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace perturbrag {

/// P(score of a random positive > score of a random negative), ties 1/2.
/// UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

enum class GroupBy { downstream_gene, perturbation };

std::string_view to_string(GroupBy g);
GroupBy parse_group_by(std::string_view text);

struct MetricReport {
    Task task = Task::de;
    GroupBy group_by = GroupBy::downstream_gene;
    std::map<std::string, double> per_group;
    double macro = 0.0;
    std::size_t n_groups_evaluated = 0;
    std::size_t n_groups_skipped = 0;
    std::size_t n_pairs = 0;
};

/// AUROC per group over every pair of `labels` that carries a label for
/// `task`, then the unweighted mean. Groups lacking either class are
/// skipped. A labeled pair without a prediction is an ArgumentError; zero
/// evaluable groups is an UndefinedMetricError.
MetricReport macro_auroc(const std::vector<PredictionRecord>& predictions, const std::vector<LabeledPair>& labels,
                         Task task, GroupBy group_by = GroupBy::downstream_gene);

nlohmann::json to_json(const MetricReport& r);

/// Plain-text table: one row per group then the macro line.
std::string format_report(const MetricReport& r);

/// Abstain table, one row per dataset: pairs, attempts, abstain,
/// unparseable, fallbacks and the rate.
std::string format_abstain_table(const std::map<std::string, AbstainStats>& rows);

/// Lowercase, non-alphanumerics to spaces, split on whitespace.
std::vector<std::string> rouge_tokens(std::string_view text);

/// Clipped unigram overlap divided by the reference length. ArgumentError
/// for a reference without tokens.
double rouge1_recall(std::string_view prediction, std::string_view reference);

/// Token embeddings for a text; supplied by the caller.
class EmbeddingScorer {
public:
    virtual ~EmbeddingScorer() = default;
    virtual std::vector<std::vector<double>> embed(std::string_view text) = 0;
};

struct SimilarityScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Greedy max-cosine matching between token vectors in both directions.
/// UnsupportedMetricError when `scorer` is null.
SimilarityScore embedding_similarity(std::string_view prediction, std::string_view reference,
                                     EmbeddingScorer* scorer);

/// 1 when the pair physically interacts in `graph`, else 0.
std::vector<double> baseline_physical(const std::vector<LabeledPair>& pairs, const KnowledgeGraph& graph);

/// Mean label of the retrieved examples per run (gene mean when a bundle is
/// empty), averaged over runs. Uses the same run seeds as the QA engine.
std::vector<double> baseline_retrieval_mean(const std::vector<LabeledPair>& pairs, const NeighborIndex& index,
                                            const std::vector<LabeledPair>& corpus, std::uint64_t base_seed,
                                            std::size_t n_runs = 3, Task task = Task::de);

/// Train mean label of each pair's downstream gene.
std::vector<double> baseline_gene_mean(const std::vector<LabeledPair>& pairs, const std::vector<LabeledPair>& corpus,
                                       Task task = Task::de);

/// Wraps baseline scores as prediction records (n_runs 0) for macro_auroc.
std::vector<PredictionRecord> as_predictions(const std::vector<LabeledPair>& pairs, const std::vector<double>& scores,
                                             Task task);

} // namespace perturbrag
