#pragma once

#include "perturbrag/corpus.hpp"
#include "perturbrag/kg_store.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace perturbrag {

struct RelatedNode {
    std::string id;
    std::size_t shared = 0;
    bool operator==(const RelatedNode&) const = default;
};

/// Shared-neighbor similarity over the undirected view of a graph.
///
/// topk(v) holds at most k nodes v' != v with |adj(v) ∩ adj(v')| > 0,
/// sorted by count descending then id ascending.
class NeighborIndex {
public:
    NeighborIndex() = default;
    NeighborIndex(std::map<std::string, std::vector<std::string>> adjacency,
                  std::map<std::string, std::vector<RelatedNode>> topk, std::size_t k);

    std::size_t k() const { return k_; }
    bool contains(std::string_view id) const { return topk_.find(std::string(id)) != topk_.end(); }

    const std::vector<std::string>& neighbors(std::string_view id) const;
    const std::vector<RelatedNode>& topk(std::string_view id) const;
    const std::map<std::string, std::vector<RelatedNode>>& all_topk() const { return topk_; }

private:
    std::map<std::string, std::vector<std::string>> adjacency_;
    std::map<std::string, std::vector<RelatedNode>> topk_;
    std::size_t k_ = 0;
};

/// Throws ArgumentError when k == 0 or the graph is empty.
NeighborIndex build_index(const KnowledgeGraph& graph, std::size_t k = 10);

/// Same computation from a precomputed adjacency (sorted, symmetric, no self loops).
NeighborIndex build_index(std::map<std::string, std::vector<std::string>> adjacency, std::size_t k = 10);

/// ids in topk(v), plus v itself when `include_self`. NotFoundError for an
/// unindexed v.
std::set<std::string> related_set(const NeighborIndex& index, std::string_view v, bool include_self);

void write_index(const NeighborIndex& index, const std::filesystem::path& path);
NeighborIndex read_index(const std::filesystem::path& path);

enum class RetrievalCategory { both_related, pert_related, gene_related };
std::string_view to_string(RetrievalCategory c);

struct RetrievedExample {
    std::string pert;
    std::string gene;
    int y = 0;
    RetrievalCategory category = RetrievalCategory::both_related;
};

struct RetrievalBundle {
    std::string query_pert;
    std::string query_gene;
    std::uint64_t seed = 0;
    std::vector<RetrievedExample> examples;
};

inline constexpr std::size_t per_category_cap = 5;

/// Up to five train examples per category, drawn without replacement in the
/// order both_related, pert_related, gene_related. Later categories skip
/// pairs already drawn. N(p) excludes p; N(g) includes g. Pairs without a
/// label for `task` and the query pair itself are never eligible.
///
/// Ids missing from the index simply have no related nodes.
RetrievalBundle retrieve_examples(const NeighborIndex& index, const std::vector<LabeledPair>& corpus,
                                  std::string_view pert, std::string_view gene, std::uint64_t seed,
                                  Task task = Task::de);

nlohmann::json bundle_to_json(const RetrievalBundle& bundle);

} // namespace perturbrag
