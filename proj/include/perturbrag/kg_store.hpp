#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace perturbrag {

enum class NodeKind { gene, gene_set, pathway, complex, term };

NodeKind parse_node_kind(std::string_view text);
std::string_view to_string(NodeKind kind);

struct NodeEntry {
    std::string field;
    std::string text;
    bool operator==(const NodeEntry&) const = default;
};

struct NodeRecord {
    std::string id;
    NodeKind kind = NodeKind::gene;
    std::vector<NodeEntry> entries;
    std::vector<std::string> members; // only for gene_set
};

struct EdgeRecord {
    std::string src;
    std::string dst;
    std::string relation;
    std::string text;
    std::string source;

    // Ordering by (src, dst, relation, source, text) doubles as the
    // deduplication key and the src-keyed multimap order.
    auto tie() const { return std::tie(src, dst, relation, source, text); }
    bool operator<(const EdgeRecord& o) const { return tie() < o.tie(); }
    bool operator==(const EdgeRecord& o) const { return tie() == o.tie(); }
};

namespace relation {
inline constexpr std::string_view physical_interaction = "physical_interaction";
inline constexpr std::string_view complex_membership = "complex_membership";
inline constexpr std::string_view annotation = "annotation";
} // namespace relation

/// Relations rendered from both endpoints. Everything else is directed.
bool is_undirected(std::string_view relation);

/// Attributed multigraph of biological entities.
///
/// Built single-threaded through add_node/add_edge/merge; read-only
/// afterwards, so concurrent const access is safe.
class KnowledgeGraph {
public:
    /// Inserts a new node. A second node with the same id is a ConflictError.
    void add_node(NodeRecord node);

    /// Inserts an edge unless the identical tuple already exists.
    void add_edge(EdgeRecord edge);

    /// Folds `other` into this graph. Entries of shared ids are appended in
    /// order (exact duplicates dropped); kinds must agree.
    void merge(const KnowledgeGraph& other);

    const NodeRecord* find(std::string_view id) const;
    const NodeRecord& node(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }

    const std::map<std::string, NodeRecord, std::less<>>& nodes() const { return nodes_; }
    const std::set<EdgeRecord>& edges() const { return edges_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    /// Edges whose src is `id`, in tuple order.
    std::vector<const EdgeRecord*> edges_from(std::string_view id) const;

    /// Undirected edges whose dst is `id`.
    std::vector<const EdgeRecord*> undirected_edges_to(std::string_view id) const;

    bool physically_interact(std::string_view a, std::string_view b) const;
    const std::set<std::pair<std::string, std::string>>& physical_pairs() const {
        return physical_pairs_;
    }

    /// Undirected neighbor lists over every relation type, self-loops
    /// dropped. Every node appears as a key.
    std::map<std::string, std::vector<std::string>> adjacency() const;

    /// Adds a complex_membership edge from each gene set to each member.
    void link_gene_set_members();

    /// Dangling edge endpoints and unresolved gene-set members, one message
    /// per problem. Empty when the graph is consistent.
    std::vector<std::string> validate() const;

private:
    std::map<std::string, NodeRecord, std::less<>> nodes_;
    std::set<EdgeRecord> edges_;
    std::set<std::pair<std::string, std::string>> physical_pairs_;
};

/// Reads a line-delimited node file. Duplicate ids within the file are a
/// ConflictError; malformed lines raise ParseError with the line number.
KnowledgeGraph load_nodes(const std::filesystem::path& path);

/// Reads a line-delimited edge file. Endpoints are not checked here.
KnowledgeGraph load_edges(const std::filesystem::path& path);

KnowledgeGraph merge_graphs(std::span<const KnowledgeGraph> parts);

/// Persists the graph as nodes.jsonl and edges.jsonl in `dir`, sorted.
void write_graph(const KnowledgeGraph& graph, const std::filesystem::path& dir);
KnowledgeGraph read_graph(const std::filesystem::path& dir);

/// "Field: body" per entry, one per line.
std::string render_node_text(const NodeRecord& node);

/// One "- sentence" per outgoing or undirected incident edge, sorted.
std::vector<std::string> render_relations_text(const KnowledgeGraph& graph, std::string_view id);

} // namespace perturbrag
