#include "perturbrag/kg_store.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/jsonl.hpp"

#include <algorithm>

namespace perturbrag {

namespace {

constexpr std::pair<std::string_view, NodeKind> kind_names[] = {
    {"gene", NodeKind::gene},
    {"gene_set", NodeKind::gene_set},
    {"pathway", NodeKind::pathway},
    {"complex", NodeKind::complex},
    {"term", NodeKind::term},
};

std::pair<std::string, std::string> unordered_key(std::string_view a, std::string_view b) {
    return a < b ? std::pair{std::string(a), std::string(b)} : std::pair{std::string(b), std::string(a)};
}

NodeRecord node_from_json(const nlohmann::json& j) {
    NodeRecord node;
    node.id = jsonl::require_string(j, "id");
    if (node.id.empty()) {
        throw ParseError("empty node id");
    }
    node.kind = parse_node_kind(jsonl::require_string(j, "kind"));
    if (auto it = j.find("entries"); it != j.end()) {
        if (!it->is_array()) {
            throw ParseError("\"entries\" must be an array");
        }
        for (const auto& e : *it) {
            node.entries.push_back({jsonl::require_string(e, "field"), jsonl::require_string(e, "text")});
        }
    }
    if (auto it = j.find("members"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw ParseError("\"members\" must be an array");
        }
        for (const auto& m : *it) {
            if (!m.is_string()) {
                throw ParseError("member ids must be strings");
            }
            node.members.push_back(m.get<std::string>());
        }
    }
    if (!node.members.empty() && node.kind != NodeKind::gene_set) {
        throw ParseError("node " + node.id + " has members but is not a gene_set");
    }
    return node;
}

nlohmann::json node_to_json(const NodeRecord& node) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : node.entries) {
        entries.push_back({{"field", e.field}, {"text", e.text}});
    }
    nlohmann::json j = {{"id", node.id}, {"kind", std::string(to_string(node.kind))}, {"entries", entries}};
    if (!node.members.empty()) {
        j["members"] = node.members;
    }
    return j;
}

} // namespace

NodeKind parse_node_kind(std::string_view text) {
    for (const auto& [name, kind] : kind_names) {
        if (name == text) {
            return kind;
        }
    }
    throw ParseError("unknown node kind \"" + std::string(text) + "\"");
}

std::string_view to_string(NodeKind kind) {
    for (const auto& [name, k] : kind_names) {
        if (k == kind) {
            return name;
        }
    }
    return "gene";
}

bool is_undirected(std::string_view rel) {
    return rel == relation::physical_interaction || rel == relation::complex_membership;
}

void KnowledgeGraph::add_node(NodeRecord node) {
    if (node.id.empty()) {
        throw ArgumentError("node id must be non-empty");
    }
    if (nodes_.contains(node.id)) {
        throw ConflictError("duplicate node id \"" + node.id + "\"");
    }
    std::string id = node.id;
    nodes_.emplace(std::move(id), std::move(node));
}

void KnowledgeGraph::add_edge(EdgeRecord edge) {
    if (edge.relation == relation::physical_interaction && edge.src != edge.dst) {
        physical_pairs_.insert(unordered_key(edge.src, edge.dst));
    }
    edges_.insert(std::move(edge));
}

void KnowledgeGraph::merge(const KnowledgeGraph& other) {
    for (const auto& [id, incoming] : other.nodes_) {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) {
            nodes_.emplace(id, incoming);
            continue;
        }
        NodeRecord& mine = it->second;
        if (mine.kind != incoming.kind) {
            throw ConflictError("node \"" + id + "\" has kind " + std::string(to_string(mine.kind)) +
                                " and " + std::string(to_string(incoming.kind)));
        }
        for (const auto& e : incoming.entries) {
            if (std::find(mine.entries.begin(), mine.entries.end(), e) == mine.entries.end()) {
                mine.entries.push_back(e);
            }
        }
        for (const auto& m : incoming.members) {
            if (std::find(mine.members.begin(), mine.members.end(), m) == mine.members.end()) {
                mine.members.push_back(m);
            }
        }
    }
    for (const auto& e : other.edges_) {
        add_edge(e);
    }
}

const NodeRecord* KnowledgeGraph::find(std::string_view id) const {
    auto it = nodes_.find(id);
    return it == nodes_.end() ? nullptr : &it->second;
}

const NodeRecord& KnowledgeGraph::node(std::string_view id) const {
    if (const auto* n = find(id)) {
        return *n;
    }
    throw NotFoundError("unknown entity \"" + std::string(id) + "\"");
}

std::vector<const EdgeRecord*> KnowledgeGraph::edges_from(std::string_view id) const {
    std::vector<const EdgeRecord*> out;
    EdgeRecord probe{std::string(id), {}, {}, {}, {}};
    for (auto it = edges_.lower_bound(probe); it != edges_.end() && it->src == id; ++it) {
        out.push_back(&*it);
    }
    return out;
}

std::vector<const EdgeRecord*> KnowledgeGraph::undirected_edges_to(std::string_view id) const {
    std::vector<const EdgeRecord*> out;
    for (const auto& e : edges_) {
        if (e.dst == id && e.src != id && is_undirected(e.relation)) {
            out.push_back(&e);
        }
    }
    return out;
}

bool KnowledgeGraph::physically_interact(std::string_view a, std::string_view b) const {
    return physical_pairs_.contains(unordered_key(a, b));
}

std::map<std::string, std::vector<std::string>> KnowledgeGraph::adjacency() const {
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& [id, _] : nodes_) {
        adj[id];
    }
    for (const auto& e : edges_) {
        if (e.src == e.dst) {
            continue;
        }
        adj[e.src].push_back(e.dst);
        adj[e.dst].push_back(e.src);
    }
    for (auto& [_, list] : adj) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return adj;
}

void KnowledgeGraph::link_gene_set_members() {
    for (const auto& [id, node] : nodes_) {
        if (node.kind != NodeKind::gene_set) {
            continue;
        }
        for (const auto& member : node.members) {
            add_edge({id, member, std::string(relation::complex_membership),
                      member + " is a member of gene set " + id, "user"});
        }
    }
}

std::vector<std::string> KnowledgeGraph::validate() const {
    std::vector<std::string> problems;
    for (const auto& e : edges_) {
        for (const std::string* end : {&e.src, &e.dst}) {
            if (!contains(*end)) {
                problems.push_back("edge " + e.src + " -> " + e.dst + " (" + e.relation +
                                   "): unknown endpoint \"" + *end + "\"");
            }
        }
    }
    for (const auto& [id, node] : nodes_) {
        for (const auto& m : node.members) {
            const auto* member = find(m);
            if (member == nullptr) {
                problems.push_back("gene set " + id + ": unknown member \"" + m + "\"");
            } else if (member->kind != NodeKind::gene) {
                problems.push_back("gene set " + id + ": member \"" + m + "\" is not a gene");
            }
        }
    }
    return problems;
}

KnowledgeGraph load_nodes(const std::filesystem::path& path) {
    KnowledgeGraph graph;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t lineno) {
        NodeRecord node = node_from_json(j);
        if (graph.contains(node.id)) {
            throw ConflictError(path.string() + ": line " + std::to_string(lineno) +
                                ": duplicate node id \"" + node.id + "\"");
        }
        graph.add_node(std::move(node));
    });
    return graph;
}

KnowledgeGraph load_edges(const std::filesystem::path& path) {
    KnowledgeGraph graph;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) {
        EdgeRecord e{jsonl::require_string(j, "src"), jsonl::require_string(j, "dst"),
                     jsonl::require_string(j, "relation"), jsonl::require_string(j, "text"),
                     jsonl::require_string(j, "source")};
        if (e.src.empty() || e.dst.empty()) {
            throw ParseError("edge endpoints must be non-empty");
        }
        graph.add_edge(std::move(e));
    });
    return graph;
}

KnowledgeGraph merge_graphs(std::span<const KnowledgeGraph> parts) {
    KnowledgeGraph merged;
    for (const auto& part : parts) {
        merged.merge(part);
    }
    merged.link_gene_set_members();
    return merged;
}

void write_graph(const KnowledgeGraph& graph, const std::filesystem::path& dir) {
    std::vector<nlohmann::json> nodes;
    for (const auto& [_, node] : graph.nodes()) {
        nodes.push_back(node_to_json(node));
    }
    std::vector<nlohmann::json> edges;
    for (const auto& e : graph.edges()) {
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}, {"text", e.text},
                         {"source", e.source}});
    }
    jsonl::write(dir / "nodes.jsonl", nodes);
    jsonl::write(dir / "edges.jsonl", edges);
}

KnowledgeGraph read_graph(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "nodes.jsonl")) {
        throw DependencyError("graph artifact missing: " + (dir / "nodes.jsonl").string() +
                              " (run `ingest` first)");
    }
    const KnowledgeGraph parts[] = {load_nodes(dir / "nodes.jsonl"), load_edges(dir / "edges.jsonl")};
    return merge_graphs(parts);
}

std::string render_node_text(const NodeRecord& node) {
    std::string out;
    for (const auto& e : node.entries) {
        if (!out.empty()) {
            out += '\n';
        }
        out += e.field;
        out += ": ";
        out += e.text;
    }
    return out;
}

std::vector<std::string> render_relations_text(const KnowledgeGraph& graph, std::string_view id) {
    graph.node(id); // not-found check
    std::vector<std::string> lines;
    for (const auto* e : graph.edges_from(id)) {
        lines.push_back("- " + e->text);
    }
    for (const auto* e : graph.undirected_edges_to(id)) {
        lines.push_back("- " + e->text);
    }
    std::sort(lines.begin(), lines.end());
    lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
    return lines;
}

} // namespace perturbrag
