#include "perturbrag/neighbor_index.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/jsonl.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>

namespace perturbrag {

NeighborIndex::NeighborIndex(std::map<std::string, std::vector<std::string>> adjacency,
                             std::map<std::string, std::vector<RelatedNode>> topk, std::size_t k)
    : adjacency_(std::move(adjacency)), topk_(std::move(topk)), k_(k) {}

const std::vector<std::string>& NeighborIndex::neighbors(std::string_view id) const {
    auto it = adjacency_.find(std::string(id));
    if (it == adjacency_.end()) {
        throw NotFoundError("entity \"" + std::string(id) + "\" is not indexed");
    }
    return it->second;
}

const std::vector<RelatedNode>& NeighborIndex::topk(std::string_view id) const {
    auto it = topk_.find(std::string(id));
    if (it == topk_.end()) {
        throw NotFoundError("entity \"" + std::string(id) + "\" is not indexed");
    }
    return it->second;
}

NeighborIndex build_index(const KnowledgeGraph& graph, std::size_t k) {
    if (graph.node_count() == 0) {
        throw ArgumentError("cannot index an empty graph");
    }
    return build_index(graph.adjacency(), k);
}

NeighborIndex build_index(std::map<std::string, std::vector<std::string>> adjacency, std::size_t k) {
    if (k == 0) {
        throw ArgumentError("k must be positive");
    }
    if (adjacency.empty()) {
        throw ArgumentError("cannot index an empty graph");
    }

    // Dense ids keep the two-hop counting loop cheap.
    std::vector<const std::string*> names;
    std::unordered_map<std::string_view, std::size_t> slot;
    names.reserve(adjacency.size());
    for (const auto& [id, _] : adjacency) {
        slot.emplace(id, names.size());
        names.push_back(&id);
    }
    std::vector<std::vector<std::size_t>> adj(names.size());
    for (const auto& [id, list] : adjacency) {
        auto& out = adj[slot.at(id)];
        for (const auto& n : list) {
            auto it = slot.find(n);
            if (it == slot.end()) {
                throw ArgumentError("adjacency references unknown node \"" + n + "\"");
            }
            out.push_back(it->second);
        }
    }

    std::map<std::string, std::vector<RelatedNode>> topk;
    std::vector<std::size_t> counts(names.size(), 0);
    std::vector<std::size_t> touched;
    for (std::size_t v = 0; v < names.size(); ++v) {
        touched.clear();
        for (std::size_t u : adj[v]) {
            for (std::size_t w : adj[u]) {
                if (w == v) {
                    continue;
                }
                if (counts[w]++ == 0) {
                    touched.push_back(w);
                }
            }
        }
        std::vector<RelatedNode> related;
        related.reserve(touched.size());
        for (std::size_t w : touched) {
            related.push_back({*names[w], counts[w]});
            counts[w] = 0;
        }
        auto order = [](const RelatedNode& a, const RelatedNode& b) {
            return a.shared != b.shared ? a.shared > b.shared : a.id < b.id;
        };
        if (related.size() > k) {
            std::partial_sort(related.begin(), related.begin() + static_cast<std::ptrdiff_t>(k),
                              related.end(), order);
            related.resize(k);
        } else {
            std::sort(related.begin(), related.end(), order);
        }
        topk.emplace(*names[v], std::move(related));
    }
    return NeighborIndex(std::move(adjacency), std::move(topk), k);
}

std::set<std::string> related_set(const NeighborIndex& index, std::string_view v, bool include_self) {
    std::set<std::string> out;
    for (const auto& r : index.topk(v)) {
        out.insert(r.id);
    }
    if (include_self) {
        out.emplace(v);
    }
    return out;
}

void write_index(const NeighborIndex& index, const std::filesystem::path& path) {
    std::vector<nlohmann::json> records;
    records.push_back({{"k", index.k()}});
    for (const auto& [id, list] : index.all_topk()) {
        nlohmann::json topk = nlohmann::json::array();
        for (const auto& r : list) {
            topk.push_back({r.id, r.shared});
        }
        records.push_back({{"id", id}, {"neighbors", index.neighbors(id)}, {"topk", topk}});
    }
    jsonl::write(path, records);
}

NeighborIndex read_index(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw DependencyError("index artifact missing: " + path.string() + " (run `index` first)");
    }
    std::size_t k = 0;
    std::map<std::string, std::vector<std::string>> adjacency;
    std::map<std::string, std::vector<RelatedNode>> topk;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) {
        if (j.contains("k")) {
            k = j.at("k").get<std::size_t>();
            return;
        }
        const std::string id = jsonl::require_string(j, "id");
        adjacency[id] = j.at("neighbors").get<std::vector<std::string>>();
        auto& list = topk[id];
        for (const auto& entry : jsonl::require_array(j, "topk")) {
            list.push_back({entry.at(0).get<std::string>(), entry.at(1).get<std::size_t>()});
        }
    });
    if (k == 0) {
        throw ParseError(path.string() + ": missing k header");
    }
    return NeighborIndex(std::move(adjacency), std::move(topk), k);
}

std::string_view to_string(RetrievalCategory c) {
    switch (c) {
    case RetrievalCategory::both_related: return "both_related";
    case RetrievalCategory::pert_related: return "pert_related";
    case RetrievalCategory::gene_related: return "gene_related";
    }
    return "both_related";
}

namespace {

std::set<std::string> related_or_empty(const NeighborIndex& index, std::string_view v, bool include_self) {
    if (!index.contains(v)) {
        std::set<std::string> out;
        if (include_self) {
            out.emplace(v);
        }
        return out;
    }
    return related_set(index, v, include_self);
}

} // namespace

RetrievalBundle retrieve_examples(const NeighborIndex& index, const std::vector<LabeledPair>& corpus,
                                  std::string_view pert, std::string_view gene, std::uint64_t seed,
                                  Task task) {
    const auto related_p = related_or_empty(index, pert, false);
    const auto related_g = related_or_empty(index, gene, true);

    // Eligible train pairs in a corpus-order-independent sequence.
    std::map<std::pair<std::string, std::string>, int> pool;
    for (const auto& pair : corpus) {
        if (pair.split != Split::train || (pair.pert == pert && pair.gene == gene)) {
            continue;
        }
        auto y = label_for(pair, task);
        if (!y) {
            continue;
        }
        const bool p_ok = related_p.contains(pair.pert);
        const bool g_ok = related_g.contains(pair.gene);
        if (p_ok || g_ok) {
            pool.emplace(std::pair{pair.pert, pair.gene}, *y);
        }
    }

    RetrievalBundle bundle{std::string(pert), std::string(gene), seed, {}};
    std::mt19937_64 rng(seed);
    std::set<std::pair<std::string, std::string>> drawn;

    auto draw = [&](RetrievalCategory category, auto&& eligible) {
        std::vector<const std::pair<const std::pair<std::string, std::string>, int>*> candidates;
        for (const auto& entry : pool) {
            if (!drawn.contains(entry.first) && eligible(entry.first.first, entry.first.second)) {
                candidates.push_back(&entry);
            }
        }
        std::shuffle(candidates.begin(), candidates.end(), rng);
        const std::size_t n = std::min(candidates.size(), per_category_cap);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& [key, y] = *candidates[i];
            drawn.insert(key);
            bundle.examples.push_back({key.first, key.second, y, category});
        }
    };

    draw(RetrievalCategory::both_related, [&](const std::string& p, const std::string& g) {
        return related_p.contains(p) && related_g.contains(g);
    });
    draw(RetrievalCategory::pert_related, [&](const std::string& p, const std::string&) {
        return related_p.contains(p);
    });
    draw(RetrievalCategory::gene_related, [&](const std::string&, const std::string& g) {
        return related_g.contains(g);
    });
    return bundle;
}

nlohmann::json bundle_to_json(const RetrievalBundle& bundle) {
    nlohmann::json examples = nlohmann::json::array();
    for (const auto& e : bundle.examples) {
        examples.push_back({{"pert", e.pert},
                            {"gene", e.gene},
                            {"y", e.y},
                            {"category", std::string(to_string(e.category))}});
    }
    return {{"query", {{"pert", bundle.query_pert}, {"gene", bundle.query_gene}}},
            {"seed", bundle.seed},
            {"examples", examples}};
}

} // namespace perturbrag
