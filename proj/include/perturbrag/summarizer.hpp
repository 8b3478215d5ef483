#pragma once

#include "perturbrag/templates.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace perturbrag {

enum class Role { as_perturbation, as_downstream };
enum class Level { node, neighborhood };

std::string_view to_string(Role role);
std::string_view to_string(Level level);
Role parse_role(std::string_view text);
Level parse_level(std::string_view text);

/// Entity kind as it affects template wording.
enum class EntityKind { gene, gene_set };

struct GeneSummary {
    std::string id;
    Role role = Role::as_perturbation;
    Level level = Level::node;
    std::string model;
    std::string template_hash;
    std::string text;
};

/// Generated summaries, one per (id, role, level).
class SummaryStore {
public:
    using Key = std::tuple<std::string, Role, Level>;

    /// Inserts or replaces the record for (id, role, level). Empty text is
    /// an ArgumentError.
    void put(GeneSummary summary);

    const GeneSummary* find(std::string_view id, Role role, Level level) const;

    /// Like find, but throws DependencyError naming the entity and role.
    const std::string& text(std::string_view id, Role role, Level level) const;

    /// True when a record exists and was made by `model` from a template
    /// with `template_hash`.
    bool is_current(std::string_view id, Role role, Level level, std::string_view model,
                    std::string_view template_hash) const;

    std::size_t size() const { return records_.size(); }
    const std::map<Key, GeneSummary>& records() const { return records_; }

    /// Later lines override earlier ones for the same (id, role, level).
    static SummaryStore load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::map<Key, GeneSummary> records_;
};

/// Id of the template a single-node or neighborhood prompt uses.
std::string_view summary_template_id(Role role, Level level);

/// Single-node summary prompt. Gene sets get "gene" rewritten to "gene set".
std::string build_node_summary_prompt(const TemplateSet& templates, std::string_view node_text,
                                      std::string_view id, Role role,
                                      EntityKind kind = EntityKind::gene);

/// 1-hop neighborhood prompt; `relations` are joined one per line.
std::string build_neighborhood_summary_prompt(const TemplateSet& templates, std::string_view id,
                                              Role role, std::string_view node_summary,
                                              const std::vector<std::string>& relations,
                                              EntityKind kind = EntityKind::gene);

/// Annotated gene-set prompt when `annotation` is present, otherwise the
/// three-section enrichment prompt. Member summaries are joined one per line.
std::string build_cluster_prompt(const TemplateSet& templates,
                                 const std::vector<std::string>& member_summaries,
                                 const std::optional<std::string>& annotation);

struct ClusterSummary {
    std::string cluster_id;
    std::string overview;
    std::string upstream;
    std::string name;
};

/// Extracts the overview, upstream and name sections by header. Section
/// order does not matter; numbering and markdown emphasis are tolerated.
/// Throws ParseError naming the first missing section.
ClusterSummary parse_cluster_output(std::string_view text);

} // namespace perturbrag
