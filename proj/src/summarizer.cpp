#include "perturbrag/summarizer.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/jsonl.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace perturbrag {

std::string_view to_string(Role role) {
    return role == Role::as_perturbation ? "as_perturbation" : "as_downstream";
}

std::string_view to_string(Level level) { return level == Level::node ? "node" : "neighborhood"; }

Role parse_role(std::string_view text) {
    if (text == "as_perturbation") {
        return Role::as_perturbation;
    }
    if (text == "as_downstream") {
        return Role::as_downstream;
    }
    throw ParseError("unknown role \"" + std::string(text) + "\"");
}

Level parse_level(std::string_view text) {
    if (text == "node") {
        return Level::node;
    }
    if (text == "neighborhood") {
        return Level::neighborhood;
    }
    throw ParseError("unknown level \"" + std::string(text) + "\"");
}

void SummaryStore::put(GeneSummary summary) {
    if (summary.text.empty()) {
        throw ArgumentError("empty summary for " + summary.id);
    }
    Key key{summary.id, summary.role, summary.level};
    records_.insert_or_assign(std::move(key), std::move(summary));
}

const GeneSummary* SummaryStore::find(std::string_view id, Role role, Level level) const {
    auto it = records_.find(Key{std::string(id), role, level});
    return it == records_.end() ? nullptr : &it->second;
}

const std::string& SummaryStore::text(std::string_view id, Role role, Level level) const {
    if (const auto* s = find(id, role, level)) {
        return s->text;
    }
    throw DependencyError("no " + std::string(to_string(level)) + "-level summary for " +
                          std::string(id) + " (" + std::string(to_string(role)) +
                          "); run `summarize` first");
}

bool SummaryStore::is_current(std::string_view id, Role role, Level level, std::string_view model,
                              std::string_view template_hash) const {
    const auto* s = find(id, role, level);
    return s != nullptr && s->model == model && s->template_hash == template_hash;
}

SummaryStore SummaryStore::load(const std::filesystem::path& path) {
    SummaryStore store;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) {
        GeneSummary s;
        s.id = jsonl::require_string(j, "id");
        s.role = parse_role(jsonl::require_string(j, "role"));
        s.level = parse_level(jsonl::require_string(j, "level"));
        s.model = jsonl::require_string(j, "model");
        s.text = jsonl::require_string(j, "text");
        s.template_hash = j.value("template_hash", std::string{});
        if (s.text.empty()) {
            throw ParseError("empty summary text for " + s.id);
        }
        store.put(std::move(s));
    });
    return store;
}

void SummaryStore::save(const std::filesystem::path& path) const {
    std::vector<nlohmann::json> out;
    out.reserve(records_.size());
    for (const auto& [_, s] : records_) {
        out.push_back({{"id", s.id},
                       {"role", std::string(to_string(s.role))},
                       {"level", std::string(to_string(s.level))},
                       {"model", s.model},
                       {"template_hash", s.template_hash},
                       {"text", s.text}});
    }
    jsonl::write(path, out);
}

std::string_view summary_template_id(Role role, Level level) {
    if (level == Level::node) {
        return role == Role::as_perturbation ? template_id::node_summary_perturbation
                                             : template_id::node_summary_downstream;
    }
    return role == Role::as_perturbation ? template_id::neighborhood_summary_perturbation
                                         : template_id::neighborhood_summary_downstream;
}

namespace {

PromptTemplate for_entity(const PromptTemplate& base, EntityKind kind) {
    if (kind == EntityKind::gene) {
        return base;
    }
    return PromptTemplate(base.id + ":gene_set", gene_to_gene_set(base.text));
}

std::string join_lines(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) {
            out += '\n';
        }
        out += item;
    }
    return out;
}

} // namespace

std::string build_node_summary_prompt(const TemplateSet& templates, std::string_view node_text,
                                      std::string_view id, Role role, EntityKind kind) {
    const auto tmpl = for_entity(templates.get(summary_template_id(role, Level::node)), kind);
    return instantiate(tmpl, {{"gene", std::string(id)}, {"description", std::string(node_text)}});
}

std::string build_neighborhood_summary_prompt(const TemplateSet& templates, std::string_view id,
                                              Role role, std::string_view node_summary,
                                              const std::vector<std::string>& relations,
                                              EntityKind kind) {
    const auto tmpl = for_entity(templates.get(summary_template_id(role, Level::neighborhood)), kind);
    return instantiate(tmpl, {{"gene", std::string(id)},
                              {"node_summary", std::string(node_summary)},
                              {"relationships", join_lines(relations)}});
}

std::string build_cluster_prompt(const TemplateSet& templates,
                                 const std::vector<std::string>& member_summaries,
                                 const std::optional<std::string>& annotation) {
    if (member_summaries.empty()) {
        throw ArgumentError("cluster prompt needs at least one member summary");
    }
    const std::string joined = join_lines(member_summaries);
    if (annotation) {
        return instantiate(templates.get(template_id::gene_set_annotated),
                           {{"annotation", *annotation}, {"gene_summaries", joined}});
    }
    return instantiate(templates.get(template_id::gene_set_enrichment), {{"gene_summaries", joined}});
}

namespace {

enum Section { overview = 0, upstream = 1, name = 2 };

constexpr std::array<std::string_view, 3> section_names = {
    "Brief overview of gene set", "Upstream pathways may affect this gene set", "Name of gene set"};

// Lowercase header spellings accepted at the start of a line.
constexpr std::array<std::array<std::string_view, 2>, 3> header_variants = {{
    {"brief overview of gene set", "brief overview of the gene set"},
    {"upstream pathways may affect this gene set", "upstream pathways"},
    {"name of gene set", "name of the gene set"},
}};

bool is_prefix_noise(char c) {
    return c == ' ' || c == '\t' || c == '#' || c == '*' || c == '_' || c == '-' || c == '>' ||
           c == '(' || c == ')' || c == '.' || (c >= '0' && c <= '9');
}

bool is_decoration(char c) {
    return c == ' ' || c == '\t' || c == '*' || c == '_' || c == ':' || c == '#' || c == '\r' ||
           c == '\n';
}

std::string trim_decoration(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_decoration(s[b])) {
        ++b;
    }
    while (e > b && is_decoration(s[e - 1])) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

} // namespace

ClusterSummary parse_cluster_output(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

    struct Hit {
        std::size_t line_start = 0;
        std::size_t content_start = 0;
        bool found = false;
    };
    std::array<Hit, 3> hits{};
    std::vector<std::size_t> header_lines;

    for (std::size_t pos = 0; pos < text.size();) {
        std::size_t eol = lower.find('\n', pos);
        if (eol == std::string::npos) {
            eol = lower.size();
        }
        std::size_t p = pos;
        while (p < eol && is_prefix_noise(lower[p])) {
            ++p;
        }
        const std::string_view rest = std::string_view(lower).substr(p, eol - p);
        for (int s = 0; s < 3; ++s) {
            for (std::string_view variant : header_variants[s]) {
                if (rest.starts_with(variant)) {
                    header_lines.push_back(pos);
                    if (!hits[s].found) {
                        hits[s] = {pos, p + variant.size(), true};
                    }
                    goto next_line;
                }
            }
        }
    next_line:
        pos = eol + 1;
    }

    ClusterSummary out;
    std::array<std::string*, 3> fields = {&out.overview, &out.upstream, &out.name};
    for (int s = 0; s < 3; ++s) {
        if (!hits[s].found) {
            throw ParseError("cluster output is missing section \"" + std::string(section_names[s]) + "\"");
        }
        std::size_t end = text.size();
        for (std::size_t h : header_lines) {
            if (h > hits[s].line_start && h < end) {
                end = h;
            }
        }
        *fields[s] = trim_decoration(text.substr(hits[s].content_start, end - hits[s].content_start));
    }

    // The name is the first non-empty line, without emphasis or trailing punctuation.
    std::string& name = out.name;
    if (auto nl = name.find('\n'); nl != std::string::npos) {
        name = trim_decoration(name.substr(0, nl));
    }
    while (!name.empty() && (std::string_view(".,;:!*_ \"'").find(name.back()) != std::string_view::npos)) {
        name.pop_back();
    }
    while (!name.empty() && (std::string_view("*_ \"'").find(name.front()) != std::string_view::npos)) {
        name.erase(name.begin());
    }
    if (out.overview.empty() || out.upstream.empty() || out.name.empty()) {
        const int s = out.overview.empty()   ? Section::overview
                      : out.upstream.empty() ? Section::upstream
                                             : Section::name;
        throw ParseError("cluster output section \"" + std::string(section_names[s]) + "\" is empty");
    }
    return out;
}

} // namespace perturbrag
