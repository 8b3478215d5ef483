#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace perturbrag {

/// A prompt template with `{name}` placeholders.
struct PromptTemplate {
    std::string id;
    std::string text;
    std::string hash; // sha256 of text

    PromptTemplate() = default;
    PromptTemplate(std::string id, std::string text);
};

using TemplateValues = std::map<std::string, std::string, std::less<>>;

/// Placeholder names used in `text`. A placeholder is `{` + [a-z_]+ + `}`;
/// other braces are literal.
std::set<std::string> placeholders(std::string_view text);

/// Single-pass substitution: substituted values are never rescanned.
/// Throws TemplateError naming every placeholder without a value.
std::string instantiate(const PromptTemplate& tmpl, const TemplateValues& values);

/// Rewrites the whole word "gene" to "gene set" outside placeholders.
std::string gene_to_gene_set(std::string_view text);

namespace template_id {
inline constexpr std::string_view node_summary_perturbation = "node_summary_perturbation";
inline constexpr std::string_view node_summary_downstream = "node_summary_downstream";
inline constexpr std::string_view neighborhood_summary_perturbation = "neighborhood_summary_perturbation";
inline constexpr std::string_view neighborhood_summary_downstream = "neighborhood_summary_downstream";
inline constexpr std::string_view gene_set_annotated = "gene_set_annotated";
inline constexpr std::string_view gene_set_enrichment = "gene_set_enrichment";
inline constexpr std::string_view qa_de = "qa_de";
inline constexpr std::string_view qa_dir = "qa_dir";
} // namespace template_id

/// The asset directory of `<id>.txt` files. A single trailing newline is
/// stripped from each file on load.
class TemplateSet {
public:
    static TemplateSet load(const std::filesystem::path& dir);

    /// The bundled asset directory.
    static TemplateSet load_default();

    const PromptTemplate& get(std::string_view id) const;
    const std::map<std::string, PromptTemplate, std::less<>>& all() const { return templates_; }

private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

std::filesystem::path default_template_dir();

} // namespace perturbrag
