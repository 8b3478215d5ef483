#include "perturbrag/templates.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/hashing.hpp"
#include "perturbrag/jsonl.hpp"

#include <cctype>
#include <cstdlib>

namespace perturbrag {

namespace {

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Length of the placeholder name starting after `{` at pos, or 0.
std::size_t placeholder_len(std::string_view text, std::size_t open) {
    std::size_t i = open + 1;
    while (i < text.size() && is_name_char(text[i])) {
        ++i;
    }
    if (i == open + 1 || i >= text.size() || text[i] != '}') {
        return 0;
    }
    return i - open - 1;
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
}

constexpr std::string_view all_ids[] = {
    template_id::node_summary_perturbation,
    template_id::node_summary_downstream,
    template_id::neighborhood_summary_perturbation,
    template_id::neighborhood_summary_downstream,
    template_id::gene_set_annotated,
    template_id::gene_set_enrichment,
    template_id::qa_de,
    template_id::qa_dir,
};

} // namespace

PromptTemplate::PromptTemplate(std::string id_, std::string text_)
    : id(std::move(id_)), text(std::move(text_)), hash(sha256_hex(text)) {}

std::set<std::string> placeholders(std::string_view text) {
    std::set<std::string> names;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') {
            continue;
        }
        if (std::size_t n = placeholder_len(text, i); n > 0) {
            names.emplace(text.substr(i + 1, n));
            i += n + 1;
        }
    }
    return names;
}

std::string instantiate(const PromptTemplate& tmpl, const TemplateValues& values) {
    const std::string_view text = tmpl.text;
    std::set<std::string> missing;
    std::string out;
    out.reserve(text.size() * 2);
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '{') {
            if (std::size_t n = placeholder_len(text, i); n > 0) {
                const std::string_view name = text.substr(i + 1, n);
                if (auto it = values.find(name); it != values.end()) {
                    out += it->second;
                } else {
                    missing.emplace(name);
                }
                i += n + 1;
                continue;
            }
        }
        out.push_back(text[i]);
    }
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) {
            names += names.empty() ? m : ", " + m;
        }
        throw TemplateError("template " + tmpl.id + ": no value for placeholder(s) " + names);
    }
    return out;
}

std::string gene_to_gene_set(std::string_view text) {
    constexpr std::string_view word = "gene";
    std::string out;
    out.reserve(text.size() + 64);
    for (std::size_t i = 0; i < text.size();) {
        if (text[i] == '{') {
            if (std::size_t n = placeholder_len(text, i); n > 0) {
                out.append(text.substr(i, n + 2));
                i += n + 2;
                continue;
            }
        }
        const bool starts_word = i == 0 || !is_word_char(text[i - 1]);
        if (starts_word && text.substr(i, word.size()) == word &&
            (i + word.size() == text.size() || !is_word_char(text[i + word.size()]))) {
            out += "gene set";
            i += word.size();
            continue;
        }
        out.push_back(text[i]);
        ++i;
    }
    return out;
}

std::filesystem::path default_template_dir() {
    if (const char* env = std::getenv("PERTURBRAG_TEMPLATE_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return PERTURBRAG_DEFAULT_TEMPLATE_DIR;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    TemplateSet set;
    for (std::string_view id : all_ids) {
        const auto path = dir / (std::string(id) + ".txt");
        if (!std::filesystem::exists(path)) {
            throw NotFoundError("template asset missing: " + path.string());
        }
        std::string text = jsonl::read_text(path);
        if (!text.empty() && text.back() == '\n') {
            text.pop_back();
        }
        set.templates_.emplace(std::string(id), PromptTemplate(std::string(id), std::move(text)));
    }
    return set;
}

TemplateSet TemplateSet::load_default() { return load(default_template_dir()); }

const PromptTemplate& TemplateSet::get(std::string_view id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) {
        throw NotFoundError("unknown template \"" + std::string(id) + "\"");
    }
    return it->second;
}

} // namespace perturbrag
