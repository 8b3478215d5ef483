#include "perturbrag/corpus.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/jsonl.hpp"

namespace perturbrag {

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }
std::string_view to_string(Task task) { return task == Task::de ? "de" : "dir"; }

Task parse_task(std::string_view text) {
    if (text == "de") {
        return Task::de;
    }
    if (text == "dir") {
        return Task::dir;
    }
    throw ArgumentError("unknown task \"" + std::string(text) + "\" (expected de or dir)");
}

std::optional<int> label_for(const LabeledPair& pair, Task task) {
    if (task == Task::de) {
        return pair.y_de;
    }
    if (pair.y_de != 1) {
        return std::nullopt;
    }
    return pair.y_dir;
}

namespace {

int binary_field(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
        throw ParseError(std::string("field \"") + key + "\" must be 0 or 1");
    }
    int v = it->get<int>();
    if (v != 0 && v != 1) {
        throw ParseError(std::string("field \"") + key + "\" must be 0 or 1");
    }
    return v;
}

} // namespace

std::vector<LabeledPair> load_corpus(const std::filesystem::path& path) {
    std::vector<LabeledPair> pairs;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) {
        LabeledPair p;
        p.pert = jsonl::require_string(j, "pert");
        p.gene = jsonl::require_string(j, "gene");
        p.y_de = binary_field(j, "y_de");
        if (auto it = j.find("y_dir"); it != j.end() && !it->is_null()) {
            p.y_dir = binary_field(j, "y_dir");
        }
        const std::string split = jsonl::require_string(j, "split");
        if (split == "train") {
            p.split = Split::train;
        } else if (split == "test") {
            p.split = Split::test;
        } else {
            throw ParseError("split must be \"train\" or \"test\"");
        }
        pairs.push_back(std::move(p));
    });
    return pairs;
}

void write_corpus(const std::filesystem::path& path, const std::vector<LabeledPair>& pairs) {
    std::vector<nlohmann::json> records;
    records.reserve(pairs.size());
    for (const auto& p : pairs) {
        records.push_back({{"pert", p.pert},
                           {"gene", p.gene},
                           {"y_de", p.y_de},
                           {"y_dir", p.y_dir ? nlohmann::json(*p.y_dir) : nlohmann::json(nullptr)},
                           {"split", std::string(to_string(p.split))}});
    }
    jsonl::write(path, records);
}

std::vector<LabeledPair> filter_split(const std::vector<LabeledPair>& pairs, Split split) {
    std::vector<LabeledPair> out;
    for (const auto& p : pairs) {
        if (p.split == split) {
            out.push_back(p);
        }
    }
    return out;
}

std::vector<LabeledPair> filter_task(const std::vector<LabeledPair>& pairs, Task task) {
    std::vector<LabeledPair> out;
    for (const auto& p : pairs) {
        if (label_for(p, task)) {
            out.push_back(p);
        }
    }
    return out;
}

GeneMeanTable::GeneMeanTable(const std::vector<LabeledPair>& corpus, Task task) {
    std::map<std::string, std::pair<double, std::size_t>, std::less<>> acc;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& p : corpus) {
        if (p.split != Split::train) {
            continue;
        }
        auto y = label_for(p, task);
        if (!y) {
            continue;
        }
        auto& [sum, count] = acc[p.gene];
        sum += *y;
        ++count;
        total += *y;
        ++n;
    }
    if (n == 0) {
        throw ArgumentError("gene-mean baseline needs at least one labeled train pair");
    }
    global_ = total / static_cast<double>(n);
    for (const auto& [gene, sc] : acc) {
        per_gene_.emplace(gene, sc.first / static_cast<double>(sc.second));
    }
}

double GeneMeanTable::operator()(std::string_view gene) const {
    auto it = per_gene_.find(gene);
    return it == per_gene_.end() ? global_ : it->second;
}

} // namespace perturbrag
