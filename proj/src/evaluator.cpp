#include "perturbrag/evaluator.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/hashing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace perturbrag {

double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw ArgumentError("auroc: " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw ArgumentError("auroc: labels must be 0 or 1");
        }
        if (std::isnan(scores[i])) {
            throw ArgumentError("auroc: NaN score");
        }
        n_pos += static_cast<std::size_t>(labels[i]);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedMetricError("auroc needs both classes (" + std::to_string(n_pos) + " positive, " +
                                   std::to_string(n_neg) + " negative)");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the positive rank sum, with midranks, stays an exact integer.
    double doubled_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const auto doubled_midrank = static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                doubled_rank_sum += doubled_midrank;
            }
        }
        i = j;
    }
    const double p = static_cast<double>(n_pos);
    const double doubled_u = doubled_rank_sum - p * (p + 1.0);
    return doubled_u / (2.0 * p * static_cast<double>(n_neg));
}

std::string_view to_string(GroupBy g) { return g == GroupBy::downstream_gene ? "downstream_gene" : "perturbation"; }

GroupBy parse_group_by(std::string_view text) {
    if (text == "downstream_gene" || text == "gene") {
        return GroupBy::downstream_gene;
    }
    if (text == "perturbation" || text == "pert") {
        return GroupBy::perturbation;
    }
    throw ArgumentError("unknown grouping \"" + std::string(text) + "\" (expected downstream_gene or perturbation)");
}

MetricReport macro_auroc(const std::vector<PredictionRecord>& predictions, const std::vector<LabeledPair>& labels,
                         Task task, GroupBy group_by) {
    std::map<std::pair<std::string, std::string>, double> score_of;
    for (const auto& r : predictions) {
        if (r.task == task) {
            score_of[{r.pert, r.gene}] = r.score;
        }
    }

    struct Group {
        std::vector<double> scores;
        std::vector<int> labels;
    };
    std::map<std::string, Group> groups;
    MetricReport report;
    report.task = task;
    report.group_by = group_by;
    for (const auto& pair : labels) {
        const auto y = label_for(pair, task);
        if (!y) {
            continue;
        }
        auto it = score_of.find({pair.pert, pair.gene});
        if (it == score_of.end()) {
            throw ArgumentError("no " + std::string(to_string(task)) + " prediction for (" + pair.pert + ", " +
                                pair.gene + ")");
        }
        auto& g = groups[group_by == GroupBy::downstream_gene ? pair.gene : pair.pert];
        g.scores.push_back(it->second);
        g.labels.push_back(*y);
        ++report.n_pairs;
    }

    double sum = 0.0;
    for (const auto& [id, g] : groups) {
        const auto n_pos = std::count(g.labels.begin(), g.labels.end(), 1);
        if (n_pos == 0 || n_pos == static_cast<long>(g.labels.size())) {
            ++report.n_groups_skipped;
            continue;
        }
        const double a = auroc(g.scores, g.labels);
        report.per_group[id] = a;
        sum += a;
        ++report.n_groups_evaluated;
    }
    if (report.n_groups_evaluated == 0) {
        throw UndefinedMetricError("no " + std::string(to_string(group_by)) + " group has both classes (" +
                                   std::to_string(groups.size()) + " groups)");
    }
    report.macro = sum / static_cast<double>(report.n_groups_evaluated);
    return report;
}

nlohmann::json to_json(const MetricReport& r) {
    return {
        {"task", to_string(r.task)},
        {"group_by", to_string(r.group_by)},
        {"per_group", r.per_group},
        {"macro", r.macro},
        {"n_groups_evaluated", r.n_groups_evaluated},
        {"n_groups_skipped", r.n_groups_skipped},
        {"n_pairs", r.n_pairs},
    };
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

std::string format_report(const MetricReport& r) {
    std::size_t width = std::string_view(to_string(r.group_by)).size();
    for (const auto& [id, _] : r.per_group) {
        width = std::max(width, id.size());
    }
    std::ostringstream out;
    auto row = [&](const std::string& a, const std::string& b) {
        out << a << std::string(width - std::min(width, a.size()) + 2, ' ') << b << "\n";
    };
    row(std::string(to_string(r.group_by)), "auroc");
    for (const auto& [id, v] : r.per_group) {
        row(id, fixed(v, 4));
    }
    out << "\n" << to_string(r.task) << " macro auroc over " << r.n_groups_evaluated << " "
        << to_string(r.group_by) << " groups (" << r.n_groups_skipped << " skipped): " << fixed(r.macro, 4)
        << "\n";
    return out.str();
}

std::string format_abstain_table(const std::map<std::string, AbstainStats>& rows) {
    std::ostringstream out;
    out << "dataset\tpairs\tattempts\tabstain\tunparseable\tfallback\trate\n";
    for (const auto& [name, s] : rows) {
        out << name << '\t' << s.n_pairs << '\t' << s.n_attempts << '\t' << s.n_abstain << '\t' << s.n_unparseable
            << '\t' << s.n_fallback << '\t' << fixed(s.abstain_rate(), 4) << "\n";
    }
    return out.str();
}

std::vector<std::string> rouge_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

double rouge1_recall(std::string_view prediction, std::string_view reference) {
    const auto ref = rouge_tokens(reference);
    if (ref.empty()) {
        throw ArgumentError("reference has no tokens");
    }
    std::unordered_map<std::string, std::size_t> available;
    for (auto& t : rouge_tokens(prediction)) {
        ++available[t];
    }
    std::size_t hit = 0;
    for (const auto& t : ref) {
        auto it = available.find(t);
        if (it != available.end() && it->second > 0) {
            --it->second;
            ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(ref.size());
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ArgumentError("embedding dimensions differ");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double greedy_mean(const std::vector<std::vector<double>>& from, const std::vector<std::vector<double>>& to) {
    double sum = 0.0;
    for (const auto& u : from) {
        double best = -1.0;
        for (const auto& v : to) {
            best = std::max(best, cosine(u, v));
        }
        sum += best;
    }
    return sum / static_cast<double>(from.size());
}

} // namespace

SimilarityScore embedding_similarity(std::string_view prediction, std::string_view reference,
                                     EmbeddingScorer* scorer) {
    if (scorer == nullptr) {
        throw UnsupportedMetricError("embedding similarity needs an embedding scorer; none is configured");
    }
    const auto pred = scorer->embed(prediction);
    const auto ref = scorer->embed(reference);
    if (pred.empty() || ref.empty()) {
        throw ArgumentError("embedding similarity needs at least one token on each side");
    }
    SimilarityScore s;
    s.precision = greedy_mean(pred, ref);
    s.recall = greedy_mean(ref, pred);
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
    return s;
}

std::vector<double> baseline_physical(const std::vector<LabeledPair>& pairs, const KnowledgeGraph& graph) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        out.push_back(graph.physically_interact(p.pert, p.gene) ? 1.0 : 0.0);
    }
    return out;
}

std::vector<double> baseline_retrieval_mean(const std::vector<LabeledPair>& pairs, const NeighborIndex& index,
                                            const std::vector<LabeledPair>& corpus, std::uint64_t base_seed,
                                            std::size_t n_runs, Task task) {
    if (n_runs == 0) {
        throw ArgumentError("n_runs must be positive");
    }
    const GeneMeanTable gene_mean(corpus, task);
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        double total = 0.0;
        for (std::size_t r = 0; r < n_runs; ++r) {
            const auto bundle =
                retrieve_examples(index, corpus, p.pert, p.gene, run_seed(base_seed, p.pert, p.gene, r), task);
            if (bundle.examples.empty()) {
                total += gene_mean(p.gene);
                continue;
            }
            double sum = 0.0;
            for (const auto& e : bundle.examples) {
                sum += e.y;
            }
            total += sum / static_cast<double>(bundle.examples.size());
        }
        out.push_back(total / static_cast<double>(n_runs));
    }
    return out;
}

std::vector<double> baseline_gene_mean(const std::vector<LabeledPair>& pairs, const std::vector<LabeledPair>& corpus,
                                       Task task) {
    const GeneMeanTable gene_mean(corpus, task);
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        out.push_back(gene_mean(p.gene));
    }
    return out;
}

std::vector<PredictionRecord> as_predictions(const std::vector<LabeledPair>& pairs, const std::vector<double>& scores,
                                             Task task) {
    if (pairs.size() != scores.size()) {
        throw ArgumentError("score count does not match pair count");
    }
    std::vector<PredictionRecord> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        PredictionRecord r;
        r.pert = pairs[i].pert;
        r.gene = pairs[i].gene;
        r.task = task;
        r.score = scores[i];
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace perturbrag
