#include "perturbrag/bench_builder.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/hashing.hpp"
#include "perturbrag/jsonl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

namespace perturbrag {

// ---- ExpressionMatrix ----

ExpressionMatrix::ExpressionMatrix(std::vector<std::string> cells, std::vector<std::string> genes,
                                   std::vector<std::string> cell_perturbation, std::vector<Triplet> entries)
    : cells_(std::move(cells)), genes_(std::move(genes)), cell_pert_(std::move(cell_perturbation)) {
    if (cell_pert_.size() != cells_.size()) {
        throw ArgumentError("perturbation labels for " + std::to_string(cell_pert_.size()) + " of " +
                            std::to_string(cells_.size()) + " cells");
    }
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        if (cell_pert_[i].empty()) {
            throw ArgumentError("cell " + cells_[i] + " has no perturbation label");
        }
    }
    for (const auto* ids : {&cells_, &genes_}) {
        std::vector<std::string> sorted = *ids;
        std::sort(sorted.begin(), sorted.end());
        if (auto dup = std::adjacent_find(sorted.begin(), sorted.end()); dup != sorted.end()) {
            throw ArgumentError("duplicate id " + *dup);
        }
    }
    for (const auto& t : entries) {
        if (t.cell >= cells_.size() || t.gene >= genes_.size()) {
            throw ArgumentError("entry (" + std::to_string(t.cell) + ", " + std::to_string(t.gene) +
                                ") outside a " + std::to_string(cells_.size()) + " x " +
                                std::to_string(genes_.size()) + " matrix");
        }
        if (!(t.value >= 0.0)) {
            throw ArgumentError("negative value at (" + std::to_string(t.cell) + ", " + std::to_string(t.gene) +
                                ")");
        }
    }
    std::sort(entries.begin(), entries.end(),
              [](const Triplet& a, const Triplet& b) { return std::tie(a.cell, a.gene) < std::tie(b.cell, b.gene); });

    row_ptr_.assign(cells_.size() + 1, 0);
    for (std::size_t i = 0; i < entries.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < entries.size() && entries[j].cell == entries[i].cell && entries[j].gene == entries[i].gene) {
            sum += entries[j].value;
            ++j;
        }
        if (sum != 0.0) {
            col_idx_.push_back(entries[i].gene);
            values_.push_back(sum);
            ++row_ptr_[entries[i].cell + 1];
        }
        i = j;
    }
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        row_ptr_[c + 1] += row_ptr_[c];
    }
}

std::span<const std::size_t> ExpressionMatrix::row_genes(std::size_t cell) const {
    return {col_idx_.data() + row_ptr_.at(cell), row_ptr_[cell + 1] - row_ptr_[cell]};
}

std::span<const double> ExpressionMatrix::row_values(std::size_t cell) const {
    return {values_.data() + row_ptr_.at(cell), row_ptr_[cell + 1] - row_ptr_[cell]};
}

double ExpressionMatrix::at(std::size_t cell, std::size_t gene) const {
    const auto g = row_genes(cell);
    auto it = std::lower_bound(g.begin(), g.end(), gene);
    if (it == g.end() || *it != gene) {
        return 0.0;
    }
    return row_values(cell)[static_cast<std::size_t>(it - g.begin())];
}

std::vector<double> ExpressionMatrix::column(std::size_t gene) const {
    std::vector<double> out(n_cells(), 0.0);
    for (std::size_t c = 0; c < n_cells(); ++c) {
        out[c] = at(c, gene);
    }
    return out;
}

// ---- loading ----

namespace {

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw NotFoundError("cannot open " + path.string());
    }
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
            line.pop_back();
        }
        if (!line.empty()) {
            ids.push_back(line);
        }
    }
    return ids;
}

} // namespace

ExpressionMatrix load_expression_matrix(const std::filesystem::path& triples, const std::filesystem::path& cells,
                                        const std::filesystem::path& genes,
                                        const std::filesystem::path& metadata) {
    std::vector<std::string> cell_ids = read_id_list(cells);
    std::vector<std::string> gene_ids = read_id_list(genes);

    std::unordered_map<std::string, std::string> pert_of;
    {
        std::ifstream in(metadata);
        if (!in) {
            throw NotFoundError("cannot open " + metadata.string());
        }
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line.empty() || line[0] == '#') {
                continue;
            }
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw ParseError(metadata.string() + ": expected cell_id<TAB>perturbation", lineno);
            }
            std::string cell = line.substr(0, tab);
            std::string pert = line.substr(tab + 1);
            if (lineno == 1 && cell == "cell_id") {
                continue;
            }
            if (pert.empty()) {
                throw ParseError(metadata.string() + ": empty perturbation for " + cell, lineno);
            }
            pert_of[cell] = pert;
        }
    }
    std::vector<std::string> cell_pert;
    cell_pert.reserve(cell_ids.size());
    for (const auto& c : cell_ids) {
        auto it = pert_of.find(c);
        if (it == pert_of.end()) {
            throw ParseError(metadata.string() + ": no perturbation for cell " + c);
        }
        cell_pert.push_back(it->second);
    }

    std::vector<ExpressionMatrix::Triplet> entries;
    std::ifstream in(triples);
    if (!in) {
        throw NotFoundError("cannot open " + triples.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        long long cell = -1;
        long long gene = -1;
        double value = 0.0;
        std::string extra;
        if (!(fields >> cell >> gene >> value) || (fields >> extra)) {
            throw ParseError(triples.string() + ": expected cell_index gene_index count", lineno);
        }
        if (cell < 0 || gene < 0 || static_cast<std::size_t>(cell) >= cell_ids.size() ||
            static_cast<std::size_t>(gene) >= gene_ids.size()) {
            throw ParseError(triples.string() + ": index out of range", lineno);
        }
        if (value < 0.0) {
            throw ParseError(triples.string() + ": negative count", lineno);
        }
        entries.push_back({static_cast<std::size_t>(cell), static_cast<std::size_t>(gene), value});
    }
    return ExpressionMatrix(std::move(cell_ids), std::move(gene_ids), std::move(cell_pert), std::move(entries));
}

// ---- normalization and testing ----

ExpressionMatrix normalize_tp10k(const ExpressionMatrix& raw) {
    std::vector<double> totals(raw.n_cells(), 0.0);
    std::vector<std::string> empty;
    for (std::size_t c = 0; c < raw.n_cells(); ++c) {
        for (double v : raw.row_values(c)) {
            totals[c] += v;
        }
        if (totals[c] <= 0.0) {
            empty.push_back(raw.cells()[c]);
        }
    }
    if (!empty.empty()) {
        std::string msg = "cells with zero total count:";
        for (const auto& id : empty) {
            msg += " " + id;
        }
        throw DegenerateCellError(msg);
    }
    return raw.map_values([&](std::size_t c, double v) { return std::log(v / totals[c] * 10000.0 + 1.0); });
}

DeResults run_de_tests(const ExpressionMatrix& normalized, std::string_view control_id) {
    std::vector<std::size_t> control_cells;
    std::map<std::string, std::vector<std::size_t>> pert_cells;
    for (std::size_t c = 0; c < normalized.n_cells(); ++c) {
        const auto& p = normalized.cell_perturbation()[c];
        if (p == control_id) {
            control_cells.push_back(c);
        } else {
            pert_cells[p].push_back(c);
        }
    }
    if (control_cells.empty()) {
        throw ArgumentError("no control cells labeled " + std::string(control_id));
    }

    // Column-major copy so each test reads contiguous values.
    const std::size_t n_genes = normalized.n_genes();
    std::vector<std::vector<double>> control_cols(n_genes, std::vector<double>(control_cells.size(), 0.0));
    for (std::size_t i = 0; i < control_cells.size(); ++i) {
        const auto g = normalized.row_genes(control_cells[i]);
        const auto v = normalized.row_values(control_cells[i]);
        for (std::size_t k = 0; k < g.size(); ++k) {
            control_cols[g[k]][i] = v[k];
        }
    }

    std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> work;
    for (const auto& entry : pert_cells) {
        work.push_back(&entry);
    }
    std::vector<std::vector<TestResult>> out(work.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t w = next++; w < work.size(); w = next++) {
            const auto& [pert, cells] = *work[w];
            std::vector<std::vector<double>> cols(n_genes, std::vector<double>(cells.size(), 0.0));
            for (std::size_t i = 0; i < cells.size(); ++i) {
                const auto g = normalized.row_genes(cells[i]);
                const auto v = normalized.row_values(cells[i]);
                for (std::size_t k = 0; k < g.size(); ++k) {
                    cols[g[k]][i] = v[k];
                }
            }
            std::vector<TestResult> results(n_genes);
            std::vector<double> p_raw(n_genes);
            for (std::size_t g = 0; g < n_genes; ++g) {
                const RankTestResult r = rank_sum_test(control_cols[g], cols[g]);
                results[g] = {pert, normalized.genes()[g], r.p_value, r.p_value, r.mean_diff};
                p_raw[g] = r.p_value;
            }
            const auto adjusted = bh_adjust(p_raw);
            for (std::size_t g = 0; g < n_genes; ++g) {
                results[g].p_adj = adjusted[g];
            }
            out[w] = std::move(results);
        }
    };
    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min<std::size_t>(work.size(), std::thread::hardware_concurrency()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }

    DeResults results;
    for (std::size_t w = 0; w < work.size(); ++w) {
        results.emplace(work[w]->first, std::move(out[w]));
    }
    return results;
}

// ---- labeling ----

namespace {

std::mt19937_64 rng_for(std::uint64_t seed, std::string_view purpose, std::string_view key) {
    return std::mt19937_64(StableHasher().add(seed).add(purpose).add(key).finish());
}

std::size_t count_significant(const std::vector<TestResult>& rs, double alpha) {
    return static_cast<std::size_t>(
        std::count_if(rs.begin(), rs.end(), [&](const TestResult& r) { return r.p_adj < alpha; }));
}

} // namespace

FilterResult filter_perturbations(const DeResults& results, std::size_t n_controls, std::uint64_t seed,
                                  double alpha, std::size_t min_degs) {
    FilterResult out;
    std::vector<std::string> zero;
    for (const auto& [pert, rs] : results) {
        const std::size_t n = count_significant(rs, alpha);
        if (n > min_degs) {
            out.retained.insert(pert);
        } else if (n == 0) {
            zero.push_back(pert);
        }
    }
    if (zero.size() < n_controls) {
        out.warnings.push_back("only " + std::to_string(zero.size()) + " zero-DEG perturbations for " +
                               std::to_string(n_controls) + " negative controls; keeping all");
    }
    auto rng = rng_for(seed, "controls", "");
    std::shuffle(zero.begin(), zero.end(), rng);
    zero.resize(std::min(zero.size(), n_controls));
    for (auto& p : zero) {
        out.negative_controls.insert(p);
        out.retained.insert(std::move(p));
    }
    return out;
}

std::vector<CandidateLabel> label_pairs_single(const DeResults& results, double p_pos, double p_neg) {
    std::vector<CandidateLabel> out;
    for (const auto& [pert, rs] : results) {
        for (const auto& r : rs) {
            if (r.p_adj < p_pos) {
                out.push_back({pert, r.gene, 1, r.p_adj, r.mean_diff});
            } else if (r.p_adj > p_neg) {
                out.push_back({pert, r.gene, 0, r.p_adj, r.mean_diff});
            }
        }
    }
    return out;
}

ReplicatedLabels label_pairs_replicated(const DeResults& a, const DeResults& b, double p) {
    std::map<std::pair<std::string, std::string>, const TestResult*> in_b;
    for (const auto& [pert, rs] : b) {
        for (const auto& r : rs) {
            in_b.emplace(std::make_pair(pert, r.gene), &r);
        }
    }
    ReplicatedLabels out;
    std::size_t matched = 0;
    for (const auto& [pert, rs] : a) {
        for (const auto& r : rs) {
            auto it = in_b.find({pert, r.gene});
            if (it == in_b.end()) {
                ++out.n_unmatched;
                continue;
            }
            ++matched;
            const TestResult& rb = *it->second;
            const bool sig_a = r.p_adj < p;
            const bool sig_b = rb.p_adj < p;
            const double ranking = std::max(r.p_adj, rb.p_adj);
            if (sig_a && sig_b) {
                out.candidates.push_back({pert, r.gene, 1, ranking, r.mean_diff});
            } else if (!sig_a && !sig_b) {
                out.candidates.push_back({pert, r.gene, 0, ranking, r.mean_diff});
            }
        }
    }
    out.n_unmatched += in_b.size() - matched;
    return out;
}

Selection select_examples(const std::vector<CandidateLabel>& candidates, std::size_t k_pos, std::size_t k_neg,
                          std::uint64_t seed) {
    std::map<std::string, std::pair<std::vector<const CandidateLabel*>, std::vector<const CandidateLabel*>>> by_pert;
    for (const auto& c : candidates) {
        auto& slot = by_pert[c.pert];
        (c.y_de == 1 ? slot.first : slot.second).push_back(&c);
    }

    Selection out;
    for (auto& [pert, slot] : by_pert) {
        auto& [pos, neg] = slot;
        out.positive_candidates[pert] = pos.size();

        std::sort(pos.begin(), pos.end(), [](const CandidateLabel* x, const CandidateLabel* y) {
            return std::tie(x->p_adj, x->gene) < std::tie(y->p_adj, y->gene);
        });
        pos.resize(std::min(pos.size(), k_pos));

        std::sort(neg.begin(), neg.end(),
                  [](const CandidateLabel* x, const CandidateLabel* y) { return x->gene < y->gene; });
        if (neg.size() < k_neg) {
            out.warnings.push_back(pert + ": " + std::to_string(neg.size()) + " negative candidates, fewer than " +
                                   std::to_string(k_neg));
        } else {
            auto rng = rng_for(seed, "negatives", pert);
            std::shuffle(neg.begin(), neg.end(), rng);
            neg.resize(k_neg);
        }

        std::vector<LabeledPair> chosen;
        for (const auto* c : pos) {
            LabeledPair lp{c->pert, c->gene, 1, std::nullopt, Split::train};
            if (c->mean_diff > 0.0) {
                lp.y_dir = 1;
            } else if (c->mean_diff < 0.0) {
                lp.y_dir = 0;
            }
            chosen.push_back(std::move(lp));
        }
        for (const auto* c : neg) {
            chosen.push_back({c->pert, c->gene, 0, std::nullopt, Split::train});
        }
        std::sort(chosen.begin(), chosen.end(),
                  [](const LabeledPair& x, const LabeledPair& y) { return x.gene < y.gene; });
        out.pairs.insert(out.pairs.end(), chosen.begin(), chosen.end());
    }
    return out;
}

std::vector<LabeledPair> split_train_test(std::vector<LabeledPair> pairs, double frac_test, std::uint64_t seed,
                                          const std::map<std::string, std::size_t>* deg_counts) {
    if (!(frac_test > 0.0 && frac_test < 1.0)) {
        throw ArgumentError("frac_test must lie strictly between 0 and 1");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& p : pairs) {
        auto& n = counts[p.pert];
        if (deg_counts == nullptr && p.y_de == 1) {
            ++n;
        }
    }
    if (deg_counts != nullptr) {
        for (auto& [pert, n] : counts) {
            auto it = deg_counts->find(pert);
            n = it == deg_counts->end() ? 0 : it->second;
        }
    }
    const std::size_t n_perts = counts.size();
    if (n_perts < 2) {
        throw ArgumentError("need at least 2 perturbations to split, got " + std::to_string(n_perts));
    }

    std::vector<std::string> order;
    for (const auto& [pert, n] : counts) {
        order.push_back(pert);
    }
    auto rng = rng_for(seed, "split", "");
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });

    // Position i goes to test when round((i+1) f) steps past round(i f).
    std::map<std::string, Split> split_of;
    std::size_t n_test = 0;
    for (std::size_t i = 0; i < n_perts; ++i) {
        const auto before = std::floor(static_cast<double>(i) * frac_test + 0.5);
        const auto after = std::floor(static_cast<double>(i + 1) * frac_test + 0.5);
        const bool test = after > before;
        n_test += test ? 1 : 0;
        split_of[order[i]] = test ? Split::test : Split::train;
    }
    if (n_test == 0 || n_test == n_perts) {
        throw ArgumentError("frac_test " + std::to_string(frac_test) + " over " + std::to_string(n_perts) +
                            " perturbations leaves one split empty");
    }
    for (auto& p : pairs) {
        p.split = split_of[p.pert];
    }
    return pairs;
}

// ---- gene sets ----

std::vector<GeneSet> load_gene_sets(const std::filesystem::path& path) {
    std::vector<GeneSet> sets;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) {
        GeneSet s;
        s.id = jsonl::require_string(j, "set_id");
        for (const auto& m : jsonl::require_array(j, "members")) {
            if (!m.is_string()) {
                throw ParseError("members must be strings");
            }
            s.members.push_back(m.get<std::string>());
        }
        sets.push_back(std::move(s));
    });
    return sets;
}

PooledMatrix pool_gene_sets(const ExpressionMatrix& normalized, const std::vector<GeneSet>& sets) {
    std::unordered_map<std::string, std::size_t> gene_index;
    for (std::size_t g = 0; g < normalized.n_genes(); ++g) {
        gene_index.emplace(normalized.genes()[g], g);
    }

    PooledMatrix out;
    std::vector<std::string> set_ids;
    std::vector<std::vector<std::size_t>> members;
    for (const auto& s : sets) {
        std::vector<std::size_t> idx;
        for (const auto& m : s.members) {
            if (auto it = gene_index.find(m); it != gene_index.end()) {
                idx.push_back(it->second);
            }
        }
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        if (idx.empty()) {
            out.warnings.push_back("gene set " + s.id + " has no measured members; skipped");
            continue;
        }
        set_ids.push_back(s.id);
        members.push_back(std::move(idx));
    }

    std::vector<ExpressionMatrix::Triplet> entries;
    std::vector<double> dense(normalized.n_genes(), 0.0);
    for (std::size_t c = 0; c < normalized.n_cells(); ++c) {
        const auto g = normalized.row_genes(c);
        const auto v = normalized.row_values(c);
        for (std::size_t k = 0; k < g.size(); ++k) {
            dense[g[k]] = v[k];
        }
        for (std::size_t s = 0; s < members.size(); ++s) {
            double sum = 0.0;
            for (std::size_t m : members[s]) {
                sum += dense[m];
            }
            if (sum != 0.0) {
                entries.push_back({c, s, sum / static_cast<double>(members[s].size())});
            }
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            dense[g[k]] = 0.0;
        }
    }
    out.matrix = ExpressionMatrix(normalized.cells(), std::move(set_ids), normalized.cell_perturbation(),
                                  std::move(entries));
    return out;
}

// ---- pipeline ----

std::map<Split, SplitCounts> split_counts(const std::vector<LabeledPair>& pairs) {
    std::map<Split, SplitCounts> out;
    std::map<Split, std::set<std::string>> perts;
    for (Split s : {Split::train, Split::test}) {
        out[s];
        perts[s];
    }
    for (const auto& p : pairs) {
        auto& c = out[p.split];
        ++c.total;
        if (p.y_de == 1) {
            ++c.de;
            if (p.y_dir == 1) {
                ++c.up;
            } else if (p.y_dir == 0) {
                ++c.down;
            }
        } else {
            ++c.non_de;
        }
        perts[p.split].insert(p.pert);
    }
    for (auto& [s, c] : out) {
        c.perturbations = perts[s].size();
    }
    return out;
}

BenchResult run_bench(const ExpressionMatrix& raw, const BenchParams& params, const ExpressionMatrix* replicate,
                      const std::vector<GeneSet>* gene_sets) {
    BenchResult out;
    auto prepare = [&](const ExpressionMatrix& m) {
        ExpressionMatrix norm = normalize_tp10k(m);
        if (gene_sets != nullptr) {
            PooledMatrix pooled = pool_gene_sets(norm, *gene_sets);
            out.warnings.insert(out.warnings.end(), pooled.warnings.begin(), pooled.warnings.end());
            norm = std::move(pooled.matrix);
        }
        return run_de_tests(norm, params.control_id);
    };

    DeResults primary = prepare(raw);
    out.filter = filter_perturbations(primary, params.n_controls, params.seed, params.filter_alpha, params.min_degs);
    out.warnings.insert(out.warnings.end(), out.filter.warnings.begin(), out.filter.warnings.end());

    auto keep_retained = [&](DeResults rs) {
        for (auto it = rs.begin(); it != rs.end();) {
            it = out.filter.retained.count(it->first) ? std::next(it) : rs.erase(it);
        }
        return rs;
    };

    std::vector<CandidateLabel> candidates;
    if (replicate != nullptr) {
        DeResults second = prepare(*replicate);
        ReplicatedLabels labels =
            label_pairs_replicated(keep_retained(std::move(primary)), keep_retained(std::move(second)),
                                   params.p_replicated);
        candidates = std::move(labels.candidates);
        out.n_unmatched = labels.n_unmatched;
        if (out.n_unmatched > 0) {
            out.warnings.push_back(std::to_string(out.n_unmatched) + " pairs present in only one replicate");
        }
    } else {
        candidates = label_pairs_single(keep_retained(std::move(primary)), params.p_pos, params.p_neg);
    }

    Selection sel = select_examples(candidates, params.k_pos, params.k_neg, params.seed);
    out.warnings.insert(out.warnings.end(), sel.warnings.begin(), sel.warnings.end());
    for (const auto& pert : out.filter.retained) {
        auto it = sel.positive_candidates.find(pert);
        out.deg_counts[pert] = it == sel.positive_candidates.end() ? 0 : it->second;
    }
    out.pairs = split_train_test(std::move(sel.pairs), params.frac_test, params.seed, &out.deg_counts);
    return out;
}

} // namespace perturbrag
