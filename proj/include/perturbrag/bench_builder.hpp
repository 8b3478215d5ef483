#pragma once

#include "perturbrag/corpus.hpp"
#include "perturbrag/rank_test.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace perturbrag {

inline constexpr std::string_view control_perturbation = "NTC";

/// Sparse cells x genes matrix, rows stored compressed (CSR).
class ExpressionMatrix {
public:
    struct Triplet {
        std::size_t cell;
        std::size_t gene;
        double value;
    };

    ExpressionMatrix() = default;

    /// Duplicate (cell, gene) entries are summed. Negative values, indices
    /// out of range or a cell without perturbation label are ArgumentErrors.
    ExpressionMatrix(std::vector<std::string> cells, std::vector<std::string> genes,
                     std::vector<std::string> cell_perturbation, std::vector<Triplet> entries);

    std::size_t n_cells() const { return cells_.size(); }
    std::size_t n_genes() const { return genes_.size(); }
    const std::vector<std::string>& cells() const { return cells_; }
    const std::vector<std::string>& genes() const { return genes_; }
    const std::vector<std::string>& cell_perturbation() const { return cell_pert_; }

    std::span<const std::size_t> row_genes(std::size_t cell) const;
    std::span<const double> row_values(std::size_t cell) const;

    double at(std::size_t cell, std::size_t gene) const;

    /// Dense copy of one gene over all cells.
    std::vector<double> column(std::size_t gene) const;

    /// Copy with every stored value replaced by f(cell, value).
    template <class F>
    ExpressionMatrix map_values(F&& f) const {
        ExpressionMatrix out = *this;
        for (std::size_t c = 0; c < n_cells(); ++c) {
            for (std::size_t k = row_ptr_[c]; k < row_ptr_[c + 1]; ++k) {
                out.values_[k] = f(c, values_[k]);
            }
        }
        return out;
    }

private:
    std::vector<std::string> cells_;
    std::vector<std::string> genes_;
    std::vector<std::string> cell_pert_;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
};

/// Reads coordinate triples (cell_index, gene_index, count; 0-based, tab or
/// space separated, '#' comments), id lists one per line, and a
/// cell_id<TAB>perturbation metadata file.
ExpressionMatrix load_expression_matrix(const std::filesystem::path& triples,
                                        const std::filesystem::path& cells,
                                        const std::filesystem::path& genes,
                                        const std::filesystem::path& metadata);

/// ln(c / total * 10000 + 1) per entry. DegenerateCellError lists every
/// cell whose total count is zero.
ExpressionMatrix normalize_tp10k(const ExpressionMatrix& raw);

struct TestResult {
    std::string pert;
    std::string gene;
    double p_raw = 1.0;
    double p_adj = 1.0;
    double mean_diff = 0.0;
};

/// Per perturbation, one result per gene in matrix order.
using DeResults = std::map<std::string, std::vector<TestResult>>;

/// Rank-sum test of every gene, perturbed cells against control cells,
/// with BH adjustment within each perturbation.
DeResults run_de_tests(const ExpressionMatrix& normalized,
                       std::string_view control_id = control_perturbation);

struct FilterResult {
    std::set<std::string> retained;          // includes the negative controls
    std::set<std::string> negative_controls; // zero-DEG perturbations kept
    std::vector<std::string> warnings;
};

/// Keeps perturbations with more than `min_degs` genes at p_adj < alpha,
/// plus `n_controls` zero-DEG perturbations sampled uniformly with `seed`.
FilterResult filter_perturbations(const DeResults& results, std::size_t n_controls, std::uint64_t seed,
                                  double alpha = 0.05, std::size_t min_degs = 5);

struct CandidateLabel {
    std::string pert;
    std::string gene;
    int y_de = 0;
    double p_adj = 1.0;
    double mean_diff = 0.0;
};

/// y_de = 1 where p_adj < p_pos, y_de = 0 where p_adj > p_neg, else dropped.
std::vector<CandidateLabel> label_pairs_single(const DeResults& results, double p_pos = 0.01,
                                               double p_neg = 0.1);

struct ReplicatedLabels {
    std::vector<CandidateLabel> candidates;
    std::size_t n_unmatched = 0; // pairs present in only one replicate
};

/// Positive when significant (p_adj < p) in both replicates, negative when
/// significant in neither. The ranking p_adj is the larger of the two and
/// the effect direction comes from replicate a.
ReplicatedLabels label_pairs_replicated(const DeResults& a, const DeResults& b, double p = 0.05);

struct Selection {
    std::vector<LabeledPair> pairs; // split not yet assigned
    std::map<std::string, std::size_t> positive_candidates; // per perturbation
    std::vector<std::string> warnings;
};

/// Per perturbation: the k_pos positives with smallest p_adj (ties by gene)
/// and k_neg negatives sampled uniformly. Positives get y_dir from the sign
/// of mean_diff; a zero effect leaves y_dir undefined.
Selection select_examples(const std::vector<CandidateLabel>& candidates, std::size_t k_pos = 20,
                          std::size_t k_neg = 100, std::uint64_t seed = 0);

/// Sorts perturbations by DEG count (descending; ties in seeded random
/// order) and sends every 1/frac_test-th one to test, so both splits see
/// similar DEG distributions. The test count is round(n * frac_test).
/// Counts default to the number of y_de = 1 pairs per perturbation.
std::vector<LabeledPair> split_train_test(std::vector<LabeledPair> pairs, double frac_test = 0.25,
                                          std::uint64_t seed = 0,
                                          const std::map<std::string, std::size_t>* deg_counts = nullptr);

struct GeneSet {
    std::string id;
    std::vector<std::string> members;
};

std::vector<GeneSet> load_gene_sets(const std::filesystem::path& path);

struct PooledMatrix {
    ExpressionMatrix matrix; // genes() are the set ids
    std::vector<std::string> warnings;
};

/// Per cell, the mean normalized value over each set's measured members.
/// Sets with no measured member are skipped with a warning.
PooledMatrix pool_gene_sets(const ExpressionMatrix& normalized, const std::vector<GeneSet>& sets);

struct SplitCounts {
    std::size_t total = 0;
    std::size_t non_de = 0;
    std::size_t de = 0;
    std::size_t up = 0;
    std::size_t down = 0;
    std::size_t perturbations = 0;
};

std::map<Split, SplitCounts> split_counts(const std::vector<LabeledPair>& pairs);

struct BenchParams {
    double p_pos = 0.01;
    double p_neg = 0.1;
    double p_replicated = 0.05;
    double filter_alpha = 0.05;
    std::size_t min_degs = 5;
    std::size_t n_controls = 100;
    std::size_t k_pos = 20;
    std::size_t k_neg = 100;
    double frac_test = 0.25;
    std::uint64_t seed = 0;
    std::string control_id = std::string(control_perturbation);
};

struct BenchResult {
    std::vector<LabeledPair> pairs;
    FilterResult filter;
    std::map<std::string, std::size_t> deg_counts; // positive candidates per kept perturbation
    std::size_t n_unmatched = 0;
    std::vector<std::string> warnings;
};

/// normalize -> test -> adjust -> filter -> label -> select -> split on one
/// replicate; with `replicate` set, labels require agreement of both.
/// Gene sets, when given, are pooled after normalization.
BenchResult run_bench(const ExpressionMatrix& raw, const BenchParams& params,
                      const ExpressionMatrix* replicate = nullptr,
                      const std::vector<GeneSet>* gene_sets = nullptr);

} // namespace perturbrag
