#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace perturbrag {

enum class Split { train, test };
enum class Task { de, dir };

std::string_view to_string(Split split);
std::string_view to_string(Task task);
Task parse_task(std::string_view text);

/// One (perturbation, downstream gene) observation.
struct LabeledPair {
    std::string pert;
    std::string gene;
    int y_de = 0;
    std::optional<int> y_dir; // defined only for y_de == 1 with a nonzero effect
    Split split = Split::train;

    bool operator==(const LabeledPair&) const = default;
};

/// The label a pair carries for `task`, or nullopt when the pair is not
/// evaluable for it (direction requires y_de == 1 and a defined y_dir).
std::optional<int> label_for(const LabeledPair& pair, Task task);

std::vector<LabeledPair> load_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<LabeledPair>& pairs);

std::vector<LabeledPair> filter_split(const std::vector<LabeledPair>& pairs, Split split);

/// Pairs that carry a label for `task`.
std::vector<LabeledPair> filter_task(const std::vector<LabeledPair>& pairs, Task task);

/// Train-split mean label per downstream gene, with the global train mean
/// for genes never seen in train.
class GeneMeanTable {
public:
    /// Uses only train pairs labeled for `task`. Throws ArgumentError when
    /// none exist.
    GeneMeanTable(const std::vector<LabeledPair>& corpus, Task task);

    double operator()(std::string_view gene) const;
    double global_mean() const { return global_; }

private:
    std::map<std::string, double, std::less<>> per_gene_;
    double global_ = 0.0;
};

} // namespace perturbrag
