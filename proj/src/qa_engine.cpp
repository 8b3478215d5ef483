#include "perturbrag/qa_engine.hpp"

#include "perturbrag/errors.hpp"
#include "perturbrag/hashing.hpp"
#include "perturbrag/jsonl.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

namespace perturbrag {

CellLine known_cell_line(std::string_view dataset) {
    std::string key(dataset);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (key == "k562" || key == "k562-set" || key == "k562_set") {
        return {"K562 cells", "K562 cells are immortalised myelogenous leukemia cells of the erythroleukemia type."};
    }
    if (key == "rpe1") {
        return {"RPE1 cells",
                "RPE1 cells are a non-cancerous, hTERT-immortalized, near-euploid, adherent, and p53-positive cell line."};
    }
    if (key == "jurkat") {
        return {"Jurkat cells", "Jurkat cells are an immortalized line of human T lymphocyte cells."};
    }
    if (key == "hepg2") {
        return {"HepG2 cells",
                "HepG2 cells are a human liver cancer cell line, derived from a patient with a "
                "well-differentiated hepatocellular carcinoma."};
    }
    throw NotFoundError("no built-in description for cell line \"" + std::string(dataset) + "\"");
}

std::string_view to_string(ParsedAnswer a) {
    switch (a) {
    case ParsedAnswer::positive: return "positive";
    case ParsedAnswer::negative: return "negative";
    case ParsedAnswer::abstain: return "abstain";
    case ParsedAnswer::unparseable: return "unparseable";
    }
    return "unparseable";
}

ParsedAnswer parse_parsed_answer(std::string_view text) {
    for (auto a : {ParsedAnswer::positive, ParsedAnswer::negative, ParsedAnswer::abstain,
                   ParsedAnswer::unparseable}) {
        if (to_string(a) == text) {
            return a;
        }
    }
    throw ParseError("unknown answer \"" + std::string(text) + "\"");
}

std::string render_outcome_line(std::string_view pert, std::string_view gene, std::optional<int> label,
                                Task task) {
    const std::string p(pert);
    const std::string g(gene);
    if (!label) {
        throw ArgumentError("pair " + p + "/" + g + " has no " + std::string(to_string(task)) + " label");
    }
    if (task == Task::de) {
        return *label == 0 ? "A) Knockdown of " + p + " does not impact " + g + "."
                           : "B) Knockdown of " + p + " results in differential expression of " + g + ".";
    }
    return *label == 0 ? "A) Knockdown of " + p + " results in a decrease in expression of " + g + "."
                       : "B) Knockdown of " + p + " results in an increase in expression of " + g + ".";
}

std::string render_outcome_line(const RetrievedExample& example, Task task) {
    return render_outcome_line(example.pert, example.gene, example.y, task);
}

std::string render_answer_option(std::string_view pert, std::string_view gene, ParsedAnswer answer,
                                 Task task) {
    const std::string p(pert);
    const std::string g(gene);
    switch (answer) {
    case ParsedAnswer::abstain:
        return "There is insufficient evidence to determine how knockdown of " + p + " affects " + g + ".";
    case ParsedAnswer::negative:
        return task == Task::de ? "No. Knockdown of " + p + " does not impact " + g + "."
                                : render_outcome_line(p, g, 0, task);
    case ParsedAnswer::positive:
        return task == Task::de ? "Yes. Knockdown of " + p + " results in differential expression of " + g + "."
                                : render_outcome_line(p, g, 1, task);
    case ParsedAnswer::unparseable: break;
    }
    throw ArgumentError("unparseable has no answer option");
}

std::string build_de_prompt(const TemplateSet& templates, Task task, std::string_view pert,
                            std::string_view gene, const SummaryStore& summaries,
                            const RetrievalBundle& bundle, const CellLine& cell_line) {
    std::string examples;
    std::size_t i = 0;
    for (const auto& ex : bundle.examples) {
        examples += "\n\nExample " + std::to_string(++i) + ": Impact of knocking down " + ex.pert + " on " +
                    ex.gene + "\n\nDescription of perturbed gene (" + ex.pert +
                    "): " + summaries.text(ex.pert, Role::as_perturbation, Level::neighborhood) +
                    "\n\nDescription of gene of interest (" + ex.gene +
                    "): " + summaries.text(ex.gene, Role::as_downstream, Level::neighborhood) +
                    "\n\nOutcome: " + render_outcome_line(ex, task);
    }
    const auto& tmpl = templates.get(task == Task::de ? template_id::qa_de : template_id::qa_dir);
    return instantiate(tmpl, {
                                 {"perturbation", std::string(pert)},
                                 {"gene", std::string(gene)},
                                 {"cell_line", cell_line.name},
                                 {"cell_line_description", cell_line.description},
                                 {"perturbation_summary",
                                  summaries.text(pert, Role::as_perturbation, Level::neighborhood)},
                                 {"gene_summary", summaries.text(gene, Role::as_downstream, Level::neighborhood)},
                                 {"examples", examples},
                             });
}

// ---------------------------------------------------------------------------
// Answer parsing

namespace {

std::string normalize_line(std::string_view raw) {
    std::string s;
    s.reserve(raw.size());
    bool space = false;
    for (char c : raw) {
        const auto uc = static_cast<unsigned char>(c);
        // Markdown emphasis, headers, quotes and code ticks carry no meaning here.
        if (c == '*' || c == '`' || c == '#' || c == '>' || std::isspace(uc) ||
            (c == '_' && (s.empty() || space))) {
            space = !s.empty();
            continue;
        }
        if (space) {
            s.push_back(' ');
            space = false;
        }
        s.push_back(static_cast<char>(std::tolower(uc)));
    }
    // Trailing underscores from closing emphasis.
    while (!s.empty() && (s.back() == '_' || s.back() == ' ')) {
        s.pop_back();
    }
    while (!s.empty() && std::string_view(".!,;:\"' _").find(s.back()) != std::string_view::npos) {
        s.pop_back();
    }
    return s;
}

std::string strip_leading(std::string s) {
    static const std::regex lead(R"(^(?:(?:[-+]|•)\s*|\(?[abc][\).:]\s+|\(?[abc]\)\s*|final answer\s*:?\s*|answer\s*:\s*|"|'|\s+))");
    for (;;) {
        std::smatch m;
        if (!std::regex_search(s, m, lead) || m.length(0) == 0) {
            return s;
        }
        s.erase(0, static_cast<std::size_t>(m.length(0)));
    }
}

struct OptionPattern {
    std::regex re;
    ParsedAnswer answer;
};

const std::vector<OptionPattern>& option_patterns(Task task) {
    static const std::vector<OptionPattern> de = {
        {std::regex(R"(^(?:no[.,:!]?\s+)?knockdown of .+ does not impact .+$)"), ParsedAnswer::negative},
        {std::regex(R"(^(?:yes[.,:!]?\s+)?knockdown of .+ results in differential expression of .+$)"),
         ParsedAnswer::positive},
        {std::regex(R"(^(?:there is\s+)?insufficient (?:evidence|information) to determine how knockdown of .+ affects .+$)"),
         ParsedAnswer::abstain},
        {std::regex(R"(^no$)"), ParsedAnswer::negative},
        {std::regex(R"(^yes$)"), ParsedAnswer::positive},
    };
    static const std::vector<OptionPattern> dir = {
        {std::regex(R"(^knockdown of .+ results in a decrease in expression of .+$)"), ParsedAnswer::negative},
        {std::regex(R"(^knockdown of .+ results in an increase in expression of .+$)"), ParsedAnswer::positive},
        {std::regex(R"(^(?:there is\s+)?insufficient (?:evidence|information) to determine how knockdown of .+ affects .+$)"),
         ParsedAnswer::abstain},
    };
    return task == Task::de ? de : dir;
}

std::optional<ParsedAnswer> match_option(const std::string& candidate, Task task) {
    const std::string s = strip_leading(candidate);
    if (s.empty()) {
        return std::nullopt;
    }
    for (const auto& opt : option_patterns(task)) {
        if (std::regex_match(s, opt.re)) {
            return opt.answer;
        }
    }
    return std::nullopt;
}

std::optional<ParsedAnswer> classify_line(std::string_view raw, Task task) {
    const std::string line = normalize_line(raw);
    if (line.empty() || line.size() > 2000) {
        return std::nullopt;
    }
    if (auto a = match_option(line, task)) {
        return a;
    }
    // "Therefore, the answer is: ..." and similar lead-ins.
    for (std::size_t colon = line.find(':'); colon != std::string::npos; colon = line.find(':', colon + 1)) {
        if (auto a = match_option(line.substr(colon + 1), task)) {
            return a;
        }
    }
    return std::nullopt;
}

} // namespace

ParsedAnswer parse_answer(std::string_view text, Task task) {
    std::size_t end = text.size();
    while (true) {
        const std::size_t nl = end == 0 ? std::string_view::npos : text.rfind('\n', end - 1);
        const std::size_t start = nl == std::string_view::npos ? 0 : nl + 1;
        if (auto a = classify_line(text.substr(start, end - start), task)) {
            return *a;
        }
        if (nl == std::string_view::npos) {
            return ParsedAnswer::unparseable;
        }
        end = nl;
    }
}

Aggregate aggregate(const std::vector<ParsedAnswer>& answers, double gene_mean) {
    Aggregate out;
    std::size_t informative = 0;
    std::size_t positives = 0;
    for (auto a : answers) {
        switch (a) {
        case ParsedAnswer::positive: ++positives; [[fallthrough]];
        case ParsedAnswer::negative: ++informative; break;
        case ParsedAnswer::abstain:
        case ParsedAnswer::unparseable: ++out.n_abstain; break;
        }
    }
    if (informative == 0) {
        out.score = gene_mean;
        out.fallback = true;
    } else {
        out.score = static_cast<double>(positives) / static_cast<double>(informative);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Records

nlohmann::json to_json(const PredictionRecord& r) {
    nlohmann::json answers = nlohmann::json::array();
    for (auto a : r.run_answers) {
        answers.push_back(std::string(to_string(a)));
    }
    return {{"pert", r.pert},         {"gene", r.gene},       {"task", std::string(to_string(r.task))},
            {"score", r.score},       {"n_runs", r.n_runs},   {"n_abstain", r.n_abstain},
            {"fallback", r.fallback}, {"run_answers", answers}, {"n_errors", r.n_errors}};
}

PredictionRecord prediction_from_json(const nlohmann::json& j) {
    PredictionRecord r;
    r.pert = jsonl::require_string(j, "pert");
    r.gene = jsonl::require_string(j, "gene");
    r.task = parse_task(jsonl::require_string(j, "task"));
    r.score = j.at("score").get<double>();
    r.n_runs = j.at("n_runs").get<std::size_t>();
    r.n_abstain = j.at("n_abstain").get<std::size_t>();
    r.fallback = j.at("fallback").get<bool>();
    for (const auto& a : jsonl::require_array(j, "run_answers")) {
        r.run_answers.push_back(parse_parsed_answer(a.get<std::string>()));
    }
    r.n_errors = j.value("n_errors", std::size_t{0});
    if (!(r.score >= 0.0 && r.score <= 1.0)) {
        throw ParseError("score outside [0,1]");
    }
    return r;
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
    std::vector<nlohmann::json> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(to_json(r));
    }
    jsonl::write(path, out);
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
    std::vector<PredictionRecord> out;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(prediction_from_json(j)); });
    return out;
}

double AbstainStats::abstain_rate() const {
    return n_attempts == 0 ? 0.0
                           : static_cast<double>(n_abstain + n_unparseable) / static_cast<double>(n_attempts);
}

AbstainStats abstain_stats(const std::vector<PredictionRecord>& records) {
    AbstainStats s;
    for (const auto& r : records) {
        ++s.n_pairs;
        s.n_attempts += r.n_runs;
        s.n_errors += r.n_errors;
        s.n_fallback += r.fallback ? 1 : 0;
        for (auto a : r.run_answers) {
            s.n_abstain += a == ParsedAnswer::abstain ? 1 : 0;
            s.n_unparseable += a == ParsedAnswer::unparseable ? 1 : 0;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Dataset prediction

std::string build_run_prompt(const QaContext& ctx, const QaOptions& opts, std::string_view pert,
                             std::string_view gene, std::size_t run_index) {
    const auto seed = run_seed(opts.base_seed, pert, gene, run_index);
    const auto bundle = retrieve_examples(ctx.index, ctx.corpus, pert, gene, seed, opts.task);
    return build_de_prompt(ctx.templates, opts.task, pert, gene, ctx.summaries, bundle, ctx.cell_line);
}

std::vector<PredictionRecord> predict_dataset(const QaContext& ctx, const std::vector<LabeledPair>& pairs,
                                              const QaOptions& opts) {
    if (opts.n_runs == 0) {
        throw ArgumentError("n_runs must be positive");
    }
    if (opts.task == Task::dir) {
        for (const auto& p : pairs) {
            if (p.y_de != 1) {
                throw ArgumentError("direction of change is only defined for pairs with y_de = 1; " + p.pert +
                                    "/" + p.gene + " has y_de = " + std::to_string(p.y_de) +
                                    " (filter the test pairs first)");
            }
        }
    }
    const GeneMeanTable gene_mean(ctx.corpus, opts.task);
    const std::string_view tmpl_id = opts.task == Task::de ? template_id::qa_de : template_id::qa_dir;

    std::vector<BatchItem> items;
    items.reserve(pairs.size() * opts.n_runs);
    for (const auto& p : pairs) {
        for (std::size_t r = 0; r < opts.n_runs; ++r) {
            const auto seed = run_seed(opts.base_seed, p.pert, p.gene, r);
            items.push_back({std::string(tmpl_id), build_run_prompt(ctx, opts, p.pert, p.gene, r), seed});
        }
    }
    const auto results = ctx.gateway.batch_complete(items, ctx.params);

    std::vector<PredictionRecord> records;
    records.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        PredictionRecord rec;
        rec.pert = pairs[i].pert;
        rec.gene = pairs[i].gene;
        rec.task = opts.task;
        rec.n_runs = opts.n_runs;
        for (std::size_t r = 0; r < opts.n_runs; ++r) {
            const auto& res = results[i * opts.n_runs + r];
            if (res.ok()) {
                rec.run_answers.push_back(parse_answer(*res.text, opts.task));
            } else {
                rec.run_answers.push_back(ParsedAnswer::unparseable);
                ++rec.n_errors;
            }
        }
        const auto agg = aggregate(rec.run_answers, gene_mean(rec.gene));
        rec.score = agg.score;
        rec.fallback = agg.fallback;
        rec.n_abstain = agg.n_abstain;
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace perturbrag
