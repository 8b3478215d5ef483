#include "perturbrag/cli.hpp"

#include "perturbrag/bench_builder.hpp"
#include "perturbrag/config.hpp"
#include "perturbrag/corpus.hpp"
#include "perturbrag/evaluator.hpp"
#include "perturbrag/hashing.hpp"
#include "perturbrag/jsonl.hpp"
#include "perturbrag/kg_store.hpp"
#include "perturbrag/llm_gateway.hpp"
#include "perturbrag/neighbor_index.hpp"
#include "perturbrag/qa_engine.hpp"
#include "perturbrag/summarizer.hpp"
#include "perturbrag/templates.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

namespace perturbrag {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::transport:
    case ErrorKind::empty_response:
        return exit_code::transport;
    default:
        return exit_code::data;
    }
}

namespace {

/// Bad invocation or configuration, as opposed to bad data.
struct UsageError : ArgumentError {
    using ArgumentError::ArgumentError;
};

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
};

struct Env {
    RunConfig cfg;
    bool dry_run = false;
    std::ostream& out;
    std::ostream& err;
};

const fs::path& require_path(const fs::path& p, const char* key) {
    if (p.empty()) {
        throw UsageError("config key " + std::string(key) + " is required for this command");
    }
    return p;
}

std::string file_digest(const fs::path& p) { return sha256_hex(jsonl::read_text(p)); }

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

TemplateSet load_templates(const RunConfig& cfg) {
    return cfg.templates.empty() ? TemplateSet::load_default() : TemplateSet::load(cfg.templates);
}

std::unique_ptr<LlmGateway> make_gateway(const RunConfig& cfg) {
    std::unique_ptr<Transport> transport;
    if (cfg.transport == "mock") {
        transport = MockTransport::from_script(cfg.mock_script);
    } else {
        transport = std::make_unique<HttpTransport>(cfg.http);
    }
    return std::make_unique<LlmGateway>(std::move(transport), std::make_shared<ResponseCache>(cfg.cache), cfg.retry,
                                        cfg.max_in_flight);
}

json stats_json(const LlmGateway& gw) {
    const auto s = gw.stats();
    return {{"transport", gw.transport_name()},
            {"transport_calls", s.transport_calls},
            {"cache_hits", s.cache_hits},
            {"cache_misses", s.cache_misses}};
}

json template_hashes(const TemplateSet& templates) {
    json out = json::object();
    for (const auto& [id, t] : templates.all()) {
        out[id] = t.hash;
    }
    return out;
}

void write_json(const fs::path& path, const json& j) { jsonl::write_text(path, j.dump(2) + "\n"); }

EntityKind entity_kind(const KnowledgeGraph& graph, std::string_view id) {
    const auto* n = graph.find(id);
    return n != nullptr && n->kind == NodeKind::gene_set ? EntityKind::gene_set : EntityKind::gene;
}

// ---- ingest ----

int cmd_ingest(Env& env) {
    const auto& cfg = env.cfg;
    if (cfg.node_files.empty()) {
        throw UsageError("config key inputs.nodes is required for ingest");
    }
    std::vector<KnowledgeGraph> parts;
    for (const auto& p : cfg.node_files) {
        parts.push_back(load_nodes(p));
    }
    for (const auto& p : cfg.edge_files) {
        parts.push_back(load_edges(p));
    }
    const KnowledgeGraph graph = merge_graphs(parts);
    for (const auto& problem : graph.validate()) {
        env.err << "warning: " << problem << "\n";
    }
    env.out << "nodes: " << graph.node_count() << "\nedges: " << graph.edge_count() << "\n";
    if (env.dry_run) {
        env.out << "dry run: graph not written\n";
        return exit_code::ok;
    }
    write_graph(graph, cfg.graph_dir);
    const std::string digest =
        sha256_hex(jsonl::read_text(cfg.graph_dir / "nodes.jsonl") + jsonl::read_text(cfg.graph_dir / "edges.jsonl"));
    env.out << "graph: " << cfg.graph_dir.string() << "\ndigest: " << digest << "\n";
    return exit_code::ok;
}

// ---- index ----

int cmd_index(Env& env) {
    const auto& cfg = env.cfg;
    const KnowledgeGraph graph = read_graph(cfg.graph_dir);
    const NeighborIndex index = build_index(graph, cfg.k);
    std::size_t with_related = 0;
    for (const auto& [id, rel] : index.all_topk()) {
        with_related += rel.empty() ? 0 : 1;
    }
    env.out << "indexed " << index.all_topk().size() << " nodes (k=" << cfg.k << ", " << with_related
            << " with related nodes)\n";
    if (env.dry_run) {
        env.out << "dry run: index not written\n";
        return exit_code::ok;
    }
    write_index(index, cfg.index);
    env.out << "index: " << cfg.index.string() << "\n";
    return exit_code::ok;
}

// ---- summarize ----

struct SummaryJob {
    std::string id;
    Role role;
};

int cmd_summarize(Env& env) {
    const auto& cfg = env.cfg;
    const KnowledgeGraph graph = read_graph(cfg.graph_dir);
    const TemplateSet templates = load_templates(cfg);
    SummaryStore store = fs::exists(cfg.summaries) ? SummaryStore::load(cfg.summaries) : SummaryStore{};

    std::set<std::pair<std::string, Role>> wanted;
    if (!cfg.corpus.empty()) {
        for (const auto& p : load_corpus(cfg.corpus)) {
            wanted.emplace(p.pert, Role::as_perturbation);
            wanted.emplace(p.gene, Role::as_downstream);
        }
    } else {
        for (const auto& [id, node] : graph.nodes()) {
            if (node.kind == NodeKind::gene || node.kind == NodeKind::gene_set) {
                wanted.emplace(id, Role::as_perturbation);
                wanted.emplace(id, Role::as_downstream);
            }
        }
    }
    for (const auto& [id, role] : wanted) {
        if (!graph.contains(id)) {
            env.err << "warning: " << id << " is not in the graph; summarizing from its id alone\n";
        }
    }

    SamplingParams params = cfg.sampling;
    params.model = cfg.summarize_model;

    auto node_text = [&](const std::string& id) {
        const auto* n = graph.find(id);
        return n == nullptr ? std::string() : render_node_text(*n);
    };
    auto relations = [&](const std::string& id) {
        return graph.contains(id) ? render_relations_text(graph, id) : std::vector<std::string>{};
    };

    // Stage 1: single-node summaries.
    std::vector<SummaryJob> jobs;
    std::vector<BatchItem> items;
    std::set<std::pair<std::string, Role>> regenerated;
    for (const auto& [id, role] : wanted) {
        const auto& tmpl = templates.get(summary_template_id(role, Level::node));
        if (store.is_current(id, role, Level::node, params.model, tmpl.hash)) {
            continue;
        }
        jobs.push_back({id, role});
        items.push_back({tmpl.id,
                         build_node_summary_prompt(templates, node_text(id), id, role, entity_kind(graph, id)),
                         run_seed(cfg.base_seed, id, to_string(role), 0)});
    }
    if (env.dry_run) {
        if (!items.empty()) {
            env.out << items.front().prompt << "\n";
        } else {
            env.out << "dry run: all single-node summaries are current\n";
        }
        return exit_code::ok;
    }

    auto gateway = make_gateway(cfg);
    std::size_t failures = 0;
    auto run_stage = [&](Level level) {
        const auto results = gateway->batch_complete(items, params);
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (!results[i].ok()) {
                ++failures;
                env.err << "error: " << jobs[i].id << " (" << to_string(jobs[i].role) << ", " << to_string(level)
                        << "): " << results[i].error << "\n";
                continue;
            }
            store.put({jobs[i].id, jobs[i].role, level, params.model,
                       templates.get(summary_template_id(jobs[i].role, level)).hash, *results[i].text});
            if (level == Level::node) {
                regenerated.emplace(jobs[i].id, jobs[i].role);
            }
        }
        store.save(cfg.summaries);
    };
    run_stage(Level::node);
    const std::size_t n_node = items.size();

    // Stage 2: neighborhood summaries over the node summaries.
    jobs.clear();
    items.clear();
    for (const auto& [id, role] : wanted) {
        const auto& tmpl = templates.get(summary_template_id(role, Level::neighborhood));
        const auto* node_summary = store.find(id, role, Level::node);
        if (node_summary == nullptr) {
            continue; // its stage-1 request failed
        }
        if (!regenerated.count({id, role}) &&
            store.is_current(id, role, Level::neighborhood, params.model, tmpl.hash)) {
            continue;
        }
        jobs.push_back({id, role});
        items.push_back({tmpl.id,
                         build_neighborhood_summary_prompt(templates, id, role, node_summary->text, relations(id),
                                                           entity_kind(graph, id)),
                         run_seed(cfg.base_seed, id, to_string(role), 1)});
    }
    run_stage(Level::neighborhood);

    env.out << "summaries: " << n_node << " node, " << items.size() << " neighborhood generated; " << store.size()
            << " stored in " << cfg.summaries.string() << "\n";
    const auto s = gateway->stats();
    env.out << "transport calls: " << s.transport_calls << ", cache hits: " << s.cache_hits << "\n";
    if (failures > 0) {
        env.err << failures << " summary request(s) failed; rerun to retry them\n";
        return exit_code::transport;
    }
    return exit_code::ok;
}

// ---- predict ----

json report_section(const std::vector<PredictionRecord>& preds, const std::vector<LabeledPair>& labels, Task task,
                    GroupBy group_by, std::string* text) {
    try {
        const auto r = macro_auroc(preds, labels, task, group_by);
        *text += format_report(r);
        return to_json(r);
    } catch (const UndefinedMetricError& e) {
        *text += std::string(to_string(group_by)) + ": " + e.what() + "\n";
        return {{"error", e.what()}};
    }
}

json abstain_json(const AbstainStats& s) {
    return {{"pairs", s.n_pairs},         {"attempts", s.n_attempts},   {"abstain", s.n_abstain},
            {"unparseable", s.n_unparseable}, {"errors", s.n_errors},   {"fallback", s.n_fallback},
            {"abstain_rate", s.abstain_rate()}};
}

int cmd_predict(Env& env, Task task, const std::string& pairs_path) {
    const auto& cfg = env.cfg;
    const auto corpus = load_corpus(require_path(cfg.corpus, "inputs.corpus"));
    const NeighborIndex index = read_index(cfg.index);
    if (!fs::exists(cfg.summaries)) {
        throw DependencyError("summary store " + cfg.summaries.string() + " not found; run `summarize` first");
    }
    const SummaryStore summaries = SummaryStore::load(cfg.summaries);
    const TemplateSet templates = load_templates(cfg);

    std::vector<LabeledPair> pairs;
    if (!pairs_path.empty()) {
        pairs = load_corpus(pairs_path);
    } else {
        pairs = filter_task(filter_split(corpus, Split::test), task);
    }
    if (task == Task::dir) {
        for (const auto& p : pairs) {
            if (p.y_de != 1) {
                throw ArgumentError("direction prediction is defined only for differentially expressed pairs; (" +
                                    p.pert + ", " + p.gene + ") has y_de = " + std::to_string(p.y_de) +
                                    ". Filter the pairs to y_de = 1 first");
            }
        }
    }
    if (pairs.empty()) {
        throw ArgumentError("no test pairs to predict");
    }

    SamplingParams params = cfg.sampling;
    params.model = cfg.qa_model;
    const QaOptions opts{task, cfg.n_runs, cfg.base_seed};

    // The gateway is only needed past the dry-run point, but QaContext
    // holds a reference, so build it with the configured transport.
    auto gateway = make_gateway(cfg);
    const QaContext ctx{templates, summaries, index, corpus, *gateway, params, known_cell_line(cfg.dataset)};
    if (env.dry_run) {
        env.out << build_run_prompt(ctx, opts, pairs.front().pert, pairs.front().gene, 0) << "\n";
        return exit_code::ok;
    }

    const auto preds = predict_dataset(ctx, pairs, opts);
    const fs::path dir = cfg.out_dir / ("predict-" + std::string(to_string(task)));
    const fs::path pred_path = dir / "predictions.jsonl";
    write_predictions(pred_path, preds);

    std::string text;
    json report = {{"task", to_string(task)}};
    report["by_downstream_gene"] = report_section(preds, pairs, task, GroupBy::downstream_gene, &text);
    text += "\n";
    report["by_perturbation"] = report_section(preds, pairs, task, GroupBy::perturbation, &text);
    const auto abst = abstain_stats(preds);
    report["abstain"] = abstain_json(abst);
    text += "\n" + format_abstain_table({{cfg.dataset, abst}});
    write_json(dir / "report.json", report);
    jsonl::write_text(dir / "report.txt", text);

    json manifest = {
        {"command", "predict-" + std::string(to_string(task))},
        {"config", to_json(cfg)},
        {"templates", template_hashes(templates)},
        {"inputs",
         {{"corpus", file_digest(cfg.corpus)},
          {"index", file_digest(cfg.index)},
          {"summaries", file_digest(cfg.summaries)}}},
        {"outputs",
         {{"predictions", file_digest(pred_path)},
          {"report", file_digest(dir / "report.json")}}},
        {"stats", stats_json(*gateway)},
    };
    write_json(dir / "manifest.json", manifest);

    env.out << text << "\npredictions: " << pred_path.string() << "\n";
    const auto s = gateway->stats();
    env.out << "transport calls: " << s.transport_calls << ", cache hits: " << s.cache_hits << "\n";
    return exit_code::ok;
}

// ---- enrich ----

int cmd_enrich(Env& env) {
    const auto& cfg = env.cfg;
    const fs::path sets_path = require_path(cfg.gene_sets, "inputs.gene_sets");
    const TemplateSet templates = load_templates(cfg);
    if (!fs::exists(cfg.summaries)) {
        throw DependencyError("summary store " + cfg.summaries.string() + " not found; run `summarize` first");
    }
    const SummaryStore summaries = SummaryStore::load(cfg.summaries);

    struct SetJob {
        std::string id;
        std::optional<std::string> reference;
    };
    std::vector<SetJob> jobs;
    std::vector<BatchItem> items;
    jsonl::for_each(sets_path, [&](const json& j, std::size_t) {
        SetJob job{jsonl::require_string(j, "set_id"), std::nullopt};
        std::optional<std::string> annotation;
        if (auto it = j.find("annotation"); it != j.end() && !it->is_null()) {
            annotation = it->get<std::string>();
        }
        if (auto it = j.find("reference"); it != j.end() && !it->is_null()) {
            job.reference = it->get<std::string>();
        }
        std::vector<std::string> member_text;
        for (const auto& m : jsonl::require_array(j, "members")) {
            member_text.push_back(summaries.text(m.get<std::string>(), Role::as_perturbation, Level::node));
        }
        const std::string_view tmpl_id =
            annotation ? template_id::gene_set_annotated : template_id::gene_set_enrichment;
        items.push_back({std::string(tmpl_id), build_cluster_prompt(templates, member_text, annotation),
                         run_seed(cfg.base_seed, job.id, "gene_set", 0)});
        jobs.push_back(std::move(job));
    });
    if (items.empty()) {
        throw ArgumentError(sets_path.string() + " lists no gene sets");
    }
    if (env.dry_run) {
        env.out << items.front().prompt << "\n";
        return exit_code::ok;
    }

    SamplingParams params = cfg.sampling;
    params.model = cfg.enrich_model;
    auto gateway = make_gateway(cfg);
    const auto results = gateway->batch_complete(items, params);

    std::vector<json> records;
    double recall_sum = 0.0;
    std::size_t n_scored = 0;
    std::size_t n_failed = 0;
    bool transport_failure = false;
    for (std::size_t i = 0; i < results.size(); ++i) {
        json rec = {{"set_id", jobs[i].id}};
        if (!results[i].ok()) {
            rec["error"] = results[i].error;
            transport_failure = true;
            ++n_failed;
        } else {
            rec["response"] = *results[i].text;
            try {
                const ClusterSummary cs = parse_cluster_output(*results[i].text);
                rec["overview"] = cs.overview;
                rec["upstream"] = cs.upstream;
                rec["name"] = cs.name;
                if (jobs[i].reference) {
                    const double r = rouge1_recall(cs.name, *jobs[i].reference);
                    rec["rouge1_recall"] = r;
                    recall_sum += r;
                    ++n_scored;
                }
            } catch (const ParseError& e) {
                rec["error"] = e.what();
                ++n_failed;
            }
        }
        records.push_back(std::move(rec));
    }
    const fs::path out_path = cfg.out_dir / "enrich" / "clusters.jsonl";
    jsonl::write(out_path, records);
    env.out << "gene sets: " << records.size() << " (" << n_failed << " failed)\n";
    if (n_scored > 0) {
        env.out << "mean ROUGE-1 recall of names: " << fixed(recall_sum / static_cast<double>(n_scored)) << " over "
                << n_scored << " sets\n";
    }
    env.out << "clusters: " << out_path.string() << "\n";
    return transport_failure ? exit_code::transport : exit_code::ok;
}

// ---- bench ----

ExpressionMatrix load_matrix(const MatrixPaths& m) {
    return load_expression_matrix(m.triples, m.cells, m.genes, m.metadata);
}

std::string format_split_counts(const std::map<Split, SplitCounts>& counts) {
    std::string out = "split\tperts\tpairs\tnon-DE\tDE\tup\tdown\n";
    for (const auto& [split, c] : counts) {
        out += std::string(to_string(split)) + "\t" + std::to_string(c.perturbations) + "\t" +
               std::to_string(c.total) + "\t" + std::to_string(c.non_de) + "\t" + std::to_string(c.de) + "\t" +
               std::to_string(c.up) + "\t" + std::to_string(c.down) + "\n";
    }
    return out;
}

int cmd_bench(Env& env, const std::string& out_override) {
    const auto& cfg = env.cfg;
    if (cfg.matrix.empty()) {
        throw UsageError("config key inputs.matrix is required for bench");
    }
    const ExpressionMatrix raw = load_matrix(cfg.matrix);
    std::optional<ExpressionMatrix> rep;
    if (!cfg.replicate.empty()) {
        rep = load_matrix(cfg.replicate);
    }
    std::optional<std::vector<GeneSet>> sets;
    if (!cfg.gene_sets.empty()) {
        sets = load_gene_sets(cfg.gene_sets);
    }
    env.out << "matrix: " << raw.n_cells() << " cells x " << raw.n_genes() << " genes"
            << (rep ? " (replicated)" : "") << (sets ? " (gene-set pooled)" : "") << "\n";
    if (env.dry_run) {
        env.out << "dry run: labels not computed\n";
        return exit_code::ok;
    }

    const BenchResult result =
        run_bench(raw, cfg.bench, rep ? &*rep : nullptr, sets ? &*sets : nullptr);
    for (const auto& w : result.warnings) {
        env.err << "warning: " << w << "\n";
    }
    const fs::path out_path = out_override.empty() ? cfg.out_dir / "bench" / "corpus.jsonl" : fs::path(out_override);
    write_corpus(out_path, result.pairs);

    const auto counts = split_counts(result.pairs);
    json counts_json = json::object();
    for (const auto& [split, c] : counts) {
        counts_json[std::string(to_string(split))] = {{"perturbations", c.perturbations}, {"pairs", c.total},
                                                      {"non_de", c.non_de},            {"de", c.de},
                                                      {"up", c.up},                    {"down", c.down}};
    }
    write_json(out_path.parent_path() / "counts.json",
               {{"splits", counts_json},
                {"retained", result.filter.retained},
                {"negative_controls", result.filter.negative_controls},
                {"deg_counts", result.deg_counts},
                {"unmatched_pairs", result.n_unmatched}});
    env.out << "retained perturbations: " << result.filter.retained.size() << " ("
            << result.filter.negative_controls.size() << " negative controls)\n"
            << format_split_counts(counts) << "corpus: " << out_path.string() << "\n";
    return exit_code::ok;
}

// ---- eval ----

int cmd_eval(Env& env, Task task, const std::vector<std::string>& prediction_paths, const std::string& baseline,
             const std::string& group_by_text) {
    const auto& cfg = env.cfg;
    const auto corpus = load_corpus(require_path(cfg.corpus, "inputs.corpus"));
    const auto test = filter_task(filter_split(corpus, Split::test), task);
    if (prediction_paths.empty() == baseline.empty()) {
        throw UsageError("eval needs exactly one of --predictions or --baseline");
    }
    std::vector<GroupBy> groupings;
    if (group_by_text == "both") {
        groupings = {GroupBy::downstream_gene, GroupBy::perturbation};
    } else {
        groupings = {parse_group_by(group_by_text)};
    }

    struct Source {
        std::string name;
        std::vector<PredictionRecord> preds;
    };
    std::vector<Source> sources;
    if (!baseline.empty()) {
        std::vector<double> scores;
        if (baseline == "physical") {
            if (task != Task::de) {
                throw UsageError("the physical-interaction baseline scores the de task only");
            }
            scores = baseline_physical(test, read_graph(cfg.graph_dir));
        } else if (baseline == "retrieval") {
            scores = baseline_retrieval_mean(test, read_index(cfg.index), corpus, cfg.base_seed, cfg.n_runs, task);
        } else if (baseline == "gene_mean") {
            scores = baseline_gene_mean(test, corpus, task);
        } else {
            throw UsageError("unknown baseline " + baseline + " (physical, retrieval, gene_mean)");
        }
        sources.push_back({baseline, as_predictions(test, scores, task)});
    } else {
        for (const auto& p : prediction_paths) {
            sources.push_back({fs::path(p).stem().string(), load_predictions(p)});
        }
    }

    json report = json::object();
    std::map<std::string, AbstainStats> abstain_rows;
    for (const auto& src : sources) {
        json section = json::object();
        for (GroupBy g : groupings) {
            std::string text;
            section[std::string("by_") + std::string(to_string(g))] = report_section(src.preds, test, task, g, &text);
            env.out << "[" << src.name << "]\n" << text << "\n";
        }
        if (baseline.empty()) {
            abstain_rows[src.name] = abstain_stats(src.preds);
            section["abstain"] = abstain_json(abstain_rows[src.name]);
        }
        report[src.name] = section;
    }
    if (!abstain_rows.empty()) {
        env.out << format_abstain_table(abstain_rows);
    }
    if (!env.dry_run) {
        const std::string name = baseline.empty() ? "predictions" : baseline;
        const fs::path path = cfg.out_dir / ("eval-" + name + "-" + std::string(to_string(task))) / "report.json";
        write_json(path, report);
        env.out << "report: " << path.string() << "\n";
    }
    return exit_code::ok;
}

// ---- cache ----

int cmd_cache(Env& env, const std::string& action) {
    const auto& cfg = env.cfg;
    if (!fs::exists(cfg.cache)) {
        env.out << "cache " << cfg.cache.string() << " is empty (no file)\n";
        return exit_code::ok;
    }
    if (action == "stats") {
        const ResponseCache cache(cfg.cache);
        env.out << "cache: " << cfg.cache.string() << "\nentries: " << cache.size() << "\n";
        return exit_code::ok;
    }
    // verify: every line well formed; later duplicates are shadowed.
    std::set<std::string> seen;
    std::size_t lines = 0;
    std::size_t shadowed = 0;
    jsonl::for_each(cfg.cache, [&](const json& j, std::size_t) {
        ++lines;
        const auto h = jsonl::require_string(j, "prompt_hash");
        jsonl::require_string(j, "response");
        if (!seen.insert(h).second) {
            ++shadowed;
        }
    });
    env.out << "cache: " << cfg.cache.string() << "\nrecords: " << lines << "\nunique: " << seen.size()
            << "\nshadowed duplicates: " << shadowed << "\n";
    return exit_code::ok;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-graph summarize, retrieve and answer pipeline for perturbation effect prediction"};
    app.name(args.empty() ? "perturbrag" : fs::path(args[0]).filename().string());
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    app.add_option("--seed", g.seed, "Override base_seed");
    app.add_flag("--dry-run", g.dry_run, "Print the first instantiated prompt (or the plan) and exit");

    auto* ingest = app.add_subcommand("ingest", "Merge node and edge files into the graph artifact");
    auto* index = app.add_subcommand("index", "Build the shared-neighbor index");
    auto* summarize = app.add_subcommand("summarize", "Generate node and neighborhood summaries");

    std::string pairs_path;
    auto* predict_de = app.add_subcommand("predict-de", "Predict differential expression for test pairs");
    predict_de->add_option("--pairs", pairs_path, "Pairs to predict instead of the test split");
    auto* predict_dir = app.add_subcommand("predict-dir", "Predict direction of change for DE test pairs");
    predict_dir->add_option("--pairs", pairs_path, "Pairs to predict instead of the test split");

    auto* enrich = app.add_subcommand("enrich", "Summarize gene sets and score their names");

    std::string bench_out;
    auto* bench = app.add_subcommand("bench", "Label pairs from expression matrices");
    bench->add_option("--out", bench_out, "Corpus output path");

    std::string eval_task = "de";
    std::vector<std::string> eval_predictions;
    std::string eval_baseline;
    std::string eval_group_by = "both";
    auto* eval = app.add_subcommand("eval", "Score predictions or a baseline on the test split");
    eval->add_option("--task", eval_task, "de or dir")->check(CLI::IsMember({"de", "dir"}));
    eval->add_option("--predictions", eval_predictions, "Prediction files (repeatable)");
    eval->add_option("--baseline", eval_baseline, "physical, retrieval or gene_mean");
    eval->add_option("--group-by", eval_group_by, "downstream_gene, perturbation or both")
        ->check(CLI::IsMember({"downstream_gene", "perturbation", "both"}));

    std::string cache_action = "stats";
    auto* cache = app.add_subcommand("cache", "Inspect the response cache");
    cache->add_option("action", cache_action, "stats or verify")->check(CLI::IsMember({"stats", "verify"}));

    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_code::ok : exit_code::usage;
    }

    try {
        RunConfig cfg;
        try {
            cfg = g.config_path.empty() ? config_from_json(json::object()) : load_config(g.config_path);
        } catch (const ArgumentError& e) {
            throw UsageError(e.what());
        }
        Env env{std::move(cfg), g.dry_run, out, err};
        if (g.seed) {
            env.cfg.base_seed = *g.seed;
            env.cfg.bench.seed = *g.seed;
        }
        if (ingest->parsed()) {
            return cmd_ingest(env);
        }
        if (index->parsed()) {
            return cmd_index(env);
        }
        if (summarize->parsed()) {
            return cmd_summarize(env);
        }
        if (predict_de->parsed()) {
            return cmd_predict(env, Task::de, pairs_path);
        }
        if (predict_dir->parsed()) {
            return cmd_predict(env, Task::dir, pairs_path);
        }
        if (enrich->parsed()) {
            return cmd_enrich(env);
        }
        if (bench->parsed()) {
            return cmd_bench(env, bench_out);
        }
        if (eval->parsed()) {
            return cmd_eval(env, parse_task(eval_task), eval_predictions, eval_baseline, eval_group_by);
        }
        if (cache->parsed()) {
            return cmd_cache(env, cache_action);
        }
        return exit_code::usage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::data;
    }
}

} // namespace perturbrag
