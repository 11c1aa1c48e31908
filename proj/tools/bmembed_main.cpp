#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "bmembed/bm25.hpp"
#include "bmembed/corpus.hpp"
#include "bmembed/embedding.hpp"
#include "bmembed/eval.hpp"
#include "bmembed/fixture.hpp"
#include "bmembed/fusion.hpp"
#include "bmembed/perturb.hpp"
#include "bmembed/pipeline.hpp"
#include "bmembed/query_gen.hpp"
#include "bmembed/sampler.hpp"
#include "bmembed/trainer.hpp"
#include "bmembed/util.hpp"

namespace {

using namespace bmembed;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct ProviderFlags {
    std::string kind = "toy";
    size_t dim = 256;
    uint64_t seed = 0;
    std::string store_path;

    void attach(CLI::App* cmd) {
        cmd->add_option("--provider", kind, "embedding backend: toy | store");
        cmd->add_option("--dim", dim, "toy embedder dimension");
        cmd->add_option("--provider-seed", seed, "toy embedder seed");
        cmd->add_option("--store", store_path, "precomputed embedding store");
    }

    std::unique_ptr<EmbeddingProvider> make() const {
        if (kind == "toy") return std::make_unique<ToyEmbedder>(dim, seed);
        if (kind == "store") {
            if (store_path.empty())
                throw ConfigError("--provider store requires --store");
            return std::make_unique<FileStoreProvider>(store_path);
        }
        throw ConfigError("unknown provider kind: " + kind);
    }
};

PartitionScheme scheme_from_flags(int m, const std::string& strategy,
                                  int first_len, double growth,
                                  const std::vector<int>& bounds) {
    PartitionScheme scheme;
    scheme.m = m;
    scheme.first_len = first_len;
    scheme.growth = growth;
    if (strategy == "uniform")
        scheme.strategy = PartitionStrategy::uniform;
    else if (strategy == "fine_to_coarse")
        scheme.strategy = PartitionStrategy::fine_to_coarse;
    else if (strategy == "explicit")
        scheme.strategy = PartitionStrategy::explicit_bounds;
    else
        throw ConfigError("unknown strategy: " + strategy);
    if (!bounds.empty()) {
        if (bounds.size() % 2 != 0)
            throw ConfigError("--bounds needs an even number of values");
        for (size_t i = 0; i + 1 < bounds.size(); i += 2)
            scheme.boundaries.emplace_back(bounds[i], bounds[i + 1]);
    }
    return scheme;
}

/// TSV run files: blocks headed by `# <query_id>` lines followed by
/// `rank\tchunk_id\tscore` rows. A file with no header is one anonymous
/// block.
Run load_tsv_run(const std::filesystem::path& path) {
    Run run;
    std::string query_id = "q";
    for (const auto& line : split_lines(read_file(path))) {
        if (line.empty()) continue;
        if (line.rfind("# ", 0) == 0) {
            query_id = line.substr(2);
            run[query_id];
            continue;
        }
        std::istringstream row(line);
        std::string rank, chunk_id;
        if (!std::getline(row, rank, '\t') || !std::getline(row, chunk_id, '\t'))
            throw std::runtime_error("malformed run row in " + path.string() +
                                     ": " + line);
        run[query_id].push_back(chunk_id);
    }
    return run;
}

void save_tsv_run(const std::map<std::string, std::vector<ScoredChunk>>& run,
                  const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& [query_id, entries] : run) {
        out << "# " << query_id << '\n';
        for (size_t i = 0; i < entries.size(); ++i)
            out << (i + 1) << '\t' << entries[i].chunk_id << '\t'
                << entries[i].score << '\n';
    }
    write_file(path, out.str());
}

std::unique_ptr<LlmClient> llm_from_flags(const std::string& source,
                                          const std::string& endpoint,
                                          const std::string& model,
                                          const InvertedIndex* index,
                                          uint64_t seed) {
    if (source == "stub") return std::make_unique<StubLlmClient>(index, seed);
    if (source == "llm") {
        if (endpoint.empty() || model.empty())
            throw ConfigError("--source llm requires --endpoint and --model");
        return std::make_unique<HttpLlmClient>(endpoint, model);
    }
    throw ConfigError("unknown query source: " + source);
}

int dispatch(int argc, char** argv) {
    CLI::App app{"BM25-supervised embedding adaptation toolkit"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "chunk a line-JSON corpus");
    std::string ingest_corpus, ingest_out = "chunks.jsonl";
    int ingest_chunk_size = 256;
    ingest->add_option("--corpus", ingest_corpus)->required();
    ingest->add_option("--chunk-size", ingest_chunk_size);
    ingest->add_option("--out", ingest_out);

    // index
    auto* index_cmd = app.add_subcommand("index", "build a BM25 inverted index");
    std::string index_chunks, index_out = "index.jsonl";
    Bm25Params index_params;
    index_cmd->add_option("--chunks", index_chunks)->required();
    index_cmd->add_option("--k1", index_params.k1);
    index_cmd->add_option("--b", index_params.b);
    index_cmd->add_option("--out", index_out);

    // search
    auto* search_cmd = app.add_subcommand("search", "BM25 top-k query");
    std::string search_index, search_query;
    size_t search_k = 10;
    search_cmd->add_option("--index", search_index)->required();
    search_cmd->add_option("--query", search_query)->required();
    search_cmd->add_option("--k", search_k);

    // genqueries
    auto* gen = app.add_subcommand("genqueries", "synthesize training queries");
    std::string gen_corpus, gen_index, gen_source = "stub", gen_endpoint,
                gen_model, gen_out = "queries.jsonl";
    int gen_max = 0;
    uint64_t gen_seed = 42;
    gen->add_option("--corpus", gen_corpus)->required();
    gen->add_option("--index", gen_index, "index for idf-based stub generation");
    gen->add_option("--source", gen_source, "stub | llm");
    gen->add_option("--endpoint", gen_endpoint);
    gen->add_option("--model", gen_model);
    gen->add_option("--max-queries", gen_max);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out);

    // sample
    auto* sample_cmd = app.add_subcommand("sample", "draw ranking samples");
    std::string sample_index, sample_queries, sample_strategy = "fine_to_coarse",
                sample_out = "samples.jsonl";
    int sample_k = 200, sample_m = 6, sample_first_len = 3, sample_lists = 1;
    double sample_growth = 2.0;
    std::vector<int> sample_bounds;
    uint64_t sample_seed = 42;
    sample_cmd->add_option("--index", sample_index)->required();
    sample_cmd->add_option("--queries", sample_queries)->required();
    sample_cmd->add_option("--k", sample_k);
    sample_cmd->add_option("--m", sample_m);
    sample_cmd->add_option("--strategy", sample_strategy);
    sample_cmd->add_option("--first-len", sample_first_len);
    sample_cmd->add_option("--growth", sample_growth);
    sample_cmd->add_option("--bounds", sample_bounds,
                           "explicit interval bounds, flattened pairs");
    sample_cmd->add_option("--lists-per-query", sample_lists);
    sample_cmd->add_option("--seed", sample_seed);
    sample_cmd->add_option("--out", sample_out);

    // train
    auto* train_cmd = app.add_subcommand("train", "fit the residual adapter");
    std::string train_samples, train_chunks, train_loss = "listnet",
                train_out = "adapter.bin", train_curve;
    TrainConfig train_config;
    ProviderFlags train_provider;
    train_cmd->add_option("--samples", train_samples)->required();
    train_cmd->add_option("--chunks", train_chunks)->required();
    train_cmd->add_option("--loss", train_loss, "listnet | listmle");
    train_cmd->add_option("--alpha", train_config.alpha);
    train_cmd->add_option("--lr", train_config.lr);
    train_cmd->add_option("--steps", train_config.steps);
    train_cmd->add_option("--seed", train_config.seed);
    train_cmd->add_flag("--normalize-targets", train_config.normalize_targets,
                        "min-max scale BM25 scores per list before the softmax");
    train_cmd->add_option("--out", train_out);
    train_cmd->add_option("--curve", train_curve, "loss curve CSV path");
    train_provider.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a run or an embedder");
    std::string eval_gold, eval_chunks, eval_run, eval_adapter,
                eval_out = "report.json", eval_csv;
    EvalConfig eval_config;
    ProviderFlags eval_provider;
    eval_cmd->add_option("--gold", eval_gold)->required();
    eval_cmd->add_option("--chunks", eval_chunks)->required();
    eval_cmd->add_option("--theta", eval_config.match_theta,
                         "evidence-match token overlap threshold");
    eval_cmd->add_option("--run", eval_run, "TSV run to score");
    eval_cmd->add_option("--adapter", eval_adapter, "adapter checkpoint");
    eval_cmd->add_option("--out", eval_out);
    eval_cmd->add_option("--csv", eval_csv, "per-query CSV path");
    eval_provider.attach(eval_cmd);

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "reciprocal rank fusion");
    std::string fuse_bm25, fuse_dense, fuse_out = "fused.tsv";
    double fuse_u = 40.0;
    fuse_cmd->add_option("--bm25-run", fuse_bm25)->required();
    fuse_cmd->add_option("--dense-run", fuse_dense)->required();
    fuse_cmd->add_option("--u", fuse_u);
    fuse_cmd->add_option("--out", fuse_out);

    // perturb
    auto* perturb_cmd = app.add_subcommand("perturb", "query perturbation probe");
    std::string perturb_gold, perturb_chunks, perturb_index, perturb_synonyms,
                perturb_adapter, perturb_out = "deltas.csv", perturb_variants;
    std::string perturb_methods = "bm25,dense,dense+adapter";
    size_t perturb_max_keywords = 5;
    double perturb_theta = 0.6;
    ProviderFlags perturb_provider;
    perturb_cmd->add_option("--gold", perturb_gold)->required();
    perturb_cmd->add_option("--chunks", perturb_chunks)->required();
    perturb_cmd->add_option("--index", perturb_index)->required();
    perturb_cmd->add_option("--synonyms", perturb_synonyms)->required();
    perturb_cmd->add_option("--methods", perturb_methods);
    perturb_cmd->add_option("--max-keywords", perturb_max_keywords);
    perturb_cmd->add_option("--adapter", perturb_adapter);
    perturb_cmd->add_option("--variants-out", perturb_variants,
                            "also save the perturbed query variants");
    perturb_cmd->add_option("--theta", perturb_theta,
                            "evidence-match token overlap threshold");
    perturb_cmd->add_option("--out", perturb_out);
    perturb_provider.attach(perturb_cmd);

    // run / report
    auto* run_cmd = app.add_subcommand("run", "execute the full pipeline");
    std::string run_config, run_out_dir;
    uint64_t run_seed = 0;
    bool run_seed_set = false;
    run_cmd->add_option("--config", run_config)->required();
    run_cmd->add_option("--out-dir", run_out_dir, "override output directory");
    run_cmd->add_option("--seed", run_seed)->each([&](const std::string&) {
        run_seed_set = true;
    });

    auto* report_cmd = app.add_subcommand("report", "render the report bundle");
    std::string report_config;
    report_cmd->add_option("--config", report_config)->required();

    // fixture (hermetic test corpus)
    auto* fixture_cmd =
        app.add_subcommand("fixture", "write the bundled jargon corpus");
    std::string fixture_dir = "fixture";
    FixtureSpec fixture_spec;
    fixture_cmd->add_option("--out-dir", fixture_dir);
    fixture_cmd->add_option("--docs", fixture_spec.num_docs);
    fixture_cmd->add_option("--queries", fixture_spec.num_eval_queries);
    fixture_cmd->add_option("--seed", fixture_spec.seed);

    CLI11_PARSE(app, argc, argv);

    if (*ingest) {
        auto docs = load_corpus(ingest_corpus);
        std::vector<Chunk> chunks;
        for (const auto& doc : docs) {
            auto c = chunk_document(doc, ingest_chunk_size);
            chunks.insert(chunks.end(), c.begin(), c.end());
        }
        save_chunks(chunks, ingest_out);
        std::cout << chunks.size() << " chunks from " << docs.size()
                  << " documents\n";
        return kExitOk;
    }
    if (*index_cmd) {
        auto chunks = load_chunks(index_chunks);
        auto index = build_index(chunks, index_params);
        save_index(index, index_out);
        std::cout << index.num_chunks << " chunks, " << index.postings.size()
                  << " terms\n";
        return kExitOk;
    }
    if (*search_cmd) {
        auto index = load_index(search_index);
        RankedList ranked = search(index, tokenize(search_query), search_k);
        for (size_t i = 0; i < ranked.entries.size(); ++i)
            std::cout << (i + 1) << '\t' << ranked.entries[i].chunk_id << '\t'
                      << ranked.entries[i].score << '\n';
        return kExitOk;
    }
    if (*gen) {
        auto docs = load_corpus(gen_corpus);
        InvertedIndex index;
        const InvertedIndex* index_ptr = nullptr;
        if (!gen_index.empty()) {
            index = load_index(gen_index);
            index_ptr = &index;
        }
        auto llm = llm_from_flags(gen_source, gen_endpoint, gen_model,
                                  index_ptr, gen_seed);
        QueryGenOptions options;
        options.max_queries = gen_max;
        options.seed = gen_seed;
        auto queries = generate_queries(docs, *llm, options);
        save_queries(queries, gen_out);
        std::cout << queries.size() << " queries\n";
        return kExitOk;
    }
    if (*sample_cmd) {
        auto index = load_index(sample_index);
        auto queries = load_queries(sample_queries);
        std::vector<QueryForSampling> for_sampling;
        for (const auto& q : queries) for_sampling.push_back({q.query_id, q.text});
        auto scheme = scheme_from_flags(sample_m, sample_strategy,
                                        sample_first_len, sample_growth,
                                        sample_bounds);
        auto result = generate_training_set(for_sampling, index, sample_k,
                                            scheme, sample_lists, sample_seed);
        save_samples(result.samples, sample_out);
        std::cout << result.samples.size() << " samples, "
                  << result.skipped_queries << " queries skipped\n";
        return kExitOk;
    }
    if (*train_cmd) {
        auto samples = load_samples(train_samples);
        auto chunks = load_chunks(train_chunks);
        std::unordered_map<std::string, std::string> chunk_texts;
        for (const auto& c : chunks) chunk_texts[c.chunk_id] = c.text;
        if (train_loss == "listnet")
            train_config.loss = LossKind::listnet;
        else if (train_loss == "listmle")
            train_config.loss = LossKind::listmle;
        else
            throw ConfigError("train: unknown loss " + train_loss);
        auto provider = train_provider.make();
        auto result = train(samples, chunk_texts, *provider, train_config);
        AdapterCheckpoint ckpt;
        ckpt.loss = train_loss;
        ckpt.step = static_cast<uint32_t>(train_config.steps);
        ckpt.adapter = result.adapter;
        save_adapter(ckpt, train_out);
        if (!train_curve.empty()) save_loss_curve(result.curve, train_curve);
        std::cout << "final loss " << result.curve.back().loss << '\n';
        return kExitOk;
    }
    if (*eval_cmd) {
        auto gold = load_eval_queries(eval_gold);
        auto chunks = load_chunks(eval_chunks);
        EvalReport report;
        if (!eval_run.empty()) {
            report = evaluate_run(load_tsv_run(eval_run), gold, chunks,
                                  eval_config);
        } else {
            auto provider = eval_provider.make();
            Adapter adapter;
            const Adapter* adapter_ptr = nullptr;
            if (!eval_adapter.empty()) {
                adapter = load_adapter(eval_adapter).adapter;
                adapter_ptr = &adapter;
            }
            report = evaluate_embedder(*provider, adapter_ptr, gold, chunks,
                                       eval_config);
        }
        save_report_json(report, eval_out);
        if (!eval_csv.empty()) save_report_csv(report, eval_csv);
        std::cout << "hit@10 " << report.hit10 << "  map@10 " << report.map10
                  << '\n';
        return kExitOk;
    }
    if (*fuse_cmd) {
        Run sparse = load_tsv_run(fuse_bm25);
        Run dense = load_tsv_run(fuse_dense);
        FusionConfig config{fuse_u};
        std::map<std::string, std::vector<ScoredChunk>> fused;
        for (const auto& [query_id, dense_ids] : dense) {
            std::vector<std::vector<std::string>> rankings = {dense_ids};
            auto it = sparse.find(query_id);
            if (it != sparse.end()) rankings.push_back(it->second);
            fused[query_id] = rrf_fuse(rankings, config);
        }
        save_tsv_run(fused, fuse_out);
        return kExitOk;
    }
    if (*perturb_cmd) {
        auto gold = load_eval_queries(perturb_gold);
        auto chunks = load_chunks(perturb_chunks);
        auto index = load_index(perturb_index);
        auto lexicon = load_synonym_lexicon(perturb_synonyms);
        auto provider = perturb_provider.make();
        Adapter adapter;
        bool have_adapter = false;
        if (!perturb_adapter.empty()) {
            adapter = load_adapter(perturb_adapter).adapter;
            have_adapter = true;
        }
        std::vector<PerturbedQuery> variants;
        for (const auto& q : gold) {
            std::string evidence;
            for (const auto& span : q.gold_spans) {
                if (!evidence.empty()) evidence += ' ';
                evidence += span;
            }
            if (evidence.empty()) continue;
            PerturbedQuery p;
            p.query_id = q.query_id;
            p.original = q.text;
            p.keywords =
                extract_keywords_stub(q.text, evidence, index, perturb_max_keywords);
            p.masked = mask_keywords(q.text, p.keywords);
            std::vector<std::string> substitutable;
            for (const auto& kw : p.keywords) {
                auto it = lexicon.find(kw);
                if (it == lexicon.end()) continue;
                substitutable.push_back(kw);
                p.synonyms[kw] = it->second;
            }
            p.substituted = substitute_keywords(q.text, substitutable, p.synonyms);
            variants.push_back(std::move(p));
        }
        if (!perturb_variants.empty())
            save_perturbed_queries(variants, perturb_variants);
        std::vector<PerturbationMethod> methods;
        std::stringstream method_list(perturb_methods);
        std::string method;
        while (std::getline(method_list, method, ',')) {
            if (method == "bm25") {
                methods.push_back(
                    {"bm25", [&index](const std::vector<EvalQuery>& queries) {
                         Run run;
                         for (const auto& q : queries) {
                             auto ranked = search(index, tokenize(q.text), 10);
                             std::vector<std::string> ids;
                             for (const auto& e : ranked.entries)
                                 ids.push_back(e.chunk_id);
                             run[q.query_id] = std::move(ids);
                         }
                         return run;
                     }});
            } else if (method == "dense") {
                methods.push_back(
                    {"dense", [&](const std::vector<EvalQuery>& queries) {
                         return dense_search(*provider, nullptr, queries, chunks,
                                             10);
                     }});
            } else if (method == "dense+adapter") {
                if (!have_adapter)
                    throw ConfigError(
                        "method dense+adapter requires --adapter");
                methods.push_back(
                    {"dense+adapter", [&](const std::vector<EvalQuery>& queries) {
                         return dense_search(*provider, &adapter, queries,
                                             chunks, 10);
                     }});
            } else {
                throw ConfigError("unknown perturbation method: " + method);
            }
        }
        EvalConfig perturb_eval;
        perturb_eval.match_theta = perturb_theta;
        auto rows = run_perturbation_eval(methods, variants, gold, chunks,
                                          perturb_eval);
        save_delta_table(rows, perturb_out);
        return kExitOk;
    }
    if (*run_cmd || *report_cmd) {
        auto config = load_pipeline_config(*run_cmd ? run_config : report_config);
        if (*run_cmd) {
            if (!run_out_dir.empty()) config.out_dir = run_out_dir;
            if (run_seed_set) {
                config.seed = run_seed;
                config.train.seed = run_seed;
            }
            RunManifest manifest = run_pipeline(config);
            auto report_dir = emit_report(config, manifest);
            std::cout << "report at " << report_dir.string() << '\n';
        } else {
            RunManifest manifest =
                load_manifest(config.out_dir / "manifest.json");
            auto report_dir = emit_report(config, manifest);
            std::cout << "report at " << report_dir.string() << '\n';
        }
        return kExitOk;
    }
    if (*fixture_cmd) {
        auto fixture = generate_jargon_fixture(fixture_spec);
        write_fixture(fixture, fixture_dir);
        std::cout << fixture.documents.size() << " documents, "
                  << fixture.eval_queries.size() << " gold queries\n";
        return kExitOk;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    }
}
