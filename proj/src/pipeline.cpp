#include "bmembed/pipeline.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "bmembed/fixture.hpp"
#include "bmembed/perturb.hpp"
#include "bmembed/query_gen.hpp"
#include "bmembed/util.hpp"

namespace bmembed {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
    if (!j.is_object())
        throw ConfigError("config: " + where + " must be a JSON object");
}

void reject_unknown_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) { ok = true; break; }
        if (!ok)
            throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for \"" + std::string(key) +
                          "\": " + e.what());
    }
}

std::string get_required_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
        throw ConfigError("config: missing required string key \"" +
                          std::string(key) + "\"");
    return it->get<std::string>();
}

PartitionStrategy parse_strategy(const std::string& name) {
    if (name == "uniform") return PartitionStrategy::uniform;
    if (name == "fine_to_coarse") return PartitionStrategy::fine_to_coarse;
    if (name == "explicit") return PartitionStrategy::explicit_bounds;
    throw ConfigError("config: unknown partition strategy \"" + name + "\"");
}

LossKind parse_loss(const std::string& name) {
    if (name == "listnet") return LossKind::listnet;
    if (name == "listmle") return LossKind::listmle;
    if (name == "infonce") return LossKind::infonce;
    throw ConfigError("config: unknown loss \"" + name + "\"");
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ConfigError("config: unknown optimizer \"" + name + "\"");
}

std::string loss_name(LossKind loss) {
    switch (loss) {
        case LossKind::listnet: return "listnet";
        case LossKind::listmle: return "listmle";
        case LossKind::infonce: return "infonce";
    }
    return "listnet";
}

std::unique_ptr<EmbeddingProvider> make_provider(const PipelineConfig& config) {
    if (config.provider == ProviderKind::store)
        return std::make_unique<FileStoreProvider>(config.store_path);
    return std::make_unique<ToyEmbedder>(config.provider_dim, config.provider_seed);
}

json read_report_json(const std::filesystem::path& path) {
    return json::parse(read_file(path));
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    require_object(j, "top level");
    reject_unknown_keys(j, "top level",
                        {"corpus", "gold", "out_dir", "seed", "chunk_size",
                         "bm25", "sampling", "queries", "train", "provider",
                         "eval", "fusion", "perturb", "skip"});

    PipelineConfig config;
    config.corpus = get_required_string(j, "corpus");
    config.gold = get_required_string(j, "gold");
    config.out_dir = get_required_string(j, "out_dir");
    config.seed = get_or<uint64_t>(j, "seed", config.seed);
    config.chunk_size = get_or<int>(j, "chunk_size", config.chunk_size);

    if (j.contains("bm25")) {
        const json& b = j["bm25"];
        require_object(b, "bm25");
        reject_unknown_keys(b, "bm25", {"k1", "b"});
        config.bm25.k1 = get_or<double>(b, "k1", config.bm25.k1);
        config.bm25.b = get_or<double>(b, "b", config.bm25.b);
    }
    if (j.contains("sampling")) {
        const json& s = j["sampling"];
        require_object(s, "sampling");
        reject_unknown_keys(s, "sampling",
                            {"k", "m", "strategy", "first_len", "growth",
                             "boundaries", "lists_per_query"});
        config.k = get_or<int>(s, "k", config.k);
        config.scheme.m = get_or<int>(s, "m", config.scheme.m);
        if (s.contains("strategy"))
            config.scheme.strategy =
                parse_strategy(s["strategy"].get<std::string>());
        config.scheme.first_len = get_or<int>(s, "first_len", config.scheme.first_len);
        config.scheme.growth = get_or<double>(s, "growth", config.scheme.growth);
        if (s.contains("boundaries")) {
            for (const auto& pair : s["boundaries"]) {
                if (!pair.is_array() || pair.size() != 2)
                    throw ConfigError("config: boundaries entries must be [lo, hi]");
                config.scheme.boundaries.emplace_back(pair[0].get<int>(),
                                                      pair[1].get<int>());
            }
        }
        config.lists_per_query =
            get_or<int>(s, "lists_per_query", config.lists_per_query);
    }
    if (j.contains("queries")) {
        const json& q = j["queries"];
        require_object(q, "queries");
        reject_unknown_keys(q, "queries",
                            {"source", "endpoint", "model", "file", "max_queries"});
        const std::string source = get_or<std::string>(q, "source", "stub");
        if (source == "stub")
            config.query_source = QuerySource::stub;
        else if (source == "llm")
            config.query_source = QuerySource::llm;
        else if (source == "file")
            config.query_source = QuerySource::file;
        else
            throw ConfigError("config: unknown query source \"" + source + "\"");
        config.llm_endpoint = get_or<std::string>(q, "endpoint", "");
        config.llm_model = get_or<std::string>(q, "model", "");
        config.queries_file = get_or<std::string>(q, "file", "");
        config.max_queries = get_or<int>(q, "max_queries", 0);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        require_object(t, "train");
        reject_unknown_keys(t, "train",
                            {"loss", "alpha", "infonce_tau", "lr", "steps",
                             "optimizer", "normalize_targets",
                             "resample_per_epoch", "infonce_batch"});
        if (t.contains("loss"))
            config.train.loss = parse_loss(t["loss"].get<std::string>());
        config.train.alpha = get_or<double>(t, "alpha", config.train.alpha);
        config.train.infonce_tau =
            get_or<double>(t, "infonce_tau", config.train.infonce_tau);
        config.train.lr = get_or<double>(t, "lr", config.train.lr);
        config.train.steps = get_or<int>(t, "steps", config.train.steps);
        if (t.contains("optimizer"))
            config.train.optimizer =
                parse_optimizer(t["optimizer"].get<std::string>());
        config.train.normalize_targets =
            get_or<bool>(t, "normalize_targets", config.train.normalize_targets);
        config.train.resample_per_epoch =
            get_or<bool>(t, "resample_per_epoch", config.train.resample_per_epoch);
        config.train.infonce_batch =
            get_or<int>(t, "infonce_batch", config.train.infonce_batch);
    }
    if (j.contains("provider")) {
        const json& p = j["provider"];
        require_object(p, "provider");
        reject_unknown_keys(p, "provider", {"kind", "dim", "seed", "store_path"});
        const std::string kind = get_or<std::string>(p, "kind", "toy");
        if (kind == "toy")
            config.provider = ProviderKind::toy;
        else if (kind == "store")
            config.provider = ProviderKind::store;
        else
            throw ConfigError("config: unknown provider kind \"" + kind + "\"");
        config.provider_dim = get_or<size_t>(p, "dim", config.provider_dim);
        config.provider_seed = get_or<uint64_t>(p, "seed", config.provider_seed);
        config.store_path = get_or<std::string>(p, "store_path", "");
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        require_object(e, "eval");
        reject_unknown_keys(e, "eval",
                            {"match_theta", "uniformity_seed", "uniformity_sample"});
        config.eval.match_theta =
            get_or<double>(e, "match_theta", config.eval.match_theta);
        config.eval.uniformity_seed =
            get_or<uint64_t>(e, "uniformity_seed", config.eval.uniformity_seed);
        config.eval.uniformity_sample =
            get_or<size_t>(e, "uniformity_sample", config.eval.uniformity_sample);
    }
    if (j.contains("fusion")) {
        const json& f = j["fusion"];
        require_object(f, "fusion");
        reject_unknown_keys(f, "fusion", {"u", "depth"});
        config.fusion.u = get_or<double>(f, "u", config.fusion.u);
        config.fusion_depth = get_or<size_t>(f, "depth", config.fusion_depth);
    }
    if (j.contains("perturb")) {
        const json& p = j["perturb"];
        require_object(p, "perturb");
        reject_unknown_keys(p, "perturb", {"synonyms", "max_keywords"});
        config.synonyms = get_or<std::string>(p, "synonyms", "");
        config.max_keywords = get_or<size_t>(p, "max_keywords", config.max_keywords);
    }
    if (j.contains("skip")) {
        config.skip = j["skip"].get<std::vector<std::string>>();
        for (const auto& name : config.skip)
            if (name != "fuse" && name != "perturb")
                throw ConfigError("config: stage \"" + name +
                                  "\" is not skippable");
    }
    config.config_hash = sha256_hex(json_text);
    validate_pipeline_config(config);
    return config;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return parse_pipeline_config(text);
}

void validate_pipeline_config(const PipelineConfig& config) {
    if (config.chunk_size <= 0) throw ConfigError("config: chunk_size must be > 0");
    if (config.k <= 0) throw ConfigError("config: sampling.k must be > 0");
    if (config.scheme.m <= 0) throw ConfigError("config: sampling.m must be > 0");
    if (config.scheme.m > config.k)
        throw ConfigError("config: sampling.m (" +
                          std::to_string(config.scheme.m) +
                          ") must not exceed sampling.k (" +
                          std::to_string(config.k) + ")");
    if (config.scheme.strategy == PartitionStrategy::fine_to_coarse) {
        if (config.scheme.first_len <= 0)
            throw ConfigError("config: sampling.first_len must be > 0");
        if (config.scheme.growth < 1.0)
            throw ConfigError("config: sampling.growth must be >= 1");
    }
    if (config.scheme.strategy == PartitionStrategy::explicit_bounds &&
        config.scheme.boundaries.empty())
        throw ConfigError("config: explicit strategy needs boundaries");
    if (config.lists_per_query <= 0)
        throw ConfigError("config: sampling.lists_per_query must be > 0");
    if (config.query_source == QuerySource::llm &&
        (config.llm_endpoint.empty() || config.llm_model.empty()))
        throw ConfigError("config: llm query source needs endpoint and model");
    if (config.query_source == QuerySource::file && config.queries_file.empty())
        throw ConfigError("config: file query source needs queries.file");
    if (config.provider == ProviderKind::store && config.store_path.empty())
        throw ConfigError("config: store provider needs store_path");
    if (config.train.steps <= 0) throw ConfigError("config: train.steps must be > 0");
    if (config.train.lr <= 0) throw ConfigError("config: train.lr must be > 0");
    if (config.train.alpha <= 0)
        throw ConfigError("config: train.alpha must be > 0");
    if (config.fusion_depth == 0)
        throw ConfigError("config: fusion.depth must be > 0");
}

const std::vector<std::string>& pipeline_stage_names() {
    static const std::vector<std::string> names = {
        "ingest",    "index", "genqueries",   "sample", "train",
        "eval_base", "eval_adapted", "fuse",  "perturb"};
    return names;
}

void save_manifest(const RunManifest& manifest,
                   const std::filesystem::path& path) {
    json stages = json::object();
    for (const auto& [name, record] : manifest.stages)
        stages[name] = {{"complete", record.complete},
                        {"artifacts", record.artifacts}};
    json j = {{"config_hash", manifest.config_hash},
              {"tool_version", manifest.tool_version},
              {"stages", stages}};
    write_file(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    RunManifest manifest;
    manifest.config_hash = j.at("config_hash").get<std::string>();
    manifest.tool_version = j.at("tool_version").get<std::string>();
    for (const auto& [name, record] : j.at("stages").items()) {
        StageRecord r;
        r.complete = record.at("complete").get<bool>();
        r.artifacts = record.at("artifacts").get<std::vector<std::string>>();
        manifest.stages[name] = std::move(r);
    }
    return manifest;
}

void save_run(const Run& run, const std::filesystem::path& path) {
    json j = json::object();
    for (const auto& [query_id, ids] : run) j[query_id] = ids;
    write_file(path, j.dump() + "\n");
}

Run load_run(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    Run run;
    for (const auto& [query_id, ids] : j.items())
        run[query_id] = ids.get<std::vector<std::string>>();
    return run;
}

namespace {

/// Shared state threaded through the stages of one run.
struct PipelineContext {
    const PipelineConfig& config;
    RunManifest& manifest;
    std::filesystem::path out;

    std::vector<Document> documents;
    std::vector<Chunk> chunks;
    InvertedIndex index;
    std::vector<SyntheticQuery> queries;
    std::vector<RankingSample> samples;
    Adapter adapter;
    std::unique_ptr<EmbeddingProvider> provider;
    std::vector<EvalQuery> gold;
};

bool artifacts_present(const PipelineContext& ctx, const StageRecord& record) {
    for (const auto& rel : record.artifacts)
        if (!std::filesystem::exists(ctx.out / rel)) return false;
    return !record.artifacts.empty();
}

/// Runs one stage unless the manifest already records it with all its
/// artifacts intact; `load` restores in-memory state from the artifacts on
/// a resumed run.
void run_stage(PipelineContext& ctx, const std::string& name,
               const std::vector<std::string>& artifacts,
               const std::function<void()>& execute,
               const std::function<void()>& load) {
    StageRecord& record = ctx.manifest.stages[name];
    if (record.complete && artifacts_present(ctx, record)) {
        try {
            load();
        } catch (const std::exception& e) {
            throw StageError(name, std::string("resume failed: ") + e.what());
        }
        return;
    }
    try {
        execute();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
    record.complete = true;
    record.artifacts = artifacts;
    save_manifest(ctx.manifest, ctx.out / "manifest.json");
}

void mark_skipped(PipelineContext& ctx, const std::string& name) {
    StageRecord& record = ctx.manifest.stages[name];
    record.complete = true;
    record.artifacts.clear();
    save_manifest(ctx.manifest, ctx.out / "manifest.json");
}

std::unique_ptr<LlmClient> make_llm(const PipelineConfig& config,
                                    const InvertedIndex* index) {
    if (config.query_source == QuerySource::llm)
        return std::make_unique<HttpLlmClient>(config.llm_endpoint,
                                               config.llm_model);
    return std::make_unique<StubLlmClient>(index, config.seed);
}

Run bm25_run(const PipelineContext& ctx, const std::vector<EvalQuery>& queries,
             size_t depth) {
    Run run;
    for (const auto& q : queries) {
        RankedList ranked = search(ctx.index, tokenize(q.text), depth);
        std::vector<std::string> ids;
        for (const auto& e : ranked.entries) ids.push_back(e.chunk_id);
        run[q.query_id] = std::move(ids);
    }
    return run;
}

Run truncate_run(const Run& run, size_t depth) {
    Run out;
    for (const auto& [query_id, ids] : run) {
        auto copy = ids;
        if (copy.size() > depth) copy.resize(depth);
        out[query_id] = std::move(copy);
    }
    return out;
}

Run fuse_runs(const Run& a, const Run& b, const FusionConfig& config) {
    Run fused;
    for (const auto& [query_id, ids] : a) {
        std::vector<std::vector<std::string>> rankings = {ids};
        auto it = b.find(query_id);
        if (it != b.end()) rankings.push_back(it->second);
        std::vector<std::string> out;
        for (const auto& scored : rrf_fuse(rankings, config))
            out.push_back(scored.chunk_id);
        fused[query_id] = std::move(out);
    }
    return fused;
}

json metrics_json(const EvalReport& report) {
    return {{"hit1", report.hit1},
            {"hit4", report.hit4},
            {"hit10", report.hit10},
            {"map10", report.map10}};
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config) {
    validate_pipeline_config(config);
    std::filesystem::create_directories(config.out_dir);

    RunManifest manifest;
    manifest.config_hash = config.config_hash;
    const auto manifest_path = config.out_dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        RunManifest previous = load_manifest(manifest_path);
        if (previous.config_hash == config.config_hash) manifest = previous;
    }
    manifest.tool_version = kToolVersion;

    PipelineContext ctx{config, manifest, config.out_dir};

    auto skipped = [&](const std::string& name) {
        return std::find(config.skip.begin(), config.skip.end(), name) !=
               config.skip.end();
    };

    run_stage(
        ctx, "ingest", {"chunks.jsonl"},
        [&] {
            ctx.documents = load_corpus(config.corpus);
            for (const auto& doc : ctx.documents) {
                auto chunks = chunk_document(doc, config.chunk_size);
                ctx.chunks.insert(ctx.chunks.end(), chunks.begin(), chunks.end());
            }
            save_chunks(ctx.chunks, ctx.out / "chunks.jsonl");
        },
        [&] {
            ctx.documents = load_corpus(config.corpus);
            ctx.chunks = load_chunks(ctx.out / "chunks.jsonl");
        });

    run_stage(
        ctx, "index", {"index.jsonl"},
        [&] {
            ctx.index = build_index(ctx.chunks, config.bm25);
            save_index(ctx.index, ctx.out / "index.jsonl");
        },
        [&] { ctx.index = load_index(ctx.out / "index.jsonl"); });

    run_stage(
        ctx, "genqueries", {"queries.jsonl"},
        [&] {
            if (config.query_source == QuerySource::file) {
                ctx.queries = load_queries(config.queries_file);
            } else {
                auto llm = make_llm(config, &ctx.index);
                QueryGenOptions options;
                options.max_queries = config.max_queries;
                options.seed = config.seed;
                ctx.queries = generate_queries(ctx.documents, *llm, options);
            }
            save_queries(ctx.queries, ctx.out / "queries.jsonl");
        },
        [&] { ctx.queries = load_queries(ctx.out / "queries.jsonl"); });

    run_stage(
        ctx, "sample", {"samples.jsonl"},
        [&] {
            std::vector<QueryForSampling> queries;
            for (const auto& q : ctx.queries)
                queries.push_back({q.query_id, q.text});
            auto result = generate_training_set(queries, ctx.index, config.k,
                                                config.scheme,
                                                config.lists_per_query,
                                                config.seed);
            if (result.samples.empty())
                throw std::runtime_error("no usable ranking samples");
            ctx.samples = std::move(result.samples);
            save_samples(ctx.samples, ctx.out / "samples.jsonl");
        },
        [&] { ctx.samples = load_samples(ctx.out / "samples.jsonl"); });

    ctx.provider = make_provider(config);

    run_stage(
        ctx, "train", {"adapter.bin", "loss_curve.csv"},
        [&] {
            std::unordered_map<std::string, std::string> chunk_texts;
            for (const auto& chunk : ctx.chunks)
                chunk_texts[chunk.chunk_id] = chunk.text;
            TrainConfig train_config = config.train;
            train_config.seed = config.seed;
            if (train_config.loss == LossKind::infonce) {
                std::vector<ContrastivePair> pairs;
                for (const auto& q : ctx.queries) {
                    if (q.evidence.empty()) continue;
                    pairs.push_back({q.text, q.evidence.front()});
                }
                if (pairs.empty())
                    throw std::runtime_error("no contrastive pairs available");
                auto result = train_contrastive(pairs, *ctx.provider, train_config);
                ctx.adapter = std::move(result.adapter);
                save_loss_curve(result.curve, ctx.out / "loss_curve.csv");
            } else {
                auto result = train(ctx.samples, chunk_texts, *ctx.provider,
                                    train_config);
                ctx.adapter = std::move(result.adapter);
                save_loss_curve(result.curve, ctx.out / "loss_curve.csv");
            }
            AdapterCheckpoint ckpt;
            ckpt.loss = loss_name(train_config.loss);
            ckpt.step = static_cast<uint32_t>(train_config.steps);
            ckpt.adapter = ctx.adapter;
            save_adapter(ckpt, ctx.out / "adapter.bin");
        },
        [&] { ctx.adapter = load_adapter(ctx.out / "adapter.bin").adapter; });

    ctx.gold = load_eval_queries(config.gold);
    if (ctx.gold.empty())
        throw StageError("eval_base", "gold file has no queries");

    run_stage(
        ctx, "eval_base", {"eval_base.json", "eval_base.csv"},
        [&] {
            EvalReport report = evaluate_embedder(*ctx.provider, nullptr,
                                                  ctx.gold, ctx.chunks,
                                                  config.eval);
            save_report_json(report, ctx.out / "eval_base.json");
            save_report_csv(report, ctx.out / "eval_base.csv");
        },
        [] {});

    run_stage(
        ctx, "eval_adapted", {"eval_adapted.json", "eval_adapted.csv"},
        [&] {
            EvalReport report = evaluate_embedder(*ctx.provider, &ctx.adapter,
                                                  ctx.gold, ctx.chunks,
                                                  config.eval);
            save_report_json(report, ctx.out / "eval_adapted.json");
            save_report_csv(report, ctx.out / "eval_adapted.csv");
        },
        [] {});

    if (skipped("fuse")) {
        mark_skipped(ctx, "fuse");
    } else {
        run_stage(
            ctx, "fuse",
            {"run_bm25.json", "run_rrf_base.json", "run_rrf_adapted.json",
             "fusion.json"},
            [&] {
                const size_t depth = config.fusion_depth;
                Run sparse = bm25_run(ctx, ctx.gold, depth);
                Run dense_base = dense_search(*ctx.provider, nullptr, ctx.gold,
                                              ctx.chunks, depth);
                Run dense_adapted = dense_search(*ctx.provider, &ctx.adapter,
                                                 ctx.gold, ctx.chunks, depth);
                Run rrf_base = fuse_runs(dense_base, sparse, config.fusion);
                Run rrf_adapted = fuse_runs(dense_adapted, sparse, config.fusion);
                save_run(sparse, ctx.out / "run_bm25.json");
                save_run(rrf_base, ctx.out / "run_rrf_base.json");
                save_run(rrf_adapted, ctx.out / "run_rrf_adapted.json");
                json j = {{"rrf_base",
                           metrics_json(evaluate_run(truncate_run(rrf_base, 10),
                                                     ctx.gold, ctx.chunks,
                                                     config.eval))},
                          {"rrf_adapted",
                           metrics_json(evaluate_run(truncate_run(rrf_adapted, 10),
                                                     ctx.gold, ctx.chunks,
                                                     config.eval))}};
                write_file(ctx.out / "fusion.json", j.dump(2) + "\n");
            },
            [] {});
    }

    if (skipped("perturb")) {
        mark_skipped(ctx, "perturb");
    } else {
        run_stage(
            ctx, "perturb", {"perturbed_queries.jsonl", "perturbation.csv"},
            [&] {
                if (config.synonyms.empty())
                    throw std::runtime_error("perturb stage needs a synonym lexicon");
                auto lexicon = load_synonym_lexicon(config.synonyms);
                std::vector<PerturbedQuery> perturbed;
                for (const auto& q : ctx.gold) {
                    std::string evidence;
                    for (const auto& span : q.gold_spans) {
                        if (!evidence.empty()) evidence += ' ';
                        evidence += span;
                    }
                    if (evidence.empty()) continue;
                    PerturbedQuery p;
                    p.query_id = q.query_id;
                    p.original = q.text;
                    p.keywords = extract_keywords_stub(q.text, evidence,
                                                       ctx.index,
                                                       config.max_keywords);
                    p.masked = mask_keywords(q.text, p.keywords);
                    std::vector<std::string> substitutable;
                    for (const auto& kw : p.keywords) {
                        auto it = lexicon.find(kw);
                        if (it == lexicon.end()) continue;
                        substitutable.push_back(kw);
                        p.synonyms[kw] = it->second;
                    }
                    p.substituted =
                        substitute_keywords(q.text, substitutable, p.synonyms);
                    perturbed.push_back(std::move(p));
                }
                if (perturbed.empty())
                    throw std::runtime_error("no perturbable queries");
                save_perturbed_queries(perturbed,
                                       ctx.out / "perturbed_queries.jsonl");

                std::vector<PerturbationMethod> methods;
                methods.push_back(
                    {"bm25", [&](const std::vector<EvalQuery>& queries) {
                         return bm25_run(ctx, queries, 10);
                     }});
                methods.push_back(
                    {"dense_base", [&](const std::vector<EvalQuery>& queries) {
                         return dense_search(*ctx.provider, nullptr, queries,
                                             ctx.chunks, 10);
                     }});
                methods.push_back(
                    {"dense_adapted", [&](const std::vector<EvalQuery>& queries) {
                         return dense_search(*ctx.provider, &ctx.adapter,
                                             queries, ctx.chunks, 10);
                     }});
                auto rows = run_perturbation_eval(methods, perturbed, ctx.gold,
                                                  ctx.chunks, config.eval);
                save_delta_table(rows, ctx.out / "perturbation.csv");
            },
            [] {});
    }

    save_manifest(manifest, manifest_path);
    return manifest;
}

std::filesystem::path emit_report(const PipelineConfig& config,
                                  const RunManifest& manifest) {
    const auto out = config.out_dir;
    for (const char* name : {"eval_base", "eval_adapted"}) {
        auto it = manifest.stages.find(name);
        if (it == manifest.stages.end() || !it->second.complete)
            throw StageError("report",
                             std::string("evaluation stage \"") + name +
                                 "\" has not completed");
    }
    json base = read_report_json(out / "eval_base.json");
    json adapted = read_report_json(out / "eval_adapted.json");
    json fusion = json::object();
    const bool have_fusion = std::filesystem::exists(out / "fusion.json");
    if (have_fusion) fusion = read_report_json(out / "fusion.json");

    const auto report_dir =
        out / ("report_seed" + std::to_string(config.seed));
    std::filesystem::create_directories(report_dir);

    json methods = json::object();
    methods["base"] = base;
    methods["bmembed"] = adapted;
    if (have_fusion) {
        methods["rrf_base"] = fusion["rrf_base"];
        methods["rrf_bmembed"] = fusion["rrf_adapted"];
    }
    json report = {{"config_hash", manifest.config_hash},
                   {"tool_version", manifest.tool_version},
                   {"seed", config.seed},
                   {"methods", methods}};
    write_file(report_dir / "report.json", report.dump(2) + "\n");

    std::ostringstream csv;
    csv << "method,hit1,hit4,hit10,map10\n";
    for (const auto& [name, metrics] : methods.items())
        csv << name << ',' << metrics.at("hit1").get<double>() << ','
            << metrics.at("hit4").get<double>() << ','
            << metrics.at("hit10").get<double>() << ','
            << metrics.at("map10").get<double>() << '\n';
    write_file(report_dir / "metrics.csv", csv.str());

    std::vector<std::tuple<std::string, double, double>> points;
    for (const char* name : {"base", "bmembed"}) {
        const json& m = methods[name];
        if (m.contains("alignment_norm") && m.contains("uniformity_abs"))
            points.emplace_back(name, m["alignment_norm"].get<double>(),
                                m["uniformity_abs"].get<double>());
    }
    write_svg_scatter(points, "normalized alignment", "uniformity",
                      report_dir / "geometry.svg");
    return report_dir;
}

}  // namespace bmembed
