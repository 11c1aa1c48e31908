#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "bmembed/fixture.hpp"
#include "bmembed/pipeline.hpp"
#include "bmembed/util.hpp"

using namespace bmembed;
namespace fs = std::filesystem;

namespace {

std::string minimal_config(const std::string& extra = "") {
    return "{\"corpus\":\"/tmp/c.jsonl\",\"gold\":\"/tmp/g.jsonl\","
           "\"out_dir\":\"/tmp/out\"" +
           extra + "}";
}

/// Writes a small fixture and a matching config; returns the config path.
fs::path write_tiny_run(const fs::path& root, const std::string& out_name) {
    fs::create_directories(root);
    FixtureSpec spec;
    spec.num_docs = 12;
    spec.num_eval_queries = 4;
    spec.seed = 42;
    spec.filler_max = 20;
    write_fixture(generate_jargon_fixture(spec), root / "fx");

    nlohmann::json config = {
        {"corpus", (root / "fx" / "corpus.jsonl").string()},
        {"gold", (root / "fx" / "gold.jsonl").string()},
        {"out_dir", (root / out_name).string()},
        {"seed", 42},
        {"chunk_size", 512},
        {"sampling",
         {{"k", 12}, {"m", 3}, {"strategy", "fine_to_coarse"},
          {"first_len", 1}, {"growth", 2.0}}},
        {"queries", {{"source", "stub"}}},
        {"train",
         {{"loss", "listnet"}, {"alpha", 1.0}, {"lr", 0.001}, {"steps", 30},
          {"normalize_targets", true}}},
        {"provider", {{"kind", "toy"}, {"dim", 32}, {"seed", 0}}},
        {"eval", {{"match_theta", 0.95}}},
        {"fusion", {{"depth", 10}}},
        {"perturb", {{"synonyms", (root / "fx" / "synonyms.json").string()}}}};
    const auto config_path = root / (out_name + "_config.json");
    write_file(config_path, config.dump(2) + "\n");
    return config_path;
}

}  // namespace

TEST_CASE("config parsing fills defaults") {
    const auto config = parse_pipeline_config(minimal_config());
    CHECK(config.seed == 42);
    CHECK(config.chunk_size == 256);
    CHECK(config.bm25.k1 == doctest::Approx(1.2));
    CHECK(config.bm25.b == doctest::Approx(0.75));
    CHECK(config.k == 200);
    CHECK(config.scheme.m == 6);
    CHECK(config.scheme.strategy == PartitionStrategy::fine_to_coarse);
    CHECK(config.query_source == QuerySource::stub);
    CHECK(config.train.loss == LossKind::listnet);
    CHECK(config.train.steps == 1000);
    CHECK(config.provider == ProviderKind::toy);
    CHECK(config.provider_dim == 256);
    CHECK(config.eval.match_theta == doctest::Approx(0.6));
    CHECK(config.fusion.u == doctest::Approx(40.0));
    CHECK(!config.config_hash.empty());
}

TEST_CASE("config rejects unknown keys at every level") {
    CHECK_THROWS_AS(parse_pipeline_config(minimal_config(",\"bogus\":1")),
                    ConfigError);
    CHECK_THROWS_AS(
        parse_pipeline_config(minimal_config(",\"bm25\":{\"k2\":1}")),
        ConfigError);
    CHECK_THROWS_AS(
        parse_pipeline_config(minimal_config(",\"sampling\":{\"kk\":1}")),
        ConfigError);
    CHECK_THROWS_AS(
        parse_pipeline_config(minimal_config(",\"train\":{\"epochs\":5}")),
        ConfigError);
    CHECK_THROWS_AS(
        parse_pipeline_config(minimal_config(",\"eval\":{\"theta\":0.5}")),
        ConfigError);
}

TEST_CASE("config validation catches bad values before any work") {
    CHECK_THROWS_WITH_AS(
        parse_pipeline_config(minimal_config(",\"sampling\":{\"k\":5,\"m\":9}")),
        doctest::Contains("must not exceed"), ConfigError);
    CHECK_THROWS_AS(
        parse_pipeline_config(minimal_config(",\"train\":{\"steps\":0}")),
        ConfigError);
    CHECK_THROWS_AS(
        parse_pipeline_config(minimal_config(",\"queries\":{\"source\":\"llm\"}")),
        ConfigError);
    CHECK_THROWS_AS(
        parse_pipeline_config(
            minimal_config(",\"skip\":[\"train\"]")),
        ConfigError);
    CHECK_THROWS_AS(parse_pipeline_config("not json"), ConfigError);
    CHECK_THROWS_AS(parse_pipeline_config("{}"), ConfigError);
}

TEST_CASE("config hash is the sha256 of the raw bytes") {
    const std::string text = minimal_config();
    const auto a = parse_pipeline_config(text);
    const auto b = parse_pipeline_config(text);
    CHECK(a.config_hash == b.config_hash);
    CHECK(a.config_hash == sha256_hex(text));
    // Whitespace changes the hash even though the semantics are identical.
    const auto c = parse_pipeline_config(" " + text);
    CHECK(c.config_hash != a.config_hash);
}

TEST_CASE("manifest round-trips") {
    RunManifest manifest;
    manifest.config_hash = "deadbeef";
    manifest.stages["ingest"] = {true, {"chunks.jsonl"}};
    manifest.stages["index"] = {false, {}};
    const auto path =
        fs::temp_directory_path() / "bmembed_manifest_test.json";
    save_manifest(manifest, path);
    const auto loaded = load_manifest(path);
    CHECK(loaded.config_hash == "deadbeef");
    CHECK(loaded.tool_version == manifest.tool_version);
    CHECK(loaded.stages.at("ingest").complete);
    CHECK(loaded.stages.at("ingest").artifacts ==
          std::vector<std::string>{"chunks.jsonl"});
    CHECK(!loaded.stages.at("index").complete);
    fs::remove(path);
}

TEST_CASE("run store round-trips") {
    Run run;
    run["q0"] = {"c2", "c0", "c1"};
    run["q1"] = {};
    const auto path = fs::temp_directory_path() / "bmembed_run_test.json";
    save_run(run, path);
    const auto loaded = load_run(path);
    CHECK(loaded == run);
    fs::remove(path);
}

TEST_CASE("pipeline stage order is fixed") {
    const auto& names = pipeline_stage_names();
    const std::vector<std::string> expected = {
        "ingest", "index", "genqueries", "sample", "train",
        "eval_base", "eval_adapted", "fuse", "perturb"};
    CHECK(names == expected);
}

TEST_CASE("tiny fixture pipeline runs, resumes, and reports") {
    const auto root = fs::temp_directory_path() / "bmembed_pipeline_test";
    fs::remove_all(root);
    const auto config_path = write_tiny_run(root, "out");
    const auto config = load_pipeline_config(config_path);

    const auto manifest = run_pipeline(config);
    CHECK(manifest.config_hash == config.config_hash);
    for (const auto& name : pipeline_stage_names()) {
        INFO("stage ", name);
        REQUIRE(manifest.stages.count(name) == 1);
        CHECK(manifest.stages.at(name).complete);
    }
    const auto out = config.out_dir;
    for (const char* artifact :
         {"chunks.jsonl", "index.jsonl", "queries.jsonl", "samples.jsonl",
          "adapter.bin", "loss_curve.csv", "eval_base.json", "eval_adapted.json",
          "fusion.json", "perturbation.csv", "manifest.json"})
        CHECK(fs::exists(out / artifact));

    // Resume: a second run with the same config leaves artifacts untouched.
    const auto adapter_before = read_file(out / "adapter.bin");
    const auto manifest_before = read_file(out / "manifest.json");
    const auto again = run_pipeline(config);
    CHECK(read_file(out / "adapter.bin") == adapter_before);
    CHECK(read_file(out / "manifest.json") == manifest_before);
    for (const auto& name : pipeline_stage_names())
        CHECK(again.stages.at(name).complete);

    // Report emission mirrors the evaluation artifacts.
    const auto report_dir = emit_report(config, manifest);
    CHECK(report_dir.filename().string() == "report_seed42");
    const auto report =
        nlohmann::json::parse(read_file(report_dir / "report.json"));
    CHECK(report.at("seed").get<uint64_t>() == 42);
    const auto& methods = report.at("methods");
    for (const char* name : {"base", "bmembed", "rrf_base", "rrf_bmembed"})
        CHECK(methods.contains(name));
    const auto base_eval =
        nlohmann::json::parse(read_file(out / "eval_base.json"));
    CHECK(methods.at("base").at("map10").get<double>() ==
          base_eval.at("map10").get<double>());
    CHECK(fs::exists(report_dir / "metrics.csv"));
    CHECK(fs::exists(report_dir / "geometry.svg"));

    fs::remove_all(root);
}

TEST_CASE("skip list omits the optional stages") {
    const auto root = fs::temp_directory_path() / "bmembed_pipeline_skip";
    fs::remove_all(root);
    auto config_path = write_tiny_run(root, "out_skip");
    auto text = read_file(config_path);
    // Append the skip key inside the top-level object.
    text.replace(text.rfind('}'), 1, ",\"skip\":[\"fuse\",\"perturb\"]}");
    write_file(config_path, text);
    const auto config = load_pipeline_config(config_path);
    const auto manifest = run_pipeline(config);
    CHECK(manifest.stages.at("fuse").complete);
    CHECK(manifest.stages.at("fuse").artifacts.empty());
    CHECK(!fs::exists(config.out_dir / "fusion.json"));
    CHECK(!fs::exists(config.out_dir / "perturbation.csv"));
    // Report still works without fusion; it simply omits the fused rows.
    const auto report_dir = emit_report(config, manifest);
    const auto report =
        nlohmann::json::parse(read_file(report_dir / "report.json"));
    CHECK(!report.at("methods").contains("rrf_base"));
    fs::remove_all(root);
}

TEST_CASE("emit_report fails before the eval stages complete") {
    PipelineConfig config;
    config.out_dir = fs::temp_directory_path() / "bmembed_no_eval";
    RunManifest manifest;
    CHECK_THROWS_AS(emit_report(config, manifest), StageError);
}

TEST_CASE("stage errors name the failing stage and exit path") {
    auto config = parse_pipeline_config(minimal_config());
    config.corpus = "/nonexistent/corpus.jsonl";
    config.out_dir = fs::temp_directory_path() / "bmembed_stage_err";
    fs::remove_all(config.out_dir);
    try {
        run_pipeline(config);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage_name == "ingest");
    }
    fs::remove_all(config.out_dir);
}
