#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bmembed/bm25.hpp"
#include "bmembed/eval.hpp"
#include "bmembed/fusion.hpp"
#include "bmembed/sampler.hpp"
#include "bmembed/trainer.hpp"

namespace bmembed {

inline constexpr const char* kToolVersion = "0.1.0";

enum class QuerySource { stub, llm, file };
enum class ProviderKind { toy, store };

/// One JSON file drives the whole run. Unknown keys anywhere in the file
/// are rejected before any stage executes.
struct PipelineConfig {
    std::filesystem::path corpus;
    std::filesystem::path gold;
    std::filesystem::path out_dir;
    uint64_t seed = 42;
    int chunk_size = 256;
    Bm25Params bm25;

    // sampling
    int k = 200;
    PartitionScheme scheme;
    int lists_per_query = 1;

    // query generation
    QuerySource query_source = QuerySource::stub;
    std::string llm_endpoint;
    std::string llm_model;
    std::filesystem::path queries_file;
    int max_queries = 0;

    TrainConfig train;

    ProviderKind provider = ProviderKind::toy;
    size_t provider_dim = 256;
    uint64_t provider_seed = 0;
    std::filesystem::path store_path;

    EvalConfig eval;

    FusionConfig fusion;
    size_t fusion_depth = 30;

    std::filesystem::path synonyms;  // keyword -> substitute lexicon
    size_t max_keywords = 5;

    std::vector<std::string> skip;  // stage names: fuse, perturb

    std::string config_hash;  // sha256 of the config file bytes
};

/// Raised on malformed or invalid configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a pipeline stage fails (CLI exit code 3); carries the
/// stage name in the message.
struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& what)
        : std::runtime_error("stage " + stage + ": " + what), stage_name(stage) {}
    std::string stage_name;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig parse_pipeline_config(const std::string& json_text);
void validate_pipeline_config(const PipelineConfig& config);

struct StageRecord {
    bool complete = false;
    std::vector<std::string> artifacts;  // paths relative to out_dir
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version = kToolVersion;
    std::map<std::string, StageRecord> stages;
};

/// Stage execution order.
const std::vector<std::string>& pipeline_stage_names();

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Executes the stages in order under config.out_dir, resuming an
/// existing manifest when the config hash is unchanged. Stage failures
/// surface as StageError and leave completed artifacts on disk.
RunManifest run_pipeline(const PipelineConfig& config);

/// Renders the comparison tables (base / adapted / fused rows) plus the
/// alignment-uniformity scatter into out_dir/report_seed<seed>/. Requires
/// the eval stages to be complete.
std::filesystem::path emit_report(const PipelineConfig& config,
                                  const RunManifest& manifest);

using RunMap = Run;  // query_id -> ranked chunk ids

void save_run(const Run& run, const std::filesystem::path& path);
Run load_run(const std::filesystem::path& path);

}  // namespace bmembed
