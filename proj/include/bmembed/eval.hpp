#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bmembed/bm25.hpp"
#include "bmembed/corpus.hpp"
#include "bmembed/embedding.hpp"

namespace bmembed {

struct EvalQuery {
    std::string query_id;
    std::string text;
    std::vector<std::string> gold_spans;     // verbatim evidence text
    std::vector<std::string> gold_chunk_ids; // pre-resolved labels, if any
};

struct PerQueryRow {
    std::string query_id;
    int hit1 = 0, hit4 = 0, hit10 = 0;
    double ap10 = 0.0;
    bool unmatchable = false;
};

struct EvalReport {
    double hit1 = 0.0, hit4 = 0.0, hit10 = 0.0;
    double map10 = 0.0;
    double alignment_raw = 0.0;
    double alignment_norm = 0.0;
    double uniformity_abs = 0.0;
    bool has_geometry = false;
    size_t num_queries = 0;
    size_t num_unmatchable = 0;
    std::vector<PerQueryRow> rows;
};

/// Resolves gold evidence spans to chunk ids: a chunk is relevant when the
/// span lies inside its character range or their token overlap covers at
/// least theta of the span's tokens.
std::set<std::string> match_evidence(const std::vector<std::string>& spans,
                                     const std::vector<Chunk>& chunks,
                                     double theta = 0.6);

/// 1 iff a relevant chunk appears in the first k entries of the run.
int hit_at_k(const std::vector<std::string>& run,
             const std::set<std::string>& relevant, size_t k);

/// Truncated average precision at depth 10 with denominator
/// min(|relevant|, 10).
double average_precision_at_10(const std::vector<std::string>& run,
                               const std::set<std::string>& relevant);

/// Mean squared Euclidean distance over positive pairs (raw), and the
/// same per-pair distance scaled by the squared distance from the first
/// element to its nearest database vector (normalized). All inputs must
/// be L2-normalized by the caller. Pairs whose nearest database distance
/// is zero are skipped.
struct AlignmentResult {
    double raw = 0.0;
    double normalized = 0.0;
    size_t pairs_used = 0;
    size_t pairs_skipped = 0;
};
AlignmentResult alignment(
    const std::vector<std::pair<EmbeddingVector, EmbeddingVector>>& positive_pairs,
    const std::vector<EmbeddingVector>& database);

/// |log mean over unordered distinct pairs of exp(-2 ||x - y||^2)|.
/// Requires at least two L2-normalized vectors.
double uniformity(const std::vector<EmbeddingVector>& vectors);

/// Spearman rank correlation with average ranks for ties. Throws when
/// either side is constant.
double spearman_sts(const std::vector<double>& similarities,
                    const std::vector<double>& gold_scores);

using Run = std::map<std::string, std::vector<std::string>>;  // query_id -> ids

/// Exact brute-force cosine top-k over all chunk embeddings; ties broken
/// by ascending chunk_id. The adapter may be null (base provider).
Run dense_search(EmbeddingProvider& provider, const Adapter* adapter,
                 const std::vector<EvalQuery>& queries,
                 const std::vector<Chunk>& chunks, size_t k);

struct EvalConfig {
    double match_theta = 0.6;
    uint64_t uniformity_seed = 7771;
    size_t uniformity_sample = 512;
};

/// Retrieval metrics of a run against the gold labels.
EvalReport evaluate_run(const Run& run, const std::vector<EvalQuery>& queries,
                        const std::vector<Chunk>& chunks,
                        const EvalConfig& config = {});

/// Full report: dense retrieval metrics plus embedding-geometry
/// diagnostics (alignment over query/evidence pairs, uniformity over a
/// seeded chunk sample).
EvalReport evaluate_embedder(EmbeddingProvider& provider, const Adapter* adapter,
                             const std::vector<EvalQuery>& queries,
                             const std::vector<Chunk>& chunks,
                             const EvalConfig& config = {});

std::vector<EvalQuery> load_eval_queries(const std::filesystem::path& path);

void save_report_json(const EvalReport& report, const std::filesystem::path& path);
void save_report_csv(const EvalReport& report, const std::filesystem::path& path);

/// Scatter of (x, y) labelled points as a standalone SVG.
void write_svg_scatter(const std::vector<std::tuple<std::string, double, double>>& points,
                       const std::string& x_label, const std::string& y_label,
                       const std::filesystem::path& path);

}  // namespace bmembed
