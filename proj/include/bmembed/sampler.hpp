#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bmembed/bm25.hpp"

namespace bmembed {

enum class PartitionStrategy { uniform, fine_to_coarse, explicit_bounds };

/// How a top-k ranking is split into m rank intervals. Intervals are
/// half-open, disjoint, and tile [0, k).
struct PartitionScheme {
    PartitionStrategy strategy = PartitionStrategy::fine_to_coarse;
    int m = 6;
    int first_len = 3;    // fine_to_coarse: weight of the first interval
    double growth = 2.0;  // fine_to_coarse: length ratio between intervals
    std::vector<std::pair<int, int>> boundaries;  // explicit_bounds only
};

using RankInterval = std::pair<int, int>;

/// Splits [0, k) into m intervals.
///  - uniform: equal lengths, remainder assigned to the last intervals.
///  - fine_to_coarse: lengths proportional to first_len * growth^i,
///    scaled to sum k and rounded by largest remainder (minimum 1).
///  - explicit_bounds: the given boundaries, validated to tile [0, k).
std::vector<RankInterval> partition(int k, int m, const PartitionScheme& scheme);

/// One training unit: a query, one passage per interval, and the BM25
/// scores those passages carried in the source ranking.
struct RankingSample {
    std::string query_id;
    std::string query_text;
    std::vector<std::string> passages;
    std::vector<double> scores;
    std::vector<int> interval_indices;
};

/// Uniformly draws one (chunk, score) from each interval of the ranked
/// list. Throws std::runtime_error if the list is shorter than the
/// partition needs; callers skip such queries.
RankingSample sample_ranking_list(const std::string& query_id,
                                  const std::string& query_text,
                                  const RankedList& ranked,
                                  const PartitionScheme& scheme,
                                  uint64_t stream_seed);

struct QueryForSampling {
    std::string query_id;
    std::string text;
};

struct TrainingSetResult {
    std::vector<RankingSample> samples;
    size_t skipped_queries = 0;
};

/// Runs search + sampling for every query. Each query draws from an
/// independent rng stream derived from (seed, query_id, draw index), so
/// parallel and serial runs agree. Queries with short rankings are skipped.
TrainingSetResult generate_training_set(
    const std::vector<QueryForSampling>& queries, const InvertedIndex& index,
    int k, const PartitionScheme& scheme, int lists_per_query, uint64_t seed,
    const TokenizerConfig& config = {});

void save_samples(const std::vector<RankingSample>& samples,
                  const std::filesystem::path& path);
std::vector<RankingSample> load_samples(const std::filesystem::path& path);

}  // namespace bmembed
