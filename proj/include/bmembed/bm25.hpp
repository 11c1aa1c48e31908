#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "bmembed/corpus.hpp"

namespace bmembed {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::string chunk_id;
    int tf = 0;
};

/// Immutable inverted index over chunks. Postings lists are sorted by
/// chunk_id; avg_length is the mean token count.
struct InvertedIndex {
    std::map<std::string, std::vector<Posting>> postings;
    std::unordered_map<std::string, int> chunk_lengths;
    double avg_length = 0.0;
    size_t num_chunks = 0;
    Bm25Params params;
};

struct ScoredChunk {
    std::string chunk_id;
    double score = 0.0;
};

struct RankedList {
    std::string query_id;
    std::vector<ScoredChunk> entries;  // descending score, ties by ascending id
};

InvertedIndex build_index(const std::vector<Chunk>& chunks,
                          const Bm25Params& params = {},
                          const TokenizerConfig& config = {});

/// Non-negative idf variant: ln((N - df + 0.5) / (df + 0.5) + 1).
double idf(const InvertedIndex& index, const std::string& term);

/// Multiset BM25 sum over the query tokens against one chunk.
double bm25_score(const InvertedIndex& index,
                  const std::vector<std::string>& query_tokens,
                  const std::string& chunk_id);

/// Top-k chunks by BM25, descending score, ties broken by ascending
/// chunk_id. Zero-score chunks are excluded.
RankedList search(const InvertedIndex& index,
                  const std::vector<std::string>& query_tokens, size_t k);

void save_index(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex load_index(const std::filesystem::path& path);

}  // namespace bmembed
