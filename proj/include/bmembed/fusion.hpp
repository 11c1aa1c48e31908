#pragma once

#include <string>
#include <vector>

#include "bmembed/bm25.hpp"

namespace bmembed {

struct FusionConfig {
    double u = 40.0;  // rank offset; ranks are 1-based
};

/// Reciprocal Rank Fusion: score(d) = sum over rankers containing d of
/// 1 / (u + rank). Documents missing from a ranker contribute nothing for
/// it. Output is sorted by score descending, ties by ascending chunk id.
std::vector<ScoredChunk> rrf_fuse(
    const std::vector<std::vector<std::string>>& rankings,
    const FusionConfig& config = {});

}  // namespace bmembed
