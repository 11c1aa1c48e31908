#include "bmembed/fusion.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace bmembed {

std::vector<ScoredChunk> rrf_fuse(
    const std::vector<std::vector<std::string>>& rankings,
    const FusionConfig& config) {
    if (rankings.empty())
        throw std::invalid_argument("rrf_fuse: need at least one ranking");
    if (!(config.u > 0.0))
        throw std::invalid_argument("rrf_fuse: u must be positive");
    std::map<std::string, double> scores;
    for (const auto& ranking : rankings) {
        std::set<std::string> seen;
        for (size_t i = 0; i < ranking.size(); ++i) {
            if (!seen.insert(ranking[i]).second)
                throw std::invalid_argument("rrf_fuse: duplicate id " +
                                            ranking[i] + " within one ranking");
            scores[ranking[i]] += 1.0 / (config.u + static_cast<double>(i + 1));
        }
    }
    std::vector<ScoredChunk> fused;
    fused.reserve(scores.size());
    for (const auto& [id, score] : scores) fused.push_back({id, score});
    std::stable_sort(fused.begin(), fused.end(),
                     [](const ScoredChunk& a, const ScoredChunk& b) {
                         return a.score > b.score;
                     });
    return fused;
}

}  // namespace bmembed
