#include "bmembed/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "bmembed/util.hpp"

namespace bmembed {

namespace {

std::vector<int> uniform_lengths(int k, int m) {
    const int base = k / m;
    const int rem = k % m;
    std::vector<int> lengths(static_cast<size_t>(m), base);
    // Remainder goes to the last intervals.
    for (int i = m - rem; i < m; ++i) lengths[static_cast<size_t>(i)] += 1;
    return lengths;
}

std::vector<int> fine_to_coarse_lengths(int k, int m, int first_len,
                                        double growth) {
    if (first_len < 1)
        throw std::invalid_argument("partition: first_len must be >= 1");
    if (growth < 1.0)
        throw std::invalid_argument("partition: growth must be >= 1");
    std::vector<double> weights(static_cast<size_t>(m));
    double w = static_cast<double>(first_len);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        weights[static_cast<size_t>(i)] = w;
        total += w;
        w *= growth;
    }
    std::vector<double> exact(static_cast<size_t>(m));
    std::vector<int> lengths(static_cast<size_t>(m));
    int assigned = 0;
    for (int i = 0; i < m; ++i) {
        exact[static_cast<size_t>(i)] =
            static_cast<double>(k) * weights[static_cast<size_t>(i)] / total;
        lengths[static_cast<size_t>(i)] =
            static_cast<int>(std::floor(exact[static_cast<size_t>(i)]));
        assigned += lengths[static_cast<size_t>(i)];
    }
    // Largest-remainder rounding; remainder ties go to later intervals so
    // lengths stay non-decreasing.
    std::vector<int> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ra = exact[static_cast<size_t>(a)] -
                          std::floor(exact[static_cast<size_t>(a)]);
        const double rb = exact[static_cast<size_t>(b)] -
                          std::floor(exact[static_cast<size_t>(b)]);
        if (ra != rb) return ra > rb;
        return a > b;
    });
    for (int i = 0; i < k - assigned; ++i)
        lengths[static_cast<size_t>(order[static_cast<size_t>(i)])] += 1;
    // Every interval must hold at least one rank; steal from the largest.
    bool stole = false;
    for (int i = 0; i < m; ++i) {
        if (lengths[static_cast<size_t>(i)] >= 1) continue;
        auto donor = std::max_element(lengths.rbegin(), lengths.rend());
        *donor -= 1;
        lengths[static_cast<size_t>(i)] += 1;
        stole = true;
    }
    // Stealing can locally break the non-decreasing invariant; re-sorting
    // restores it without changing the multiset of lengths.
    if (stole) std::sort(lengths.begin(), lengths.end());
    return lengths;
}

std::vector<RankInterval> lengths_to_intervals(const std::vector<int>& lengths) {
    std::vector<RankInterval> intervals;
    intervals.reserve(lengths.size());
    int pos = 0;
    for (int len : lengths) {
        intervals.emplace_back(pos, pos + len);
        pos += len;
    }
    return intervals;
}

}  // namespace

std::vector<RankInterval> partition(int k, int m, const PartitionScheme& scheme) {
    if (m < 2) throw std::invalid_argument("partition: m must be >= 2");
    if (k < m) throw std::invalid_argument("partition: k must be >= m");
    switch (scheme.strategy) {
        case PartitionStrategy::uniform:
            return lengths_to_intervals(uniform_lengths(k, m));
        case PartitionStrategy::fine_to_coarse:
            return lengths_to_intervals(
                fine_to_coarse_lengths(k, m, scheme.first_len, scheme.growth));
        case PartitionStrategy::explicit_bounds: {
            const auto& bounds = scheme.boundaries;
            if (static_cast<int>(bounds.size()) != m)
                throw std::invalid_argument(
                    "partition: explicit boundaries must have m intervals");
            int pos = 0;
            for (const auto& [lo, hi] : bounds) {
                if (lo != pos || hi <= lo)
                    throw std::invalid_argument(
                        "partition: explicit boundaries must tile [0, k)");
                pos = hi;
            }
            if (pos != k)
                throw std::invalid_argument(
                    "partition: explicit boundaries must end at k");
            return bounds;
        }
    }
    throw std::logic_error("partition: unknown strategy");
}

RankingSample sample_ranking_list(const std::string& query_id,
                                  const std::string& query_text,
                                  const RankedList& ranked,
                                  const PartitionScheme& scheme,
                                  uint64_t stream_seed) {
    const int available = static_cast<int>(ranked.entries.size());
    if (available < scheme.m)
        throw std::runtime_error("ranking for query " + query_id + " has " +
                                 std::to_string(available) +
                                 " entries, need at least " +
                                 std::to_string(scheme.m));
    // Partition over the available depth, never past the list's end.
    auto intervals = partition(available, scheme.m, scheme);
    SplitMix64 rng(stream_seed);
    RankingSample sample;
    sample.query_id = query_id;
    sample.query_text = query_text;
    for (size_t j = 0; j < intervals.size(); ++j) {
        const auto& [lo, hi] = intervals[j];
        const int rank = lo + static_cast<int>(rng.next_below(
                                  static_cast<uint64_t>(hi - lo)));
        const auto& entry = ranked.entries[static_cast<size_t>(rank)];
        sample.passages.push_back(entry.chunk_id);
        sample.scores.push_back(entry.score);
        sample.interval_indices.push_back(static_cast<int>(j));
    }
    return sample;
}

TrainingSetResult generate_training_set(
    const std::vector<QueryForSampling>& queries, const InvertedIndex& index,
    int k, const PartitionScheme& scheme, int lists_per_query, uint64_t seed,
    const TokenizerConfig& config) {
    if (lists_per_query < 1)
        throw std::invalid_argument("generate_training_set: lists_per_query >= 1");
    TrainingSetResult result;
    for (const auto& q : queries) {
        auto tokens = tokenize(q.text, config);
        RankedList ranked = search(index, tokens, static_cast<size_t>(k));
        ranked.query_id = q.query_id;
        if (static_cast<int>(ranked.entries.size()) < scheme.m) {
            ++result.skipped_queries;
            continue;
        }
        for (int draw = 0; draw < lists_per_query; ++draw) {
            const uint64_t stream = mix_seed(
                mix_seed(seed, fnv1a(q.query_id)), static_cast<uint64_t>(draw));
            result.samples.push_back(
                sample_ranking_list(q.query_id, q.text, ranked, scheme, stream));
        }
    }
    return result;
}

void save_samples(const std::vector<RankingSample>& samples,
                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& s : samples) {
        nlohmann::json j = {{"query_id", s.query_id},
                            {"query_text", s.query_text},
                            {"passages", s.passages},
                            {"scores", s.scores},
                            {"intervals", s.interval_indices}};
        out << j.dump() << '\n';
    }
}

std::vector<RankingSample> load_samples(const std::filesystem::path& path) {
    std::string content = read_file(path);
    std::vector<RankingSample> samples;
    for (const auto& line : split_lines(content)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        RankingSample s;
        s.query_id = j.at("query_id").get<std::string>();
        s.query_text = j.at("query_text").get<std::string>();
        s.passages = j.at("passages").get<std::vector<std::string>>();
        s.scores = j.at("scores").get<std::vector<double>>();
        if (j.contains("intervals"))
            s.interval_indices = j.at("intervals").get<std::vector<int>>();
        if (s.passages.size() != s.scores.size())
            throw std::runtime_error("sample for query " + s.query_id +
                                     ": passages/scores length mismatch");
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace bmembed
