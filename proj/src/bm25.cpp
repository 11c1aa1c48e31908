#include "bmembed/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "bmembed/util.hpp"

namespace bmembed {

InvertedIndex build_index(const std::vector<Chunk>& chunks,
                          const Bm25Params& params,
                          const TokenizerConfig& config) {
    if (chunks.empty()) throw std::invalid_argument("build_index: empty chunk set");
    if (params.k1 < 0.0 || params.b < 0.0 || params.b > 1.0)
        throw std::invalid_argument("build_index: k1 must be >= 0 and b in [0,1]");
    InvertedIndex index;
    index.params = params;
    index.num_chunks = chunks.size();
    double total_len = 0.0;
    for (const auto& chunk : chunks) {
        auto tokens = tokenize(chunk.text, config);
        if (index.chunk_lengths.count(chunk.chunk_id))
            throw std::invalid_argument("build_index: duplicate chunk_id " +
                                        chunk.chunk_id);
        index.chunk_lengths[chunk.chunk_id] = static_cast<int>(tokens.size());
        total_len += static_cast<double>(tokens.size());
        std::map<std::string, int> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf)
            index.postings[term].push_back({chunk.chunk_id, count});
    }
    index.avg_length = total_len / static_cast<double>(chunks.size());
    for (auto& [term, list] : index.postings)
        std::sort(list.begin(), list.end(),
                  [](const Posting& a, const Posting& b) {
                      return a.chunk_id < b.chunk_id;
                  });
    return index;
}

double idf(const InvertedIndex& index, const std::string& term) {
    auto it = index.postings.find(term);
    const double df = it == index.postings.end()
                          ? 0.0
                          : static_cast<double>(it->second.size());
    const double n = static_cast<double>(index.num_chunks);
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

namespace {

int term_frequency(const InvertedIndex& index, const std::string& term,
                   const std::string& chunk_id) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) return 0;
    const auto& list = it->second;
    auto pos = std::lower_bound(list.begin(), list.end(), chunk_id,
                                [](const Posting& p, const std::string& id) {
                                    return p.chunk_id < id;
                                });
    if (pos != list.end() && pos->chunk_id == chunk_id) return pos->tf;
    return 0;
}

double term_score(const InvertedIndex& index, double term_idf, int tf,
                  int chunk_len) {
    if (tf == 0) return 0.0;
    const double k1 = index.params.k1;
    const double b = index.params.b;
    const double norm_len = static_cast<double>(chunk_len) / index.avg_length;
    const double f = static_cast<double>(tf);
    return term_idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * norm_len));
}

}  // namespace

double bm25_score(const InvertedIndex& index,
                  const std::vector<std::string>& query_tokens,
                  const std::string& chunk_id) {
    auto len_it = index.chunk_lengths.find(chunk_id);
    if (len_it == index.chunk_lengths.end())
        throw std::invalid_argument("bm25_score: unknown chunk_id " + chunk_id);
    double score = 0.0;
    for (const auto& term : query_tokens) {
        const int tf = term_frequency(index, term, chunk_id);
        score += term_score(index, idf(index, term), tf, len_it->second);
    }
    return score;
}

RankedList search(const InvertedIndex& index,
                  const std::vector<std::string>& query_tokens, size_t k) {
    if (k < 1) throw std::invalid_argument("search: k must be >= 1");
    std::map<std::string, double> accum;  // chunk_id -> score, id-ordered
    for (const auto& term : query_tokens) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        const double term_idf = idf(index, term);
        for (const auto& posting : it->second) {
            const int len = index.chunk_lengths.at(posting.chunk_id);
            accum[posting.chunk_id] +=
                term_score(index, term_idf, posting.tf, len);
        }
    }
    std::vector<ScoredChunk> entries;
    entries.reserve(accum.size());
    for (const auto& [id, score] : accum)
        if (score > 0.0) entries.push_back({id, score});
    // accum iteration is id-ascending; stable_sort keeps that order for ties.
    std::stable_sort(entries.begin(), entries.end(),
                     [](const ScoredChunk& a, const ScoredChunk& b) {
                         return a.score > b.score;
                     });
    if (entries.size() > k) entries.resize(k);
    RankedList out;
    out.entries = std::move(entries);
    return out;
}

void save_index(const InvertedIndex& index, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    nlohmann::json header = {{"format", "bmembed-index"},
                             {"version", 1},
                             {"num_chunks", index.num_chunks},
                             {"avg_length", index.avg_length},
                             {"k1", index.params.k1},
                             {"b", index.params.b}};
    out << header.dump() << '\n';
    for (const auto& [id, len] : std::map<std::string, int>(
             index.chunk_lengths.begin(), index.chunk_lengths.end())) {
        nlohmann::json j = {{"chunk", id}, {"len", len}};
        out << j.dump() << '\n';
    }
    for (const auto& [term, list] : index.postings) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : list) arr.push_back({p.chunk_id, p.tf});
        nlohmann::json j = {{"term", term}, {"postings", arr}};
        out << j.dump() << '\n';
    }
}

InvertedIndex load_index(const std::filesystem::path& path) {
    std::string content = read_file(path);
    auto lines = split_lines(content);
    if (lines.empty()) throw std::runtime_error("empty index file " + path.string());
    nlohmann::json header = nlohmann::json::parse(lines[0]);
    if (header.value("format", "") != "bmembed-index")
        throw std::runtime_error("not a bmembed index: " + path.string());
    if (header.value("version", 0) != 1)
        throw std::runtime_error("unsupported index version in " + path.string());
    InvertedIndex index;
    index.num_chunks = header.at("num_chunks").get<size_t>();
    index.avg_length = header.at("avg_length").get<double>();
    index.params.k1 = header.at("k1").get<double>();
    index.params.b = header.at("b").get<double>();
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        nlohmann::json j = nlohmann::json::parse(lines[i]);
        if (j.contains("chunk")) {
            index.chunk_lengths[j.at("chunk").get<std::string>()] =
                j.at("len").get<int>();
        } else {
            auto& list = index.postings[j.at("term").get<std::string>()];
            for (const auto& p : j.at("postings"))
                list.push_back({p.at(0).get<std::string>(), p.at(1).get<int>()});
        }
    }
    return index;
}

}  // namespace bmembed
