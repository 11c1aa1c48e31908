#include "bmembed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <unordered_map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bmembed/util.hpp"

namespace bmembed {

namespace {

std::map<std::string, int> token_counts(const std::string& text) {
    std::map<std::string, int> counts;
    for (const auto& t : tokenize(text)) ++counts[t];
    return counts;
}

}  // namespace

std::set<std::string> match_evidence(const std::vector<std::string>& spans,
                                     const std::vector<Chunk>& chunks,
                                     double theta) {
    std::set<std::string> relevant;
    for (const auto& span : spans) {
        const std::string folded_span = fold_whitespace(span);
        auto span_tokens = token_counts(span);
        int span_total = 0;
        for (const auto& [_, c] : span_tokens) span_total += c;
        if (span_total == 0) continue;
        for (const auto& chunk : chunks) {
            // Direct containment after whitespace folding.
            if (fold_whitespace(chunk.text).find(folded_span) !=
                std::string::npos) {
                relevant.insert(chunk.chunk_id);
                continue;
            }
            auto chunk_tokens = token_counts(chunk.text);
            int overlap = 0;
            for (const auto& [tok, c] : span_tokens) {
                auto it = chunk_tokens.find(tok);
                if (it != chunk_tokens.end()) overlap += std::min(c, it->second);
            }
            if (static_cast<double>(overlap) >=
                theta * static_cast<double>(span_total))
                relevant.insert(chunk.chunk_id);
        }
    }
    return relevant;
}

int hit_at_k(const std::vector<std::string>& run,
             const std::set<std::string>& relevant, size_t k) {
    const size_t depth = std::min(k, run.size());
    for (size_t i = 0; i < depth; ++i)
        if (relevant.count(run[i])) return 1;
    return 0;
}

double average_precision_at_10(const std::vector<std::string>& run,
                               const std::set<std::string>& relevant) {
    if (relevant.empty()) return 0.0;
    const size_t depth = std::min<size_t>(10, run.size());
    double sum = 0.0;
    int found = 0;
    for (size_t i = 0; i < depth; ++i) {
        if (relevant.count(run[i])) {
            ++found;
            sum += static_cast<double>(found) / static_cast<double>(i + 1);
        }
    }
    const double denom =
        static_cast<double>(std::min<size_t>(relevant.size(), 10));
    return sum / denom;
}

namespace {

double sq_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

}  // namespace

AlignmentResult alignment(
    const std::vector<std::pair<EmbeddingVector, EmbeddingVector>>& positive_pairs,
    const std::vector<EmbeddingVector>& database) {
    if (positive_pairs.empty())
        throw std::invalid_argument("alignment: no positive pairs");
    AlignmentResult result;
    double raw_sum = 0.0, norm_sum = 0.0;
    for (const auto& [x, y] : positive_pairs) {
        const double dist = sq_distance(x, y);
        double nearest = std::numeric_limits<double>::infinity();
        for (const auto& db : database)
            nearest = std::min(nearest, sq_distance(x, db));
        if (!(nearest > 0.0)) {
            ++result.pairs_skipped;
            continue;
        }
        raw_sum += dist;
        norm_sum += dist / nearest;
        ++result.pairs_used;
    }
    if (result.pairs_used == 0)
        throw std::runtime_error("alignment: every pair was skipped");
    result.raw = raw_sum / static_cast<double>(result.pairs_used);
    result.normalized = norm_sum / static_cast<double>(result.pairs_used);
    return result;
}

double uniformity(const std::vector<EmbeddingVector>& vectors) {
    if (vectors.size() < 2)
        throw std::invalid_argument("uniformity: need at least two vectors");
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < vectors.size(); ++i)
        for (size_t j = i + 1; j < vectors.size(); ++j) {
            sum += std::exp(-2.0 * sq_distance(vectors[i], vectors[j]));
            ++pairs;
        }
    return std::abs(std::log(sum / static_cast<double>(pairs)));
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_sts(const std::vector<double>& similarities,
                    const std::vector<double>& gold_scores) {
    if (similarities.size() != gold_scores.size())
        throw std::invalid_argument("spearman_sts: length mismatch");
    if (similarities.size() < 3)
        throw std::invalid_argument("spearman_sts: need at least 3 pairs");
    auto ra = average_ranks(similarities);
    auto rb = average_ranks(gold_scores);
    const size_t n = ra.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_a += ra[i];
        mean_b += rb[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0)
        throw std::runtime_error("spearman_sts: constant input");
    return cov / std::sqrt(var_a * var_b);
}

Run dense_search(EmbeddingProvider& provider, const Adapter* adapter,
                 const std::vector<EvalQuery>& queries,
                 const std::vector<Chunk>& chunks, size_t k) {
    std::vector<std::string> chunk_texts;
    chunk_texts.reserve(chunks.size());
    for (const auto& c : chunks) chunk_texts.push_back(c.text);
    auto chunk_vecs = provider.embed_batch(chunk_texts);
    if (adapter)
        for (auto& v : chunk_vecs) v = adapter->apply(v);
    Run run;
    for (const auto& q : queries) {
        auto qv = provider.embed(q.text);
        if (adapter) qv = adapter->apply(qv);
        std::vector<std::pair<double, size_t>> scored;
        scored.reserve(chunks.size());
        for (size_t i = 0; i < chunks.size(); ++i) {
            bool zero = std::all_of(chunk_vecs[i].begin(), chunk_vecs[i].end(),
                                    [](float x) { return x == 0.0f; });
            if (zero) continue;
            scored.emplace_back(
                cosine_similarity(std::span<const float>(qv),
                                  std::span<const float>(chunk_vecs[i])),
                i);
        }
        std::sort(scored.begin(), scored.end(),
                  [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return chunks[a.second].chunk_id < chunks[b.second].chunk_id;
                  });
        auto& ids = run[q.query_id];
        for (size_t i = 0; i < std::min(k, scored.size()); ++i)
            ids.push_back(chunks[scored[i].second].chunk_id);
    }
    return run;
}

EvalReport evaluate_run(const Run& run, const std::vector<EvalQuery>& queries,
                        const std::vector<Chunk>& chunks,
                        const EvalConfig& config) {
    if (queries.empty()) throw std::invalid_argument("evaluate_run: no queries");
    EvalReport report;
    double sum1 = 0, sum4 = 0, sum10 = 0, sum_ap = 0;
    size_t counted = 0;
    for (const auto& q : queries) {
        std::set<std::string> relevant(q.gold_chunk_ids.begin(),
                                       q.gold_chunk_ids.end());
        auto from_spans = match_evidence(q.gold_spans, chunks, config.match_theta);
        relevant.insert(from_spans.begin(), from_spans.end());
        PerQueryRow row;
        row.query_id = q.query_id;
        if (relevant.empty()) {
            row.unmatchable = true;
            ++report.num_unmatchable;
            report.rows.push_back(row);
            continue;
        }
        static const std::vector<std::string> kEmpty;
        auto it = run.find(q.query_id);
        const auto& ids = it == run.end() ? kEmpty : it->second;
        row.hit1 = hit_at_k(ids, relevant, 1);
        row.hit4 = hit_at_k(ids, relevant, 4);
        row.hit10 = hit_at_k(ids, relevant, 10);
        row.ap10 = average_precision_at_10(ids, relevant);
        sum1 += row.hit1;
        sum4 += row.hit4;
        sum10 += row.hit10;
        sum_ap += row.ap10;
        ++counted;
        report.rows.push_back(row);
    }
    if (counted == 0)
        throw std::runtime_error("evaluate_run: no query matched any chunk");
    report.num_queries = counted;
    report.hit1 = sum1 / static_cast<double>(counted);
    report.hit4 = sum4 / static_cast<double>(counted);
    report.hit10 = sum10 / static_cast<double>(counted);
    report.map10 = sum_ap / static_cast<double>(counted);
    return report;
}

EvalReport evaluate_embedder(EmbeddingProvider& provider, const Adapter* adapter,
                             const std::vector<EvalQuery>& queries,
                             const std::vector<Chunk>& chunks,
                             const EvalConfig& config) {
    Run run = dense_search(provider, adapter, queries, chunks, 10);
    EvalReport report = evaluate_run(run, queries, chunks, config);

    // Geometry diagnostics on L2-normalized adapted embeddings.
    auto adapted_unit = [&](const std::string& text) -> std::optional<EmbeddingVector> {
        auto v = provider.embed(text);
        bool zero =
            std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
        if (zero) return std::nullopt;
        if (adapter) v = adapter->apply(v);
        return l2_normalize(v);
    };

    std::vector<EmbeddingVector> database;
    database.reserve(chunks.size());
    std::unordered_map<std::string, size_t> chunk_pos;
    for (const auto& c : chunks) {
        auto v = adapted_unit(c.text);
        if (!v) continue;
        chunk_pos[c.chunk_id] = database.size();
        database.push_back(std::move(*v));
    }

    std::vector<std::pair<EmbeddingVector, EmbeddingVector>> pairs;
    for (const auto& q : queries) {
        std::set<std::string> relevant(q.gold_chunk_ids.begin(),
                                       q.gold_chunk_ids.end());
        auto from_spans = match_evidence(q.gold_spans, chunks, config.match_theta);
        relevant.insert(from_spans.begin(), from_spans.end());
        if (relevant.empty()) continue;
        auto qv = adapted_unit(q.text);
        if (!qv) continue;
        // Pair the query with its first relevant chunk (id order).
        auto pos_it = chunk_pos.find(*relevant.begin());
        if (pos_it == chunk_pos.end()) continue;
        pairs.emplace_back(*qv, database[pos_it->second]);
    }
    if (!pairs.empty() && !database.empty()) {
        auto a = alignment(pairs, database);
        report.alignment_raw = a.raw;
        report.alignment_norm = a.normalized;
        // Seeded sample of chunk embeddings for the uniformity estimate.
        std::vector<size_t> idx(database.size());
        std::iota(idx.begin(), idx.end(), 0);
        SplitMix64 rng(config.uniformity_seed);
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.next_below(i)]);
        const size_t take = std::min(config.uniformity_sample, idx.size());
        std::vector<EmbeddingVector> sample;
        sample.reserve(take);
        for (size_t i = 0; i < take; ++i) sample.push_back(database[idx[i]]);
        if (sample.size() >= 2) {
            report.uniformity_abs = uniformity(sample);
            report.has_geometry = true;
        }
    }
    return report;
}

std::vector<EvalQuery> load_eval_queries(const std::filesystem::path& path) {
    std::string content = read_file(path);
    std::vector<EvalQuery> queries;
    size_t line_no = 0;
    for (const auto& line : split_lines(content)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("gold line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        EvalQuery q;
        q.query_id = j.at("query_id").get<std::string>();
        q.text = j.at("text").get<std::string>();
        if (j.contains("evidence"))
            q.gold_spans = j.at("evidence").get<std::vector<std::string>>();
        if (j.contains("chunk_ids"))
            q.gold_chunk_ids = j.at("chunk_ids").get<std::vector<std::string>>();
        if (q.gold_spans.empty() && q.gold_chunk_ids.empty())
            throw std::runtime_error("gold line " + std::to_string(line_no) +
                                     ": query " + q.query_id +
                                     " has no evidence or chunk_ids");
        queries.push_back(std::move(q));
    }
    return queries;
}

namespace {

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j = {{"hit1", report.hit1},
                        {"hit4", report.hit4},
                        {"hit10", report.hit10},
                        {"map10", report.map10},
                        {"num_queries", report.num_queries},
                        {"num_unmatchable", report.num_unmatchable}};
    if (report.has_geometry) {
        j["alignment_raw"] = report.alignment_raw;
        j["alignment_norm"] = report.alignment_norm;
        j["uniformity_abs"] = report.uniformity_abs;
    }
    return j;
}

}  // namespace

void save_report_json(const EvalReport& report,
                      const std::filesystem::path& path) {
    write_file(path, report_to_json(report).dump(2) + "\n");
}

void save_report_csv(const EvalReport& report,
                     const std::filesystem::path& path) {
    std::ostringstream out;
    out << "query_id,hit1,hit4,hit10,ap10,unmatchable\n";
    for (const auto& row : report.rows)
        out << row.query_id << ',' << row.hit1 << ',' << row.hit4 << ','
            << row.hit10 << ',' << row.ap10 << ',' << (row.unmatchable ? 1 : 0)
            << '\n';
    write_file(path, out.str());
}

void write_svg_scatter(
    const std::vector<std::tuple<std::string, double, double>>& points,
    const std::string& x_label, const std::string& y_label,
    const std::filesystem::path& path) {
    const double width = 480, height = 360, margin = 60;
    double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
    if (!points.empty()) {
        min_x = max_x = std::get<1>(points[0]);
        min_y = max_y = std::get<2>(points[0]);
        for (const auto& [label, x, y] : points) {
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
        }
    }
    if (max_x == min_x) max_x = min_x + 1;
    if (max_y == min_y) max_y = min_y + 1;
    auto sx = [&](double x) {
        return margin + (x - min_x) / (max_x - min_x) * (width - 2 * margin);
    };
    auto sy = [&](double y) {
        return height - margin - (y - min_y) / (max_y - min_y) * (height - 2 * margin);
    };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 15
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label
        << "</text>\n";
    svg << "<text x=\"15\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 "
        << height / 2 << ")\">" << y_label << "</text>\n";
    for (const auto& [label, x, y] : points) {
        svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y)
            << "\" r=\"4\" fill=\"steelblue\"/>\n";
        svg << "<text x=\"" << sx(x) + 6 << "\" y=\"" << sy(y) - 6
            << "\" font-size=\"10\">" << label << "</text>\n";
    }
    svg << "</svg>\n";
    write_file(path, svg.str());
}

}  // namespace bmembed
