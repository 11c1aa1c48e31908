#include "bmembed/perturb.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bmembed/util.hpp"

namespace bmembed {

namespace {

const char* kKeywordPrompt =
    "Given a query and a paragraph including the answer of the query, please "
    "extract all the common keywords that query and paragraph both have:\n"
    "\n"
    "Note:\n"
    "\n"
    "1. The definition of keywords is: words in the query and paragraph that "
    "are particularly distinctive and related to the main topic. Less "
    "important pronouns or frequently occurring words do not fall into this "
    "category.\n"
    "\n"
    "2. The words you extract must appear in both the query and the "
    "paragraph.\n"
    "\n"
    "3. Do not output other format, just list all the words as follows:\n"
    "\n"
    "investigation, Eastwood, Filing\n"
    "\n"
    "Query:\n"
    "\n"
    "{query}\n"
    "\n"
    "Paragraph:\n"
    "\n"
    "{paragraph}\n"
    "\n"
    "keywords:\n";

const char* kSynonymPrompt =
    "Given a query and a set of its keywords, generate substituted words or "
    "phrases for these keywords that preserve the original semantic meaning "
    "of the query.\n"
    "\n"
    "Note:\n"
    "\n"
    "1. Ensure the number of keywords remains unchanged, with one "
    "substitution for each keyword. Maintain the query's intent, context, "
    "and grammatical correctness.\n"
    "\n"
    "2. Avoid altering the overall structure and purpose of the query.\n"
    "\n"
    "3. Return the substituted keywords in the same format with Keywords "
    "like:\n"
    "investigation, Eastwood, Filing\n"
    "\n"
    "Query:\n"
    "\n"
    "{query}\n"
    "\n"
    "Keywords:\n"
    "\n"
    "{keywords}\n"
    "\n"
    "Your substituted keywords:\n";

std::vector<std::string> parse_comma_list(const std::string& text) {
    std::vector<std::string> items;
    std::string current;
    for (char c : text) {
        if (c == ',' || c == '\n') {
            std::string t = fold_whitespace(current);
            if (!t.empty()) items.push_back(t);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    std::string t = fold_whitespace(current);
    if (!t.empty()) items.push_back(t);
    return items;
}

bool contains_phrase(const std::string& haystack, const std::string& phrase) {
    const std::string h = to_lower(fold_whitespace(haystack));
    const std::string p = to_lower(fold_whitespace(phrase));
    return !p.empty() && h.find(p) != std::string::npos;
}

bool is_word_char(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
           (c >= 'A' && c <= 'Z') || c >= 0x80;
}

/// Case-insensitive whole-phrase replacement of every keyword occurrence;
/// keywords are processed longest-first so overlaps resolve to the longer
/// phrase.
std::string replace_keywords(const std::string& query,
                             const std::vector<std::string>& keywords,
                             const std::function<std::string(const std::string&)>&
                                 replacement_for) {
    std::vector<std::string> sorted(keywords.begin(), keywords.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const std::string& a, const std::string& b) {
                  if (a.size() != b.size()) return a.size() > b.size();
                  return a < b;
              });
    const std::string lower = to_lower(query);
    std::string out;
    size_t i = 0;
    while (i < query.size()) {
        bool replaced = false;
        const bool at_boundary =
            i == 0 || !is_word_char(static_cast<unsigned char>(query[i - 1]));
        if (at_boundary) {
            for (const auto& kw : sorted) {
                if (kw.empty()) continue;
                const std::string kw_lower = to_lower(kw);
                if (lower.compare(i, kw_lower.size(), kw_lower) != 0) continue;
                const size_t end = i + kw_lower.size();
                if (end < query.size() &&
                    is_word_char(static_cast<unsigned char>(query[end])))
                    continue;  // partial word, not a phrase boundary
                out += replacement_for(kw);
                i = end;
                replaced = true;
                break;
            }
        }
        if (!replaced) {
            out.push_back(query[i]);
            ++i;
        }
    }
    return out;
}

}  // namespace

const std::string& keyword_extraction_prompt_template() {
    static const std::string tmpl = kKeywordPrompt;
    return tmpl;
}

const std::string& synonym_generation_prompt_template() {
    static const std::string tmpl = kSynonymPrompt;
    return tmpl;
}

std::vector<std::string> extract_keywords(const std::string& query,
                                          const std::string& evidence,
                                          LlmClient& llm) {
    if (evidence.empty())
        throw std::invalid_argument("extract_keywords: empty evidence");
    std::string prompt =
        fill_prompt(keyword_extraction_prompt_template(), "query", query);
    prompt = fill_prompt(prompt, "paragraph", evidence);
    const std::string response = llm.complete(prompt);
    std::vector<std::string> keywords;
    for (const auto& kw : parse_comma_list(response)) {
        // Validation rule from the prompt: must appear in both.
        if (contains_phrase(query, kw) && contains_phrase(evidence, kw))
            keywords.push_back(kw);
    }
    return keywords;
}

std::vector<std::string> extract_keywords_stub(const std::string& query,
                                               const std::string& evidence,
                                               const InvertedIndex& index,
                                               size_t max_keywords) {
    std::set<std::string> query_terms;
    for (const auto& t : tokenize(query)) query_terms.insert(t);
    std::set<std::string> evidence_terms;
    for (const auto& t : tokenize(evidence)) evidence_terms.insert(t);
    std::vector<std::pair<double, std::string>> shared;
    for (const auto& t : query_terms)
        if (evidence_terms.count(t)) shared.emplace_back(idf(index, t), t);
    std::stable_sort(shared.begin(), shared.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (size_t i = 0; i < std::min(max_keywords, shared.size()); ++i)
        out.push_back(shared[i].second);
    return out;
}

std::string mask_keywords(const std::string& query,
                          const std::vector<std::string>& keywords) {
    return replace_keywords(query, keywords,
                            [](const std::string&) { return "[MASK]"; });
}

std::string substitute_keywords(
    const std::string& query, const std::vector<std::string>& keywords,
    const std::map<std::string, std::string>& synonyms) {
    std::vector<std::string> missing;
    for (const auto& kw : keywords)
        if (!synonyms.count(kw)) missing.push_back(kw);
    if (!missing.empty()) {
        std::string joined;
        for (const auto& kw : missing) {
            if (!joined.empty()) joined += ", ";
            joined += kw;
        }
        throw std::invalid_argument(
            "substitute_keywords: synonym map missing keywords: " + joined);
    }
    return replace_keywords(query, keywords, [&](const std::string& kw) {
        return synonyms.at(kw);
    });
}

std::map<std::string, std::string> generate_synonyms(
    const std::string& query, const std::vector<std::string>& keywords,
    LlmClient& llm) {
    if (keywords.empty()) return {};
    std::string joined;
    for (const auto& kw : keywords) {
        if (!joined.empty()) joined += ", ";
        joined += kw;
    }
    std::string prompt =
        fill_prompt(synonym_generation_prompt_template(), "query", query);
    prompt = fill_prompt(prompt, "keywords", joined);
    const std::string response = llm.complete(prompt);
    auto substitutes = parse_comma_list(response);
    if (substitutes.size() != keywords.size())
        throw std::runtime_error(
            "generate_synonyms: expected " + std::to_string(keywords.size()) +
            " substitutions, got " + std::to_string(substitutes.size()) +
            "; raw response follows:\n" + response);
    std::map<std::string, std::string> out;
    for (size_t i = 0; i < keywords.size(); ++i) out[keywords[i]] = substitutes[i];
    return out;
}

void save_perturbed_queries(const std::vector<PerturbedQuery>& queries,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& q : queries) {
        nlohmann::json j = {{"query_id", q.query_id},
                            {"original", q.original},
                            {"masked", q.masked},
                            {"substituted", q.substituted},
                            {"keywords", q.keywords},
                            {"synonyms", q.synonyms}};
        out << j.dump() << '\n';
    }
}

std::vector<PerturbedQuery> load_perturbed_queries(
    const std::filesystem::path& path) {
    std::string content = read_file(path);
    std::vector<PerturbedQuery> queries;
    for (const auto& line : split_lines(content)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        PerturbedQuery q;
        q.query_id = j.at("query_id").get<std::string>();
        q.original = j.at("original").get<std::string>();
        q.masked = j.at("masked").get<std::string>();
        q.substituted = j.at("substituted").get<std::string>();
        q.keywords = j.at("keywords").get<std::vector<std::string>>();
        q.synonyms = j.at("synonyms").get<std::map<std::string, std::string>>();
        queries.push_back(std::move(q));
    }
    return queries;
}

std::vector<PerturbationRow> run_perturbation_eval(
    const std::vector<PerturbationMethod>& methods,
    const std::vector<PerturbedQuery>& variants,
    const std::vector<EvalQuery>& gold, const std::vector<Chunk>& chunks,
    const EvalConfig& config) {
    std::map<std::string, const PerturbedQuery*> by_id;
    for (const auto& v : variants) by_id[v.query_id] = &v;

    auto variant_queries = [&](const std::string& which) {
        std::vector<EvalQuery> out;
        for (const auto& q : gold) {
            auto it = by_id.find(q.query_id);
            if (it == by_id.end()) continue;
            EvalQuery v = q;
            if (which == "masked")
                v.text = it->second->masked;
            else if (which == "substituted")
                v.text = it->second->substituted;
            else
                v.text = it->second->original;
            out.push_back(std::move(v));
        }
        return out;
    };

    static const char* kVariants[] = {"original", "masked", "substituted"};
    std::vector<PerturbationRow> rows;
    for (const auto& method : methods) {
        PerturbationRow original_row;
        for (const char* which : kVariants) {
            auto queries = variant_queries(which);
            if (queries.empty())
                throw std::runtime_error(
                    "run_perturbation_eval: no queries for variant " +
                    std::string(which));
            Run run = method.run(queries);
            EvalReport report = evaluate_run(run, queries, chunks, config);
            PerturbationRow row;
            row.method = method.name;
            row.variant = which;
            row.hit1 = report.hit1;
            row.hit4 = report.hit4;
            row.hit10 = report.hit10;
            row.map10 = report.map10;
            if (std::string(which) == "original") {
                original_row = row;
            } else {
                row.d_hit1 = original_row.hit1 - row.hit1;
                row.d_hit4 = original_row.hit4 - row.hit4;
                row.d_hit10 = original_row.hit10 - row.hit10;
                row.d_map10 = original_row.map10 - row.map10;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void save_delta_table(const std::vector<PerturbationRow>& rows,
                      const std::filesystem::path& path) {
    std::ostringstream out;
    out << "method,variant,hit1,hit4,hit10,map10,d_hit1,d_hit4,d_hit10,d_map10\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.variant << ',' << r.hit1 << ',' << r.hit4
            << ',' << r.hit10 << ',' << r.map10 << ',' << r.d_hit1 << ','
            << r.d_hit4 << ',' << r.d_hit10 << ',' << r.d_map10 << '\n';
    write_file(path, out.str());
}

}  // namespace bmembed
