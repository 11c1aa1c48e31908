#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bmembed/bm25.hpp"
#include "bmembed/eval.hpp"
#include "bmembed/query_gen.hpp"

namespace bmembed {

struct PerturbedQuery {
    std::string query_id;
    std::string original;
    std::string masked;
    std::string substituted;
    std::vector<std::string> keywords;
    std::map<std::string, std::string> synonyms;
};

/// LLM keyword extraction; keywords not present in both the query and the
/// evidence are dropped.
std::vector<std::string> extract_keywords(const std::string& query,
                                          const std::string& evidence,
                                          LlmClient& llm);

/// Offline extractor: terms shared by query and evidence, ranked by idf,
/// top max_keywords.
std::vector<std::string> extract_keywords_stub(const std::string& query,
                                               const std::string& evidence,
                                               const InvertedIndex& index,
                                               size_t max_keywords = 5);

/// Replaces every occurrence of each keyword with the literal token
/// [MASK]. Matching is case-insensitive on whole-phrase boundaries and
/// processes longer keywords first.
std::string mask_keywords(const std::string& query,
                          const std::vector<std::string>& keywords);

/// Longest-first replacement of each keyword by its synonym. Throws when
/// the map misses a keyword, listing the gap.
std::string substitute_keywords(const std::string& query,
                                const std::vector<std::string>& keywords,
                                const std::map<std::string, std::string>& synonyms);

/// LLM synonym generation for a keyword list (one substitution each).
std::map<std::string, std::string> generate_synonyms(
    const std::string& query, const std::vector<std::string>& keywords,
    LlmClient& llm);

const std::string& keyword_extraction_prompt_template();
const std::string& synonym_generation_prompt_template();

void save_perturbed_queries(const std::vector<PerturbedQuery>& queries,
                            const std::filesystem::path& path);
std::vector<PerturbedQuery> load_perturbed_queries(
    const std::filesystem::path& path);

/// One method x variant row of the delta table.
struct PerturbationRow {
    std::string method;
    std::string variant;  // original | masked | substituted
    double hit1 = 0, hit4 = 0, hit10 = 0, map10 = 0;
    double d_hit1 = 0, d_hit4 = 0, d_hit10 = 0, d_map10 = 0;  // drop vs original
};

/// A retrieval method to probe: name plus a run function over queries.
struct PerturbationMethod {
    std::string name;
    std::function<Run(const std::vector<EvalQuery>&)> run;
};

/// Evaluates every method on original / masked / substituted variants and
/// reports metric drops relative to the original.
std::vector<PerturbationRow> run_perturbation_eval(
    const std::vector<PerturbationMethod>& methods,
    const std::vector<PerturbedQuery>& variants,
    const std::vector<EvalQuery>& gold, const std::vector<Chunk>& chunks,
    const EvalConfig& config = {});

void save_delta_table(const std::vector<PerturbationRow>& rows,
                      const std::filesystem::path& path);

}  // namespace bmembed
