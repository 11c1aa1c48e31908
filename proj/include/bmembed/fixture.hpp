#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bmembed/corpus.hpp"
#include "bmembed/eval.hpp"

namespace bmembed {

/// Parameters of the bundled synthetic "jargon corpus": technical notes
/// full of invented product codes and domain nouns, plus gold evaluation
/// queries with exact-sentence evidence and a synonym lexicon for the
/// perturbation probes.
struct FixtureSpec {
    int num_docs = 200;
    int num_eval_queries = 60;
    uint64_t seed = 42;
    int filler_max = 120;  // per-doc cap on auxiliary filler tokens
};

struct Fixture {
    std::vector<Document> documents;
    std::vector<EvalQuery> eval_queries;
    std::map<std::string, std::string> synonym_lexicon;  // token -> substitute
};

Fixture generate_jargon_fixture(const FixtureSpec& spec = {});

/// Writes corpus.jsonl, gold.jsonl and synonyms.json under dir.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

std::map<std::string, std::string> load_synonym_lexicon(
    const std::filesystem::path& path);

}  // namespace bmembed
