#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "bmembed/bm25.hpp"
#include "bmembed/corpus.hpp"

namespace bmembed {

struct DomainEvent {
    enum class Type { fine_grained, general };
    std::string event;
    std::string topic;  // may be empty
    std::vector<std::string> original_context;
    Type type = Type::fine_grained;
};

struct SyntheticQuery {
    std::string query_id;
    std::string text;
    DomainEvent source_event;
    std::vector<std::string> evidence;
    std::string source_doc_id;
};

/// Single-call completion interface; implementations are the remote
/// chat-completions client and the deterministic offline stub.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

/// HTTP chat-completions client. Endpoint and model are explicit; the API
/// key comes from an environment variable. Retries 429/5xx with
/// exponential backoff, at most 5 attempts.
class HttpLlmClient : public LlmClient {
public:
    HttpLlmClient(std::string endpoint, std::string model,
                  std::string api_key_env = "BMEMBED_API_KEY");
    std::string complete(const std::string& prompt) override;

private:
    std::string endpoint_;
    std::string model_;
    std::string api_key_;
};

/// Offline stand-in: events are the top sentences of the prompt's document
/// ranked by summed token idf, and questions are templated from the top
/// idf terms of each event's context. Pure in (prompt, seed).
class StubLlmClient : public LlmClient {
public:
    StubLlmClient(const InvertedIndex* index, uint64_t seed,
                  int events_per_doc = 3);
    std::string complete(const std::string& prompt) override;

private:
    const InvertedIndex* index_;  // idf source; may be null (uniform idf)
    uint64_t seed_;
    int events_per_doc_;
};

/// Prompt templates with {doc} / {event} placeholders.
const std::string& event_extraction_prompt_template();
const std::string& query_synthesis_prompt_template();

std::string fill_prompt(const std::string& tmpl, const std::string& key,
                        const std::string& value);

/// Tolerant parser for the bracketed-label event format. Returns an empty
/// list when no [Event]: label is present; never throws on arbitrary text.
std::vector<DomainEvent> parse_event_block(const std::string& raw_text);

/// One extraction call for the document; context passages that cannot be
/// located in the document (after whitespace folding, ignoring quotes and
/// ellipses) are dropped.
std::vector<DomainEvent> extract_events(const Document& doc, LlmClient& llm);

/// One synthesis call covering all the document's events. Throws when the
/// response has no [Question]: markers.
std::vector<SyntheticQuery> synthesize_queries(const Document& doc,
                                               const std::vector<DomainEvent>& events,
                                               LlmClient& llm);

struct QueryGenOptions {
    int max_queries = 0;  // 0 = unlimited
    uint64_t seed = 0;    // used when sampling down to max_queries
};

/// Runs extraction + synthesis over the corpus, de-duplicates by exact
/// query text, and caps to max_queries by seeded uniform sampling.
std::vector<SyntheticQuery> generate_queries(const std::vector<Document>& docs,
                                             LlmClient& llm,
                                             const QueryGenOptions& options = {});

void save_queries(const std::vector<SyntheticQuery>& queries,
                  const std::filesystem::path& path);
std::vector<SyntheticQuery> load_queries(const std::filesystem::path& path);

}  // namespace bmembed
