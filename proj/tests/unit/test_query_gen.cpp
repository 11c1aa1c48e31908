#include <doctest.h>

#include <filesystem>
#include <set>

#include "bmembed/query_gen.hpp"
#include "bmembed/util.hpp"

using namespace bmembed;

namespace {

/// Canned-response client for exercising the parsers without the stub's
/// sentence heuristics.
class CannedLlm : public LlmClient {
public:
    explicit CannedLlm(std::string extraction, std::string synthesis = "")
        : extraction_(std::move(extraction)), synthesis_(std::move(synthesis)) {}
    std::string complete(const std::string& prompt) override {
        if (prompt.find("Please return the extracted event") != std::string::npos)
            return extraction_;
        return synthesis_;
    }

private:
    std::string extraction_;
    std::string synthesis_;
};

}  // namespace

TEST_CASE("fill_prompt substitutes the placeholder and validates it") {
    CHECK(fill_prompt("before {doc} after", "doc", "BODY") ==
          "before BODY after");
    CHECK_THROWS_AS(fill_prompt("no placeholder", "doc", "x"),
                    std::invalid_argument);
    // The shipped templates carry their placeholders.
    CHECK(event_extraction_prompt_template().find("{doc}") != std::string::npos);
    CHECK(query_synthesis_prompt_template().find("{doc}") != std::string::npos);
    CHECK(query_synthesis_prompt_template().find("{event}") != std::string::npos);
}

TEST_CASE("shipped prompt files match the built-in templates") {
    const auto prompts = std::filesystem::path("prompts");
    if (std::filesystem::exists(prompts / "event_extraction.txt")) {
        CHECK(read_file(prompts / "event_extraction.txt") ==
              event_extraction_prompt_template());
        CHECK(read_file(prompts / "query_synthesis.txt") ==
              query_synthesis_prompt_template());
    }
}

TEST_CASE("parse_event_block handles a three-event bracketed block") {
    const std::string raw =
        "1.\n"
        "[Event]: The retailer opened its seasonal sale early.\n"
        "[Topic]: seasonal sale\n"
        "[Original context]: 1. The retailer opened its seasonal sale a week "
        "early this year.\n"
        "[Type]: Fine-grained\n"
        "\n"
        "2.\n"
        "[Event]: Shoppers reported longer queues at checkout.\n"
        "[Topic]: checkout queues\n"
        "[Original context]: 1. Shoppers reported longer queues.\n"
        "2. Queue times doubled at flagship stores.\n"
        "[Type]: Fine-grained\n"
        "\n"
        "3.\n"
        "[Event]: The seasonal campaign drew record engagement.\n"
        "[Topic]:\n"
        "[Original context]: 1. Engagement records were set.\n"
        "[Type]: General\n";
    const auto events = parse_event_block(raw);
    REQUIRE(events.size() == 3);
    CHECK(events[0].event == "The retailer opened its seasonal sale early.");
    CHECK(events[0].topic == "seasonal sale");
    CHECK(events[0].type == DomainEvent::Type::fine_grained);
    REQUIRE(events[1].original_context.size() == 2);
    CHECK(events[1].original_context[1] == "Queue times doubled at flagship stores");
    CHECK(events[2].topic == "");  // missing topic left empty
    CHECK(events[2].type == DomainEvent::Type::general);
}

TEST_CASE("parse_event_block tolerates shuffled field order") {
    const std::string ordered =
        "[Event]: Something happened.\n"
        "[Topic]: things\n"
        "[Original context]: 1. Something happened in the plant.\n"
        "[Type]: Fine-grained\n";
    const std::string shuffled =
        "[Topic]: things\n"
        "[Event]: Something happened.\n"
        "[Type]: Fine-grained\n"
        "[Original context]: 1. Something happened in the plant.\n";
    const auto a = parse_event_block(ordered);
    const auto b = parse_event_block(shuffled);
    REQUIRE(a.size() == 1);
    REQUIRE(b.size() == 1);
    CHECK(a[0].event == b[0].event);
    CHECK(a[0].original_context == b[0].original_context);
    CHECK(a[0].type == b[0].type);
    // Topic attaches to the preceding event only; the shuffled block's
    // leading topic has no event yet and is dropped.
    CHECK(a[0].topic == "things");
}

TEST_CASE("parse_event_block is total on arbitrary text") {
    CHECK(parse_event_block("").empty());
    CHECK(parse_event_block("no labels at all, just prose").empty());
    CHECK(parse_event_block("[Topic]: orphan topic line").empty());
}

TEST_CASE("extract_events: empty response yields an empty list") {
    CannedLlm llm("   \n  ");
    Document doc{"d0", "Some document text.", {}};
    CHECK(extract_events(doc, llm).empty());
}

TEST_CASE("extract_events: unparseable response raises with the raw text") {
    CannedLlm llm("gibberish with no labels");
    Document doc{"d0", "Some document text.", {}};
    CHECK_THROWS_WITH_AS(extract_events(doc, llm),
                         doctest::Contains("gibberish"), std::runtime_error);
}

TEST_CASE("extract_events drops context passages not found in the document") {
    CannedLlm llm(
        "[Event]: A located event.\n"
        "[Original context]: 1. the gasket was replaced\n"
        "2. this sentence is fabricated\n"
        "[Type]: Fine-grained\n");
    Document doc{"d0", "Before work, the gasket was replaced on site.", {}};
    const auto events = extract_events(doc, llm);
    REQUIRE(events.size() == 1);
    REQUIRE(events[0].original_context.size() == 1);
    CHECK(events[0].original_context[0] == "the gasket was replaced");
}

TEST_CASE("synthesize_queries pairs questions with event evidence") {
    DomainEvent event;
    event.event = "The gasket was replaced.";
    event.original_context = {"the gasket was replaced on site"};
    CannedLlm llm("", "1. [Event]: The gasket was replaced.\n"
                      "[Question]: When was the gasket replaced?\n");
    Document doc{"d0", "the gasket was replaced on site", {}};
    const auto queries = synthesize_queries(doc, {event}, llm);
    REQUIRE(queries.size() == 1);
    CHECK(queries[0].text == "When was the gasket replaced?");
    CHECK(queries[0].evidence == event.original_context);
    CHECK(queries[0].source_doc_id == "d0");
}

TEST_CASE("synthesize_queries requires [Question]: markers") {
    DomainEvent event;
    event.event = "E";
    event.original_context = {"ctx"};
    CannedLlm llm("", "a response without the marker");
    Document doc{"d0", "ctx", {}};
    CHECK_THROWS_AS(synthesize_queries(doc, {event}, llm), std::runtime_error);
    CHECK_THROWS_AS(synthesize_queries(doc, {}, llm), std::invalid_argument);
}

TEST_CASE("stub client on a three-sentence document extracts the sentences") {
    Document doc{"d0",
                 "The flux capacitor hums quietly. Engineers recorded the "
                 "torque values. Every shift files a maintenance report.",
                 {}};
    StubLlmClient stub(nullptr, 42);
    const auto events = extract_events(doc, stub);
    REQUIRE(events.size() == 3);
    CHECK(events[0].original_context ==
          std::vector<std::string>{"The flux capacitor hums quietly"});
    CHECK(events[1].original_context ==
          std::vector<std::string>{"Engineers recorded the torque values"});

    const auto queries = synthesize_queries(doc, events, stub);
    REQUIRE(queries.size() == 3);
    for (const auto& q : queries) {
        CHECK(q.text.rfind("What does the document say about ", 0) == 0);
        CHECK(!q.evidence.empty());
    }
}

TEST_CASE("stub output is deterministic in (corpus, seed)") {
    std::vector<Document> docs = {
        {"d0", "Alpha units ship on Monday. Beta units ship on Friday.", {}},
        {"d1", "The annual audit starts soon. Auditors review the flux logs.", {}}};
    StubLlmClient a(nullptr, 7), b(nullptr, 7);
    const auto qa = generate_queries(docs, a);
    const auto qb = generate_queries(docs, b);
    REQUIRE(qa.size() == qb.size());
    for (size_t i = 0; i < qa.size(); ++i) {
        CHECK(qa[i].query_id == qb[i].query_id);
        CHECK(qa[i].text == qb[i].text);
        CHECK(qa[i].evidence == qb[i].evidence);
    }
    // Every evidence passage locates in its source document after folding.
    for (const auto& q : qa) {
        const Document& src = q.source_doc_id == "d0" ? docs[0] : docs[1];
        for (const auto& passage : q.evidence)
            CHECK(fold_whitespace(src.text).find(fold_whitespace(passage)) !=
                  std::string::npos);
    }
}

TEST_CASE("generate_queries de-duplicates exact text and caps by sampling") {
    // Two identical documents produce identical stub questions; duplicates
    // collapse to one.
    std::vector<Document> docs = {
        {"d0", "The turbine spins fast. The rotor needs grease.", {}},
        {"d1", "The turbine spins fast. The rotor needs grease.", {}}};
    StubLlmClient stub(nullptr, 3);
    const auto deduped = generate_queries(docs, stub);
    std::set<std::string> texts;
    for (const auto& q : deduped) CHECK(texts.insert(q.text).second);

    QueryGenOptions cap;
    cap.max_queries = 1;
    cap.seed = 9;
    const auto capped = generate_queries(docs, stub, cap);
    CHECK(capped.size() == 1);
}

TEST_CASE("query store round-trips") {
    std::vector<Document> docs = {
        {"d0", "Valves open slowly today. Pressure holds at nominal.", {}}};
    StubLlmClient stub(nullptr, 5);
    const auto queries = generate_queries(docs, stub);
    REQUIRE(!queries.empty());
    const auto path =
        std::filesystem::temp_directory_path() / "bmembed_queries_test.jsonl";
    save_queries(queries, path);
    const auto loaded = load_queries(path);
    REQUIRE(loaded.size() == queries.size());
    for (size_t i = 0; i < queries.size(); ++i) {
        CHECK(loaded[i].query_id == queries[i].query_id);
        CHECK(loaded[i].text == queries[i].text);
        CHECK(loaded[i].evidence == queries[i].evidence);
        CHECK(loaded[i].source_doc_id == queries[i].source_doc_id);
    }
    std::filesystem::remove(path);
}
