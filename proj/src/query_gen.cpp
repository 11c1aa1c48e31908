#include "bmembed/query_gen.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "bmembed/util.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace bmembed {

namespace {

const char* kEventExtractionPrompt =
    "Given a document, please extract all the events and their associated "
    "topics and organization in the context.\n"
    "\n"
    "Note:\n"
    "1. The event should not contain ambiguous references, such as 'he', "
    "'she,' and 'it', and should use complete names.\n"
    "2. You should give at least one passage in the original text associated "
    "to the event you extract, DO NOT make up any event.\n"
    "3. If there are multiple paragraphs associated to the extracted event, "
    "please list and number all of them.\n"
    "4. If the event does not contain some of the arguments mentioned above, "
    "please leave it empty.\n"
    "5. The type of Event involves fine-grained events and general events, "
    "where fine-grained events focus on specific facts and details while "
    "general events are summarizations of happened fine-grained events.\n"
    "6. Please return the fine-grained events first, then return general "
    "events.\n"
    "The document is:\n"
    "{doc}\n"
    "Please return the extracted event in the following format with following "
    "arguments:\n"
    "\n"
    "[Event]:\n"
    "\n"
    "[Topic]:\n"
    "\n"
    "[Original context]: 1. ......\n"
    "2. ......\n"
    "...\n"
    "\n"
    "[Type]:\n"
    "\n"
    "Events you extract are:\n";

const char* kQuerySynthesisPrompt =
    "Given several events and their original source document, please ask "
    "several questions according to the infomation and give the original "
    "reference paragraph following this format:\n"
    "\n"
    "[Envent]:\n"
    "\n"
    "[Question]:\n"
    "\n"
    "Note: 1. Don't need to mention all the arguments in your question.\n"
    "\n"
    "2. You can involve the original document information, but make sure that "
    "your question is about the topic of the given event.\n"
    "\n"
    "3. You should ask questions separately to different events.\n"
    "\n"
    "Document:\n"
    "\n"
    "{doc}\n"
    "\n"
    "Event:\n"
    "\n"
    "{event}\n"
    "\n"
    "Your question towards given event:\n";

}  // namespace

const std::string& event_extraction_prompt_template() {
    static const std::string tmpl = kEventExtractionPrompt;
    return tmpl;
}

const std::string& query_synthesis_prompt_template() {
    static const std::string tmpl = kQuerySynthesisPrompt;
    return tmpl;
}

std::string fill_prompt(const std::string& tmpl, const std::string& key,
                        const std::string& value) {
    const std::string needle = "{" + key + "}";
    std::string out = tmpl;
    size_t pos = out.find(needle);
    if (pos == std::string::npos)
        throw std::invalid_argument("prompt template lacks placeholder " + needle);
    out.replace(pos, needle.size(), value);
    return out;
}

// ---------------------------------------------------------------------------
// Event block parsing

namespace {

const char* kEventLabel = "[Event]:";
const char* kTopicLabel = "[Topic]:";
const char* kContextLabel = "[Original context]:";
const char* kTypeLabel = "[Type]:";

bool find_label(const std::string& line, const char* label, std::string* rest) {
    size_t pos = line.find(label);
    if (pos == std::string::npos) return false;
    *rest = line.substr(pos + std::string(label).size());
    return true;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Splits "1. foo 2. bar" style numbered context text into passages.
std::vector<std::string> split_numbered(const std::string& text) {
    std::vector<std::string> parts;
    std::string current;
    const auto lines = split_lines(text);
    for (const auto& raw : lines) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        // A "N." prefix starts a new passage.
        size_t i = 0;
        while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
        if (i > 0 && i < line.size() && line[i] == '.') {
            if (!trim(current).empty()) parts.push_back(trim(current));
            current = trim(line.substr(i + 1));
        } else {
            if (!current.empty()) current += ' ';
            current += line;
        }
    }
    if (!trim(current).empty()) parts.push_back(trim(current));
    return parts;
}

std::string strip_quotes_and_ellipses(const std::string& s) {
    std::string out = trim(s);
    auto drop_affix = [&](bool front) {
        bool changed = true;
        while (changed && !out.empty()) {
            changed = false;
            char c = front ? out.front() : out.back();
            if (c == '"' || c == '\'' || c == '.' || c == ' ') {
                if (front)
                    out.erase(out.begin());
                else
                    out.pop_back();
                changed = true;
            }
        }
    };
    drop_affix(true);
    drop_affix(false);
    return out;
}

}  // namespace

std::vector<DomainEvent> parse_event_block(const std::string& raw_text) {
    std::vector<DomainEvent> events;
    DomainEvent* current = nullptr;
    std::string context_buffer;
    bool in_context = false;

    auto flush_context = [&]() {
        if (!in_context || current == nullptr) return;
        for (auto& p : split_numbered(context_buffer)) {
            std::string cleaned = strip_quotes_and_ellipses(p);
            if (!cleaned.empty()) current->original_context.push_back(cleaned);
        }
        context_buffer.clear();
        in_context = false;
    };

    for (const auto& line : split_lines(raw_text)) {
        std::string rest;
        if (find_label(line, kEventLabel, &rest)) {
            flush_context();
            events.emplace_back();
            current = &events.back();
            current->event = trim(rest);
        } else if (find_label(line, kTopicLabel, &rest)) {
            flush_context();
            if (current) current->topic = trim(rest);
        } else if (find_label(line, kContextLabel, &rest)) {
            flush_context();
            in_context = true;
            context_buffer = rest;
        } else if (find_label(line, kTypeLabel, &rest)) {
            flush_context();
            if (current) {
                const std::string t = to_lower(trim(rest));
                current->type = t.find("general") != std::string::npos
                                    ? DomainEvent::Type::general
                                    : DomainEvent::Type::fine_grained;
            }
        } else if (in_context) {
            const std::string t = trim(line);
            if (t.empty()) {
                flush_context();
            } else {
                context_buffer += '\n';
                context_buffer += line;
            }
        }
    }
    flush_context();

    // Drop label-only artifacts with no event text.
    events.erase(std::remove_if(events.begin(), events.end(),
                                [](const DomainEvent& e) {
                                    return trim(e.event).empty();
                                }),
                 events.end());
    return events;
}

std::vector<DomainEvent> extract_events(const Document& doc, LlmClient& llm) {
    if (doc.text.empty())
        throw std::invalid_argument("extract_events: empty document");
    const std::string prompt =
        fill_prompt(event_extraction_prompt_template(), "doc", doc.text);
    const std::string response = llm.complete(prompt);
    if (fold_whitespace(response).empty()) return {};
    auto events = parse_event_block(response);
    if (events.empty())
        throw std::runtime_error(
            "extract_events: unparseable response for doc " + doc.doc_id +
            "; raw response follows:\n" + response);
    // Keep only context passages that locate in the document.
    const std::string folded_doc = fold_whitespace(doc.text);
    for (auto& event : events) {
        std::vector<std::string> kept;
        for (const auto& passage : event.original_context) {
            const std::string needle =
                fold_whitespace(strip_quotes_and_ellipses(passage));
            if (!needle.empty() && folded_doc.find(needle) != std::string::npos)
                kept.push_back(passage);
        }
        event.original_context = std::move(kept);
    }
    return events;
}

namespace {

std::string render_events_for_prompt(const std::vector<DomainEvent>& events) {
    std::ostringstream out;
    for (size_t i = 0; i < events.size(); ++i) {
        out << (i + 1) << ". [Event]: " << events[i].event << '\n';
        if (!events[i].original_context.empty()) {
            out << "[Original context]: ";
            for (size_t j = 0; j < events[i].original_context.size(); ++j)
                out << (j + 1) << ". " << events[i].original_context[j] << '\n';
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace

std::vector<SyntheticQuery> synthesize_queries(
    const Document& doc, const std::vector<DomainEvent>& events,
    LlmClient& llm) {
    if (events.empty())
        throw std::invalid_argument("synthesize_queries: no events");
    std::string prompt = fill_prompt(query_synthesis_prompt_template(), "doc",
                                     doc.text);
    prompt = fill_prompt(prompt, "event", render_events_for_prompt(events));
    const std::string response = llm.complete(prompt);
    if (response.find("[Question]:") == std::string::npos)
        throw std::runtime_error(
            "synthesize_queries: response has no [Question]: markers for doc " +
            doc.doc_id + "; raw response follows:\n" + response);

    std::vector<SyntheticQuery> queries;
    size_t current_event = 0;
    size_t question_count = 0;
    for (const auto& line : split_lines(response)) {
        std::string rest;
        // The synthesis format labels events as [Event]: or [Envent]:.
        if (find_label(line, "[Event]:", &rest) ||
            find_label(line, "[Envent]:", &rest)) {
            const std::string name = fold_whitespace(trim(rest));
            for (size_t i = 0; i < events.size(); ++i) {
                if (fold_whitespace(events[i].event) == name) {
                    current_event = i;
                    break;
                }
            }
        }
        if (find_label(line, "[Question]:", &rest)) {
            const std::string text = trim(rest);
            if (text.empty()) continue;
            const size_t event_idx =
                std::min(current_event, events.size() - 1);
            const auto& event = events[event_idx];
            if (event.original_context.empty()) continue;  // no usable evidence
            SyntheticQuery q;
            q.text = text;
            q.source_event = event;
            q.evidence = event.original_context;
            q.source_doc_id = doc.doc_id;
            queries.push_back(std::move(q));
            ++question_count;
            // Default pairing when the response omits event labels: advance.
            current_event = std::min(current_event + 1, events.size() - 1);
        }
    }
    (void)question_count;
    return queries;
}

// ---------------------------------------------------------------------------
// Deterministic stub

StubLlmClient::StubLlmClient(const InvertedIndex* index, uint64_t seed,
                             int events_per_doc)
    : index_(index), seed_(seed), events_per_doc_(events_per_doc) {}

namespace {

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    std::string current;
    for (size_t i = 0; i < text.size(); ++i) {
        current.push_back(text[i]);
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n')) {
            std::string t = trim(current);
            if (tokenize(t).size() >= 2) sentences.push_back(t);
            current.clear();
        }
    }
    std::string t = trim(current);
    if (tokenize(t).size() >= 2) sentences.push_back(t);
    return sentences;
}

double stub_idf(const InvertedIndex* index, const std::string& token) {
    if (index == nullptr) return 1.0;
    return idf(*index, token);
}

std::vector<std::string> top_idf_terms(const InvertedIndex* index,
                                       const std::string& text, size_t n) {
    std::map<std::string, double> distinct;
    for (const auto& tok : tokenize(text)) distinct[tok] = stub_idf(index, tok);
    std::vector<std::pair<std::string, double>> terms(distinct.begin(),
                                                      distinct.end());
    std::stable_sort(terms.begin(), terms.end(),
                     [](const auto& a, const auto& b) {
                         if (a.second != b.second) return a.second > b.second;
                         return a.first < b.first;
                     });
    std::vector<std::string> out;
    for (size_t i = 0; i < std::min(n, terms.size()); ++i)
        out.push_back(terms[i].first);
    return out;
}

std::string extract_between(const std::string& text, const std::string& begin,
                            const std::string& end) {
    size_t b = text.find(begin);
    if (b == std::string::npos) return "";
    b += begin.size();
    size_t e = text.find(end, b);
    if (e == std::string::npos) return text.substr(b);
    return text.substr(b, e - b);
}

}  // namespace

std::string StubLlmClient::complete(const std::string& prompt) {
    if (prompt.find("Please return the extracted event") != std::string::npos) {
        const std::string doc = trim(extract_between(
            prompt, "The document is:\n", "\nPlease return the extracted event"));
        auto sentences = split_sentences(doc);
        // Rank sentences by summed token idf.
        std::vector<std::pair<double, size_t>> scored;
        for (size_t i = 0; i < sentences.size(); ++i) {
            double score = 0.0;
            for (const auto& tok : tokenize(sentences[i]))
                score += stub_idf(index_, tok);
            scored.emplace_back(score, i);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) {
                             return a.first > b.first;
                         });
        scored.resize(std::min<size_t>(scored.size(),
                                       static_cast<size_t>(events_per_doc_)));
        std::sort(scored.begin(), scored.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        std::ostringstream out;
        int n = 0;
        for (const auto& [score, idx] : scored) {
            const std::string& sentence = sentences[idx];
            auto terms = top_idf_terms(index_, sentence, 1);
            out << ++n << ".\n";
            out << "[Event]: " << sentence << '\n';
            out << "[Topic]: " << (terms.empty() ? "" : terms[0]) << '\n';
            out << "[Original context]: \"" << sentence << "\"\n";
            out << "[Type]: Fine-grained\n\n";
        }
        return out.str();
    }
    if (prompt.find("Your question towards given event") != std::string::npos) {
        const std::string events_text =
            extract_between(prompt, "Event:\n", "\nYour question");
        auto events = parse_event_block(events_text);
        std::ostringstream out;
        int n = 0;
        for (const auto& event : events) {
            const std::string basis = event.original_context.empty()
                                          ? event.event
                                          : event.original_context.front();
            auto terms = top_idf_terms(index_, basis, 2);
            std::string subject;
            for (size_t i = 0; i < terms.size(); ++i) {
                if (i > 0) subject += " and ";
                subject += terms[i];
            }
            if (subject.empty()) subject = "this event";
            out << ++n << ". [Event]: " << event.event << '\n';
            out << "[Question]: What does the document say about " << subject
                << "?\n\n";
        }
        return out.str();
    }
    throw std::runtime_error("StubLlmClient: unrecognized prompt");
}

// ---------------------------------------------------------------------------
// Remote client

HttpLlmClient::HttpLlmClient(std::string endpoint, std::string model,
                             std::string api_key_env)
    : endpoint_(std::move(endpoint)), model_(std::move(model)) {
    const char* key = std::getenv(api_key_env.c_str());
    api_key_ = key ? key : "";
}

std::string HttpLlmClient::complete(const std::string& prompt) {
    // Split endpoint into origin and path.
    size_t scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("HttpLlmClient: endpoint must include scheme");
    size_t path_start = endpoint_.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos
                                   ? endpoint_
                                   : endpoint_.substr(0, path_start);
    const std::string path =
        path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

    nlohmann::json body = {
        {"model", model_},
        {"messages", {{{"role", "user"}, {"content", prompt}}}}};
    httplib::Client client(origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!api_key_.empty())
        headers.emplace("Authorization", "Bearer " + api_key_);

    int backoff_ms = 500;
    std::string last_error;
    for (int attempt = 0; attempt < 5; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error";
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw std::runtime_error("HttpLlmClient: HTTP " +
                                     std::to_string(res->status) + ": " +
                                     res->body);
        auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content")
            .get<std::string>();
    }
    throw std::runtime_error("HttpLlmClient: retries exhausted (" + last_error +
                             ")");
}

// ---------------------------------------------------------------------------
// Batch generation + persistence

std::vector<SyntheticQuery> generate_queries(const std::vector<Document>& docs,
                                             LlmClient& llm,
                                             const QueryGenOptions& options) {
    std::vector<SyntheticQuery> all;
    std::set<std::string> seen_text;
    for (const auto& doc : docs) {
        auto events = extract_events(doc, llm);
        events.erase(std::remove_if(events.begin(), events.end(),
                                    [](const DomainEvent& e) {
                                        return e.original_context.empty();
                                    }),
                     events.end());
        if (events.empty()) continue;
        for (auto& q : synthesize_queries(doc, events, llm)) {
            if (!seen_text.insert(q.text).second) continue;  // exact dup
            q.query_id = "q" + std::to_string(all.size());
            all.push_back(std::move(q));
        }
    }
    if (options.max_queries > 0 &&
        all.size() > static_cast<size_t>(options.max_queries)) {
        // Seeded uniform down-sample, order-preserving.
        std::vector<size_t> idx(all.size());
        std::iota(idx.begin(), idx.end(), 0);
        SplitMix64 rng(options.seed);
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.next_below(i)]);
        idx.resize(static_cast<size_t>(options.max_queries));
        std::sort(idx.begin(), idx.end());
        std::vector<SyntheticQuery> kept;
        kept.reserve(idx.size());
        for (size_t i : idx) kept.push_back(std::move(all[i]));
        all = std::move(kept);
    }
    return all;
}

void save_queries(const std::vector<SyntheticQuery>& queries,
                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& q : queries) {
        nlohmann::json j = {{"query_id", q.query_id},
                            {"text", q.text},
                            {"evidence", q.evidence},
                            {"doc_id", q.source_doc_id}};
        out << j.dump() << '\n';
    }
}

std::vector<SyntheticQuery> load_queries(const std::filesystem::path& path) {
    std::string content = read_file(path);
    std::vector<SyntheticQuery> queries;
    for (const auto& line : split_lines(content)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        SyntheticQuery q;
        q.query_id = j.at("query_id").get<std::string>();
        q.text = j.at("text").get<std::string>();
        q.evidence = j.at("evidence").get<std::vector<std::string>>();
        q.source_doc_id = j.at("doc_id").get<std::string>();
        queries.push_back(std::move(q));
    }
    return queries;
}

}  // namespace bmembed
