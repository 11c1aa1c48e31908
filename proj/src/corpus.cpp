#include "bmembed/corpus.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "bmembed/util.hpp"

namespace bmembed {

namespace {

bool is_token_byte(unsigned char c) {
    if (c >= 0x80) return true;  // any UTF-8 multibyte content
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
           (c >= 'A' && c <= 'Z');
}

}  // namespace

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text,
                                             const TokenizerConfig& config) {
    std::vector<TokenSpan> out;
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        if (!is_token_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        size_t begin = i;
        while (i < n && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
        std::string tok(text.substr(begin, i - begin));
        if (config.lowercase) tok = to_lower(tok);
        out.push_back({std::move(tok), begin, i});
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text,
                                  const TokenizerConfig& config) {
    std::vector<std::string> out;
    for (auto& span : tokenize_with_offsets(text, config))
        out.push_back(std::move(span.token));
    return out;
}

std::vector<Chunk> chunk_document(const Document& doc, int chunk_size,
                                  const TokenizerConfig& config) {
    if (chunk_size < 1)
        throw std::invalid_argument("chunk_document: chunk_size must be >= 1");
    auto spans = tokenize_with_offsets(doc.text, config);
    std::vector<Chunk> chunks;
    size_t ordinal = 0;
    for (size_t i = 0; i < spans.size(); i += static_cast<size_t>(chunk_size)) {
        size_t last = std::min(i + static_cast<size_t>(chunk_size), spans.size()) - 1;
        Chunk c;
        c.chunk_id = doc.doc_id + "#" + std::to_string(ordinal++);
        c.doc_id = doc.doc_id;
        c.char_start = spans[i].begin;
        c.char_end = spans[last].end;
        c.text = doc.text.substr(c.char_start, c.char_end - c.char_start);
        c.token_count = static_cast<int>(last - i + 1);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::string content = read_file(path);
    std::vector<Document> docs;
    std::set<std::string> seen;
    size_t line_no = 0;
    for (const auto& line : split_lines(content)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("text") ||
            !j["id"].is_string() || !j["text"].is_string())
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": expected object with string `id` and `text`");
        Document d;
        d.doc_id = j["id"].get<std::string>();
        d.text = j["text"].get<std::string>();
        if (d.text.empty())
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": empty text for id " + d.doc_id);
        if (j.contains("meta")) {
            if (!j["meta"].is_object())
                throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                         ": `meta` must be an object");
            for (auto& [k, v] : j["meta"].items())
                d.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
        if (!seen.insert(d.doc_id).second)
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": duplicate doc_id " + d.doc_id);
        docs.push_back(std::move(d));
    }
    return docs;
}

void save_chunks(const std::vector<Chunk>& chunks,
                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& c : chunks) {
        nlohmann::json j = {{"chunk_id", c.chunk_id}, {"doc_id", c.doc_id},
                            {"text", c.text},         {"token_count", c.token_count},
                            {"char_start", c.char_start}, {"char_end", c.char_end}};
        out << j.dump() << '\n';
    }
}

std::vector<Chunk> load_chunks(const std::filesystem::path& path) {
    std::string content = read_file(path);
    std::vector<Chunk> chunks;
    size_t line_no = 0;
    for (const auto& line : split_lines(content)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("chunk store line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        Chunk c;
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.text = j.at("text").get<std::string>();
        c.token_count = j.at("token_count").get<int>();
        c.char_start = j.at("char_start").get<size_t>();
        c.char_end = j.at("char_end").get<size_t>();
        chunks.push_back(std::move(c));
    }
    return chunks;
}

}  // namespace bmembed
