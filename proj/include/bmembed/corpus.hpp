#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bmembed {

/// Tokenization rule: lowercase (default) maximal runs of letters/digits.
/// Bytes outside ASCII are treated as letters so UTF-8 words survive intact.
struct TokenizerConfig {
    bool lowercase = true;
};

struct Document {
    std::string doc_id;
    std::string text;
    std::map<std::string, std::string> metadata;
};

/// A fixed-size retrieval unit cut from one document on token boundaries.
/// [char_start, char_end) indexes the parent document's raw text.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
    int token_count = 0;
    size_t char_start = 0;
    size_t char_end = 0;
};

struct TokenSpan {
    std::string token;
    size_t begin = 0;  // byte offset into the source text
    size_t end = 0;
};

std::vector<std::string> tokenize(std::string_view text,
                                  const TokenizerConfig& config = {});

/// Tokenize keeping byte offsets; the plain overload drops them.
std::vector<TokenSpan> tokenize_with_offsets(std::string_view text,
                                             const TokenizerConfig& config = {});

/// Splits a document into non-overlapping chunks of at most chunk_size
/// tokens; only the final chunk may be shorter. A token-free document
/// yields no chunks.
std::vector<Chunk> chunk_document(const Document& doc, int chunk_size,
                                  const TokenizerConfig& config = {});

/// Loads a line-JSON corpus: one object per line with `id`, `text`, and
/// optional `meta`. Duplicate ids and malformed records are errors that
/// name the offending line.
std::vector<Document> load_corpus(const std::filesystem::path& path);

void save_chunks(const std::vector<Chunk>& chunks,
                 const std::filesystem::path& path);
std::vector<Chunk> load_chunks(const std::filesystem::path& path);

}  // namespace bmembed
