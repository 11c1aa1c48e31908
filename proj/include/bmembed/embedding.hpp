#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bmembed/corpus.hpp"

namespace bmembed {

using EmbeddingVector = std::vector<float>;

/// Uniform front for base embedding backends. Same text must map to the
/// same vector within one provider instance. Empty text embeds to the
/// all-zero vector, which callers treat as the missing-content marker.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual size_t dim() const = 0;
    virtual std::vector<EmbeddingVector> embed_batch(
        const std::vector<std::string>& texts) = 0;
    EmbeddingVector embed(const std::string& text);
};

/// Hermetic test double: every token hashes to a fixed random unit vector
/// and a text embeds to the L2-normalized sum. Pure in (text, dim, seed).
class ToyEmbedder : public EmbeddingProvider {
public:
    explicit ToyEmbedder(size_t dim = 256, uint64_t seed = 0);
    size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(
        const std::vector<std::string>& texts) override;

private:
    EmbeddingVector token_vector(const std::string& token) const;
    size_t dim_;
    uint64_t seed_;
    TokenizerConfig tok_;
};

/// Read-only store of precomputed embeddings keyed by SHA-256 of the
/// exact text. Missing keys are errors.
class FileStoreProvider : public EmbeddingProvider {
public:
    explicit FileStoreProvider(const std::filesystem::path& path);
    size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(
        const std::vector<std::string>& texts) override;

private:
    size_t dim_ = 0;
    std::unordered_map<std::string, EmbeddingVector> vectors_;  // hex key
};

/// Writes the binary store consumed by FileStoreProvider:
/// header {magic "BMES", version u32, d u32, count u64}, then records
/// {32-byte key, d x float32 little-endian}.
void write_embedding_store(const std::filesystem::path& path, size_t dim,
                           const std::vector<std::string>& texts,
                           const std::vector<EmbeddingVector>& vectors);

/// Trainable residual projection over frozen base embeddings:
/// adapt(x) = normalize(x + W x). W = 0 is the identity on normalized
/// inputs, so a fresh adapter reproduces the base provider.
struct Adapter {
    size_t d = 0;
    std::vector<double> w;  // row-major d x d

    explicit Adapter(size_t dim) : d(dim), w(dim * dim, 0.0) {}
    Adapter() = default;

    bool is_zero() const;
    EmbeddingVector apply(const EmbeddingVector& x) const;
    std::vector<double> apply_double(std::span<const double> x) const;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Normalizes to unit L2 norm; throws on the zero vector.
EmbeddingVector l2_normalize(const EmbeddingVector& x);

struct AdapterCheckpoint {
    uint32_t version = 1;
    std::string loss;
    uint32_t step = 0;
    Adapter adapter;
};

void save_adapter(const AdapterCheckpoint& ckpt,
                  const std::filesystem::path& path);
AdapterCheckpoint load_adapter(const std::filesystem::path& path);

}  // namespace bmembed
