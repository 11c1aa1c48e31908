#include "bmembed/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bmembed/util.hpp"

namespace bmembed {

EmbeddingVector EmbeddingProvider::embed(const std::string& text) {
    auto batch = embed_batch({text});
    return std::move(batch.front());
}

ToyEmbedder::ToyEmbedder(size_t dim, uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim == 0) throw std::invalid_argument("ToyEmbedder: dim must be positive");
}

EmbeddingVector ToyEmbedder::token_vector(const std::string& token) const {
    SplitMix64 rng(mix_seed(seed_, fnv1a(token)));
    std::vector<double> v(dim_);
    double norm_sq = 0.0;
    for (auto& x : v) {
        x = rng.next_gaussian();
        norm_sq += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    EmbeddingVector out(dim_);
    for (size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

std::vector<EmbeddingVector> ToyEmbedder::embed_batch(
    const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        auto tokens = tokenize(text, tok_);
        std::vector<double> acc(dim_, 0.0);
        for (const auto& tok : tokens) {
            auto tv = token_vector(tok);
            for (size_t i = 0; i < dim_; ++i) acc[i] += tv[i];
        }
        double norm_sq = 0.0;
        for (double x : acc) norm_sq += x * x;
        EmbeddingVector v(dim_, 0.0f);
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (size_t i = 0; i < dim_; ++i)
                v[i] = static_cast<float>(acc[i] * inv);
        }
        out.push_back(std::move(v));
    }
    return out;
}

namespace {
constexpr char kStoreMagic[4] = {'B', 'M', 'E', 'S'};
}

FileStoreProvider::FileStoreProvider(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding store " + path.string());
    char magic[4];
    uint32_t version = 0, d = 0;
    uint64_t count = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || std::memcmp(magic, kStoreMagic, 4) != 0)
        throw std::runtime_error("not an embedding store: " + path.string());
    if (version != 1)
        throw std::runtime_error("unsupported store version in " + path.string());
    dim_ = d;
    static const char* hex = "0123456789abcdef";
    for (uint64_t i = 0; i < count; ++i) {
        unsigned char key[32];
        in.read(reinterpret_cast<char*>(key), 32);
        EmbeddingVector v(dim_);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(dim_ * sizeof(float)));
        if (!in) throw std::runtime_error("truncated embedding store " + path.string());
        std::string key_hex;
        key_hex.reserve(64);
        for (unsigned char c : key) {
            key_hex.push_back(hex[c >> 4]);
            key_hex.push_back(hex[c & 0xf]);
        }
        vectors_.emplace(std::move(key_hex), std::move(v));
    }
}

std::vector<EmbeddingVector> FileStoreProvider::embed_batch(
    const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        auto it = vectors_.find(sha256_hex(text));
        if (it == vectors_.end())
            throw std::runtime_error("embedding store miss for key " +
                                     sha256_hex(text));
        out.push_back(it->second);
    }
    return out;
}

void write_embedding_store(const std::filesystem::path& path, size_t dim,
                           const std::vector<std::string>& texts,
                           const std::vector<EmbeddingVector>& vectors) {
    if (texts.size() != vectors.size())
        throw std::invalid_argument("write_embedding_store: size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kStoreMagic, 4);
    uint32_t version = 1, d = static_cast<uint32_t>(dim);
    uint64_t count = texts.size();
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (size_t i = 0; i < texts.size(); ++i) {
        if (vectors[i].size() != dim)
            throw std::invalid_argument("write_embedding_store: dim mismatch");
        auto key = sha256_digest(texts[i]);
        out.write(reinterpret_cast<const char*>(key.data()), 32);
        out.write(reinterpret_cast<const char*>(vectors[i].data()),
                  static_cast<std::streamsize>(dim * sizeof(float)));
    }
}

bool Adapter::is_zero() const {
    for (double x : w)
        if (x != 0.0) return false;
    return true;
}

std::vector<double> Adapter::apply_double(std::span<const double> x) const {
    if (x.size() != d) throw std::invalid_argument("Adapter: dimension mismatch");
    std::vector<double> y(x.begin(), x.end());
    for (size_t i = 0; i < d; ++i) {
        const double* row = w.data() + i * d;
        double acc = 0.0;
        for (size_t j = 0; j < d; ++j) acc += row[j] * x[j];
        y[i] += acc;
    }
    double norm_sq = 0.0;
    for (double v : y) norm_sq += v * v;
    if (norm_sq == 0.0)
        throw std::runtime_error("Adapter: degenerate output (x + Wx = 0)");
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : y) v *= inv;
    return y;
}

EmbeddingVector Adapter::apply(const EmbeddingVector& x) const {
    if (x.size() != d) throw std::invalid_argument("Adapter: dimension mismatch");
    // W = 0 is the identity on normalized inputs; returning the input
    // unchanged keeps identity-at-init exact, not just up to rounding.
    if (is_zero()) return x;
    std::vector<double> xd(x.begin(), x.end());
    auto y = apply_double(xd);
    EmbeddingVector out(d);
    for (size_t i = 0; i < d; ++i) out[i] = static_cast<float>(y[i]);
    return out;
}

namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero vector");
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    return cosine_impl(a, b);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    return cosine_impl(a, b);
}

EmbeddingVector l2_normalize(const EmbeddingVector& x) {
    double norm_sq = 0.0;
    for (float v : x) norm_sq += static_cast<double>(v) * static_cast<double>(v);
    if (norm_sq == 0.0) throw std::invalid_argument("l2_normalize: zero vector");
    const double inv = 1.0 / std::sqrt(norm_sq);
    EmbeddingVector out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        out[i] = static_cast<float>(x[i] * inv);
    return out;
}

namespace {
constexpr char kAdapterMagic[4] = {'B', 'M', 'A', 'D'};
}

void save_adapter(const AdapterCheckpoint& ckpt,
                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kAdapterMagic, 4);
    uint32_t version = 1;
    uint32_t d = static_cast<uint32_t>(ckpt.adapter.d);
    uint32_t loss_len = static_cast<uint32_t>(ckpt.loss.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(&ckpt.step), 4);
    out.write(reinterpret_cast<const char*>(&loss_len), 4);
    out.write(ckpt.loss.data(), loss_len);
    std::vector<float> w32(ckpt.adapter.w.begin(), ckpt.adapter.w.end());
    out.write(reinterpret_cast<const char*>(w32.data()),
              static_cast<std::streamsize>(w32.size() * sizeof(float)));
}

AdapterCheckpoint load_adapter(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open adapter " + path.string());
    char magic[4];
    uint32_t version = 0, d = 0, step = 0, loss_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    in.read(reinterpret_cast<char*>(&step), 4);
    in.read(reinterpret_cast<char*>(&loss_len), 4);
    if (!in || std::memcmp(magic, kAdapterMagic, 4) != 0)
        throw std::runtime_error("not an adapter checkpoint: " + path.string());
    if (version != 1)
        throw std::runtime_error("unsupported adapter version in " + path.string());
    AdapterCheckpoint ckpt;
    ckpt.version = version;
    ckpt.step = step;
    ckpt.loss.resize(loss_len);
    in.read(ckpt.loss.data(), loss_len);
    ckpt.adapter = Adapter(d);
    std::vector<float> w32(static_cast<size_t>(d) * d);
    in.read(reinterpret_cast<char*>(w32.data()),
            static_cast<std::streamsize>(w32.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated adapter checkpoint " + path.string());
    ckpt.adapter.w.assign(w32.begin(), w32.end());
    return ckpt;
}

}  // namespace bmembed
