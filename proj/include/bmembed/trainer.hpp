#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bmembed/embedding.hpp"
#include "bmembed/sampler.hpp"

namespace bmembed {

enum class LossKind { listnet, listmle, infonce };
enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    LossKind loss = LossKind::listnet;
    double alpha = 1.0;        // temperature on the target score list
    double infonce_tau = 0.05;
    double lr = 1e-4;
    int steps = 1000;
    uint64_t seed = 42;
    OptimizerKind optimizer = OptimizerKind::adam;
    bool normalize_targets = false;  // per-list min-max on BM25 scores
    bool resample_per_epoch = false;
    int infonce_batch = 16;
};

struct LossRecord {
    int step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double seconds = 0.0;
};

/// softmax(r / alpha) with max-subtraction. Throws on non-finite scores.
std::vector<double> target_distribution(std::span<const double> scores,
                                        double alpha);

/// Cross-entropy between softmax(r/alpha) and softmax(s).
double listnet_loss(std::span<const double> similarities,
                    std::span<const double> scores, double alpha);

/// Plackett-Luce negative log-likelihood of the ordering induced by the
/// target scores (ties broken by original index).
double listmle_loss(std::span<const double> similarities,
                    std::span<const double> scores);

double infonce_loss(std::span<const float> query,
                    std::span<const float> positive,
                    const std::vector<EmbeddingVector>& negatives, double tau);

/// One sample's frozen base embeddings, kept in double precision for the
/// gradient path.
struct TrainingBatch {
    std::vector<double> query;                 // base embedding of q
    std::vector<std::vector<double>> passages; // base embeddings of p_1..p_m
    std::vector<double> targets;               // r_1..r_m
};

struct GradientResult {
    double loss = 0.0;
    std::vector<double> grad;  // d x d, row-major
};

/// Loss and analytic dL/dW for one batch through cosine similarity and
/// the residual projection.
GradientResult listnet_gradient(const TrainingBatch& batch, const Adapter& adapter,
                                double alpha);
GradientResult listmle_gradient(const TrainingBatch& batch, const Adapter& adapter);

/// InfoNCE batch: queries with their positives; in-batch negatives are the
/// other positives. Returns mean loss over the batch and its gradient.
struct ContrastiveBatch {
    std::vector<std::vector<double>> queries;
    std::vector<std::vector<double>> positives;
};
GradientResult infonce_gradient(const ContrastiveBatch& batch,
                                const Adapter& adapter, double tau);

/// Supplies fresh ranking samples at each epoch boundary; argument is the
/// epoch-derived seed. Used when resample_per_epoch is set.
using EpochResampler = std::function<std::vector<RankingSample>(uint64_t)>;

struct TrainResult {
    Adapter adapter;
    std::vector<LossRecord> curve;
};

/// Optimizes the adapter on ranking samples (listnet / listmle). Passage
/// and query base embeddings are fetched once and cached. Deterministic
/// given the seed.
TrainResult train(const std::vector<RankingSample>& samples,
                  const std::unordered_map<std::string, std::string>& chunk_texts,
                  EmbeddingProvider& provider, const TrainConfig& config,
                  const EpochResampler& resampler = nullptr);

/// Contrastive baseline: (query, evidence) pairs with in-batch negatives.
struct ContrastivePair {
    std::string query_text;
    std::string positive_text;
};
TrainResult train_contrastive(const std::vector<ContrastivePair>& pairs,
                              EmbeddingProvider& provider,
                              const TrainConfig& config);

void save_loss_curve(const std::vector<LossRecord>& curve,
                     const std::filesystem::path& path);

}  // namespace bmembed
