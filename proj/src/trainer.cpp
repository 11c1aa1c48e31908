#include "bmembed/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bmembed/util.hpp"

namespace bmembed {

namespace {

std::vector<double> softmax(std::span<const double> x) {
    double max_x = *std::max_element(x.begin(), x.end());
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - max_x);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace

std::vector<double> target_distribution(std::span<const double> scores,
                                        double alpha) {
    if (scores.empty())
        throw std::invalid_argument("target_distribution: empty score list");
    if (!(alpha > 0.0))
        throw std::invalid_argument("target_distribution: alpha must be > 0");
    std::vector<double> scaled(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i]))
            throw std::invalid_argument("target_distribution: non-finite score");
        scaled[i] = scores[i] / alpha;
    }
    return softmax(scaled);
}

double listnet_loss(std::span<const double> similarities,
                    std::span<const double> scores, double alpha) {
    if (similarities.size() != scores.size())
        throw std::invalid_argument("listnet_loss: length mismatch");
    auto pr = target_distribution(scores, alpha);
    auto ps = softmax(similarities);
    double loss = 0.0;
    for (size_t j = 0; j < pr.size(); ++j) loss -= pr[j] * std::log(ps[j]);
    return loss;
}

double listmle_loss(std::span<const double> similarities,
                    std::span<const double> scores) {
    if (similarities.size() != scores.size())
        throw std::invalid_argument("listmle_loss: length mismatch");
    const size_t m = scores.size();
    if (m == 0) throw std::invalid_argument("listmle_loss: empty lists");
    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores[a] > scores[b];  // ties keep original index order
    });
    // Suffix log-sum-exp over the sorted similarities.
    double loss = 0.0;
    double max_s = similarities[order[m - 1]];
    double sum_exp = 0.0;
    std::vector<double> suffix_lse(m);
    for (size_t j = m; j-- > 0;) {
        const double s = similarities[order[j]];
        if (s > max_s) {
            sum_exp *= std::exp(max_s - s);
            max_s = s;
        }
        sum_exp += std::exp(s - max_s);
        suffix_lse[j] = max_s + std::log(sum_exp);
    }
    for (size_t j = 0; j < m; ++j)
        loss += suffix_lse[j] - similarities[order[j]];
    return loss;
}

double infonce_loss(std::span<const float> query,
                    std::span<const float> positive,
                    const std::vector<EmbeddingVector>& negatives, double tau) {
    if (negatives.empty())
        throw std::invalid_argument("infonce_loss: need at least one negative");
    if (!(tau > 0.0)) throw std::invalid_argument("infonce_loss: tau must be > 0");
    std::vector<double> logits;
    logits.push_back(cosine_similarity(query, positive) / tau);
    for (const auto& n : negatives)
        logits.push_back(
            cosine_similarity(query, std::span<const float>(n)) / tau);
    auto p = softmax(logits);
    return -std::log(p[0]);
}

namespace {

struct Forward {
    std::vector<double> u;     // adapted, unit norm
    double pre_norm = 0.0;     // |x + Wx|
};

Forward forward_one(const Adapter& adapter, const std::vector<double>& x) {
    const size_t d = adapter.d;
    std::vector<double> y(x);
    for (size_t i = 0; i < d; ++i) {
        const double* row = adapter.w.data() + i * d;
        double acc = 0.0;
        for (size_t j = 0; j < d; ++j) acc += row[j] * x[j];
        y[i] += acc;
    }
    double norm_sq = 0.0;
    for (double v : y) norm_sq += v * v;
    if (norm_sq == 0.0)
        throw std::runtime_error("adapter output degenerate (x + Wx = 0)");
    Forward f;
    f.pre_norm = std::sqrt(norm_sq);
    f.u = std::move(y);
    for (double& v : f.u) v /= f.pre_norm;
    return f;
}

/// Accumulates grad += outer(a, x).
void add_outer(std::vector<double>& grad, std::span<const double> a,
               std::span<const double> x) {
    const size_t d = a.size();
    for (size_t i = 0; i < d; ++i) {
        if (a[i] == 0.0) continue;
        double ai = a[i];
        double* row = grad.data() + i * d;
        for (size_t j = 0; j < d; ++j) row[j] += ai * x[j];
    }
}

/// Common chain rule: given dL/ds_j for similarities s_j = u_q . u_j,
/// back-propagates through the normalization and the residual projection.
GradientResult chain_through_adapter(const std::vector<double>& query,
                                     const std::vector<std::vector<double>>& passages,
                                     const Adapter& adapter,
                                     const std::vector<double>& dl_ds,
                                     double loss) {
    const size_t d = adapter.d;
    const size_t m = passages.size();
    Forward fq = forward_one(adapter, query);
    std::vector<Forward> fp;
    fp.reserve(m);
    for (const auto& p : passages) fp.push_back(forward_one(adapter, p));

    GradientResult out;
    out.loss = loss;
    out.grad.assign(d * d, 0.0);

    // Query side: a_q = sum_j g_j (u_j - s_j u_q) / |y_q|
    std::vector<double> a_q(d, 0.0);
    for (size_t j = 0; j < m; ++j) {
        const double g = dl_ds[j];
        if (g == 0.0) continue;
        double s = 0.0;
        for (size_t i = 0; i < d; ++i) s += fq.u[i] * fp[j].u[i];
        for (size_t i = 0; i < d; ++i)
            a_q[i] += g * (fp[j].u[i] - s * fq.u[i]);
    }
    for (double& v : a_q) v /= fq.pre_norm;
    add_outer(out.grad, a_q, query);

    // Passage side: a_j = g_j (u_q - s_j u_j) / |y_j|
    std::vector<double> a_j(d);
    for (size_t j = 0; j < m; ++j) {
        const double g = dl_ds[j];
        if (g == 0.0) continue;
        double s = 0.0;
        for (size_t i = 0; i < d; ++i) s += fq.u[i] * fp[j].u[i];
        for (size_t i = 0; i < d; ++i)
            a_j[i] = g * (fq.u[i] - s * fp[j].u[i]) / fp[j].pre_norm;
        add_outer(out.grad, a_j, passages[j]);
    }
    return out;
}

std::vector<double> similarities_of(const Adapter& adapter,
                                    const std::vector<double>& query,
                                    const std::vector<std::vector<double>>& passages) {
    Forward fq = forward_one(adapter, query);
    std::vector<double> s;
    s.reserve(passages.size());
    for (const auto& p : passages) {
        Forward f = forward_one(adapter, p);
        double dot = 0.0;
        for (size_t i = 0; i < adapter.d; ++i) dot += fq.u[i] * f.u[i];
        s.push_back(std::clamp(dot, -1.0, 1.0));
    }
    return s;
}

}  // namespace

GradientResult listnet_gradient(const TrainingBatch& batch,
                                const Adapter& adapter, double alpha) {
    auto s = similarities_of(adapter, batch.query, batch.passages);
    auto pr = target_distribution(batch.targets, alpha);
    auto ps = softmax(s);
    double loss = 0.0;
    std::vector<double> dl_ds(s.size());
    for (size_t j = 0; j < s.size(); ++j) {
        loss -= pr[j] * std::log(ps[j]);
        dl_ds[j] = ps[j] - pr[j];
    }
    return chain_through_adapter(batch.query, batch.passages, adapter, dl_ds,
                                 loss);
}

GradientResult listmle_gradient(const TrainingBatch& batch,
                                const Adapter& adapter) {
    auto s = similarities_of(adapter, batch.query, batch.passages);
    const size_t m = s.size();
    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return batch.targets[a] > batch.targets[b];
    });
    // dL/ds_{pi(i)} = sum_{t<=i} softmax over suffix t evaluated at pi(i) - 1
    std::vector<double> dl_ds(m, 0.0);
    double loss = 0.0;
    for (size_t t = 0; t < m; ++t) {
        double max_s = s[order[t]];
        for (size_t i = t; i < m; ++i) max_s = std::max(max_s, s[order[i]]);
        double denom = 0.0;
        for (size_t i = t; i < m; ++i) denom += std::exp(s[order[i]] - max_s);
        loss += max_s + std::log(denom) - s[order[t]];
        for (size_t i = t; i < m; ++i)
            dl_ds[order[i]] += std::exp(s[order[i]] - max_s) / denom;
        dl_ds[order[t]] -= 1.0;
    }
    return chain_through_adapter(batch.query, batch.passages, adapter, dl_ds,
                                 loss);
}

GradientResult infonce_gradient(const ContrastiveBatch& batch,
                                const Adapter& adapter, double tau) {
    const size_t n = batch.queries.size();
    if (n == 0) throw std::invalid_argument("infonce_gradient: empty batch");
    if (n < 2)
        throw std::invalid_argument("infonce_gradient: need in-batch negatives");
    const size_t d = adapter.d;
    GradientResult total;
    total.grad.assign(d * d, 0.0);
    for (size_t qi = 0; qi < n; ++qi) {
        // Candidates: own positive first, then the other positives.
        std::vector<std::vector<double>> candidates;
        candidates.push_back(batch.positives[qi]);
        for (size_t j = 0; j < n; ++j)
            if (j != qi) candidates.push_back(batch.positives[j]);
        auto s = similarities_of(adapter, batch.queries[qi], candidates);
        std::vector<double> logits(s.size());
        for (size_t j = 0; j < s.size(); ++j) logits[j] = s[j] / tau;
        auto p = softmax(logits);
        double loss = -std::log(p[0]);
        std::vector<double> dl_ds(s.size());
        for (size_t j = 0; j < s.size(); ++j)
            dl_ds[j] = (p[j] - (j == 0 ? 1.0 : 0.0)) / tau;
        auto g = chain_through_adapter(batch.queries[qi], candidates, adapter,
                                       dl_ds, loss);
        total.loss += g.loss / static_cast<double>(n);
        for (size_t i = 0; i < total.grad.size(); ++i)
            total.grad[i] += g.grad[i] / static_cast<double>(n);
    }
    return total;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    int t = 0;
};

void apply_update(Adapter& adapter, const std::vector<double>& grad,
                  const TrainConfig& config, AdamState& adam) {
    if (config.optimizer == OptimizerKind::sgd) {
        for (size_t i = 0; i < adapter.w.size(); ++i)
            adapter.w[i] -= config.lr * grad[i];
        return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (adam.m.empty()) {
        adam.m.assign(adapter.w.size(), 0.0);
        adam.v.assign(adapter.w.size(), 0.0);
    }
    ++adam.t;
    const double bc1 = 1.0 - std::pow(beta1, adam.t);
    const double bc2 = 1.0 - std::pow(beta2, adam.t);
    for (size_t i = 0; i < adapter.w.size(); ++i) {
        adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * grad[i];
        adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double m_hat = adam.m[i] / bc1;
        const double v_hat = adam.v[i] / bc2;
        adapter.w[i] -= config.lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

std::vector<double> to_double(const EmbeddingVector& v) {
    return std::vector<double>(v.begin(), v.end());
}

std::vector<double> maybe_normalize_targets(const std::vector<double>& r,
                                            bool enabled) {
    if (!enabled || r.empty()) return r;
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    if (*hi == *lo) return std::vector<double>(r.size(), 0.0);
    std::vector<double> out(r.size());
    for (size_t i = 0; i < r.size(); ++i) out[i] = (r[i] - *lo) / (*hi - *lo);
    return out;
}

/// Embedding cache shared across steps; texts are frozen, so one fetch each.
class EmbeddingCache {
public:
    explicit EmbeddingCache(EmbeddingProvider& provider) : provider_(provider) {}

    const std::vector<double>& get(const std::string& text) {
        auto it = cache_.find(text);
        if (it != cache_.end()) return it->second;
        auto v = provider_.embed(text);
        bool zero = std::all_of(v.begin(), v.end(),
                                [](float x) { return x == 0.0f; });
        if (zero)
            throw std::runtime_error("cannot train on empty-text embedding");
        auto [pos, _] = cache_.emplace(text, to_double(v));
        return pos->second;
    }

private:
    EmbeddingProvider& provider_;
    std::unordered_map<std::string, std::vector<double>> cache_;
};

}  // namespace

TrainResult train(const std::vector<RankingSample>& samples,
                  const std::unordered_map<std::string, std::string>& chunk_texts,
                  EmbeddingProvider& provider, const TrainConfig& config,
                  const EpochResampler& resampler) {
    if (samples.empty()) throw std::invalid_argument("train: no samples");
    if (config.loss == LossKind::infonce)
        throw std::invalid_argument("train: use train_contrastive for infonce");

    TrainResult result;
    result.adapter = Adapter(provider.dim());
    if (config.steps <= 0) return result;

    EmbeddingCache cache(provider);
    auto make_batch = [&](const RankingSample& s) {
        TrainingBatch batch;
        batch.query = cache.get(s.query_text);
        for (const auto& chunk_id : s.passages) {
            auto it = chunk_texts.find(chunk_id);
            if (it == chunk_texts.end())
                throw std::runtime_error("train: unknown chunk " + chunk_id);
            batch.passages.push_back(cache.get(it->second));
        }
        batch.targets = maybe_normalize_targets(s.scores, config.normalize_targets);
        return batch;
    };

    std::vector<RankingSample> epoch_samples = samples;
    std::vector<size_t> order;
    AdamState adam;
    size_t pos = 0;
    uint64_t epoch = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int step = 0; step < config.steps; ++step) {
        if (pos == order.size()) {
            const uint64_t epoch_seed = mix_seed(config.seed, epoch);
            if (resampler && config.resample_per_epoch && epoch > 0)
                epoch_samples = resampler(epoch_seed);
            order.resize(epoch_samples.size());
            std::iota(order.begin(), order.end(), 0);
            SplitMix64 rng(epoch_seed);
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.next_below(i)]);
            pos = 0;
            ++epoch;
        }
        const auto& sample = epoch_samples[order[pos++]];
        TrainingBatch batch = make_batch(sample);
        GradientResult g = config.loss == LossKind::listnet
                               ? listnet_gradient(batch, result.adapter,
                                                  config.alpha)
                               : listmle_gradient(batch, result.adapter);
        if (!std::isfinite(g.loss))
            throw std::runtime_error("train: non-finite loss at step " +
                                     std::to_string(step));
        double grad_norm_sq = 0.0;
        for (double v : g.grad) grad_norm_sq += v * v;
        apply_update(result.adapter, g.grad, config, adam);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.curve.push_back({step, g.loss, std::sqrt(grad_norm_sq), secs});
    }
    return result;
}

TrainResult train_contrastive(const std::vector<ContrastivePair>& pairs,
                              EmbeddingProvider& provider,
                              const TrainConfig& config) {
    if (pairs.size() < 2)
        throw std::invalid_argument(
            "train_contrastive: need at least 2 pairs for in-batch negatives");
    TrainResult result;
    result.adapter = Adapter(provider.dim());
    if (config.steps <= 0) return result;

    EmbeddingCache cache(provider);
    const size_t batch_size =
        std::min<size_t>(static_cast<size_t>(config.infonce_batch), pairs.size());
    AdamState adam;
    std::vector<size_t> order;
    size_t pos = 0;
    uint64_t epoch = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int step = 0; step < config.steps; ++step) {
        if (pos + batch_size > order.size()) {
            order.resize(pairs.size());
            std::iota(order.begin(), order.end(), 0);
            SplitMix64 rng(mix_seed(config.seed, epoch));
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.next_below(i)]);
            pos = 0;
            ++epoch;
        }
        ContrastiveBatch batch;
        for (size_t i = 0; i < batch_size; ++i) {
            const auto& pair = pairs[order[pos++]];
            batch.queries.push_back(cache.get(pair.query_text));
            batch.positives.push_back(cache.get(pair.positive_text));
        }
        GradientResult g = infonce_gradient(batch, result.adapter,
                                            config.infonce_tau);
        if (!std::isfinite(g.loss))
            throw std::runtime_error("train_contrastive: non-finite loss at step " +
                                     std::to_string(step));
        double grad_norm_sq = 0.0;
        for (double v : g.grad) grad_norm_sq += v * v;
        apply_update(result.adapter, g.grad, config, adam);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.curve.push_back({step, g.loss, std::sqrt(grad_norm_sq), secs});
    }
    return result;
}

void save_loss_curve(const std::vector<LossRecord>& curve,
                     const std::filesystem::path& path) {
    std::ostringstream out;
    out << "step,loss,grad_norm\n";
    for (const auto& rec : curve)
        out << rec.step << ',' << rec.loss << ',' << rec.grad_norm << '\n';
    write_file(path, out.str());
}

}  // namespace bmembed
