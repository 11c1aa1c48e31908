// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 1-6 are property/oracle checks; 7-9 run the bundled
// jargon fixture end to end through the pipeline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmembed/bm25.hpp"
#include "bmembed/corpus.hpp"
#include "bmembed/embedding.hpp"
#include "bmembed/eval.hpp"
#include "bmembed/fixture.hpp"
#include "bmembed/fusion.hpp"
#include "bmembed/pipeline.hpp"
#include "bmembed/sampler.hpp"
#include "bmembed/trainer.hpp"
#include "bmembed/util.hpp"

using namespace bmembed;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL",
                criterion, what.c_str(), detail.empty() ? "" : " — ",
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

// ---------------------------------------------------------------------------
// Criterion 1: BM25 search equals a brute-force formula evaluation.

double brute_force_score(const std::vector<std::vector<std::string>>& docs,
                         const std::vector<std::string>& query, size_t doc,
                         const Bm25Params& params) {
    const double n = static_cast<double>(docs.size());
    double avg_len = 0.0;
    for (const auto& d : docs) avg_len += static_cast<double>(d.size());
    avg_len /= n;
    double score = 0.0;
    for (const auto& term : query) {
        double df = 0.0;
        for (const auto& d : docs)
            if (std::find(d.begin(), d.end(), term) != d.end()) df += 1.0;
        const double term_idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        double f = 0.0;
        for (const auto& tok : docs[doc])
            if (tok == term) f += 1.0;
        const double len = static_cast<double>(docs[doc].size());
        score += term_idf * f * (params.k1 + 1.0) /
                 (f + params.k1 * (1.0 - params.b + params.b * len / avg_len));
    }
    return score;
}

void criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    SplitMix64 rng(1001);
    const std::vector<std::string> vocab = {
        "alpha", "beta", "gamma", "delta", "eps",  "zeta", "eta",
        "theta", "iota", "kappa", "mu",    "nu",   "xi",   "omega"};
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 200 && ok; ++trial) {
        const size_t n_docs = 2 + rng.next_below(49);
        std::vector<std::vector<std::string>> docs(n_docs);
        std::vector<Chunk> chunks(n_docs);
        for (size_t i = 0; i < n_docs; ++i) {
            const size_t len = 1 + rng.next_below(20);
            std::ostringstream text;
            for (size_t t = 0; t < len; ++t) {
                const auto& w = vocab[rng.next_below(vocab.size())];
                docs[i].push_back(w);
                text << w << ' ';
            }
            std::ostringstream id;
            id << "c";
            id.width(3);
            id.fill('0');
            id << i;
            chunks[i].chunk_id = id.str();
            chunks[i].doc_id = chunks[i].chunk_id;
            chunks[i].text = text.str();
            chunks[i].token_count = static_cast<int>(len);
        }
        const Bm25Params params{0.2 + rng.next_double() * 2.5, rng.next_double()};
        const auto index = build_index(chunks, params);
        std::vector<std::string> query;
        const size_t q_len = 1 + rng.next_below(8);
        for (size_t t = 0; t < q_len; ++t)
            query.push_back(vocab[rng.next_below(vocab.size())]);

        std::vector<std::pair<double, std::string>> expected;
        for (size_t i = 0; i < n_docs; ++i) {
            const double s = brute_force_score(docs, query, i, params);
            if (s > 0.0) expected.emplace_back(s, chunks[i].chunk_id);
        }
        std::sort(expected.begin(), expected.end(),
                  [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                  });
        const auto ranked = search(index, query, n_docs);
        if (ranked.entries.size() != expected.size()) {
            ok = false;
            detail = "result count mismatch at trial " + std::to_string(trial);
            break;
        }
        for (size_t i = 0; i < expected.size(); ++i) {
            if (ranked.entries[i].chunk_id != expected[i].second ||
                std::abs(ranked.entries[i].score - expected[i].first) > 1e-9) {
                ok = false;
                detail = "mismatch at trial " + std::to_string(trial);
                break;
            }
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (seconds >= 10.0) {
        ok = false;
        detail = "runtime " + std::to_string(seconds) + "s";
    }
    report(1, ok, "BM25 search matches the brute-force oracle on 200 corpora",
           detail);
}

// ---------------------------------------------------------------------------
// Criterion 2: partition fidelity and properties.

void criterion_2() {
    bool ok = true;
    std::string detail;

    PartitionScheme uniform;
    uniform.strategy = PartitionStrategy::uniform;
    uniform.m = 4;
    const std::vector<RankInterval> uniform_expected = {
        {0, 5}, {5, 10}, {10, 15}, {15, 20}};
    if (partition(20, 4, uniform) != uniform_expected) {
        ok = false;
        detail = "uniform(20, 4) mismatch";
    }

    PartitionScheme explicit_scheme;
    explicit_scheme.strategy = PartitionStrategy::explicit_bounds;
    explicit_scheme.m = 4;
    explicit_scheme.boundaries = {{0, 2}, {2, 6}, {6, 12}, {12, 20}};
    if (partition(20, 4, explicit_scheme) != explicit_scheme.boundaries) {
        ok = false;
        detail = "explicit(20, 4) mismatch";
    }

    SplitMix64 rng(2002);
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const int m = 2 + static_cast<int>(rng.next_below(12));
        const int k = m + static_cast<int>(rng.next_below(1000));
        PartitionScheme scheme;
        const bool f2c = rng.next_below(2) == 0;
        scheme.strategy = f2c ? PartitionStrategy::fine_to_coarse
                              : PartitionStrategy::uniform;
        scheme.m = m;
        scheme.first_len = 1 + static_cast<int>(rng.next_below(5));
        scheme.growth = 1.0 + rng.next_double() * 2.5;
        const auto intervals = partition(k, m, scheme);
        if (static_cast<int>(intervals.size()) != m ||
            intervals.front().first != 0 || intervals.back().second != k) {
            ok = false;
            detail = "tiling failure at trial " + std::to_string(trial);
            break;
        }
        for (size_t i = 0; i < intervals.size(); ++i) {
            if (intervals[i].second <= intervals[i].first ||
                (i > 0 && intervals[i].first != intervals[i - 1].second)) {
                ok = false;
                detail = "interval shape failure at trial " + std::to_string(trial);
            }
            if (f2c && i > 0 &&
                intervals[i].second - intervals[i].first <
                    intervals[i - 1].second - intervals[i - 1].first) {
                ok = false;
                detail = "fine-to-coarse lengths decreased at trial " +
                         std::to_string(trial);
            }
        }
    }
    report(2, ok, "partition reproduces the worked examples and tiles [0,k)",
           detail);
}

// ---------------------------------------------------------------------------
// Criterion 3: analytic gradient vs central finite differences.

std::vector<double> random_unit(size_t d, SplitMix64& rng) {
    std::vector<double> v(d);
    double n = 0.0;
    for (auto& x : v) {
        x = rng.next_gaussian();
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

void criterion_3() {
    const auto start = std::chrono::steady_clock::now();
    SplitMix64 rng(3003);
    double max_rel = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const size_t d = 2 + rng.next_below(15);  // d <= 16
        const size_t m = 2 + rng.next_below(5);   // m <= 6
        TrainingBatch batch;
        batch.query = random_unit(d, rng);
        for (size_t j = 0; j < m; ++j) {
            batch.passages.push_back(random_unit(d, rng));
            batch.targets.push_back(rng.next_double() * 8.0);
        }
        Adapter adapter(d);
        for (auto& w : adapter.w) w = 0.2 * (rng.next_double() * 2.0 - 1.0);
        const double alpha = 0.5 + rng.next_double() * 2.0;
        const auto analytic = listnet_gradient(batch, adapter, alpha);
        const double h = 1e-4;
        for (size_t idx = 0; idx < d * d; ++idx) {
            Adapter plus = adapter, minus = adapter;
            plus.w[idx] += h;
            minus.w[idx] -= h;
            const double fd = (listnet_gradient(batch, plus, alpha).loss -
                               listnet_gradient(batch, minus, alpha).loss) /
                              (2.0 * h);
            const double denom = std::max({std::abs(fd),
                                           std::abs(analytic.grad[idx]), 1e-6});
            max_rel = std::max(max_rel,
                               std::abs(analytic.grad[idx] - fd) / denom);
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    const bool ok = max_rel < 1e-4 && seconds < 30.0;
    std::ostringstream detail;
    detail << "max relative error " << max_rel << ", " << seconds << "s";
    report(3, ok, "ListNet gradient matches finite differences on 100 instances",
           detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 4: loss identities and alpha-monotone sharpness.

void criterion_4() {
    bool ok = true;
    std::string detail;
    SplitMix64 rng(4004);

    for (int trial = 0; trial < 200 && ok; ++trial) {
        const size_t m = 2 + rng.next_below(7);
        std::vector<double> r(m);
        for (auto& x : r) x = rng.next_double() * 10.0;
        const double alpha = 0.3 + rng.next_double() * 3.0;

        const auto p = target_distribution(r, alpha);
        double sum = 0.0, entropy = 0.0;
        for (double q : p) {
            sum += q;
            entropy -= q * std::log(q);
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            ok = false;
            detail = "target softmax does not sum to 1";
            break;
        }

        // s proportional to r/alpha (plus a constant): loss = entropy(p^r).
        std::vector<double> s(m);
        const double shift = rng.next_double() * 4.0 - 2.0;
        for (size_t i = 0; i < m; ++i) s[i] = r[i] / alpha + shift;
        if (std::abs(listnet_loss(s, r, alpha) - entropy) > 1e-9) {
            ok = false;
            detail = "listnet at the optimum differs from the target entropy";
            break;
        }

        // Translation invariance of both listwise losses.
        std::vector<double> s_rand(m), s_shift(m);
        for (size_t i = 0; i < m; ++i) {
            s_rand[i] = rng.next_double() * 2.0 - 1.0;
            s_shift[i] = s_rand[i] + 13.7;
        }
        if (std::abs(listnet_loss(s_rand, r, alpha) -
                     listnet_loss(s_shift, r, alpha)) > 1e-9 ||
            std::abs(listmle_loss(s_rand, r) - listmle_loss(s_shift, r)) >
                1e-9) {
            ok = false;
            detail = "translation invariance violated";
            break;
        }
    }

    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const size_t m = 2 + rng.next_below(7);
        std::vector<double> r(m);
        for (auto& x : r) x = rng.next_double() * 10.0;
        size_t argmax = 0;
        bool unique_max = true;
        for (size_t i = 1; i < m; ++i) {
            if (r[i] > r[argmax]) argmax = i;
        }
        for (size_t i = 0; i < m; ++i)
            if (i != argmax && r[i] == r[argmax]) unique_max = false;
        if (!unique_max) continue;
        double prev = 1.0 + 1e-12;
        for (double alpha : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
            const double top = target_distribution(r, alpha)[argmax];
            if (top > prev + 1e-12) {
                ok = false;
                detail = "sharpness not monotone in alpha";
            }
            prev = top;
        }
    }
    report(4, ok, "loss identities and alpha-monotone sharpness hold", detail);
}

// ---------------------------------------------------------------------------
// Criterion 5: RRF arithmetic and permutation invariance.

void criterion_5() {
    bool ok = true;
    std::string detail;

    const std::vector<std::string> a = {"d", "x", "y"};
    const std::vector<std::string> b = {"x", "y", "d"};
    double d_score = -1.0;
    for (const auto& e : rrf_fuse({a, b}))
        if (e.chunk_id == "d") d_score = e.score;
    if (std::abs(d_score - 84.0 / 1763.0) > 1e-15) {
        ok = false;
        detail = "1/41 + 1/43 case mismatch";
    }

    SplitMix64 rng(5005);
    const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g"};
    for (int trial = 0; trial < 200 && ok; ++trial) {
        std::vector<std::vector<std::string>> rankers;
        const size_t n_rankers = 2 + rng.next_below(3);
        for (size_t r = 0; r < n_rankers; ++r) {
            auto ranking = pool;
            for (size_t i = ranking.size(); i > 1; --i)
                std::swap(ranking[i - 1], ranking[rng.next_below(i)]);
            ranking.resize(1 + rng.next_below(pool.size()));
            rankers.push_back(std::move(ranking));
        }
        const auto fused = rrf_fuse(rankers);
        auto permuted = rankers;
        for (size_t i = permuted.size(); i > 1; --i)
            std::swap(permuted[i - 1], permuted[rng.next_below(i)]);
        const auto fused2 = rrf_fuse(permuted);
        if (fused.size() != fused2.size()) {
            ok = false;
            detail = "permutation changed the result size";
            break;
        }
        for (size_t i = 0; i < fused.size(); ++i) {
            if (fused[i].chunk_id != fused2[i].chunk_id ||
                std::abs(fused[i].score - fused2[i].score) > 1e-12) {
                ok = false;
                detail = "permutation changed the fused ranking";
                break;
            }
        }
    }
    report(5, ok, "RRF arithmetic and permutation invariance", detail);
}

// ---------------------------------------------------------------------------
// Criterion 6: geometry metrics and identity-at-init.

void criterion_6() {
    bool ok = true;
    std::string detail;

    ToyEmbedder toy(32, 0);
    const auto v = toy.embed("identical pair text");
    const auto w = toy.embed("database filler text");
    const auto aligned = alignment({{v, v}, {v, v}}, {w});
    if (aligned.raw != 0.0) {
        ok = false;
        detail = "alignment of identical pairs is not 0";
    }

    EmbeddingVector ex = {1.0f, 0.0f};
    EmbeddingVector ey = {0.0f, 1.0f};
    if (std::abs(uniformity({ex, ey}) - 4.0) > 1e-9) {
        ok = false;
        detail = "uniformity of orthogonal unit vectors is not 4";
    }

    // W = 0 adapter reproduces the base provider's full report exactly.
    std::vector<Chunk> chunks;
    for (int i = 0; i < 12; ++i) {
        Chunk c;
        c.chunk_id = "c" + std::to_string(i);
        c.doc_id = c.chunk_id;
        c.text = "subject" + std::to_string(i) + " body words here";
        c.token_count = 4;
        c.char_end = c.text.size();
        chunks.push_back(std::move(c));
    }
    std::vector<EvalQuery> queries(4);
    for (int i = 0; i < 4; ++i) {
        queries[static_cast<size_t>(i)].query_id = "q" + std::to_string(i);
        queries[static_cast<size_t>(i)].text =
            "about subject" + std::to_string(i);
        queries[static_cast<size_t>(i)].gold_spans = {
            "subject" + std::to_string(i) + " body words here"};
    }
    ToyEmbedder provider(64, 7);
    Adapter zero(64);
    const auto base = evaluate_embedder(provider, nullptr, queries, chunks);
    const auto adapted = evaluate_embedder(provider, &zero, queries, chunks);
    if (base.hit1 != adapted.hit1 || base.hit4 != adapted.hit4 ||
        base.hit10 != adapted.hit10 || base.map10 != adapted.map10 ||
        base.alignment_raw != adapted.alignment_raw ||
        base.alignment_norm != adapted.alignment_norm ||
        base.uniformity_abs != adapted.uniformity_abs) {
        ok = false;
        detail = "W=0 adapter changed the base metrics";
    }
    report(6, ok, "geometry metrics and identity-at-init", detail);
}

// ---------------------------------------------------------------------------
// Criteria 7-9: end-to-end fixture runs.

nlohmann::json fixture_config_json(const fs::path& fx, const fs::path& out) {
    return nlohmann::json{
        {"corpus", (fx / "corpus.jsonl").string()},
        {"gold", (fx / "gold.jsonl").string()},
        {"out_dir", out.string()},
        {"seed", 42},
        {"chunk_size", 512},
        {"sampling",
         {{"k", 200}, {"m", 6}, {"strategy", "fine_to_coarse"},
          {"first_len", 3}, {"growth", 2.0}}},
        {"queries", {{"source", "stub"}}},
        {"train",
         {{"loss", "listnet"}, {"alpha", 1.0}, {"lr", 0.00003},
          {"steps", 1000}, {"normalize_targets", true}}},
        {"provider", {{"kind", "toy"}, {"dim", 256}, {"seed", 0}}},
        {"eval", {{"match_theta", 0.95}}},
        {"fusion", {{"depth", 30}}},
        {"perturb", {{"synonyms", (fx / "synonyms.json").string()}}}};
}

struct PerturbTable {
    // method -> variant -> (hit1, hit4, hit10, map10, d_hit1, d_hit4,
    // d_hit10, d_map10)
    std::map<std::string, std::map<std::string, std::vector<double>>> rows;
};

PerturbTable read_perturbation_csv(const fs::path& path) {
    PerturbTable table;
    const auto lines = split_lines(read_file(path));
    for (size_t i = 1; i < lines.size(); ++i) {
        std::stringstream ss(lines[i]);
        std::string method, variant, cell;
        std::getline(ss, method, ',');
        std::getline(ss, variant, ',');
        std::vector<double> values;
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        table.rows[method][variant] = std::move(values);
    }
    return table;
}

void criteria_7_8_9() {
    const auto root = fs::temp_directory_path() / "bmembed_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto fx = root / "fixture";
    write_fixture(generate_jargon_fixture(FixtureSpec{}), fx);

    const std::string config_text =
        fixture_config_json(fx, root / "run_a").dump(2) + "\n";
    write_file(root / "config_a.json", config_text);

    bool ok7 = true, ok8 = true, ok9 = true;
    std::string detail7, detail8, detail9;
    double run_seconds = 0.0;
    try {
        const auto start = std::chrono::steady_clock::now();
        const auto config = load_pipeline_config(root / "config_a.json");
        run_pipeline(config);
        run_seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();

        const auto out = config.out_dir;
        const auto base =
            nlohmann::json::parse(read_file(out / "eval_base.json"));
        const auto adapted =
            nlohmann::json::parse(read_file(out / "eval_adapted.json"));
        const auto fusion =
            nlohmann::json::parse(read_file(out / "fusion.json"));

        const double base_map = base.at("map10").get<double>();
        const double adapted_map = adapted.at("map10").get<double>();
        const double base_unif = base.at("uniformity_abs").get<double>();
        const double adapted_unif = adapted.at("uniformity_abs").get<double>();
        const double base_align = base.at("alignment_norm").get<double>();
        const double adapted_align = adapted.at("alignment_norm").get<double>();

        std::ostringstream d7;
        d7 << "MAP " << base_map << " -> " << adapted_map << ", uniformity "
           << base_unif << " -> " << adapted_unif << ", alignment_norm "
           << base_align << " -> " << adapted_align << ", " << run_seconds
           << "s";
        detail7 = d7.str();

        // (a) adapted retrieval strictly better, with the first-green margin
        // (+0.05 MAP) frozen as the regression floor.
        if (!(adapted_map > base_map) || adapted_map - base_map < 0.05)
            ok7 = false;
        // (b) uniformity rises (first-green margin +0.5) while normalized
        // alignment increases by at most 5%.
        if (!(adapted_unif > base_unif) || adapted_unif - base_unif < 0.5)
            ok7 = false;
        if (adapted_align > base_align * 1.05) ok7 = false;
        // (c) the fused rankings differ and the adapted fusion is no worse.
        const auto rrf_base = load_run(out / "run_rrf_base.json");
        const auto rrf_adapted = load_run(out / "run_rrf_adapted.json");
        if (rrf_base == rrf_adapted) ok7 = false;
        const double fused_base_map =
            fusion.at("rrf_base").at("map10").get<double>();
        const double fused_adapted_map =
            fusion.at("rrf_adapted").at("map10").get<double>();
        if (fused_adapted_map < fused_base_map) ok7 = false;
        if (run_seconds >= 300.0) ok7 = false;
        detail7 += ", fused MAP " + std::to_string(fused_base_map) + " -> " +
                   std::to_string(fused_adapted_map);

        // Criterion 8: perturbation direction checks from the delta table.
        const auto table = read_perturbation_csv(out / "perturbation.csv");
        const auto& bm25 = table.rows.at("bm25");
        // Masked BM25 metrics collapse to <= 20% of the original.
        for (size_t metric = 0; metric < 4; ++metric) {
            const double original = bm25.at("original")[metric];
            const double masked = bm25.at("masked")[metric];
            if (masked > 0.2 * original) ok8 = false;
        }
        // Substituted drops: dense (base and adapted) strictly smaller than
        // BM25 on hit10 and map10.
        const double bm25_d_hit10 = bm25.at("substituted")[6];
        const double bm25_d_map10 = bm25.at("substituted")[7];
        for (const char* method : {"dense_base", "dense_adapted"}) {
            const auto& row = table.rows.at(method).at("substituted");
            if (!(row[6] < bm25_d_hit10) || !(row[7] < bm25_d_map10))
                ok8 = false;
        }
        std::ostringstream d8;
        d8 << "masked bm25 map " << bm25.at("masked")[3] << " vs original "
           << bm25.at("original")[3] << "; substituted d_map10 bm25 "
           << bm25_d_map10 << ", dense "
           << table.rows.at("dense_base").at("substituted")[7]
           << ", dense+adapter "
           << table.rows.at("dense_adapted").at("substituted")[7];
        detail8 = d8.str();

        // Criterion 9: a second run from scratch is byte-identical.
        const std::string config_b_text =
            fixture_config_json(fx, root / "run_b").dump(2) + "\n";
        write_file(root / "config_b.json", config_b_text);
        const auto config_b = load_pipeline_config(root / "config_b.json");
        run_pipeline(config_b);
        for (const char* artifact :
             {"adapter.bin", "eval_base.json", "eval_adapted.json"}) {
            if (read_file(out / artifact) !=
                read_file(config_b.out_dir / artifact)) {
                ok9 = false;
                detail9 = std::string(artifact) + " differs between runs";
            }
        }
    } catch (const std::exception& e) {
        ok7 = ok8 = ok9 = false;
        detail7 = detail8 = detail9 = std::string("exception: ") + e.what();
    }

    report(7, ok7, "end-to-end trend replication on the jargon fixture",
           detail7);
    report(8, ok8, "perturbation direction check", detail8);
    report(9, ok9, "two identical runs are byte-identical", detail9);
    fs::remove_all(root);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criteria_7_8_9();
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
