#include <doctest.h>

#include <algorithm>

#include "bmembed/fusion.hpp"
#include "bmembed/util.hpp"

using namespace bmembed;

TEST_CASE("rrf on two identical rankings keeps the order") {
    const std::vector<std::string> ranking = {"a", "b", "c"};
    const auto fused = rrf_fuse({ranking, ranking});
    REQUIRE(fused.size() == 3);
    CHECK(fused[0].chunk_id == "a");
    CHECK(fused[1].chunk_id == "b");
    CHECK(fused[2].chunk_id == "c");
    CHECK(fused[0].score > fused[1].score);
}

TEST_CASE("rrf worked example: rank 1 and rank 3 at u=40") {
    // d at rank 1 in ranker A and rank 3 in ranker B.
    const std::vector<std::string> a = {"d", "x", "y"};
    const std::vector<std::string> b = {"x", "y", "d"};
    const auto fused = rrf_fuse({a, b});
    double d_score = -1.0;
    for (const auto& e : fused)
        if (e.chunk_id == "d") d_score = e.score;
    CHECK(d_score == doctest::Approx(84.0 / 1763.0).epsilon(1e-12));
    CHECK(d_score == doctest::Approx(0.047646).epsilon(1e-4));
}

TEST_CASE("rrf: document missing from one ranker contributes zero there") {
    // "solo" only in ranker A at rank 1; "both" at rank 2 in both.
    const std::vector<std::string> a = {"solo", "both"};
    const std::vector<std::string> b = {"other", "both"};
    const auto fused = rrf_fuse({a, b});
    double solo = 0.0, both = 0.0;
    for (const auto& e : fused) {
        if (e.chunk_id == "solo") solo = e.score;
        if (e.chunk_id == "both") both = e.score;
    }
    CHECK(solo == doctest::Approx(1.0 / 41.0).epsilon(1e-12));
    CHECK(both == doctest::Approx(2.0 / 42.0).epsilon(1e-12));
    CHECK(both > solo);
    CHECK(fused[0].chunk_id == "both");
}

TEST_CASE("rrf is invariant to permuting the rankers") {
    SplitMix64 rng(404);
    const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::vector<std::string>> rankers;
        for (int r = 0; r < 3; ++r) {
            auto ranking = pool;
            for (size_t i = ranking.size(); i > 1; --i)
                std::swap(ranking[i - 1], ranking[rng.next_below(i)]);
            ranking.resize(2 + rng.next_below(5));
            rankers.push_back(std::move(ranking));
        }
        const auto fused = rrf_fuse(rankers);
        auto shuffled = rankers;
        std::swap(shuffled[0], shuffled[2]);
        const auto fused2 = rrf_fuse(shuffled);
        REQUIRE(fused.size() == fused2.size());
        for (size_t i = 0; i < fused.size(); ++i) {
            CHECK(fused[i].chunk_id == fused2[i].chunk_id);
            CHECK(fused[i].score == doctest::Approx(fused2[i].score).epsilon(1e-12));
        }
    }
}

TEST_CASE("rrf: unanimous first place wins, removing a ranker never helps") {
    const std::vector<std::string> a = {"top", "x", "y"};
    const std::vector<std::string> b = {"top", "y", "x"};
    const std::vector<std::string> c = {"top", "x"};
    const auto fused = rrf_fuse({a, b, c});
    CHECK(fused[0].chunk_id == "top");

    const auto fewer = rrf_fuse({a, b});
    for (const auto& e3 : fused) {
        for (const auto& e2 : fewer)
            if (e2.chunk_id == e3.chunk_id) CHECK(e2.score <= e3.score + 1e-12);
    }
}

TEST_CASE("rrf breaks exact score ties by ascending chunk id") {
    // Two documents each at rank 1 in exactly one ranker.
    const std::vector<std::string> a = {"zz"};
    const std::vector<std::string> b = {"aa"};
    const auto fused = rrf_fuse({a, b});
    REQUIRE(fused.size() == 2);
    CHECK(fused[0].chunk_id == "aa");
    CHECK(fused[1].chunk_id == "zz");
}

TEST_CASE("rrf rejects duplicate ids within one ranking") {
    CHECK_THROWS(rrf_fuse({{"a", "b", "a"}}));
}

TEST_CASE("rrf honours a custom u") {
    const std::vector<std::string> a = {"d"};
    const auto fused = rrf_fuse({a}, FusionConfig{10.0});
    REQUIRE(fused.size() == 1);
    CHECK(fused[0].score == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
}
