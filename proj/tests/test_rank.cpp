#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "redtest/rank.hpp"
#include "redtest/rng.hpp"

using namespace redtest;
namespace fs = std::filesystem;

namespace {

CandidateRecord candidate(const std::string &id, double acc, double lat, double msrs_value) {
    CandidateRecord r;
    r.id = id;
    r.accuracy = acc;
    r.latency_s = lat;
    r.msrs = msrs_value;
    return r;
}

RankingConfig latency_config(double t, double m, double w, double lambda) {
    RankingConfig cfg;
    cfg.resource = ResourceKind::latency;
    cfg.expected_latency_s = t;
    cfg.expected_msrs = m;
    cfg.w = w;
    cfg.lambda = lambda;
    return cfg;
}

std::vector<CandidateRecord> random_candidates(std::size_t count, std::uint64_t seed) {
    std::vector<CandidateRecord> out;
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        CandidateRecord r;
        r.id = "cand_" + std::to_string(i);
        r.accuracy = 0.5 + 0.5 * rng.next_unit();
        r.latency_s = 0.005 + 0.02 * rng.next_unit();
        r.params_m = 0.05 + rng.next_unit();
        r.flops_m = 5.0 + 30.0 * rng.next_unit();
        r.msrs = 60.0 * rng.next_unit();
        out.push_back(std::move(r));
    }
    return out;
}

fs::path temp_csv(const std::string &name, const std::string &content) {
    const fs::path dir = fs::temp_directory_path() / "redtest_rank_tests";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream out(p, std::ios::trunc);
    out << content;
    return p;
}

}  // namespace

TEST_CASE("lambda = 1 collapses to the pure resource score, bit for bit") {
    const auto cands = random_candidates(1000, 1);
    const RankingConfig cfg = latency_config(0.01, 35.0, -0.20, 1.0);
    for (const auto &c : cands) {
        const double got = score_candidate(c, cfg);
        const double resource_only =
            c.accuracy * std::exp(cfg.w * std::log(*c.latency_s / cfg.expected_latency_s));
        REQUIRE(got == resource_only);
    }
}

TEST_CASE("the published latency configuration scores the worked example") {
    // ACC 0.92, LAT 0.012 s against T 0.01, MSRS 30 against M 35, w -0.20,
    // lambda 0.1; value frozen from a 50-digit evaluation
    const CandidateRecord c = candidate("a", 0.92, 0.012, 30.0);
    const double got = score_candidate(c, latency_config(0.01, 35.0, -0.20, 0.1));
    REQUIRE(std::fabs(got - 0.9413920305280975) <= 1e-12);
    REQUIRE(got == Catch::Approx(0.9414).margin(5e-5));
}

TEST_CASE("w = 0 returns plain accuracy") {
    const CandidateRecord c = candidate("a", 0.77, 0.5, 10.0);
    REQUIRE(score_candidate(c, latency_config(0.01, 35.0, 0.0, 0.3)) == 0.77);
}

TEST_CASE("zero msrs under pure redundancy weighting is a reported error") {
    const CandidateRecord c = candidate("a", 0.9, 0.01, 0.0);
    RankingConfig cfg;
    cfg.resource = ResourceKind::none;
    cfg.expected_msrs = 35.0;
    cfg.w = -0.2;
    REQUIRE_THROWS_MATCHES(score_candidate(c, cfg.normalized()), Error,
                           Catch::Matchers::Predicate<Error>([](const Error &e) {
                               return e.code() == ErrorCode::NonPositiveBase;
                           }));
}

TEST_CASE("missing fields are reported with the candidate id") {
    CandidateRecord c;
    c.id = "incomplete";
    c.accuracy = 0.8;
    c.msrs = 12.0;
    try {
        score_candidate(c, latency_config(0.01, 35.0, -0.2, 0.5));
        FAIL("expected MissingField");
    } catch (const Error &e) {
        REQUIRE(e.code() == ErrorCode::MissingField);
        REQUIRE(std::string(e.what()).find("incomplete") != std::string::npos);
    }
}

TEST_CASE("params and flops variants use their own budgets") {
    CandidateRecord c;
    c.id = "a";
    c.accuracy = 0.9;
    c.params_m = 0.30;
    c.flops_m = 20.0;
    c.msrs = 35.0;
    RankingConfig cfg;
    cfg.expected_msrs = 35.0;
    cfg.w = -0.06;
    cfg.lambda = 0.4;
    cfg.resource = ResourceKind::params;
    cfg.expected_params_m = 0.15;
    const double params_score = score_candidate(c, cfg);
    // base = 0.4*(0.30/0.15) + 0.6*1 = 1.4
    REQUIRE(params_score == Catch::Approx(0.9 * std::exp(-0.06 * std::log(1.4))).margin(1e-15));
    cfg.resource = ResourceKind::flops;
    cfg.expected_flops_m = 10.0;
    const double flops_score = score_candidate(c, cfg);
    REQUIRE(flops_score == Catch::Approx(0.9 * std::exp(-0.06 * std::log(1.4))).margin(1e-15));
}

TEST_CASE("score falls as msrs or the resource rises") {
    const RankingConfig cfg = latency_config(0.01, 35.0, -0.20, 0.3);
    double prev = std::numeric_limits<double>::infinity();
    for (double m : {5.0, 15.0, 30.0, 60.0}) {
        const double s = score_candidate(candidate("a", 0.9, 0.012, m), cfg);
        REQUIRE(s < prev);
        prev = s;
    }
    prev = std::numeric_limits<double>::infinity();
    for (double lat : {0.006, 0.01, 0.02, 0.05}) {
        const double s = score_candidate(candidate("a", 0.9, lat, 20.0), cfg);
        REQUIRE(s < prev);
        prev = s;
    }
}

TEST_CASE("select_best returns the single candidate") {
    const std::vector<CandidateRecord> one = {candidate("only", 0.8, 0.01, 20.0)};
    const RankedCandidate best = select_best(one, latency_config(0.01, 35.0, -0.2, 0.1));
    REQUIRE(best.record.id == "only");
    REQUIRE(best.rank == 1);
}

TEST_CASE("select_best keeps the earliest of tied candidates") {
    std::vector<CandidateRecord> two = {candidate("zz_first", 0.8, 0.01, 20.0),
                                        candidate("aa_second", 0.8, 0.01, 20.0)};
    const RankedCandidate best = select_best(two, latency_config(0.01, 35.0, -0.2, 0.1));
    REQUIRE(best.record.id == "zz_first");
}

TEST_CASE("select_best equals exhaustive argmax") {
    const RankingConfig cfg = latency_config(0.01, 35.0, -0.20, 0.1);
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto cands = random_candidates(20, seed);
        const RankedCandidate best = select_best(cands, cfg);
        double max_score = -1.0;
        std::string max_id;
        for (const auto &c : cands) {
            const double s = score_candidate(c, cfg);
            if (s > max_score) {
                max_score = s;
                max_id = c.id;
            }
        }
        REQUIRE(best.record.id == max_id);
        REQUIRE(best.score == max_score);
    }
}

TEST_CASE("empty candidate sets are rejected") {
    REQUIRE_THROWS_MATCHES(select_best({}, latency_config(0.01, 35.0, -0.2, 0.1)), Error,
                           Catch::Matchers::Predicate<Error>([](const Error &e) {
                               return e.code() == ErrorCode::EmptyCandidateSet;
                           }));
}

TEST_CASE("top-permille keeps the ceiling of the requested fraction") {
    const RankingConfig cfg = latency_config(0.01, 35.0, -0.20, 0.1);
    const auto thousand = random_candidates(1000, 3);
    REQUIRE(rank_top_fraction(thousand, cfg, 1.0).top.size() == 1);
    REQUIRE(rank_top_fraction(thousand, cfg, 1000.0).top.size() == 1000);
    const auto eleven = random_candidates(11, 4);
    REQUIRE(rank_top_fraction(eleven, cfg, 100.0).top.size() == 2);  // ceil(1.1)
}

TEST_CASE("aggregates are plain means over the kept set") {
    std::vector<CandidateRecord> cands;
    for (int i = 0; i < 10; ++i)
        cands.push_back(candidate("c" + std::to_string(i), 0.5 + 0.01 * i, 0.01 + 0.001 * i,
                                  10.0 + i));
    const RankingConfig cfg = latency_config(0.01, 35.0, -0.20, 0.1);
    const RankingResult r = rank_top_fraction(cands, cfg, 500.0);
    REQUIRE(r.top.size() == 5);
    double acc = 0.0, m = 0.0, lat = 0.0;
    for (const auto &rc : r.top) {
        acc += rc.record.accuracy;
        m += *rc.record.msrs;
        lat += *rc.record.latency_s;
    }
    REQUIRE(r.aggregates.avg_accuracy == Catch::Approx(acc / 5.0));
    REQUIRE(r.aggregates.avg_msrs == Catch::Approx(m / 5.0));
    REQUIRE(r.aggregates.avg_resource == Catch::Approx(lat / 5.0));
    // ranks are 1..k with non-increasing scores
    for (std::size_t i = 0; i < r.top.size(); ++i) {
        REQUIRE(r.top[i].rank == i + 1);
        if (i) REQUIRE(r.top[i].score <= r.top[i - 1].score);
    }
}

TEST_CASE("rank ties break by ascending id") {
    std::vector<CandidateRecord> cands = {candidate("bbb", 0.8, 0.01, 20.0),
                                          candidate("aaa", 0.8, 0.01, 20.0),
                                          candidate("ccc", 0.9, 0.01, 20.0)};
    const RankingResult r =
        rank_top_fraction(cands, latency_config(0.01, 35.0, -0.2, 0.1), 1000.0);
    REQUIRE(r.top[0].record.id == "ccc");
    REQUIRE(r.top[1].record.id == "aaa");
    REQUIRE(r.top[2].record.id == "bbb");
}

TEST_CASE("select_best agrees with the head of the full ranking") {
    const RankingConfig cfg = latency_config(0.01, 35.0, -0.20, 0.1);
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
        const auto cands = random_candidates(50, seed);
        REQUIRE(select_best(cands, cfg).record.id ==
                rank_top_fraction(cands, cfg, 1000.0).top[0].record.id);
    }
}

TEST_CASE("lambda = 1 ranking equals the resource-only ranking") {
    const auto cands = random_candidates(1000, 17);
    const RankingConfig full = latency_config(0.01, 35.0, -0.20, 1.0);
    const RankingResult via_full = rank_top_fraction(cands, full, 1000.0);
    // independent resource-only scoring
    std::vector<std::pair<double, std::string>> expected;
    for (const auto &c : cands)
        expected.emplace_back(
            c.accuracy * std::exp(full.w * std::log(*c.latency_s / full.expected_latency_s)),
            c.id);
    std::sort(expected.begin(), expected.end(), [](const auto &a, const auto &b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < cands.size(); ++i) {
        REQUIRE(via_full.top[i].record.id == expected[i].second);
        REQUIRE(via_full.top[i].score == expected[i].first);
    }
}

TEST_CASE("scaling every msrs and M together leaves the ranking unchanged") {
    auto cands = random_candidates(200, 23);
    const RankingConfig cfg = latency_config(0.01, 35.0, -0.20, 0.1);
    const RankingResult base = rank_top_fraction(cands, cfg, 1000.0);
    RankingConfig scaled_cfg = cfg;
    scaled_cfg.expected_msrs *= 7.5;
    for (auto &c : cands) c.msrs = *c.msrs * 7.5;
    const RankingResult scaled = rank_top_fraction(cands, scaled_cfg, 1000.0);
    for (std::size_t i = 0; i < base.top.size(); ++i) {
        REQUIRE(base.top[i].record.id == scaled.top[i].record.id);
        REQUIRE(scaled.top[i].score ==
                Catch::Approx(base.top[i].score).epsilon(1e-12));
    }
}

TEST_CASE("candidate CSV ingest") {
    SECTION("full header") {
        const fs::path p = temp_csv("full.csv",
                                    "id,accuracy,latency_s,params_m,flops_m,msrs\n"
                                    "m1,0.92,0.012,0.3,15.5,30\n"
                                    "m2,0.88,0.010,0.2,12.0,22\n");
        const auto rec = read_candidates_csv(p);
        REQUIRE(rec.size() == 2);
        REQUIRE(rec[0].id == "m1");
        REQUIRE(rec[0].accuracy == 0.92);
        REQUIRE(*rec[1].msrs == 22.0);
    }
    SECTION("missing optional columns") {
        const fs::path p = temp_csv("partial.csv", "id,accuracy,msrs\nm1,0.92,30\n");
        const auto rec = read_candidates_csv(p);
        REQUIRE(rec.size() == 1);
        REQUIRE_FALSE(rec[0].latency_s.has_value());
        REQUIRE(*rec[0].msrs == 30.0);
    }
    SECTION("accuracy_pct normalizes to [0, 1]") {
        const fs::path p = temp_csv("pct.csv", "id,accuracy_pct,msrs\nm1,92.37,30\n");
        const auto rec = read_candidates_csv(p);
        REQUIRE(rec[0].accuracy == Catch::Approx(0.9237));
    }
    SECTION("out-of-range accuracy is rejected") {
        const fs::path p = temp_csv("bad_acc.csv", "id,accuracy\nm1,1.5\n");
        REQUIRE_THROWS_AS(read_candidates_csv(p), Error);
    }
    SECTION("missing id column is rejected") {
        const fs::path p = temp_csv("no_id.csv", "accuracy,msrs\n0.9,30\n");
        REQUIRE_THROWS_MATCHES(read_candidates_csv(p), Error,
                               Catch::Matchers::Predicate<Error>([](const Error &e) {
                                   return e.code() == ErrorCode::MissingField;
                               }));
    }
}

TEST_CASE("config validation catches bad budgets") {
    RankingConfig cfg = latency_config(0.0, 35.0, -0.2, 0.5);
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = latency_config(0.01, 0.0, -0.2, 0.5);
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = latency_config(0.01, 35.0, -0.2, 1.5);
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    // lambda = 1 does not need M
    cfg = latency_config(0.01, 0.0, -0.2, 1.0);
    REQUIRE_NOTHROW(cfg.validate());
    // resource none coerces lambda to 0
    RankingConfig none;
    none.resource = ResourceKind::none;
    none.lambda = 0.7;
    none.expected_msrs = 35.0;
    REQUIRE(none.normalized().lambda == 0.0);
}
