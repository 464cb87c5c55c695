#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "veritrap/estimators.hpp"

using namespace veritrap;
using namespace vtest;

TEST_CASE("pe: printed-formula values") {
    CHECK(pe(make_record_p({0.5, 0.5})) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK(pe(make_record_p({1.0, 1.0, 1.0})) == 0.0);
    CHECK(pe(make_record({-1.0})) == doctest::Approx(-std::exp(-1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(pe(GenerationRecord{}), Error);
}

TEST_CASE("ln_pe: normalized by token count") {
    CHECK(ln_pe(make_record_p({0.5, 0.5})) == doctest::Approx(std::log(0.5) / 2.0).epsilon(1e-12));
    CHECK(ln_pe(make_record_p({1.0})) == 0.0);
    GenerationRecord single = make_record({-0.7});
    CHECK(ln_pe(single) == pe(single));
}

TEST_CASE("max_prob: one minus span probability product") {
    GenerationRecord r = make_record_p({0.9, 0.8, 1.0});
    CHECK(max_prob(make_fact(r, {0, 1}), r) == doctest::Approx(0.28).epsilon(1e-12));
    CHECK(max_prob(make_fact(r, {2}), r) == 0.0);
    GenerationRecord q = make_record_p({0.25});
    CHECK(max_prob(make_fact(q, {0}), q) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(max_prob(make_fact(r, {7}), r), Error);
}

TEST_CASE("ccp_word: entail mass over entail+contradict mass") {
    // original p=0.5 (entail), alt p=0.3 contradict, alt p=0.2 neutral
    TokenEvent t;
    t.index = 0;
    t.surface = "orig";
    t.logprob = std::log(0.5);
    t.alternatives = {{"c", std::log(0.3)}, {"n", std::log(0.2)}};
    std::map<std::string, NliVerdict> verdicts = {{"c", NliVerdict::contradict},
                                                  {"n", NliVerdict::neutral}};
    CcpWordResult r = ccp_word(t, verdicts);
    CHECK(r.value == doctest::Approx(0.625).epsilon(1e-12));
    CHECK_FALSE(r.no_evidence);

    // all alternatives entail -> 1.0
    verdicts = {{"c", NliVerdict::entail}, {"n", NliVerdict::entail}};
    CHECK(ccp_word(t, verdicts).value == doctest::Approx(1.0).epsilon(1e-12));

    // no alternatives -> self-entailment only -> 1.0
    TokenEvent bare;
    bare.surface = "x";
    bare.logprob = -0.1;
    CHECK(ccp_word(bare, {}).value == 1.0);

    // underflowed mass -> flagged 1.0
    TokenEvent tiny;
    tiny.surface = "x";
    tiny.logprob = -800.0;  // exp underflows to zero
    CcpWordResult flagged = ccp_word(tiny, {});
    CHECK(flagged.value == 1.0);
    CHECK(flagged.no_evidence);
}

TEST_CASE("ccp_claim: complement of the word-score product") {
    GenerationRecord r = make_record_p({0.9, 0.9});
    FactUnit f = make_fact(r, {0, 1});
    CHECK(ccp_claim(f, r, {{0, 0.625}, {1, 1.0}}) == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(ccp_claim(f, r, {{0, 1.0}, {1, 1.0}}) == 0.0);
    CHECK(ccp_claim(f, r, {{0, 0.0}, {1, 0.7}}) == 1.0);
    CHECK_THROWS_AS(ccp_claim(f, r, {{0, 0.5}}), Error);  // missing word score
}

TEST_CASE("ru_fr / ru_ft / ru_ff: geometric-mean forms") {
    CHECK(ru_fr(make_record_p({0.5, 0.5})) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ru_fr(make_record_p({1.0, 1.0})) == 0.0);
    CHECK(ru_fr(make_record_p({0.25, 1.0})) == doctest::Approx(0.5).epsilon(1e-12));

    GenerationRecord r = make_record_p({0.5, 0.5, 1.0});
    CHECK(ru_ft(make_fact(r, {0, 1}), r) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ru_ft(make_fact(r, {2}), r) == 0.0);
    GenerationRecord q = make_record_p({0.1});
    CHECK(ru_ft(make_fact(q, {0}), q) == doctest::Approx(0.9).epsilon(1e-12));

    CHECK(ru_ff(make_fact(r, {2}), r) == 1.0);
    GenerationRecord s = make_record_p({0.25, 0.25});
    CHECK(ru_ff(make_fact(s, {0, 1}), s) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("complementarity: ru_ff + ru_ft == 1 within one ulp") {
    TestRng rng(4242);
    for (int i = 0; i < 2000; ++i) {
        GenerationRecord r = random_record(rng);
        FactUnit f = make_fact(r, random_span(rng, r));
        const double sum = ru_ff(f, r) + ru_ft(f, r);
        CHECK(std::fabs(sum - 1.0) <= std::ldexp(1.0, -53));
    }
}

TEST_CASE("combine: mean, max, noisy_or") {
    CHECK(combine({0.5, 0.5}, {CombinerKind::noisy_or}) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(combine({0.37, 0.0}, {CombinerKind::noisy_or}) == doctest::Approx(0.37).epsilon(1e-12));
    CHECK(combine({0.2, 0.4}, {CombinerKind::mean}) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(combine({0.2, 0.4}, {CombinerKind::max}) == 0.4);
    CHECK_THROWS_AS(combine({}, {CombinerKind::mean}), Error);
    CHECK_THROWS_AS(combine({1.5}, {CombinerKind::noisy_or}), Error);
}

TEST_CASE("combine: permutation invariance") {
    TestRng rng(555);
    for (int i = 0; i < 200; ++i) {
        const int n = rng.uniform_int(1, 12);
        std::vector<double> scores(static_cast<size_t>(n));
        for (double& s : scores) s = rng.uniform(0.0, 1.0);
        std::vector<double> shuffled = scores;
        for (size_t j = shuffled.size(); j > 1; --j) {
            std::swap(shuffled[j - 1], shuffled[static_cast<size_t>(rng.uniform_int(0, int(j) - 1))]);
        }
        for (CombinerKind kind : {CombinerKind::mean, CombinerKind::max, CombinerKind::noisy_or}) {
            CHECK(combine(scores, {kind}) == doctest::Approx(combine(shuffled, {kind})).epsilon(1e-12));
        }
    }
}

TEST_CASE("noisy_or grows strictly with an appended positive fact") {
    TestRng rng(808);
    for (int i = 0; i < 1000; ++i) {
        const int n = rng.uniform_int(1, 8);
        std::vector<double> scores(static_cast<size_t>(n));
        for (double& s : scores) s = rng.uniform(0.0, 0.9);
        const double before = combine(scores, {CombinerKind::noisy_or});
        if (before >= 0.999) continue;
        scores.push_back(rng.uniform(0.011, 1.0));
        const double after = combine(scores, {CombinerKind::noisy_or});
        CHECK(after > before);
    }
}

TEST_CASE("length-normalization scale-freeness: duplicated span leaves RU unchanged") {
    TestRng rng(99);
    for (int i = 0; i < 200; ++i) {
        GenerationRecord r = random_record(rng, 30);
        std::vector<int> span = random_span(rng, r);
        FactUnit f = make_fact(r, span);
        const double once_ft = ru_ft(f, r);
        const double once_ff = ru_ff(f, r);

        // duplicate every span token at the end of the record
        GenerationRecord doubled = r;
        std::vector<int> doubled_span = span;
        for (int j : span) {
            TokenEvent t = r.tokens[static_cast<size_t>(j)];
            t.index = static_cast<int>(doubled.tokens.size());
            doubled_span.push_back(t.index);
            doubled.tokens.push_back(std::move(t));
        }
        FactUnit g = make_fact(doubled, doubled_span);
        CHECK(ru_ft(g, doubled) == doctest::Approx(once_ft).epsilon(1e-12));
        CHECK(ru_ff(g, doubled) == doctest::Approx(once_ff).epsilon(1e-12));
    }
}

TEST_CASE("ru_score: dispatch by label and granularity") {
    GenerationRecord r = make_record_p({0.5, 0.5, 1.0, 1.0});
    FactUnit f1 = make_fact(r, {0, 1}, "f1");
    FactUnit f2 = make_fact(r, {2, 3}, "f2");

    SUBCASE("FR ignores facts, single generation score") {
        std::vector<ScoredResult> out =
            ru_score(r, make_label(r, LabelKind::FR), {f1, f2}, ScoreGranularity::fact);
        REQUIRE(out.size() == 1);
        CHECK(out[0].method == ScoreMethod::RU_GEN);
        CHECK(out[0].subject_id == r.record_id);
        CHECK(out[0].value == doctest::Approx(ru_fr(r)).epsilon(1e-12));
    }

    SUBCASE("FF at generation granularity uses noisy_or by default") {
        GenerationRecord confident = make_record_p({1.0, 1.0, 1.0});
        FactUnit g1 = make_fact(confident, {0, 1}, "g1");
        FactUnit g2 = make_fact(confident, {1, 2}, "g2");
        std::vector<ScoredResult> out = ru_score(confident, make_label(confident, LabelKind::FF),
                                                 {g1, g2}, ScoreGranularity::generation);
        REQUIRE(out.size() == 1);
        CHECK(out[0].value == 1.0);  // 1 - (1-1)(1-1)
    }

    SUBCASE("FT at fact granularity passes through per-fact scores") {
        std::vector<ScoredResult> out =
            ru_score(r, make_label(r, LabelKind::FT), {f1}, ScoreGranularity::fact);
        REQUIRE(out.size() == 1);
        CHECK(out[0].method == ScoreMethod::RU_FACT);
        CHECK(out[0].subject_id == "f1");
        CHECK(out[0].value == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("FT/FF with zero facts is a domain error") {
        CHECK_THROWS_WITH_AS(
            (void)ru_score(r, make_label(r, LabelKind::FF), {}, ScoreGranularity::generation),
            doctest::Contains("requires facts"), Error);
    }
}

TEST_CASE("apply_threshold: strict inequality, boundary stays low") {
    ThresholdConfig theta{0.5};
    CHECK(apply_threshold(0.9, theta) == UncertaintyBand::high_uncertainty);
    CHECK(apply_threshold(0.5, theta) == UncertaintyBand::low_uncertainty);
    CHECK(apply_threshold(0.0, theta) == UncertaintyBand::low_uncertainty);
}

TEST_CASE("estimator ranges on random input") {
    TestRng rng(2024);
    for (int i = 0; i < 500; ++i) {
        GenerationRecord r = random_record(rng);
        FactUnit f = make_fact(r, random_span(rng, r));
        const double fr = ru_fr(r);
        const double ft = ru_ft(f, r);
        const double ff = ru_ff(f, r);
        CHECK(fr >= 0.0);
        CHECK(fr < 1.0);
        CHECK(ft >= 0.0);
        CHECK(ft < 1.0);
        CHECK(ff > 0.0);
        CHECK(ff <= 1.0);
        const double mp = max_prob(f, r);
        CHECK(mp >= 0.0);
        CHECK(mp <= 1.0);
        CHECK(pe(r) <= 0.0);
    }
}

TEST_CASE("oracle equivalence on random records") {
    TestRng rng(7310);
    for (int i = 0; i < 1000; ++i) {
        GenerationRecord r = random_record(rng);
        std::vector<int> span = random_span(rng, r);
        FactUnit f = make_fact(r, span);
        CHECK(close_rel(pe(r), oracle_pe(r)));
        CHECK(close_rel(ln_pe(r), oracle_ln_pe(r)));
        CHECK(close_rel(max_prob(f, r), oracle_max_prob(r, span)));
        CHECK(close_rel(ru_fr(r), oracle_ru_fr(r)));
        CHECK(close_rel(ru_ft(f, r), oracle_ru_ft(r, span)));
        CHECK(close_rel(ru_ff(f, r), oracle_ru_ff(r, span)));
    }
}
