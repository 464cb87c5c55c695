#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "veritrap/evalkit.hpp"

using namespace veritrap;
using namespace vtest;

TEST_CASE("roc_auc: hand values") {
    // perfect separation
    CHECK(roc_auc({{0.9, true}, {0.8, true}, {0.2, false}, {0.1, false}}) == 1.0);
    // positives {0.9, 0.2} vs negatives {0.8, 0.1}: 3 of 4 pairs won
    CHECK(roc_auc({{0.9, true}, {0.2, true}, {0.8, false}, {0.1, false}}) == 0.75);
    // all ties
    CHECK(roc_auc({{0.5, true}, {0.5, true}, {0.5, false}}) == 0.5);
    // single class
    CHECK_THROWS_AS(roc_auc({{0.5, true}}), Error);
}

TEST_CASE("pearson: hand values and domain errors") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), Error);
    CHECK_THROWS_AS(pearson({1}, {1}), Error);
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), Error);
}

TEST_CASE("average_ranks: tie blocks share the mean rank") {
    CHECK(average_ranks({1, 2, 2}) == std::vector<double>{1.0, 2.5, 2.5});
    CHECK(average_ranks({5, 5, 5, 5}) == std::vector<double>{2.5, 2.5, 2.5, 2.5});
    CHECK(average_ranks({3, 1, 2}) == std::vector<double>{3.0, 1.0, 2.0});
}

TEST_CASE("spearman: rank-based hand values") {
    CHECK(spearman({1, 2, 3}, {2, 10, 300}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman({1, 2, 3}, {10, 30, 20}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("spearman equals pearson of average ranks on random data") {
    TestRng rng(321);
    for (int i = 0; i < 300; ++i) {
        const int n = rng.uniform_int(3, 40);
        const size_t sz = static_cast<size_t>(n);
        std::vector<double> x(sz), y(sz);
        for (int j = 0; j < n; ++j) {
            // coarse grid injects ties
            x[size_t(j)] = rng.uniform_int(0, 8);
            y[size_t(j)] = rng.uniform_int(0, 8);
        }
        try {
            const double s = spearman(x, y);
            CHECK(s == doctest::Approx(pearson(average_ranks(x), average_ranks(y))).epsilon(1e-12));
            CHECK(s >= -1.0 - 1e-12);
            CHECK(s <= 1.0 + 1e-12);
        } catch (const Error&) {
            // constant series; acceptable for random grids
        }
    }
}

TEST_CASE("pearson symmetry; roc_auc invariances") {
    TestRng rng(9087);
    for (int i = 0; i < 200; ++i) {
        const int n = rng.uniform_int(4, 60);
        const size_t sz = static_cast<size_t>(n);
        std::vector<double> x(sz), y(sz);
        std::vector<LabeledScore> data(sz);
        bool has_pos = false, has_neg = false;
        for (int j = 0; j < n; ++j) {
            x[size_t(j)] = rng.uniform(-2.0, 2.0);
            y[size_t(j)] = rng.uniform(-2.0, 2.0);
            const bool pos = rng.chance(0.4);
            data[size_t(j)] = {x[size_t(j)], pos};
            (pos ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(pearson(x, y) == doctest::Approx(pearson(y, x)).epsilon(1e-12));

        // flipping labels and negating scores leaves AUC unchanged
        std::vector<LabeledScore> flipped(data);
        for (LabeledScore& d : flipped) {
            d.score = -d.score;
            d.incorrect = !d.incorrect;
        }
        CHECK(roc_auc(flipped) == doctest::Approx(roc_auc(data)).epsilon(1e-12));

        // with no score ties: auc(-scores) = 1 - auc(scores)
        std::sort(x.begin(), x.end());
        if (std::adjacent_find(x.begin(), x.end()) == x.end()) {
            std::vector<LabeledScore> negated(data);
            for (LabeledScore& d : negated) d.score = -d.score;
            CHECK(roc_auc(negated) == doctest::Approx(1.0 - roc_auc(data)).epsilon(1e-12));
        }
    }
}

TEST_CASE("roc_auc oracle: rank statistic equals pairwise enumeration exactly") {
    TestRng rng(50417);
    for (int i = 0; i < 500; ++i) {
        const int n = rng.uniform_int(2, 200);
        std::vector<LabeledScore> data;
        std::vector<double> scores;
        std::vector<bool> labels;
        bool has_pos = false, has_neg = false;
        for (int j = 0; j < n; ++j) {
            // quantized scores force plenty of ties
            const double s = rng.uniform_int(0, 20) / 10.0;
            const bool pos = rng.chance(0.5);
            data.push_back({s, pos});
            scores.push_back(s);
            labels.push_back(pos);
            (pos ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(roc_auc(data) == oracle_roc_auc(scores, labels));  // exact
    }
}

TEST_CASE("prf: hand values") {
    // TP 9, FP 1, FN 1, TN 9
    std::vector<int> pred, truth;
    for (int i = 0; i < 9; ++i) { pred.push_back(1); truth.push_back(1); }   // TP
    pred.push_back(1); truth.push_back(0);                                    // FP
    pred.push_back(0); truth.push_back(1);                                    // FN
    for (int i = 0; i < 9; ++i) { pred.push_back(0); truth.push_back(0); }   // TN
    PrfResult r = prf(pred, truth);
    CHECK(r.accuracy == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r.precision == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r.recall == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r.f1 == doctest::Approx(0.9).epsilon(1e-12));

    PrfResult perfect = prf({1, 0, 1}, {1, 0, 1});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.f1 == 1.0);

    PrfResult degenerate = prf({0, 0}, {1, 1});
    CHECK(degenerate.recall == 0.0);
    CHECK(degenerate.f1 == 0.0);

    CHECK_THROWS_AS(prf({1}, {1, 0}), Error);
}

TEST_CASE("hallucination_rate: per-question FF fractions") {
    std::vector<LabeledGeneration> labels = {
        {"m1", "q1", LabelKind::FF}, {"m1", "q1", LabelKind::FF}, {"m1", "q1", LabelKind::FT},
        {"m1", "q1", LabelKind::FT}, {"m1", "q1", LabelKind::FR},
        {"m1", "q2", LabelKind::FR}, {"m1", "q2", LabelKind::FR},
        {"m2", "q1", LabelKind::FF},
    };
    std::vector<ModelHallucination> out = hallucination_rate(labels);
    REQUIRE(out.size() == 2);
    CHECK(out[0].model_id == "m1");
    REQUIRE(out[0].per_question.size() == 2);
    CHECK(out[0].per_question[0].ff_fraction == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(out[0].per_question[1].ff_fraction == 0.0);
    CHECK(out[0].mean_fraction == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(out[1].per_question[0].ff_fraction == 1.0);
}

TEST_CASE("build_report: shape, n/a propagation, empty input") {
    SUBCASE("2 methods x 1 model") {
        std::map<std::string, std::vector<EvalSubject>> subjects;
        subjects["RU_GEN"] = {{"m1", 0.9, true}, {"m1", 0.1, false}, {"m1", 0.8, true}};
        subjects["PE"] = {{"m1", -0.5, true}, {"m1", -0.1, false}, {"m1", -0.6, true}};
        Report r = build_report(subjects, {"PE", "RU_GEN"});
        CHECK(r.methods == std::vector<std::string>{"PE", "RU_GEN"});
        CHECK(r.models == std::vector<std::string>{"m1"});
        CHECK(r.cells.size() == 6);  // 2 methods x 3 metrics
        const std::string text = r.render_text();
        CHECK(text.find("RU_GEN") != std::string::npos);
        CHECK(text.find("ROC") != std::string::npos);
    }
    SUBCASE("single-class labels produce n/a for ROC") {
        std::map<std::string, std::vector<EvalSubject>> subjects;
        subjects["PE"] = {{"m1", 0.5, true}, {"m1", 0.6, true}};
        Report r = build_report(subjects, {"PE"});
        const ReportCell& roc = r.cells[0];
        CHECK(roc.metric == "ROC");
        CHECK_FALSE(roc.value.has_value());
        CHECK(r.render_text().find("n/a") != std::string::npos);
        CHECK_FALSE(r.coverage_notes.empty());
    }
    SUBCASE("empty input renders an empty report") {
        Report r = build_report({}, {"PE"});
        CHECK(r.cells.empty());
        CHECK(r.render_text().find("empty report") != std::string::npos);
        CHECK(r.render_jsonl().empty());
    }
}
