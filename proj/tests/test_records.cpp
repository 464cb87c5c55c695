#include <doctest.h>

#include <sstream>

#include "test_support.hpp"
#include "veritrap/records.hpp"

using namespace veritrap;
using namespace vtest;

TEST_CASE("parse_records: empty stream yields empty list") {
    std::istringstream in("");
    CHECK(parse_records(in).empty());
}

TEST_CASE("parse_records: minimal well-formed record") {
    GenerationRecord r = make_record({-0.5, -0.25, 0.0});
    std::istringstream in(to_jsonl(r) + "\n");
    std::vector<GenerationRecord> parsed = parse_records(in);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].tokens.size() == 3);
    CHECK(parsed[0].record_id == "r1");
}

TEST_CASE("parse_records: non-consecutive token indices rejected with line number") {
    GenerationRecord r = make_record({-0.5, -0.25});
    r.tokens[1].index = 2;
    std::istringstream in(to_jsonl(r) + "\n");
    CHECK_THROWS_WITH_AS(parse_records(in), doctest::Contains("non-consecutive token index"), Error);

    std::istringstream in2("\n" + to_jsonl(r) + "\n");
    try {
        parse_records(in2);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("parse_records: malformed JSON names the line") {
    std::istringstream in("{not json\n");
    CHECK_THROWS_WITH_AS(parse_records(in), doctest::Contains("line 1"), Error);
}

TEST_CASE("parse_records: positive logprob rejected, field named") {
    GenerationRecord r = make_record({0.5});
    std::istringstream in(to_jsonl(r) + "\n");
    CHECK_THROWS_WITH_AS(parse_records(in), doctest::Contains("logprob"), Error);
}

TEST_CASE("parse_records: unsorted alternatives rejected") {
    GenerationRecord r = make_record({-0.5});
    r.tokens[0].alternatives = {{"a", -2.0}, {"b", -1.0}};
    std::istringstream in(to_jsonl(r) + "\n");
    CHECK_THROWS_WITH_AS(parse_records(in), doctest::Contains("not sorted"), Error);
}

TEST_CASE("validate_fact: span checks") {
    GenerationRecord r = make_record({-0.1, -0.2, -0.3});

    CHECK(validate_fact(make_fact(r, {0, 1}), r).empty());

    std::vector<std::string> v1 = validate_fact(make_fact(r, {}), r);
    REQUIRE(v1.size() == 1);
    CHECK(v1[0] == "empty span");

    std::vector<std::string> v2 = validate_fact(make_fact(r, {5}), r);
    REQUIRE(v2.size() == 1);
    CHECK(v2[0].find("index out of range") != std::string::npos);

    // every violation is reported, not just the first
    std::vector<std::string> v3 = validate_fact(make_fact(r, {2, 2, 9}), r);
    CHECK(v3.size() >= 2);

    FactUnit foreign = make_fact(r, {0});
    foreign.record_id = "other";
    CHECK_THROWS_AS((void)validate_fact(foreign, r), Error);
}

TEST_CASE("GenLabel invariants: FR requires entail, FT/FF forbid it") {
    GenLabel l;
    l.record_id = "r1";
    l.label = LabelKind::FR;
    l.nli_verdict = NliVerdict::entail;
    CHECK(validate(l).empty());

    l.nli_verdict = NliVerdict::neutral;
    CHECK(!validate(l).empty());

    l.label = LabelKind::FF;
    l.nli_verdict = NliVerdict::entail;
    CHECK(!validate(l).empty());
    l.nli_verdict.reset();
    CHECK(validate(l).empty());
}

TEST_CASE("VerificationTrace invariants") {
    VerificationTrace t;
    t.rounds = {NameVerdict::fake, NameVerdict::real, NameVerdict::fake};
    t.planned_passes = 2;
    t.tie_rounds_added = 1;
    t.final_verdict = NameVerdict::fake;
    CHECK(validate(t).empty());

    t.final_verdict = NameVerdict::real;
    CHECK(!validate(t).empty());

    t.final_verdict = NameVerdict::fake;
    t.tie_rounds_added = 0;
    CHECK(!validate(t).empty());
}

TEST_CASE("TrapQuestion: prompt must contain the fake name") {
    TrapQuestion q;
    q.question_id = "q1";
    q.fake_name = "Albert Einstan";
    q.strategy = ForgeStrategy::WF;
    q.prompt_text = "Tell me a bio of Albert Einstan.";
    q.verification = {{NameVerdict::fake}, 1, 0, NameVerdict::fake};
    CHECK(validate(q).empty());

    q.prompt_text = "Tell me a bio of someone else.";
    CHECK(!validate(q).empty());
}

TEST_CASE("ScoredResult: bounded methods validated, PE sign free") {
    ScoredResult s{SubjectKind::generation, "r1", ScoreMethod::RU_GEN, 1.5};
    CHECK(!validate(s).empty());
    s.value = 0.5;
    CHECK(validate(s).empty());
    s.method = ScoreMethod::PE;
    s.value = -3.0;
    CHECK(validate(s).empty());
}

TEST_CASE("corpus parsing enforces unique doc ids") {
    std::string lines = to_jsonl(CorpusDoc{"d1", "A", "body"}) + "\n" +
                        to_jsonl(CorpusDoc{"d1", "B", "body"}) + "\n";
    std::istringstream in(lines);
    CHECK_THROWS_WITH_AS(parse_corpus(in), doctest::Contains("duplicate doc_id"), Error);
}

namespace {

GenerationRecord random_full_record(TestRng& rng, int id) {
    GenerationRecord r = random_record(rng, 20, -6.0, "rec-" + std::to_string(id));
    r.question_id = "q-" + std::to_string(id % 7);
    r.sample_index = id % 5;
    r.finish_reason = rng.chance(0.2) ? FinishReason::length : FinishReason::stop;
    for (TokenEvent& t : r.tokens) {
        const int alts = rng.uniform_int(0, 3);
        double lp = t.logprob;
        for (int a = 0; a < alts; ++a) {
            lp -= rng.uniform(0.0, 2.0);
            t.alternatives.push_back({"alt" + std::to_string(a), lp});
        }
    }
    return r;
}

}  // namespace

TEST_CASE("round-trip: serialize(parse(x)) == parse(x) on random records") {
    TestRng rng(977);
    for (int i = 0; i < 200; ++i) {
        GenerationRecord original = random_full_record(rng, i);
        const std::string line = to_jsonl(original);
        std::istringstream in(line + "\n");
        std::vector<GenerationRecord> parsed = parse_records(in);
        REQUIRE(parsed.size() == 1);
        CHECK(to_jsonl(parsed[0]) == line);

        // field-by-field spot checks
        CHECK(parsed[0].record_id == original.record_id);
        CHECK(parsed[0].tokens.size() == original.tokens.size());
        for (size_t j = 0; j < original.tokens.size(); ++j) {
            CHECK(parsed[0].tokens[j].logprob == original.tokens[j].logprob);
            CHECK(parsed[0].tokens[j].alternatives.size() == original.tokens[j].alternatives.size());
        }
    }
}

TEST_CASE("round-trip: questions, facts, labels, scores") {
    TrapQuestion q;
    q.question_id = "q9";
    q.fake_name = "Ada Turing";
    q.strategy = ForgeStrategy::PR;
    q.source_names = {"Ada Lovelace", "Alan Turing"};
    q.prompt_text = "Tell me a bio of Ada Turing.";
    q.verification = {{NameVerdict::fake, NameVerdict::fake, NameVerdict::real}, 3, 0, NameVerdict::fake};
    {
        std::istringstream in(to_jsonl(q) + "\n");
        std::vector<TrapQuestion> parsed = parse_questions(in);
        REQUIRE(parsed.size() == 1);
        CHECK(to_jsonl(parsed[0]) == to_jsonl(q));
    }

    GenerationRecord r = make_record({-0.5, -0.1});
    FactUnit f = make_fact(r, {0, 1});
    {
        std::istringstream in(to_jsonl(f) + "\n");
        std::vector<FactUnit> parsed = parse_facts(in);
        REQUIRE(parsed.size() == 1);
        CHECK(to_jsonl(parsed[0]) == to_jsonl(f));
    }

    GenLabel l = make_label(r, LabelKind::FT);
    l.nli_verdict = NliVerdict::contradict;
    l.retrieval_top_doc = "d7";
    l.rationale = "entity retrieved";
    {
        std::istringstream in(to_jsonl(l) + "\n");
        std::vector<GenLabel> parsed = parse_labels(in);
        REQUIRE(parsed.size() == 1);
        CHECK(to_jsonl(parsed[0]) == to_jsonl(l));
    }

    ScoredResult s{SubjectKind::fact, "f1", ScoreMethod::RU_FACT, 0.25};
    {
        std::istringstream in(to_jsonl(s) + "\n");
        std::vector<ScoredResult> parsed = parse_scores(in);
        REQUIRE(parsed.size() == 1);
        CHECK(to_jsonl(parsed[0]) == to_jsonl(s));
    }
}

TEST_CASE("randomly corrupted records are rejected") {
    TestRng rng(31337);
    int rejected = 0;
    for (int i = 0; i < 100; ++i) {
        GenerationRecord r = random_full_record(rng, i);
        switch (rng.uniform_int(0, 3)) {
            case 0: r.tokens[rng.uniform_int(0, int(r.tokens.size()) - 1)].logprob = 0.5; break;
            case 1: r.tokens.back().index += 1; break;
            case 2: r.tokens.clear(); break;
            case 3: r.sample_index = -1; break;
        }
        std::istringstream in(to_jsonl(r) + "\n");
        try {
            parse_records(in);
        } catch (const Error&) {
            ++rejected;
        }
    }
    CHECK(rejected == 100);
}
