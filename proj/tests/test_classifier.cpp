#include <doctest.h>

#include "test_support.hpp"
#include "veritrap/classifier.hpp"

using namespace veritrap;
using namespace vtest;

namespace {

// Counts queries so FR short-circuiting is observable.
class CountingSearcher : public Searcher {
public:
    explicit CountingSearcher(const InvertedIndex& index) : inner_(index) {}
    std::vector<SearchHit> search(const std::string& query, int top_n) const override {
        ++queries_;
        return inner_.search(query, top_n);
    }
    std::optional<std::string> title_of(const std::string& doc_id) const override {
        return inner_.title_of(doc_id);
    }
    int doc_count() const override { return inner_.doc_count(); }
    int queries() const { return queries_; }

private:
    IndexSearcher inner_;
    mutable int queries_ = 0;
};

InvertedIndex people_index() {
    return build_index({{"d1", "Albert Einstein", "theoretical physicist relativity"},
                        {"d2", "Marie Curie", "chemist radioactivity"},
                        {"d3", "Alan Turing", "mathematician computation"}});
}

GenerationRecord text_record(const std::string& text) {
    GenerationRecord r = make_record({-0.1, -0.2});
    r.text = text;
    return r;
}

}  // namespace

TEST_CASE("detect_refusal: entailment with the instantiated template") {
    StubNliProvider nli(5);
    ClassifierConfig config;

    GenerationRecord refusal =
        text_record("Unfortunately, I can't provide the information of Albert Einstan.");
    CHECK(detect_refusal(refusal, "Albert Einstan", nli, config));

    GenerationRecord bio = text_record("Albert Einstan was a physicist born in 1880.");
    CHECK_FALSE(detect_refusal(bio, "Albert Einstan", nli, config));

    CHECK_THROWS_AS(detect_refusal(bio, "", nli, config), Error);
}

TEST_CASE("detect_refusal: stub with scripted neutral verdict") {
    ScriptedNliProvider nli(NliVerdict::neutral);
    ClassifierConfig config;
    GenerationRecord bio = text_record("Albert Einstan was a physicist born in 1880.");
    CHECK_FALSE(detect_refusal(bio, "Albert Einstan", nli, config));
}

TEST_CASE("ground_generation: title match decides FT vs FF") {
    InvertedIndex index = people_index();
    IndexSearcher searcher(index);
    ClassifierConfig config;
    GenerationRecord bio = text_record("some bio text");

    GroundingResult ft = ground_generation(bio, "Albert Einstein", searcher, config);
    CHECK(ft.label == LabelKind::FT);
    CHECK(ft.top_doc == std::string("d1"));
    CHECK(ft.top_score > 0.0);

    GroundingResult ff = ground_generation(bio, "Albert Einstan", searcher, config);
    CHECK(ff.label == LabelKind::FF);

    // zero term overlap: FF with no top doc and score 0
    GroundingResult zero = ground_generation(bio, "Zzyzx Qqq", searcher, config);
    CHECK(zero.label == LabelKind::FF);
    CHECK_FALSE(zero.top_doc.has_value());
    CHECK(zero.top_score == 0.0);

    // case/whitespace-insensitive title equality
    GroundingResult fuzzy = ground_generation(bio, "  albert   EINSTEIN ", searcher, config);
    CHECK(fuzzy.label == LabelKind::FT);

    InvertedIndex empty = build_index({});
    IndexSearcher empty_searcher(empty);
    CHECK_THROWS_WITH_AS(ground_generation(bio, "Anyone", empty_searcher, config),
                         doctest::Contains("index is empty"), Error);
}

TEST_CASE("ground_generation: bm25_tau opt-in relaxation") {
    InvertedIndex index = people_index();
    IndexSearcher searcher(index);
    ClassifierConfig config;

    // partial-name query matches no title exactly -> FF without tau
    GenerationRecord bio = text_record("x");
    GroundingResult strict = ground_generation(bio, "Einstein", searcher, config);
    CHECK(strict.label == LabelKind::FF);
    REQUIRE(strict.top_score > 0.0);

    // with a floor below the observed top score, the same query grounds FT
    config.bm25_tau = strict.top_score * 0.5;
    CHECK(ground_generation(bio, "Einstein", searcher, config).label == LabelKind::FT);

    config.bm25_tau = strict.top_score * 2.0;
    CHECK(ground_generation(bio, "Einstein", searcher, config).label == LabelKind::FF);
}

TEST_CASE("ground_generation: token_overlap criterion") {
    InvertedIndex index = build_index({{"d1", "Dr. Albert Einstein (physicist)", "bio"}});
    IndexSearcher searcher(index);
    ClassifierConfig config;
    GenerationRecord bio = text_record("x");

    config.title_match = TitleMatch::exact_normalized;
    CHECK(ground_generation(bio, "Albert Einstein", searcher, config).label == LabelKind::FF);
    config.title_match = TitleMatch::token_overlap;
    CHECK(ground_generation(bio, "Albert Einstein", searcher, config).label == LabelKind::FT);
}

TEST_CASE("classify: composition, evidence fields, FR short-circuit") {
    InvertedIndex index = people_index();
    StubNliProvider nli(5);
    ClassifierConfig config;

    SUBCASE("refusal -> FR, index never queried") {
        CountingSearcher searcher(index);
        GenerationRecord refusal =
            text_record("Unfortunately, I can't provide the information of Albert Einstan.");
        GenLabel label = classify(refusal, "Albert Einstan", nli, searcher, config);
        CHECK(label.label == LabelKind::FR);
        CHECK(label.nli_verdict == NliVerdict::entail);
        CHECK_FALSE(label.retrieval_top_doc.has_value());
        CHECK(searcher.queries() == 0);
        CHECK(validate(label).empty());
    }

    SUBCASE("fabricated bio of unknown name -> FF") {
        CountingSearcher searcher(index);
        GenerationRecord bio = text_record("Albert Einstan was a physicist born in 1880.");
        GenLabel label = classify(bio, "Albert Einstan", nli, searcher, config);
        CHECK(label.label == LabelKind::FF);
        CHECK(searcher.queries() == 1);
        CHECK(validate(label).empty());
    }

    SUBCASE("bio whose name matches a corpus title -> FT") {
        CountingSearcher searcher(index);
        GenerationRecord bio = text_record("Albert Einstein was a physicist.");
        GenLabel label = classify(bio, "Albert Einstein", nli, searcher, config);
        CHECK(label.label == LabelKind::FT);
        CHECK(label.retrieval_top_doc == std::string("d1"));
        CHECK(validate(label).empty());
    }
}

TEST_CASE("classify: deterministic with a stub provider") {
    InvertedIndex index = people_index();
    IndexSearcher searcher(index);
    StubNliProvider nli(5);
    ClassifierConfig config;
    GenerationRecord bio = text_record("Albert Einstan was a physicist born in 1880.");
    GenLabel a = classify(bio, "Albert Einstan", nli, searcher, config, 3);
    GenLabel b = classify(bio, "Albert Einstan", nli, searcher, config, 3);
    CHECK(to_jsonl(a) == to_jsonl(b));
}

TEST_CASE("classify: exhaustive and exclusive over random stub inputs") {
    InvertedIndex index = people_index();
    IndexSearcher searcher(index);
    StubNliProvider nli(5);
    ClassifierConfig config;
    TestRng rng(85);
    for (int i = 0; i < 50; ++i) {
        const bool refuse = rng.chance(0.4);
        const std::string name = rng.chance(0.3) ? "Albert Einstein" : "Name" + std::to_string(i);
        GenerationRecord r = text_record(
            refuse ? "Unfortunately, I can't provide the information of " + name + "."
                   : name + " was a painter born in 1900.");
        GenLabel label = classify(r, name, nli, searcher, config, static_cast<uint64_t>(i));
        const bool is_fr = label.label == LabelKind::FR;
        const bool is_ft = label.label == LabelKind::FT;
        const bool is_ff = label.label == LabelKind::FF;
        CHECK((is_fr || is_ft || is_ff));
        CHECK(validate(label).empty());
    }
}

TEST_CASE("detect_refusal: NLI direction is configurable") {
    ScriptedNliProvider nli(NliVerdict::neutral);
    ClassifierConfig config;
    GenerationRecord bio = text_record("some generation text");
    const std::string instantiated = "Unfortunately, I can't provide the information of X.";

    // entail only for template-as-premise; default direction must not see it
    nli.set(instantiated, bio.text, NliVerdict::entail);
    CHECK_FALSE(detect_refusal(bio, "X", nli, config));
    config.hypothesis_is_generation = true;
    CHECK(detect_refusal(bio, "X", nli, config));
}

TEST_CASE("classifier config validation") {
    ClassifierConfig config;
    config.top_n = 0;
    CHECK_THROWS_AS(config.validate(), Error);
    config.top_n = 5;
    config.bm25_tau = -1.0;
    CHECK_THROWS_AS(config.validate(), Error);
    config.bm25_tau.reset();
    config.refusal_template = "no placeholder";
    CHECK_THROWS_AS(config.validate(), Error);
}
