#include "veritrap/classifier.hpp"

#include <cstdio>
#include <set>

#include "veritrap/util.hpp"

namespace veritrap {

void ClassifierConfig::validate() const {
    if (top_n < 1) throw validation_error("classifier: top_n must be >= 1");
    if (bm25_tau && *bm25_tau < 0.0) throw validation_error("classifier: bm25_tau must be >= 0");
    if (refusal_template.find("{name}") == std::string::npos) {
        throw validation_error("classifier: refusal_template must contain {name}");
    }
}

std::vector<SearchHit> IndexSearcher::search(const std::string& query, int top_n) const {
    return veritrap::search(index_, query, top_n);
}

std::optional<std::string> IndexSearcher::title_of(const std::string& doc_id) const {
    auto it = index_.titles.find(doc_id);
    if (it == index_.titles.end()) return std::nullopt;
    return it->second;
}

bool detect_refusal(const GenerationRecord& record, const std::string& name, NliProvider& nli_provider,
                    const ClassifierConfig& config, uint64_t seed_hint, NliVerdict* verdict_out) {
    if (trim(name).empty()) throw usage_error("detect_refusal: empty name");
    config.validate();
    const std::string instantiated = substitute_name(config.refusal_template, name);
    const std::string& premise = config.hypothesis_is_generation ? instantiated : record.text;
    const std::string& hypothesis = config.hypothesis_is_generation ? record.text : instantiated;
    const NliVerdict verdict = nli(nli_provider, premise, hypothesis, seed_hint);
    if (verdict_out) *verdict_out = verdict;
    return verdict == NliVerdict::entail;
}

namespace {

bool title_matches(const std::string& title, const std::string& name, TitleMatch criterion) {
    switch (criterion) {
        case TitleMatch::exact_normalized:
            return normalize_name(title) == normalize_name(name);
        case TitleMatch::token_overlap: {
            // Every name token must occur in the title.
            std::set<std::string> title_terms;
            for (const std::string& t : tokenize(title)) title_terms.insert(t);
            const std::vector<std::string> name_terms = tokenize(name);
            if (name_terms.empty()) return false;
            for (const std::string& t : name_terms) {
                if (!title_terms.count(t)) return false;
            }
            return true;
        }
    }
    return false;
}

}  // namespace

GroundingResult ground_generation(const GenerationRecord&, const std::string& name,
                                  const Searcher& index, const ClassifierConfig& config) {
    config.validate();
    if (index.doc_count() == 0) {
        throw validation_error("ground_generation: retrieval index is empty; build it from a corpus first");
    }
    if (trim(name).empty()) throw usage_error("ground_generation: empty name");

    GroundingResult result;
    const std::vector<SearchHit> hits = index.search(name, config.top_n);
    if (!hits.empty()) {
        result.top_doc = hits[0].doc_id;
        result.top_score = hits[0].score;
    }
    bool found = false;
    for (const SearchHit& hit : hits) {
        std::optional<std::string> title = index.title_of(hit.doc_id);
        if (title && title_matches(*title, name, config.title_match)) {
            found = true;
            result.top_doc = hit.doc_id;
            result.top_score = hit.score;
            break;
        }
    }
    if (!found && config.bm25_tau && !hits.empty() && hits[0].score >= *config.bm25_tau) {
        found = true;
    }
    result.label = found ? LabelKind::FT : LabelKind::FF;
    return result;
}

GenLabel classify(const GenerationRecord& record, const std::string& name, NliProvider& nli_provider,
                  const Searcher& index, const ClassifierConfig& config, uint64_t seed_hint) {
    GenLabel label;
    label.record_id = record.record_id;
    NliVerdict verdict = NliVerdict::neutral;
    if (detect_refusal(record, name, nli_provider, config, seed_hint, &verdict)) {
        label.label = LabelKind::FR;
        label.nli_verdict = verdict;
        label.rationale = "refusal template entailed";
        return label;
    }
    label.nli_verdict = verdict;
    const GroundingResult grounding = ground_generation(record, name, index, config);
    label.label = grounding.label;
    label.retrieval_top_doc = grounding.top_doc;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", grounding.top_score);
    label.rationale = grounding.label == LabelKind::FT
                          ? std::string("entity retrieved (top score ") + buf + ")"
                          : std::string("no matching entity (top score ") + buf + ")";
    return label;
}

}  // namespace veritrap
