#pragma once

#include <functional>
#include <optional>
#include <string>

#include "veritrap/gateway.hpp"
#include "veritrap/records.hpp"
#include "veritrap/retrieval.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// FR/FT/FF labeling: an NLI verdict against the refusal template decides FR;
// otherwise BM25 grounding of the person name against the corpus decides FT
// (entity found) vs FF (not found).
// ---------------------------------------------------------------------------

enum class TitleMatch { exact_normalized, token_overlap };

struct ClassifierConfig {
    std::string refusal_template = "Unfortunately, I can't provide the information of {name}.";
    int top_n = 5;
    TitleMatch title_match = TitleMatch::exact_normalized;
    std::optional<double> bm25_tau;  // optional score floor
    // premise = generation, hypothesis = template by default; flip for the
    // opposite NLI direction.
    bool hypothesis_is_generation = false;

    void validate() const;
};

// Narrow search interface so tests can observe whether retrieval happened.
class Searcher {
public:
    virtual ~Searcher() = default;
    virtual std::vector<SearchHit> search(const std::string& query, int top_n) const = 0;
    virtual std::optional<std::string> title_of(const std::string& doc_id) const = 0;
    virtual int doc_count() const = 0;
};

class IndexSearcher : public Searcher {
public:
    explicit IndexSearcher(const InvertedIndex& index) : index_(index) {}
    std::vector<SearchHit> search(const std::string& query, int top_n) const override;
    std::optional<std::string> title_of(const std::string& doc_id) const override;
    int doc_count() const override { return index_.doc_count; }

private:
    const InvertedIndex& index_;
};

// True iff the NLI verdict for (generation, instantiated refusal template)
// is entailment. Throws usage_error on an empty name.
bool detect_refusal(const GenerationRecord& record, const std::string& name, NliProvider& nli,
                    const ClassifierConfig& config, uint64_t seed_hint = 0,
                    NliVerdict* verdict_out = nullptr);

struct GroundingResult {
    LabelKind label = LabelKind::FF;  // FT or FF
    std::optional<std::string> top_doc;
    double top_score = 0.0;
};

// FT iff a top-n hit's title matches the name under the configured
// criterion, or the top score clears bm25_tau when set; FF otherwise.
GroundingResult ground_generation(const GenerationRecord& record, const std::string& name,
                                  const Searcher& index, const ClassifierConfig& config);

// FR short-circuits grounding: the index is never queried for refusals.
GenLabel classify(const GenerationRecord& record, const std::string& name, NliProvider& nli,
                  const Searcher& index, const ClassifierConfig& config, uint64_t seed_hint = 0);

}  // namespace veritrap
