#pragma once

#include <map>
#include <string>
#include <vector>

#include "veritrap/records.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// Uncertainty estimators. All functions are pure functions of the stored
// natural-log probabilities.
//
// norm(.) is the arithmetic mean of log-probabilities over the token set in
// question, so exp(norm(sum log p)) is the geometric-mean token probability.
// ---------------------------------------------------------------------------

enum class CombinerKind { mean, max, noisy_or };

struct Combiner {
    CombinerKind kind = CombinerKind::mean;
};

struct ThresholdConfig {
    double theta = 0.5;  // in (0,1)
};

enum class UncertaintyBand { high_uncertainty, low_uncertainty };

// Sum over tokens of p * log p (note: no leading minus; the negate flag
// in the scoring stage flips it to the common entropy sign).
// Throws domain_error on an empty token list.
double pe(const GenerationRecord& record);

// pe(record) / m.
double ln_pe(const GenerationRecord& record);

// 1 - product of span token probabilities. Throws validation_error when the
// fact does not validate against the record.
double max_prob(const FactUnit& fact, const GenerationRecord& record);

struct CcpWordResult {
    double value = 1.0;
    // Set when neither entail nor contradict mass was representable; the
    // value is then 1.0 by convention.
    bool no_evidence = false;
};

// Claim-conditioned probability of a single token: entail mass over
// entail+contradict mass across the token and its alternatives. The original
// token always participates with verdict entail; alternatives absent from
// `verdicts` are treated as neutral and excluded from both sums.
CcpWordResult ccp_word(const TokenEvent& token, const std::map<std::string, NliVerdict>& verdicts);

// 1 - product of per-token CCP word scores over the fact span. `word_scores`
// maps token index -> ccp_word value; a missing index is a usage error.
double ccp_claim(const FactUnit& fact, const GenerationRecord& record,
                 const std::map<int, double>& word_scores);

// RU scores. ru_fr covers the whole generation; ru_ft / ru_ff cover
// a fact span. ru_ff(f) + ru_ft(f) == 1 up to one ulp by construction.
double ru_fr(const GenerationRecord& record);
double ru_ft(const FactUnit& fact, const GenerationRecord& record);
double ru_ff(const FactUnit& fact, const GenerationRecord& record);

// Aggregates fact scores in [0,1]. noisy_or is 1 - prod(1 - s_i) and grows
// strictly with every additional positive-score fact.
double combine(const std::vector<double>& fact_scores, Combiner combiner);

struct RuConfig {
    Combiner ft_combiner{CombinerKind::mean};
    Combiner ff_combiner{CombinerKind::noisy_or};
};

enum class ScoreGranularity { generation, fact };

// Dispatches the RU form by label. FR yields a single generation-level score
// regardless of granularity (facts, if any, are ignored). FT/FF at fact
// granularity yield one RU_FACT result per fact; at generation granularity
// the fact scores are folded with the configured combiner.
std::vector<ScoredResult> ru_score(const GenerationRecord& record, const GenLabel& label,
                                   const std::vector<FactUnit>& facts, ScoreGranularity granularity,
                                   const RuConfig& config = {});

// high iff score > theta; the boundary stays low.
UncertaintyBand apply_threshold(double score, const ThresholdConfig& config);

}  // namespace veritrap
