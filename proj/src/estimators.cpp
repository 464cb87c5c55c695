#include "veritrap/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace veritrap {

namespace {

void check_fact(const FactUnit& fact, const GenerationRecord& record) {
    std::vector<std::string> violations = validate_fact(fact, record);
    if (!violations.empty()) {
        std::string msg = "invalid fact " + fact.fact_id;
        for (const std::string& v : violations) msg += ": " + v;
        throw validation_error(msg);
    }
}

// Geometric-mean token probability over a span: exp of the mean logprob.
double geometric_mean_prob(const GenerationRecord& record, const std::vector<int>& span) {
    double sum = 0.0;
    for (int idx : span) sum += record.tokens[static_cast<size_t>(idx)].logprob;
    return std::exp(sum / static_cast<double>(span.size()));
}

std::vector<int> whole_span(const GenerationRecord& record) {
    std::vector<int> span(record.tokens.size());
    for (size_t j = 0; j < span.size(); ++j) span[j] = static_cast<int>(j);
    return span;
}

}  // namespace

double pe(const GenerationRecord& record) {
    if (record.tokens.empty()) throw domain_error("pe: record has no tokens");
    double sum = 0.0;
    for (const TokenEvent& t : record.tokens) sum += std::exp(t.logprob) * t.logprob;
    return sum;
}

double ln_pe(const GenerationRecord& record) {
    if (record.tokens.empty()) throw domain_error("ln_pe: record has no tokens");
    return pe(record) / static_cast<double>(record.tokens.size());
}

double max_prob(const FactUnit& fact, const GenerationRecord& record) {
    check_fact(fact, record);
    double prod = 1.0;
    for (int idx : fact.token_span) prod *= std::exp(record.tokens[static_cast<size_t>(idx)].logprob);
    return 1.0 - prod;
}

CcpWordResult ccp_word(const TokenEvent& token, const std::map<std::string, NliVerdict>& verdicts) {
    // Self-entailment: the original token contributes to both sums.
    double entail_mass = std::exp(token.logprob);
    double denom_mass = entail_mass;
    for (const AlternativeToken& alt : token.alternatives) {
        auto it = verdicts.find(alt.surface);
        if (it == verdicts.end() || it->second == NliVerdict::neutral) continue;
        const double p = std::exp(alt.logprob);
        denom_mass += p;
        if (it->second == NliVerdict::entail) entail_mass += p;
    }
    if (denom_mass == 0.0) return {1.0, true};
    return {entail_mass / denom_mass, false};
}

double ccp_claim(const FactUnit& fact, const GenerationRecord& record,
                 const std::map<int, double>& word_scores) {
    check_fact(fact, record);
    double prod = 1.0;
    for (int idx : fact.token_span) {
        auto it = word_scores.find(idx);
        if (it == word_scores.end()) {
            throw usage_error("ccp_claim: no word score for token index " + std::to_string(idx));
        }
        prod *= it->second;
    }
    return 1.0 - prod;
}

double ru_fr(const GenerationRecord& record) {
    if (record.tokens.empty()) throw domain_error("ru_fr: record has no tokens");
    return 1.0 - geometric_mean_prob(record, whole_span(record));
}

double ru_ft(const FactUnit& fact, const GenerationRecord& record) {
    check_fact(fact, record);
    return 1.0 - geometric_mean_prob(record, fact.token_span);
}

double ru_ff(const FactUnit& fact, const GenerationRecord& record) {
    check_fact(fact, record);
    return geometric_mean_prob(record, fact.token_span);
}

double combine(const std::vector<double>& fact_scores, Combiner combiner) {
    if (fact_scores.empty()) throw domain_error("combine: empty score list");
    switch (combiner.kind) {
        case CombinerKind::mean: {
            double sum = 0.0;
            for (double s : fact_scores) sum += s;
            return sum / static_cast<double>(fact_scores.size());
        }
        case CombinerKind::max:
            return *std::max_element(fact_scores.begin(), fact_scores.end());
        case CombinerKind::noisy_or: {
            double survive = 1.0;
            for (double s : fact_scores) {
                if (s < 0.0 || s > 1.0) {
                    throw domain_error("combine: noisy_or requires scores in [0,1]");
                }
                survive *= 1.0 - s;
            }
            return 1.0 - survive;
        }
    }
    throw domain_error("combine: unknown combiner");
}

std::vector<ScoredResult> ru_score(const GenerationRecord& record, const GenLabel& label,
                                   const std::vector<FactUnit>& facts, ScoreGranularity granularity,
                                   const RuConfig& config) {
    if (label.record_id != record.record_id) {
        throw usage_error("ru_score: label belongs to record " + label.record_id + ", not " + record.record_id);
    }
    for (const FactUnit& f : facts) check_fact(f, record);

    if (label.label == LabelKind::FR) {
        return {{SubjectKind::generation, record.record_id, ScoreMethod::RU_GEN, ru_fr(record)}};
    }
    if (facts.empty()) {
        throw domain_error("ru_score: label " + std::string(to_string(label.label)) +
                           " requires facts (record " + record.record_id + ")");
    }

    const bool corrected = label.label == LabelKind::FT;
    std::vector<double> fact_scores;
    fact_scores.reserve(facts.size());
    for (const FactUnit& f : facts) {
        fact_scores.push_back(corrected ? ru_ft(f, record) : ru_ff(f, record));
    }

    if (granularity == ScoreGranularity::fact) {
        std::vector<ScoredResult> out;
        out.reserve(facts.size());
        for (size_t i = 0; i < facts.size(); ++i) {
            out.push_back({SubjectKind::fact, facts[i].fact_id, ScoreMethod::RU_FACT, fact_scores[i]});
        }
        return out;
    }

    const Combiner combiner = corrected ? config.ft_combiner : config.ff_combiner;
    return {{SubjectKind::generation, record.record_id, ScoreMethod::RU_GEN, combine(fact_scores, combiner)}};
}

UncertaintyBand apply_threshold(double score, const ThresholdConfig& config) {
    return score > config.theta ? UncertaintyBand::high_uncertainty : UncertaintyBand::low_uncertainty;
}

}  // namespace veritrap
