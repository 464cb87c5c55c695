#pragma once

#include <optional>
#include <string>
#include <vector>

#include "veritrap/gateway.hpp"
#include "veritrap/records.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// Fake-name construction: candidate generation via the three forging
// strategies, T-pass majority-vote verification with tie re-rounds, and trap
// question emission.
// ---------------------------------------------------------------------------

struct StrategyMix {
    double pr = 0.35;
    double wf = 0.58;
    double fwc = 0.07;

    void validate() const;  // proportions sum to 1 +- 1e-9
};

struct ForgeConfig {
    int k_candidates = 100;
    int passes_T = 3;
    bool use_cot = false;
    std::vector<std::string> question_templates = {"Tell me a bio of {name}.",
                                                   "Tell me a brief introduction of {name}."};
    StrategyMix strategy_mix;
    int candidate_retry_budget = 4;  // regeneration attempts for short candidate lists
    int tie_round_cap = 10;          // extra rounds allowed before a name is dropped
    // Case-insensitive verdict patterns; the earliest match in the reply wins.
    std::string real_regex = R"(\byes\b|\breal person\b)";
    std::string fake_regex = R"(\bno\b|\bnot a real\b|\bfictional\b)";
    // When set, questions are built from this edited review file instead of
    // generating and verifying candidates.
    std::string from_review;

    void validate() const;
};

enum class CandidateStage { potential, verified, final };

struct Candidate {
    std::string name;
    ForgeStrategy strategy = ForgeStrategy::WF;
    std::vector<std::string> source_names;
    std::optional<VerificationTrace> verification;
};

struct CandidateList {
    CandidateStage stage = CandidateStage::potential;
    std::vector<Candidate> names;
};

// Thrown when fewer than k unique candidates emerged within the retry
// budget; carries what was produced.
class PartialResultError : public Error {
public:
    PartialResultError(std::string message, CandidateList produced)
        : Error(ErrorCategory::partial, std::move(message)), produced_(std::move(produced)) {}
    const CandidateList& produced() const { return produced_; }

private:
    CandidateList produced_;
};

// Replaces name_a's segments from `position` onward with name_b's segments
// from the same position onward. Pure; position must be in [0, segments(a)).
std::string permute_recombine(const std::string& name_a, const std::string& name_b, int position);

// Produces exactly k unique candidate names via the generator. Only PR and
// WF are generator strategies; FWC is a usage error (those names are added
// manually through the review file). Candidates equal to an input real name
// (case-insensitive) are rejected and regenerated within the retry budget.
CandidateList generate_candidates(const std::vector<std::string>& real_names, ForgeStrategy strategy,
                                  int k, TextProvider& generator, const PromptSet& prompts,
                                  uint64_t seed_hint = 0, int retry_budget = 4);

// Parses one verifier reply to a verdict; std::nullopt when neither pattern
// matches. With CoT only the final non-empty line is considered.
std::optional<NameVerdict> parse_verifier_reply(const std::string& reply, bool use_cot,
                                                const ForgeConfig& config);

// Runs passes_T verifier rounds, adds one round per tie until a strict
// majority exists (capped, then the name is dropped with a diagnostic), and
// returns the full trace. Unparseable replies are retried twice per round,
// then abort the name.
VerificationTrace verify_name(const std::string& name, TextProvider& verifier, const ForgeConfig& config,
                              const PromptSet& prompts, uint64_t seed_hint = 0);

// One TrapQuestion per fake-verdict candidate; question templates are
// assigned round-robin. Real-verdict names are skipped with a warning.
std::vector<TrapQuestion> build_trap_questions(const CandidateList& names, const ForgeConfig& config,
                                               std::vector<std::string>* warnings = nullptr);

// Human-editable review file: one candidate per line, tab-separated
// name/strategy/verdict columns. Import yields stage = final; lines added by
// hand (e.g. FWC names) get a synthesized single-round trace.
std::string export_review_file(const CandidateList& candidates);
CandidateList import_review_file(const std::string& content, const CandidateList* verified = nullptr);

}  // namespace veritrap
