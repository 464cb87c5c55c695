#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "veritrap/errors.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// Domain types. Probabilities are stored exclusively as natural-log values;
// linear probabilities are derived at use sites, never stored.
// ---------------------------------------------------------------------------

struct AlternativeToken {
    std::string surface;
    double logprob = 0.0;  // <= 0
};

struct TokenEvent {
    int index = 0;  // 0-based position in the generation
    std::string surface;
    double logprob = 0.0;                       // <= 0
    std::vector<AlternativeToken> alternatives;  // sorted non-increasing by logprob
};

enum class FinishReason { stop, length };

struct GenerationRecord {
    std::string record_id;
    std::string question_id;
    std::string model_id;
    int sample_index = 0;
    std::string text;
    std::vector<TokenEvent> tokens;  // indices exactly 0..m-1
    FinishReason finish_reason = FinishReason::stop;

    size_t token_count() const { return tokens.size(); }
};

struct FactUnit {
    std::string fact_id;
    std::string record_id;
    std::string text;
    std::vector<int> token_span;  // strictly increasing, non-empty
};

enum class LabelKind { FR, FT, FF };
enum class NliVerdict { entail, contradict, neutral };

struct GenLabel {
    std::string record_id;
    LabelKind label = LabelKind::FF;
    std::optional<NliVerdict> nli_verdict;
    std::optional<std::string> retrieval_top_doc;
    std::string rationale;
};

enum class SubjectKind { generation, fact };

enum class ScoreMethod { PE, LNPE, MP_MEAN, MP_MAX, CCP_MEAN, CCP_MAX, RU_GEN, RU_FACT };

struct ScoredResult {
    SubjectKind subject_kind = SubjectKind::generation;
    std::string subject_id;
    ScoreMethod method = ScoreMethod::PE;
    double value = 0.0;
};

enum class ForgeStrategy { PR, WF, FWC };
enum class NameVerdict { real, fake };

struct VerificationTrace {
    std::vector<NameVerdict> rounds;  // the per-pass verdicts, in order
    int planned_passes = 1;
    int tie_rounds_added = 0;
    NameVerdict final_verdict = NameVerdict::fake;
};

struct TrapQuestion {
    std::string question_id;
    std::string fake_name;
    ForgeStrategy strategy = ForgeStrategy::WF;
    std::vector<std::string> source_names;
    std::string prompt_text;  // must contain fake_name
    VerificationTrace verification;
};

struct CorpusDoc {
    std::string doc_id;
    std::string title;
    std::string body;
};

// ---------------------------------------------------------------------------
// Enum <-> string names used on the wire (JSONL) and in reports.
// ---------------------------------------------------------------------------

const char* to_string(FinishReason v);
const char* to_string(LabelKind v);
const char* to_string(NliVerdict v);
const char* to_string(SubjectKind v);
const char* to_string(ScoreMethod v);
const char* to_string(ForgeStrategy v);
const char* to_string(NameVerdict v);

FinishReason finish_reason_from_string(const std::string& s);
LabelKind label_kind_from_string(const std::string& s);
NliVerdict nli_verdict_from_string(const std::string& s);
SubjectKind subject_kind_from_string(const std::string& s);
ScoreMethod score_method_from_string(const std::string& s);
ForgeStrategy forge_strategy_from_string(const std::string& s);
NameVerdict name_verdict_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Invariant validation. validate(x) returns every violation, not just the
// first; an empty result means the value is well-formed.
// ---------------------------------------------------------------------------

std::vector<std::string> validate(const GenerationRecord& r);
std::vector<std::string> validate(const FactUnit& f);
std::vector<std::string> validate(const GenLabel& l);
std::vector<std::string> validate(const ScoredResult& s);
std::vector<std::string> validate(const TrapQuestion& q);
std::vector<std::string> validate(const VerificationTrace& t);

// Cross-checks a fact against its owning record. Returns all violations.
// Throws usage_error when fact.record_id != record.record_id.
std::vector<std::string> validate_fact(const FactUnit& fact, const GenerationRecord& record);

// ---------------------------------------------------------------------------
// JSONL serialization. One object per line, UTF-8, field names matching the
// struct fields. parse_* functions validate invariants and attach the
// 1-based line number to every failure.
// ---------------------------------------------------------------------------

std::string to_jsonl(const GenerationRecord& r);
std::string to_jsonl(const FactUnit& f);
std::string to_jsonl(const GenLabel& l);
std::string to_jsonl(const ScoredResult& s);
std::string to_jsonl(const TrapQuestion& q);
std::string to_jsonl(const CorpusDoc& d);

std::vector<GenerationRecord> parse_records(std::istream& in);
std::vector<FactUnit> parse_facts(std::istream& in);
std::vector<GenLabel> parse_labels(std::istream& in);
std::vector<ScoredResult> parse_scores(std::istream& in);
std::vector<TrapQuestion> parse_questions(std::istream& in);
std::vector<CorpusDoc> parse_corpus(std::istream& in);  // enforces doc_id uniqueness

std::vector<GenerationRecord> read_records_file(const std::string& path);
std::vector<FactUnit> read_facts_file(const std::string& path);
std::vector<GenLabel> read_labels_file(const std::string& path);
std::vector<ScoredResult> read_scores_file(const std::string& path);
std::vector<TrapQuestion> read_questions_file(const std::string& path);
std::vector<CorpusDoc> read_corpus_file(const std::string& path);

}  // namespace veritrap
