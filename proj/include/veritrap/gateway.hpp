#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "veritrap/records.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// External model access: text generation with token logprobs, NLI verdicts,
// fact decomposition and fact->word mapping, behind provider interfaces with
// deterministic seeded stubs. The word->token alignment is a local algorithm.
// ---------------------------------------------------------------------------

struct SamplingConfig {
    int num_samples = 5;
    int beam_size = 5;
    double temperature = 1.0;
    int max_tokens = 100;
    std::optional<int> top_k;  // unset = model default
    int k_alt = 5;             // top_logprobs per token

    void validate() const;
};

struct ProviderEndpoint {
    std::string base_url;
    std::string api_key;
    std::string model_id;
    int max_in_flight = 4;
    int retry_budget = 3;
};

// Bounds concurrent requests per endpoint. RAII tickets; peak() reports the
// highest overlap observed (used by the instrumented-stub test).
class InFlightGate {
public:
    explicit InFlightGate(int max_in_flight);

    class Ticket {
    public:
        explicit Ticket(InFlightGate* gate) : gate_(gate) {}
        Ticket(Ticket&& other) noexcept : gate_(other.gate_) { other.gate_ = nullptr; }
        Ticket(const Ticket&) = delete;
        Ticket& operator=(const Ticket&) = delete;
        Ticket& operator=(Ticket&&) = delete;
        ~Ticket();

    private:
        InFlightGate* gate_;
    };

    Ticket acquire();
    int peak() const;
    int limit() const { return max_in_flight_; }

private:
    friend class Ticket;
    void release();

    mutable std::mutex mu_;
    std::condition_variable cv_;
    int max_in_flight_;
    int in_flight_ = 0;
    int peak_ = 0;
};

class TextProvider {
public:
    virtual ~TextProvider() = default;

    // Returns config.num_samples generations for the prompt, sample_index
    // 0..n-1, with per-token logprobs and up to k_alt alternatives each.
    // record_id/question_id are left empty for the caller to assign.
    // seed_hint keeps stub output deterministic; live providers ignore it.
    virtual std::vector<GenerationRecord> complete(const std::string& prompt, const SamplingConfig& config,
                                                   uint64_t seed_hint) = 0;

    virtual const std::string& model_id() const = 0;
    virtual InFlightGate& gate() = 0;
};

class NliProvider {
public:
    virtual ~NliProvider() = default;
    virtual NliVerdict classify(const std::string& premise, const std::string& hypothesis,
                                uint64_t seed_hint) = 0;
    virtual InFlightGate& gate() = 0;
};

// ---------------------------------------------------------------------------
// Prompt templates. Loaded from a directory; any missing file falls back to
// the built-in default with the same text.
// ---------------------------------------------------------------------------

struct PromptSet {
    std::string decompose;        // {generation}
    std::string verify_name;      // {name}
    std::string verify_name_cot;  // {name}
    std::string map_words;        // {generation}, {fact}
    std::string forge_names;      // {strategy}, {count}, {names}

    static PromptSet builtin();
    static PromptSet load(const std::string& dir);
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Validates the prompt/config, invokes the provider, and checks every
// returned record against the type invariants.
std::vector<GenerationRecord> complete(TextProvider& provider, const std::string& prompt,
                                       const SamplingConfig& config, uint64_t seed_hint = 0);

NliVerdict nli(NliProvider& provider, const std::string& premise, const std::string& hypothesis,
               uint64_t seed_hint = 0);

// Ordered list of atomic fact statements for the record's text; empty for
// refusals. An unparseable reply is retried once, then raises a
// decomposition error.
std::vector<std::string> decompose_facts(TextProvider& provider, const GenerationRecord& record,
                                         const PromptSet& prompts, uint64_t seed_hint = 0);

struct MapWordsResult {
    std::vector<std::string> words;
    std::vector<std::string> dropped;  // reply words absent from the record text
};

// Words of the record text carrying the fact. Reply words not present in the
// text are dropped (reported in `dropped`); an empty surviving list is a
// mapping error.
MapWordsResult map_fact_words(TextProvider& provider, const GenerationRecord& record,
                              const std::string& fact_text, const PromptSet& prompts,
                              uint64_t seed_hint = 0);

// Strips surrounding whitespace and leading subword markers (U+2581, 'Ġ',
// "##") from a token surface.
std::string strip_subword_markers(std::string_view surface);

// For each word, a left-to-right greedy scan (resuming after the previous
// match) finds the minimal contiguous token run whose concatenated cleaned
// surfaces contain the word; the union of runs is returned sorted and
// deduplicated. A word unmatched in the forward scan is retried from
// position 0; if still unmatched, an alignment error names it.
std::vector<int> align_words_to_tokens(const std::vector<std::string>& words,
                                       const std::vector<TokenEvent>& tokens);

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

// Deterministic stub: a pure function of (inputs, seed). Dispatches on the
// prompt shape (bio question, name verification, decomposition, word
// mapping, candidate forging) and synthesizes plausible replies.
class StubTextProvider : public TextProvider {
public:
    explicit StubTextProvider(uint64_t seed, ProviderEndpoint endpoint = {});

    std::vector<GenerationRecord> complete(const std::string& prompt, const SamplingConfig& config,
                                           uint64_t seed_hint) override;
    const std::string& model_id() const override { return endpoint_.model_id; }
    InFlightGate& gate() override { return gate_; }

    // Test hook: artificial per-call latency to make overlap observable.
    void set_latency_ms(int ms) { latency_ms_ = ms; }

private:
    uint64_t seed_;
    ProviderEndpoint endpoint_;
    InFlightGate gate_;
    int latency_ms_ = 0;
};

// Deterministic stub NLI. Verdict rules, in order: an exact (premise,
// hypothesis) table entry; entailment when the normalized premise contains
// the normalized hypothesis; otherwise a seeded hash picks contradict or
// neutral.
class StubNliProvider : public NliProvider {
public:
    explicit StubNliProvider(uint64_t seed, ProviderEndpoint endpoint = {});

    NliVerdict classify(const std::string& premise, const std::string& hypothesis,
                        uint64_t seed_hint) override;
    InFlightGate& gate() override { return gate_; }

    void set_verdict(const std::string& premise, const std::string& hypothesis, NliVerdict verdict);

private:
    uint64_t seed_;
    ProviderEndpoint endpoint_;
    InFlightGate gate_;
    std::map<std::pair<std::string, std::string>, NliVerdict> table_;
    std::mutex table_mu_;
};

// Chat-completions client (POST {base_url}/v1/chat/completions with
// logprobs). Retries transport failures with exponential backoff up to the
// endpoint's retry budget; downgrades beam-search parameters when the server
// rejects them.
class HttpTextProvider : public TextProvider {
public:
    explicit HttpTextProvider(ProviderEndpoint endpoint);
    ~HttpTextProvider() override;

    std::vector<GenerationRecord> complete(const std::string& prompt, const SamplingConfig& config,
                                           uint64_t seed_hint) override;
    const std::string& model_id() const override { return endpoint_.model_id; }
    InFlightGate& gate() override { return gate_; }

private:
    ProviderEndpoint endpoint_;
    InFlightGate gate_;
};

enum class NliBackendMode { classify, chat };

// Text-classification endpoint returning entailment/contradiction/neutral,
// or a prompt-based fallback through the chat endpoint.
class HttpNliProvider : public NliProvider {
public:
    HttpNliProvider(ProviderEndpoint endpoint, NliBackendMode mode);
    ~HttpNliProvider() override;

    NliVerdict classify(const std::string& premise, const std::string& hypothesis,
                        uint64_t seed_hint) override;
    InFlightGate& gate() override { return gate_; }

private:
    ProviderEndpoint endpoint_;
    NliBackendMode mode_;
    InFlightGate gate_;
};

// Parses one chat-completions response body into records (exposed for
// testing). Throws a capability error when logprobs are missing.
std::vector<GenerationRecord> parse_chat_completion(const std::string& body, const SamplingConfig& config,
                                                    const std::string& model_id);

// Maps a classification label string ("entailment", "e", "contradiction",
// ...) onto a verdict; throws validation_error for unknown labels.
NliVerdict parse_nli_label(const std::string& label);

}  // namespace veritrap
