#include "veritrap/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

#include "veritrap/util.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// SamplingConfig
// ---------------------------------------------------------------------------

void SamplingConfig::validate() const {
    if (num_samples < 1) throw validation_error("sampling: num_samples must be >= 1");
    if (beam_size < 1) throw validation_error("sampling: beam_size must be >= 1");
    if (!(temperature > 0.0)) throw validation_error("sampling: temperature must be > 0");
    if (max_tokens < 1) throw validation_error("sampling: max_tokens must be >= 1");
    if (top_k && *top_k < 1) throw validation_error("sampling: top_k must be >= 1 when set");
    if (k_alt < 0) throw validation_error("sampling: k_alt must be >= 0");
}

// ---------------------------------------------------------------------------
// InFlightGate
// ---------------------------------------------------------------------------

InFlightGate::InFlightGate(int max_in_flight) : max_in_flight_(max_in_flight) {
    if (max_in_flight_ < 1) throw validation_error("endpoint: max_in_flight must be >= 1");
}

InFlightGate::Ticket InFlightGate::acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
    return Ticket(this);
}

void InFlightGate::release() {
    {
        std::lock_guard<std::mutex> lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

int InFlightGate::peak() const {
    std::lock_guard<std::mutex> lock(mu_);
    return peak_;
}

InFlightGate::Ticket::~Ticket() {
    if (gate_) gate_->release();
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kDecomposePrompt =
    R"(Break the generation below into a list of short, self-contained atomic facts.

Example 1 (how to decompose):
Generation: Albert Einstein was a German-born theoretical physicist who is widely regarded as one of the most influential scientists of the 20th century.
Facts:
- Albert Einstein was a person born in Germany
- Albert Einstein was a theoretical physicist
- Albert Einstein is widely regarded as one of the most influential scientists of the 20th century

Example 2 (keep wrong facts wrong):
Generation: Marie Curie was a French chemist who discovered oxygen in 1921.
Facts:
- Marie Curie was a French chemist
- Marie Curie discovered oxygen in 1921

Do not alter false or erroneous facts; copy them into the list exactly as the generation states them.
Answer with one "- " line per fact. If the generation refuses to answer or contains no factual claims, answer NONE.

Generation: {generation}
Facts:
)";

constexpr const char* kVerifyNamePrompt = "Is {name} a real person?";

constexpr const char* kVerifyNameCotPrompt =
    "Is {name} a real person? Think step by step, then answer yes or no on the final line.";

constexpr const char* kMapWordsPrompt =
    R"(List the words in the original generation corresponding to the fact.
Answer with the words only, separated by spaces, in the order they appear in the generation.

Generation: {generation}
Fact: {fact}
Words:
)";

constexpr const char* kForgeNamesPrompt =
    R"(You produce plausible fake person names for robustness testing.
Strategy: {strategy}
- PR: split real names into segments and recombine segments from different names at the same positions.
- WF: alter a few letters of a real name while keeping its pronunciation close.
Produce exactly {count} fake names, one per line, each prefixed with "- ".
Never output a name identical to any real name below.
Real names:
{names}
)";

std::string load_or_default(const std::string& dir, const char* file, const char* fallback) {
    const std::string path = dir + "/" + file;
    if (!dir.empty() && file_exists(path)) return read_text_file(path);
    return fallback;
}

}  // namespace

PromptSet PromptSet::builtin() {
    return {kDecomposePrompt, kVerifyNamePrompt, kVerifyNameCotPrompt, kMapWordsPrompt, kForgeNamesPrompt};
}

PromptSet PromptSet::load(const std::string& dir) {
    PromptSet p;
    p.decompose = load_or_default(dir, "decompose.txt", kDecomposePrompt);
    p.verify_name = load_or_default(dir, "verify_name.txt", kVerifyNamePrompt);
    p.verify_name_cot = load_or_default(dir, "verify_name_cot.txt", kVerifyNameCotPrompt);
    p.map_words = load_or_default(dir, "map_words.txt", kMapWordsPrompt);
    p.forge_names = load_or_default(dir, "forge_names.txt", kForgeNamesPrompt);
    return p;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

std::vector<GenerationRecord> complete(TextProvider& provider, const std::string& prompt,
                                       const SamplingConfig& config, uint64_t seed_hint) {
    if (trim(prompt).empty()) throw usage_error("complete: empty prompt");
    config.validate();
    std::vector<GenerationRecord> records = provider.complete(prompt, config, seed_hint);
    if (static_cast<int>(records.size()) != config.num_samples) {
        throw transport_error("complete: provider returned " + std::to_string(records.size()) +
                              " samples, expected " + std::to_string(config.num_samples));
    }
    for (size_t i = 0; i < records.size(); ++i) {
        records[i].sample_index = static_cast<int>(i);
        std::vector<std::string> violations = validate(records[i]);
        // record_id is assigned by the caller, so an empty one is fine here.
        std::erase_if(violations, [](const std::string& v) { return v == "record_id empty"; });
        if (!violations.empty()) {
            std::string msg = "complete: provider returned an invalid record";
            for (const std::string& v : violations) msg += ": " + v;
            throw validation_error(msg);
        }
    }
    return records;
}

NliVerdict nli(NliProvider& provider, const std::string& premise, const std::string& hypothesis,
               uint64_t seed_hint) {
    if (premise.empty()) throw usage_error("nli: empty premise");
    if (hypothesis.empty()) throw usage_error("nli: empty hypothesis");
    return provider.classify(premise, hypothesis, seed_hint);
}

namespace {

SamplingConfig utility_config(int max_tokens = 512) {
    SamplingConfig c;
    c.num_samples = 1;
    c.beam_size = 1;
    c.temperature = 1.0;
    c.max_tokens = max_tokens;
    c.k_alt = 0;
    return c;
}

// Strips "- ", "* " or "3. " list markers; returns nullopt for non-list lines.
std::optional<std::string> strip_list_marker(const std::string& line) {
    std::string t = trim(line);
    if (t.size() >= 2 && (t[0] == '-' || t[0] == '*') && t[1] == ' ') return trim(t.substr(2));
    size_t digits = 0;
    while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) ++digits;
    if (digits > 0 && digits + 1 < t.size() && t[digits] == '.' && t[digits + 1] == ' ') {
        return trim(t.substr(digits + 2));
    }
    return std::nullopt;
}

std::optional<std::vector<std::string>> try_parse_fact_lines(const std::string& reply) {
    const std::string trimmed = trim(reply);
    if (trimmed.empty() || lowercase(trimmed) == "none") return std::vector<std::string>{};
    std::vector<std::string> facts;
    bool saw_content = false;
    for (const std::string& line : split_lines(trimmed)) {
        if (trim(line).empty()) continue;
        saw_content = true;
        std::optional<std::string> fact = strip_list_marker(line);
        if (fact && !fact->empty()) facts.push_back(std::move(*fact));
    }
    if (saw_content && facts.empty()) return std::nullopt;  // content without list lines
    return facts;
}

}  // namespace

std::vector<std::string> decompose_facts(TextProvider& provider, const GenerationRecord& record,
                                         const PromptSet& prompts, uint64_t seed_hint) {
    if (record.text.empty()) throw usage_error("decompose_facts: record text is empty");
    const std::string prompt = substitute(prompts.decompose, "{generation}", record.text);
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::vector<GenerationRecord> replies =
            complete(provider, prompt, utility_config(), seed_hint + static_cast<uint64_t>(attempt));
        std::optional<std::vector<std::string>> facts = try_parse_fact_lines(replies[0].text);
        if (facts) return *facts;
    }
    throw validation_error("decompose_facts: unparseable reply for record " + record.record_id);
}

MapWordsResult map_fact_words(TextProvider& provider, const GenerationRecord& record,
                              const std::string& fact_text, const PromptSet& prompts,
                              uint64_t seed_hint) {
    if (record.text.empty()) throw usage_error("map_fact_words: record text is empty");
    if (trim(fact_text).empty()) throw usage_error("map_fact_words: empty fact text");
    std::string prompt = substitute(prompts.map_words, "{generation}", record.text);
    prompt = substitute(prompt, "{fact}", fact_text);
    std::vector<GenerationRecord> replies = complete(provider, prompt, utility_config(256), seed_hint);

    MapWordsResult result;
    std::string current;
    auto flush = [&] {
        if (current.empty()) return;
        if (record.text.find(current) != std::string::npos) {
            result.words.push_back(current);
        } else {
            result.dropped.push_back(current);
        }
        current.clear();
    };
    for (char c : replies[0].text) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            flush();
        } else {
            current.push_back(c);
        }
    }
    flush();
    if (result.words.empty()) {
        throw validation_error("map_fact_words: no reply word occurs in the record text (fact \"" +
                               fact_text + "\")");
    }
    return result;
}

// ---------------------------------------------------------------------------
// Word -> token alignment
// ---------------------------------------------------------------------------

std::string strip_subword_markers(std::string_view surface) {
    std::string s = trim(surface);
    bool stripped = true;
    while (stripped && !s.empty()) {
        stripped = false;
        if (s.rfind("\xE2\x96\x81", 0) == 0) {  // U+2581 lower one-eighth block
            s.erase(0, 3);
            stripped = true;
        } else if (s.rfind("\xC4\xA0", 0) == 0) {  // 'Ġ'
            s.erase(0, 2);
            stripped = true;
        } else if (s.rfind("##", 0) == 0) {
            s.erase(0, 2);
            stripped = true;
        }
    }
    return s;
}

namespace {

struct TokenRun {
    size_t begin;
    size_t end;  // inclusive
};

// Minimal run starting at or after `from` whose concatenated cleaned
// surfaces contain `word` with the match starting inside the first token.
std::optional<TokenRun> find_word_run(const std::string& word, const std::vector<std::string>& cleaned,
                                      size_t from) {
    for (size_t start = from; start < cleaned.size(); ++start) {
        const size_t head_len = cleaned[start].size();
        if (head_len == 0) continue;
        std::string concat = cleaned[start];
        size_t end = start;
        // A match starting inside token `start` ends within head_len +
        // word.size() - 1 characters, so extension beyond that cannot help.
        while (true) {
            size_t pos = concat.find(word);
            if (pos != std::string::npos && pos < head_len) return TokenRun{start, end};
            if (concat.size() >= head_len + word.size() - 1 || end + 1 >= cleaned.size()) break;
            ++end;
            concat += cleaned[end];
        }
    }
    return std::nullopt;
}

}  // namespace

std::vector<int> align_words_to_tokens(const std::vector<std::string>& words,
                                       const std::vector<TokenEvent>& tokens) {
    if (words.empty()) throw usage_error("align_words_to_tokens: empty word list");
    std::vector<std::string> cleaned;
    cleaned.reserve(tokens.size());
    for (const TokenEvent& t : tokens) cleaned.push_back(strip_subword_markers(t.surface));

    std::set<int> indices;
    size_t cursor = 0;
    for (const std::string& raw : words) {
        const std::string word = trim(raw);
        if (word.empty()) continue;
        std::optional<TokenRun> run = find_word_run(word, cleaned, cursor);
        if (!run) run = find_word_run(word, cleaned, 0);  // retry from the start
        if (!run) {
            throw validation_error("alignment error: word \"" + word + "\" not found in token surfaces");
        }
        for (size_t j = run->begin; j <= run->end; ++j) indices.insert(static_cast<int>(j));
        cursor = run->end + 1;
    }
    return std::vector<int>(indices.begin(), indices.end());
}

}  // namespace veritrap
