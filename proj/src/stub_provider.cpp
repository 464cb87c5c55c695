#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "veritrap/gateway.hpp"
#include "veritrap/util.hpp"

// Deterministic stub providers. Every reply is a pure function of
// (prompt, sampling config, provider seed, seed hint); no std::*_distribution
// is used because their output is not pinned across standard libraries.

namespace veritrap {

namespace {

struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next() {
        state = mix64(state + 0x9e3779b97f4a7c15ull);
        return state;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    size_t pick(size_t n) { return static_cast<size_t>(next() % n); }
};

const std::vector<std::string>& nationalities() {
    static const std::vector<std::string> v = {"German-born", "French",  "British", "Austrian",
                                               "Italian",     "Polish",  "Dutch",   "Swedish"};
    return v;
}

const std::vector<std::string>& professions() {
    static const std::vector<std::string> v = {"physicist",  "novelist", "architect",     "biologist",
                                               "composer",   "historian", "mathematician", "painter"};
    return v;
}

const std::vector<std::string>& achievements() {
    static const std::vector<std::string> v = {
        "a theory of measurement",        "three celebrated novels",
        "the design of public libraries", "early work on cell biology",
        "a cycle of piano pieces",        "a history of navigation",
        "a conjecture on prime gaps",     "a series of coastal landscapes"};
    return v;
}

const std::vector<std::string>& later_life() {
    static const std::vector<std::string> v = {"received numerous awards", "taught at several universities",
                                               "traveled widely in later life",
                                               "published influential essays"};
    return v;
}

const std::vector<std::string>& alt_surfaces() {
    static const std::vector<std::string> v = {"the", "a",  "was",   "in",    "of",
                                               "and", "an", "early", "noted", "famous"};
    return v;
}

std::string strip_trailing_punct(std::string s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '?' || s.back() == '!' || s.back() == ',')) {
        s.pop_back();
    }
    return trim(s);
}

// Extracts the entity name from a question prompt: the text after the last
// " of " (both default question templates end that way).
std::string extract_prompted_name(const std::string& prompt) {
    size_t pos = prompt.rfind(" of ");
    if (pos == std::string::npos) {
        // Fallback: the final word.
        std::string t = strip_trailing_punct(prompt);
        size_t sp = t.find_last_of(' ');
        return sp == std::string::npos ? t : t.substr(sp + 1);
    }
    return strip_trailing_punct(prompt.substr(pos + 4));
}

std::string section(const std::string& text, const std::string& open, const std::string& close,
                    bool last_open = true) {
    size_t begin = last_open ? text.rfind(open) : text.find(open);
    if (begin == std::string::npos) return "";
    begin += open.size();
    size_t end = close.empty() ? std::string::npos : text.find(close, begin);
    return trim(end == std::string::npos ? text.substr(begin) : text.substr(begin, end - begin));
}

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool is_vowel(char c) {
    switch (std::tolower(static_cast<unsigned char>(c))) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return true;
        default: return false;
    }
}

struct VowelRun {
    size_t begin;
    size_t end;  // inclusive
};

std::vector<VowelRun> vowel_runs(const std::string& word) {
    std::vector<VowelRun> runs;
    for (size_t i = 0; i < word.size(); ++i) {
        if (is_vowel(word[i])) {
            size_t j = i;
            while (j + 1 < word.size() && is_vowel(word[j + 1])) ++j;
            runs.push_back({i, j});
            i = j;
        }
    }
    return runs;
}

std::string replace_run(const std::string& word, VowelRun run, std::string replacement) {
    if (std::isupper(static_cast<unsigned char>(word[run.begin]))) {
        replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
    }
    return word.substr(0, run.begin) + replacement + word.substr(run.end + 1);
}

// Word fine-tuning: small letter edits to the last word that keep the
// pronunciation close. Variant 0 reproduces the "Einstein" -> "Einstan"
// style edit; further variants give distinct candidates per source name.
std::string wf_variant(const std::string& name, int variant) {
    std::vector<std::string> segs = words_of(name);
    if (segs.empty()) return name;
    std::string& last = segs.back();
    const std::vector<VowelRun> runs = vowel_runs(last);
    switch (variant % 4) {
        case 0:
            if (!runs.empty()) {
                const std::string current = last.substr(runs.back().begin,
                                                        runs.back().end - runs.back().begin + 1);
                last = replace_run(last, runs.back(), lowercase(current) == "a" ? "e" : "a");
            } else {
                last += "a";
            }
            break;
        case 1:
            if (!runs.empty()) {
                const std::string current = last.substr(runs.front().begin,
                                                        runs.front().end - runs.front().begin + 1);
                last = replace_run(last, runs.front(), lowercase(current) == "o" ? "u" : "o");
            } else {
                last = "O" + last;
            }
            break;
        case 2:
            if (!runs.empty() && runs.front().end + 1 < last.size()) {
                last.erase(runs.front().end + 1, 1);
            } else if (last.size() > 2) {
                last.erase(last.size() / 2, 1);
            } else {
                last += "e";
            }
            break;
        default:
            last += last.back();
            break;
    }
    std::string out;
    for (size_t i = 0; i < segs.size(); ++i) {
        if (i) out += ' ';
        out += segs[i];
    }
    return out;
}

std::string pr_variant(const std::vector<std::string>& names, size_t i, size_t round) {
    if (names.size() < 2) return names.empty() ? "" : wf_variant(names[0], static_cast<int>(round));
    const size_t n = names.size();
    for (size_t s = 0; s + 1 < n; ++s) {
        const size_t shift = 1 + (round + s) % (n - 1);  // rounds walk distinct pairings
        const std::string& a = names[i % n];
        const std::string& b = names[(i + shift) % n];
        std::vector<std::string> sa = words_of(a), sb = words_of(b);
        if (sa.size() < 2 || sb.size() < 2) continue;
        const size_t pos = 1 + round % (std::min(sa.size(), sb.size()) - 1);
        std::string out;
        for (size_t w = 0; w < pos && w < sa.size(); ++w) {
            if (w) out += ' ';
            out += sa[w];
        }
        for (size_t w = pos; w < sb.size(); ++w) out += ' ' + sb[w];
        if (out != a && out != b) return out;
    }
    return wf_variant(names[(i + round) % n], static_cast<int>(round));
}

// Builds word tokens ("First", " word", ...) with deterministic logprobs.
// `split_word`, when non-empty, is emitted as two subword pieces.
std::vector<TokenEvent> tokenize_reply(const std::string& text, const std::string& split_word, Rng& rng,
                                       double confidence_spread, int k_alt, int max_tokens,
                                       FinishReason* finish) {
    std::vector<TokenEvent> tokens;
    std::vector<std::string> surfaces;
    bool first = true;
    for (const std::string& w : words_of(text)) {
        const std::string lead = first ? "" : " ";
        const std::string bare = strip_trailing_punct(w);
        if (!split_word.empty() && bare == split_word && bare.size() >= 4) {
            const size_t cut = bare.size() * 2 / 3;
            surfaces.push_back(lead + w.substr(0, cut));
            surfaces.push_back(w.substr(cut));
        } else {
            surfaces.push_back(lead + w);
        }
        first = false;
    }
    *finish = FinishReason::stop;
    if (static_cast<int>(surfaces.size()) > max_tokens) {
        surfaces.resize(static_cast<size_t>(max_tokens));
        *finish = FinishReason::length;
    }
    tokens.reserve(surfaces.size());
    for (size_t j = 0; j < surfaces.size(); ++j) {
        TokenEvent t;
        t.index = static_cast<int>(j);
        t.surface = surfaces[j];
        const double u = rng.uniform();
        t.logprob = -(0.01 + confidence_spread * u * u);
        double lp = t.logprob;
        for (int k = 0; k < k_alt; ++k) {
            lp -= 0.2 + 2.0 * rng.uniform();
            std::string alt = (k == 0 && rng.uniform() < 0.25)
                                  ? t.surface
                                  : alt_surfaces()[rng.pick(alt_surfaces().size())];
            t.alternatives.push_back({std::move(alt), std::max(lp, -30.0)});
        }
        tokens.push_back(std::move(t));
    }
    return tokens;
}

}  // namespace

StubTextProvider::StubTextProvider(uint64_t seed, ProviderEndpoint endpoint)
    : seed_(seed), endpoint_(std::move(endpoint)), gate_(endpoint_.max_in_flight) {
    if (endpoint_.model_id.empty()) endpoint_.model_id = "stub-model";
}

std::vector<GenerationRecord> StubTextProvider::complete(const std::string& prompt,
                                                         const SamplingConfig& config,
                                                         uint64_t seed_hint) {
    InFlightGate::Ticket ticket = gate_.acquire();
    if (latency_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms_));

    std::vector<GenerationRecord> out;
    out.reserve(static_cast<size_t>(config.num_samples));
    for (int sample = 0; sample < config.num_samples; ++sample) {
        Rng rng(mix64(seed_ ^ mix64(seed_hint)) ^ fnv1a(prompt) ^ mix64(static_cast<uint64_t>(sample) + 1));

        std::string text;
        std::string split_word;
        double spread = 2.0;

        if (prompt.find("a real person") != std::string::npos) {
            const std::string name = section(prompt, "Is ", " a real person", false);
            const bool real = rng.uniform() < 0.05;
            const std::string answer =
                real ? "Yes, " + name + " is a real person." : "No, " + name + " is not a real person.";
            if (prompt.find("step by step") != std::string::npos) {
                text = "Let me think about this step by step.\nThe name " + name +
                       (real ? " matches a person I know of." : " does not match any person I know of.") +
                       "\n" + (real ? "yes" : "no");
            } else {
                text = answer;
            }
        } else if (prompt.find("atomic facts") != std::string::npos) {
            const std::string generation = section(prompt, "Generation: ", "\nFacts:");
            if (generation.find("can't provide") != std::string::npos ||
                generation.find("cannot provide") != std::string::npos) {
                text = "NONE";
            } else {
                std::string sentence;
                for (char c : generation) {
                    if (c == '.') {
                        std::string s = trim(sentence);
                        if (!s.empty()) text += "- " + s + "\n";
                        sentence.clear();
                    } else {
                        sentence.push_back(c);
                    }
                }
                std::string s = trim(sentence);
                if (!s.empty()) text += "- " + s + "\n";
                if (text.empty()) text = "NONE";
            }
        } else if (prompt.find("corresponding to the fact") != std::string::npos) {
            const std::string generation = section(prompt, "Generation: ", "\nFact:");
            const std::string fact = section(prompt, "Fact: ", "\nWords:");
            for (const std::string& w : words_of(fact)) {
                const std::string bare = strip_trailing_punct(w);
                if (!bare.empty() && generation.find(bare) != std::string::npos) {
                    if (!text.empty()) text += ' ';
                    text += bare;
                }
            }
        } else if (prompt.find("fake person names") != std::string::npos) {
            const std::string strategy = section(prompt, "Strategy: ", "\n", false);
            const std::string count_str = section(prompt, "Produce exactly ", " fake names", false);
            int count = 1;
            if (!count_str.empty()) count = std::max(1, std::atoi(count_str.c_str()));
            const std::string batch_str = section(prompt, "Batch: ", "\n", false);
            const size_t batch = batch_str.empty() ? 0 : static_cast<size_t>(std::atoi(batch_str.c_str()));
            std::vector<std::string> real_names;
            for (const std::string& line : split_lines(section(prompt, "Real names:", "\nBatch:"))) {
                std::string t = trim(line);
                if (t.rfind("- ", 0) == 0) real_names.push_back(trim(t.substr(2)));
            }
            for (size_t i = 0; i < static_cast<size_t>(count); ++i) {
                std::string name = "Unnamed Person";
                if (!real_names.empty()) {
                    const size_t n = real_names.size();
                    const size_t round = i / n + batch;
                    name = strategy == "PR"
                               ? pr_variant(real_names, i, round)
                               : wf_variant(real_names[(i + batch) % n], static_cast<int>(round));
                }
                text += "- " + name + "\n";
            }
        } else {
            // Biography question.
            const std::string name = extract_prompted_name(prompt);
            const std::vector<std::string> name_words = words_of(name);
            if (rng.uniform() < 0.3) {
                text = "Unfortunately, I can't provide the information of " + name + ".";
                spread = 0.2;
            } else {
                const int year = 1850 + static_cast<int>(rng.pick(130));
                text = name + " was a " + nationalities()[rng.pick(nationalities().size())] + " " +
                       professions()[rng.pick(professions().size())] + " born in " +
                       std::to_string(year) + ".";
                text += " " + name + " is known for " + achievements()[rng.pick(achievements().size())] + ".";
                if (rng.uniform() < 0.5 && !name_words.empty()) {
                    text += " " + name_words.back() + " also " + later_life()[rng.pick(later_life().size())] + ".";
                }
                if (rng.uniform() < 0.6 && !name_words.empty() && name_words.back().size() >= 4) {
                    split_word = name_words.back();
                }
            }
        }

        GenerationRecord record;
        record.model_id = endpoint_.model_id;
        record.sample_index = sample;
        record.text = text;
        record.tokens = tokenize_reply(text, split_word, rng, spread, config.k_alt, config.max_tokens,
                                       &record.finish_reason);
        out.push_back(std::move(record));
    }
    return out;
}

StubNliProvider::StubNliProvider(uint64_t seed, ProviderEndpoint endpoint)
    : seed_(seed), endpoint_(std::move(endpoint)), gate_(endpoint_.max_in_flight) {}

void StubNliProvider::set_verdict(const std::string& premise, const std::string& hypothesis,
                                  NliVerdict verdict) {
    std::lock_guard<std::mutex> lock(table_mu_);
    table_[{premise, hypothesis}] = verdict;
}

NliVerdict StubNliProvider::classify(const std::string& premise, const std::string& hypothesis,
                                     uint64_t seed_hint) {
    InFlightGate::Ticket ticket = gate_.acquire();
    {
        std::lock_guard<std::mutex> lock(table_mu_);
        auto it = table_.find({premise, hypothesis});
        if (it != table_.end()) return it->second;
    }
    const std::string norm_premise = normalize_name(strip_subword_markers(premise));
    const std::string norm_hypothesis = normalize_name(strip_subword_markers(hypothesis));
    if (!norm_hypothesis.empty() && norm_premise.find(norm_hypothesis) != std::string::npos) {
        return NliVerdict::entail;
    }
    Rng rng(mix64(seed_ ^ mix64(seed_hint)) ^ fnv1a(premise) ^ mix64(fnv1a(hypothesis)));
    return rng.uniform() < 0.6 ? NliVerdict::contradict : NliVerdict::neutral;
}

}  // namespace veritrap
