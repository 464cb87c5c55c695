#include "veritrap/forge.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "veritrap/util.hpp"

namespace veritrap {

void StrategyMix::validate() const {
    if (pr < 0.0 || wf < 0.0 || fwc < 0.0) throw validation_error("strategy_mix: proportions must be >= 0");
    if (std::fabs(pr + wf + fwc - 1.0) > 1e-9) {
        throw validation_error("strategy_mix: proportions must sum to 1");
    }
}

void ForgeConfig::validate() const {
    if (k_candidates < 1) throw validation_error("forge: k_candidates must be >= 1");
    if (passes_T < 1) throw validation_error("forge: passes_T must be >= 1");
    if (question_templates.empty()) throw validation_error("forge: question_templates must be non-empty");
    for (const std::string& t : question_templates) {
        if (t.find("{name}") == std::string::npos) {
            throw validation_error("forge: question template missing {name}: \"" + t + "\"");
        }
    }
    strategy_mix.validate();
    if (tie_round_cap < 0) throw validation_error("forge: tie_round_cap must be >= 0");
}

namespace {

std::vector<std::string> segments(const std::string& name) {
    std::vector<std::string> out;
    std::istringstream ss(name);
    std::string seg;
    while (ss >> seg) out.push_back(seg);
    return out;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ' ';
        out += parts[i];
    }
    return out;
}

}  // namespace

std::string permute_recombine(const std::string& name_a, const std::string& name_b, int position) {
    const std::vector<std::string> a = segments(name_a);
    const std::vector<std::string> b = segments(name_b);
    if (a.empty() || b.empty()) throw usage_error("permute_recombine: names must have >= 1 segment");
    if (position < 0 || position >= static_cast<int>(a.size())) {
        throw usage_error("permute_recombine: position " + std::to_string(position) +
                          " out of range for \"" + name_a + "\"");
    }
    std::vector<std::string> out(a.begin(), a.begin() + position);
    for (size_t i = static_cast<size_t>(position); i < b.size(); ++i) out.push_back(b[i]);
    return join(out);
}

CandidateList generate_candidates(const std::vector<std::string>& real_names, ForgeStrategy strategy,
                                  int k, TextProvider& generator, const PromptSet& prompts,
                                  uint64_t seed_hint, int retry_budget) {
    if (k < 1) throw usage_error("generate_candidates: k must be >= 1");
    if (real_names.empty()) throw usage_error("generate_candidates: real_names must be non-empty");
    if (strategy == ForgeStrategy::FWC) {
        throw usage_error("generate_candidates: FWC names are added manually, not generator-produced");
    }

    std::set<std::string> reals;
    for (const std::string& n : real_names) reals.insert(normalize_name(n));

    std::string names_block;
    for (const std::string& n : real_names) names_block += "- " + n + "\n";
    std::string base_prompt = substitute(prompts.forge_names, "{strategy}", to_string(strategy));
    base_prompt = substitute(base_prompt, "{count}", std::to_string(k));
    base_prompt = substitute(base_prompt, "{names}", names_block);

    CandidateList list;
    list.stage = CandidateStage::potential;
    std::set<std::string> accepted;

    SamplingConfig config;
    config.num_samples = 1;
    config.beam_size = 1;
    config.max_tokens = 4096;
    config.k_alt = 0;

    const int attempts = std::max(1, retry_budget);
    for (int attempt = 0; attempt < attempts && static_cast<int>(list.names.size()) < k; ++attempt) {
        std::string prompt = base_prompt;
        if (attempt > 0) prompt += "\nBatch: " + std::to_string(attempt) + "\n";
        std::vector<GenerationRecord> replies =
            complete(generator, prompt, config, seed_hint + static_cast<uint64_t>(attempt) * 7919u);
        for (const std::string& line : split_lines(replies[0].text)) {
            if (static_cast<int>(list.names.size()) >= k) break;
            std::string t = trim(line);
            if (t.rfind("- ", 0) != 0) continue;
            std::string name = trim(t.substr(2));
            if (name.empty()) continue;
            const std::string key = normalize_name(name);
            if (reals.count(key)) continue;  // duplicates a real name; regenerate
            if (!accepted.insert(key).second) continue;
            list.names.push_back({name, strategy, real_names, std::nullopt});
        }
    }
    if (static_cast<int>(list.names.size()) < k) {
        const std::string msg = "generate_candidates: produced " + std::to_string(list.names.size()) +
                                " of " + std::to_string(k) + " unique candidates within the retry budget";
        throw PartialResultError(msg, std::move(list));
    }
    return list;
}

std::optional<NameVerdict> parse_verifier_reply(const std::string& reply, bool use_cot,
                                                const ForgeConfig& config) {
    std::string text = reply;
    if (use_cot) {
        // Only the final non-empty line carries the answer.
        std::vector<std::string> lines = split_lines(reply);
        while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
        text = lines.empty() ? "" : lines.back();
    }
    const std::regex real_re(config.real_regex, std::regex::icase);
    const std::regex fake_re(config.fake_regex, std::regex::icase);
    std::smatch real_m, fake_m;
    const bool has_real = std::regex_search(text, real_m, real_re);
    const bool has_fake = std::regex_search(text, fake_m, fake_re);
    if (!has_real && !has_fake) return std::nullopt;
    if (has_real && !has_fake) return NameVerdict::real;
    if (!has_real && has_fake) return NameVerdict::fake;
    // First match wins; an exact tie counts as fake.
    return real_m.position(0) < fake_m.position(0) ? NameVerdict::real : NameVerdict::fake;
}

namespace {

std::optional<NameVerdict> strict_majority(const std::vector<NameVerdict>& rounds) {
    int fake = 0, real = 0;
    for (NameVerdict v : rounds) (v == NameVerdict::fake ? fake : real)++;
    if (2 * fake > static_cast<int>(rounds.size())) return NameVerdict::fake;
    if (2 * real > static_cast<int>(rounds.size())) return NameVerdict::real;
    return std::nullopt;
}

}  // namespace

VerificationTrace verify_name(const std::string& name, TextProvider& verifier, const ForgeConfig& config,
                              const PromptSet& prompts, uint64_t seed_hint) {
    config.validate();
    if (trim(name).empty()) throw usage_error("verify_name: empty name");

    const std::string prompt =
        substitute_name(config.use_cot ? prompts.verify_name_cot : prompts.verify_name, name);
    SamplingConfig sampling;
    sampling.num_samples = 1;
    sampling.beam_size = 1;
    sampling.max_tokens = config.use_cot ? 256 : 32;
    sampling.k_alt = 0;

    auto run_round = [&](int round_index) -> NameVerdict {
        for (int attempt = 0; attempt < 3; ++attempt) {
            const uint64_t hint = mix64(seed_hint ^ fnv1a(name)) +
                                  static_cast<uint64_t>(round_index) * 1000003u +
                                  static_cast<uint64_t>(attempt);
            std::vector<GenerationRecord> replies = complete(verifier, prompt, sampling, hint);
            std::optional<NameVerdict> verdict = parse_verifier_reply(replies[0].text, config.use_cot, config);
            if (verdict) return *verdict;
        }
        throw validation_error("verify_name: unparseable verifier reply for \"" + name +
                               "\" after 3 attempts; name aborted");
    };

    VerificationTrace trace;
    trace.planned_passes = config.passes_T;
    for (int t = 0; t < config.passes_T; ++t) trace.rounds.push_back(run_round(t));

    std::optional<NameVerdict> majority = strict_majority(trace.rounds);
    while (!majority) {
        if (trace.tie_rounds_added >= config.tie_round_cap) {
            throw validation_error("verify_name: no clear majority for \"" + name + "\" after " +
                                   std::to_string(config.tie_round_cap) +
                                   " extra rounds; name dropped");
        }
        trace.rounds.push_back(run_round(config.passes_T + trace.tie_rounds_added));
        trace.tie_rounds_added += 1;
        majority = strict_majority(trace.rounds);
    }
    trace.final_verdict = *majority;
    return trace;
}

std::vector<TrapQuestion> build_trap_questions(const CandidateList& names, const ForgeConfig& config,
                                               std::vector<std::string>* warnings) {
    config.validate();
    std::vector<TrapQuestion> out;
    size_t template_cursor = 0;
    int ordinal = 0;
    for (const Candidate& c : names.names) {
        if (!c.verification) {
            if (warnings) warnings->push_back("skipped unverified name \"" + c.name + "\"");
            continue;
        }
        if (c.verification->final_verdict == NameVerdict::real) {
            if (warnings) warnings->push_back("skipped name verified real: \"" + c.name + "\"");
            continue;
        }
        TrapQuestion q;
        char id[16];
        std::snprintf(id, sizeof(id), "q%03d", ++ordinal);
        q.question_id = id;
        q.fake_name = c.name;
        q.strategy = c.strategy;
        q.source_names = c.source_names;
        q.prompt_text = substitute_name(config.question_templates[template_cursor], c.name);
        template_cursor = (template_cursor + 1) % config.question_templates.size();
        q.verification = *c.verification;
        std::vector<std::string> violations = validate(q);
        if (!violations.empty()) {
            std::string msg = "build_trap_questions: invalid question for \"" + c.name + "\"";
            for (const std::string& v : violations) msg += ": " + v;
            throw validation_error(msg);
        }
        out.push_back(std::move(q));
    }
    return out;
}

std::string export_review_file(const CandidateList& candidates) {
    if (candidates.stage != CandidateStage::verified) {
        throw usage_error("export_review_file: expected a verified candidate list");
    }
    std::string out =
        "# veritrap review file: name<TAB>strategy<TAB>verdict\n"
        "# delete a line to drop the name; add lines (e.g. FWC names) to include them\n";
    for (const Candidate& c : candidates.names) {
        const char* verdict =
            c.verification ? to_string(c.verification->final_verdict) : to_string(NameVerdict::fake);
        out += c.name;
        out += '\t';
        out += to_string(c.strategy);
        out += '\t';
        out += verdict;
        out += '\n';
    }
    return out;
}

CandidateList import_review_file(const std::string& content, const CandidateList* verified) {
    CandidateList out;
    out.stage = CandidateStage::final;
    size_t line_no = 0;
    for (const std::string& raw : split_lines(content)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        size_t start = 0;
        while (true) {
            size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                cols.push_back(trim(line.substr(start)));
                break;
            }
            cols.push_back(trim(line.substr(start, tab - start)));
            start = tab + 1;
        }
        if (cols.size() != 3 || cols[0].empty()) {
            throw validation_error("review file line " + std::to_string(line_no) +
                                   ": expected name<TAB>strategy<TAB>verdict");
        }
        Candidate c;
        c.name = cols[0];
        try {
            c.strategy = forge_strategy_from_string(cols[1]);
            const NameVerdict verdict = name_verdict_from_string(lowercase(cols[2]));
            if (verified) {
                auto it = std::find_if(verified->names.begin(), verified->names.end(), [&](const Candidate& v) {
                    return normalize_name(v.name) == normalize_name(c.name);
                });
                if (it != verified->names.end()) {
                    c.source_names = it->source_names;
                    c.verification = it->verification;
                }
            }
            if (!c.verification) {
                // Manually added entry: record the human decision as a
                // single-round trace.
                c.verification = VerificationTrace{{verdict}, 1, 0, verdict};
            }
        } catch (const Error& e) {
            throw validation_error("review file line " + std::to_string(line_no) + ": " + e.what());
        }
        out.names.push_back(std::move(c));
    }
    return out;
}

}  // namespace veritrap
