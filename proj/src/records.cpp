#include "veritrap/records.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace veritrap {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

const char* to_string(FinishReason v) { return v == FinishReason::stop ? "stop" : "length"; }
const char* to_string(LabelKind v) {
    switch (v) {
        case LabelKind::FR: return "FR";
        case LabelKind::FT: return "FT";
        default: return "FF";
    }
}
const char* to_string(NliVerdict v) {
    switch (v) {
        case NliVerdict::entail: return "entail";
        case NliVerdict::contradict: return "contradict";
        default: return "neutral";
    }
}
const char* to_string(SubjectKind v) { return v == SubjectKind::generation ? "generation" : "fact"; }
const char* to_string(ScoreMethod v) {
    switch (v) {
        case ScoreMethod::PE: return "PE";
        case ScoreMethod::LNPE: return "LNPE";
        case ScoreMethod::MP_MEAN: return "MP_MEAN";
        case ScoreMethod::MP_MAX: return "MP_MAX";
        case ScoreMethod::CCP_MEAN: return "CCP_MEAN";
        case ScoreMethod::CCP_MAX: return "CCP_MAX";
        case ScoreMethod::RU_GEN: return "RU_GEN";
        default: return "RU_FACT";
    }
}
const char* to_string(ForgeStrategy v) {
    switch (v) {
        case ForgeStrategy::PR: return "PR";
        case ForgeStrategy::WF: return "WF";
        default: return "FWC";
    }
}
const char* to_string(NameVerdict v) { return v == NameVerdict::real ? "real" : "fake"; }

namespace {

[[noreturn]] void bad_enum(const char* what, const std::string& s) {
    throw validation_error(std::string(what) + ": unknown value \"" + s + "\"");
}

}  // namespace

FinishReason finish_reason_from_string(const std::string& s) {
    if (s == "stop") return FinishReason::stop;
    if (s == "length") return FinishReason::length;
    bad_enum("finish_reason", s);
}
LabelKind label_kind_from_string(const std::string& s) {
    if (s == "FR") return LabelKind::FR;
    if (s == "FT") return LabelKind::FT;
    if (s == "FF") return LabelKind::FF;
    bad_enum("label", s);
}
NliVerdict nli_verdict_from_string(const std::string& s) {
    if (s == "entail") return NliVerdict::entail;
    if (s == "contradict") return NliVerdict::contradict;
    if (s == "neutral") return NliVerdict::neutral;
    bad_enum("nli_verdict", s);
}
SubjectKind subject_kind_from_string(const std::string& s) {
    if (s == "generation") return SubjectKind::generation;
    if (s == "fact") return SubjectKind::fact;
    bad_enum("subject_kind", s);
}
ScoreMethod score_method_from_string(const std::string& s) {
    if (s == "PE") return ScoreMethod::PE;
    if (s == "LNPE") return ScoreMethod::LNPE;
    if (s == "MP_MEAN") return ScoreMethod::MP_MEAN;
    if (s == "MP_MAX") return ScoreMethod::MP_MAX;
    if (s == "CCP_MEAN") return ScoreMethod::CCP_MEAN;
    if (s == "CCP_MAX") return ScoreMethod::CCP_MAX;
    if (s == "RU_GEN") return ScoreMethod::RU_GEN;
    if (s == "RU_FACT") return ScoreMethod::RU_FACT;
    bad_enum("method", s);
}
ForgeStrategy forge_strategy_from_string(const std::string& s) {
    if (s == "PR") return ForgeStrategy::PR;
    if (s == "WF") return ForgeStrategy::WF;
    if (s == "FWC") return ForgeStrategy::FWC;
    bad_enum("strategy", s);
}
NameVerdict name_verdict_from_string(const std::string& s) {
    if (s == "real") return NameVerdict::real;
    if (s == "fake") return NameVerdict::fake;
    bad_enum("verdict", s);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

bool finite_nonpositive(double v) { return std::isfinite(v) && v <= 0.0; }

}  // namespace

std::vector<std::string> validate(const GenerationRecord& r) {
    std::vector<std::string> out;
    if (r.record_id.empty()) out.push_back("record_id empty");
    if (r.sample_index < 0) out.push_back("sample_index negative");
    if (r.tokens.empty()) out.push_back("tokens empty");
    for (size_t j = 0; j < r.tokens.size(); ++j) {
        const TokenEvent& t = r.tokens[j];
        if (t.index != static_cast<int>(j)) {
            out.push_back("non-consecutive token index at position " + std::to_string(j));
        }
        if (!finite_nonpositive(t.logprob)) {
            out.push_back("tokens[" + std::to_string(j) + "].logprob must be finite and <= 0");
        }
        for (size_t k = 0; k < t.alternatives.size(); ++k) {
            if (!finite_nonpositive(t.alternatives[k].logprob)) {
                out.push_back("tokens[" + std::to_string(j) + "].alternatives[" + std::to_string(k) +
                              "].logprob must be finite and <= 0");
            }
            if (k > 0 && t.alternatives[k].logprob > t.alternatives[k - 1].logprob) {
                out.push_back("tokens[" + std::to_string(j) + "].alternatives not sorted by logprob");
            }
        }
    }
    return out;
}

std::vector<std::string> validate(const FactUnit& f) {
    std::vector<std::string> out;
    if (f.fact_id.empty()) out.push_back("fact_id empty");
    if (f.record_id.empty()) out.push_back("record_id empty");
    if (f.token_span.empty()) out.push_back("empty span");
    for (size_t i = 0; i < f.token_span.size(); ++i) {
        if (f.token_span[i] < 0) out.push_back("negative token index");
        if (i > 0 && f.token_span[i] <= f.token_span[i - 1]) {
            out.push_back(f.token_span[i] == f.token_span[i - 1] ? "duplicate index in span"
                                                                 : "span not strictly increasing");
        }
    }
    return out;
}

std::vector<std::string> validate(const GenLabel& l) {
    std::vector<std::string> out;
    if (l.record_id.empty()) out.push_back("record_id empty");
    if (l.label == LabelKind::FR) {
        if (!l.nli_verdict || *l.nli_verdict != NliVerdict::entail) {
            out.push_back("label FR requires nli_verdict entail");
        }
    } else if (l.nli_verdict && *l.nli_verdict == NliVerdict::entail) {
        out.push_back("label FT/FF forbids nli_verdict entail");
    }
    return out;
}

std::vector<std::string> validate(const ScoredResult& s) {
    std::vector<std::string> out;
    if (s.subject_id.empty()) out.push_back("subject_id empty");
    if (!std::isfinite(s.value)) out.push_back("value not finite");
    switch (s.method) {
        case ScoreMethod::PE:
        case ScoreMethod::LNPE:
            // Sign depends on the entropy convention in force; only finiteness
            // is checked here.
            break;
        default:
            if (s.value < 0.0 || s.value > 1.0) out.push_back("value outside [0,1]");
    }
    return out;
}

std::vector<std::string> validate(const VerificationTrace& t) {
    std::vector<std::string> out;
    if (t.planned_passes < 1) out.push_back("planned_passes < 1");
    if (t.tie_rounds_added < 0) out.push_back("tie_rounds_added negative");
    if (static_cast<int>(t.rounds.size()) != t.planned_passes + t.tie_rounds_added) {
        out.push_back("round count != planned_passes + tie_rounds_added");
    }
    int fake = 0, real = 0;
    for (NameVerdict v : t.rounds) (v == NameVerdict::fake ? fake : real)++;
    const int majority_side = fake > real ? fake : real;
    if (2 * majority_side <= static_cast<int>(t.rounds.size())) {
        out.push_back("rounds admit no strict majority");
    } else {
        NameVerdict winner = fake > real ? NameVerdict::fake : NameVerdict::real;
        if (t.final_verdict != winner) out.push_back("final_verdict is not the strict majority");
    }
    return out;
}

std::vector<std::string> validate(const TrapQuestion& q) {
    std::vector<std::string> out;
    if (q.question_id.empty()) out.push_back("question_id empty");
    if (q.fake_name.empty()) out.push_back("fake_name empty");
    if (q.prompt_text.find(q.fake_name) == std::string::npos) {
        out.push_back("prompt_text does not contain fake_name");
    }
    for (const std::string& v : validate(q.verification)) out.push_back("verification: " + v);
    return out;
}

std::vector<std::string> validate_fact(const FactUnit& fact, const GenerationRecord& record) {
    if (fact.record_id != record.record_id) {
        throw usage_error("validate_fact: fact " + fact.fact_id + " belongs to record " + fact.record_id +
                          ", not " + record.record_id);
    }
    std::vector<std::string> out = validate(fact);
    const int m = static_cast<int>(record.tokens.size());
    for (int idx : fact.token_span) {
        if (idx >= m) {
            out.push_back("index out of range: " + std::to_string(idx) + " >= " + std::to_string(m));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON conversion
// ---------------------------------------------------------------------------

namespace {

ordered_json to_json(const TokenEvent& t) {
    ordered_json alts = ordered_json::array();
    for (const AlternativeToken& a : t.alternatives) {
        alts.push_back({{"surface", a.surface}, {"logprob", a.logprob}});
    }
    return {{"index", t.index}, {"surface", t.surface}, {"logprob", t.logprob}, {"alternatives", alts}};
}

ordered_json to_json(const VerificationTrace& t) {
    ordered_json rounds = ordered_json::array();
    for (NameVerdict v : t.rounds) rounds.push_back(to_string(v));
    return {{"rounds", rounds},
            {"planned_passes", t.planned_passes},
            {"tie_rounds_added", t.tie_rounds_added},
            {"final_verdict", to_string(t.final_verdict)}};
}

// Field accessors that name the offending field on type mismatch or absence.
const ordered_json& field(const ordered_json& obj, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end()) throw validation_error(std::string("missing field \"") + name + "\"");
    return *it;
}

std::string str_field(const ordered_json& obj, const char* name) {
    const ordered_json& f = field(obj, name);
    if (!f.is_string()) throw validation_error(std::string("field \"") + name + "\" must be a string");
    return f.get<std::string>();
}

double num_field(const ordered_json& obj, const char* name) {
    const ordered_json& f = field(obj, name);
    if (!f.is_number()) throw validation_error(std::string("field \"") + name + "\" must be a number");
    return f.get<double>();
}

int int_field(const ordered_json& obj, const char* name) {
    const ordered_json& f = field(obj, name);
    if (!f.is_number_integer()) throw validation_error(std::string("field \"") + name + "\" must be an integer");
    return f.get<int>();
}

TokenEvent token_from_json(const ordered_json& j) {
    TokenEvent t;
    t.index = int_field(j, "index");
    t.surface = str_field(j, "surface");
    t.logprob = num_field(j, "logprob");
    const ordered_json& alts = field(j, "alternatives");
    if (!alts.is_array()) throw validation_error("field \"alternatives\" must be an array");
    for (const auto& a : alts) {
        t.alternatives.push_back({str_field(a, "surface"), num_field(a, "logprob")});
    }
    return t;
}

VerificationTrace trace_from_json(const ordered_json& j) {
    VerificationTrace t;
    const ordered_json& rounds = field(j, "rounds");
    if (!rounds.is_array()) throw validation_error("field \"rounds\" must be an array");
    for (const auto& r : rounds) {
        if (!r.is_string()) throw validation_error("field \"rounds\" must contain strings");
        t.rounds.push_back(name_verdict_from_string(r.get<std::string>()));
    }
    t.planned_passes = int_field(j, "planned_passes");
    t.tie_rounds_added = int_field(j, "tie_rounds_added");
    t.final_verdict = name_verdict_from_string(str_field(j, "final_verdict"));
    return t;
}

void throw_if_invalid(const std::vector<std::string>& violations) {
    if (violations.empty()) return;
    std::string msg = "invariant violation";
    for (const std::string& v : violations) msg += ": " + v;
    throw validation_error(msg);
}

// Parses a whole stream of JSONL, prefixing any failure with the 1-based
// line number. Blank lines are ignored.
template <typename T, typename ParseLine>
std::vector<T> parse_stream(std::istream& in, ParseLine parse_line) {
    std::vector<T> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            ordered_json j = ordered_json::parse(line);
            if (!j.is_object()) throw validation_error("line is not a JSON object");
            out.push_back(parse_line(j));
        } catch (const Error&) {
            try {
                std::rethrow_exception(std::current_exception());
            } catch (const Error& e) {
                throw Error(e.category(), "line " + std::to_string(line_no) + ": " + e.what());
            }
        } catch (const ordered_json::exception& e) {
            throw validation_error("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
    }
    return out;
}

template <typename T>
std::vector<T> parse_file(const std::string& path, std::vector<T> (*parse)(std::istream&)) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open file: " + path);
    try {
        return parse(in);
    } catch (const Error& e) {
        throw Error(e.category(), path + ": " + e.what());
    }
}

}  // namespace

std::string to_jsonl(const GenerationRecord& r) {
    ordered_json tokens = ordered_json::array();
    for (const TokenEvent& t : r.tokens) tokens.push_back(to_json(t));
    ordered_json j = {{"record_id", r.record_id},   {"question_id", r.question_id},
                      {"model_id", r.model_id},     {"sample_index", r.sample_index},
                      {"text", r.text},             {"tokens", tokens},
                      {"finish_reason", to_string(r.finish_reason)}};
    return j.dump();
}

std::string to_jsonl(const FactUnit& f) {
    ordered_json j = {{"fact_id", f.fact_id},
                      {"record_id", f.record_id},
                      {"text", f.text},
                      {"token_span", f.token_span}};
    return j.dump();
}

std::string to_jsonl(const GenLabel& l) {
    ordered_json j;
    j["record_id"] = l.record_id;
    j["label"] = to_string(l.label);
    if (l.nli_verdict) j["nli_verdict"] = to_string(*l.nli_verdict);
    if (l.retrieval_top_doc) j["retrieval_top_doc"] = *l.retrieval_top_doc;
    j["rationale"] = l.rationale;
    return j.dump();
}

std::string to_jsonl(const ScoredResult& s) {
    ordered_json j = {{"subject_kind", to_string(s.subject_kind)},
                      {"subject_id", s.subject_id},
                      {"method", to_string(s.method)},
                      {"value", s.value}};
    return j.dump();
}

std::string to_jsonl(const TrapQuestion& q) {
    ordered_json j = {{"question_id", q.question_id},
                      {"fake_name", q.fake_name},
                      {"strategy", to_string(q.strategy)},
                      {"source_names", q.source_names},
                      {"prompt_text", q.prompt_text},
                      {"verification", to_json(q.verification)}};
    return j.dump();
}

std::string to_jsonl(const CorpusDoc& d) {
    ordered_json j = {{"doc_id", d.doc_id}, {"title", d.title}, {"body", d.body}};
    return j.dump();
}

std::vector<GenerationRecord> parse_records(std::istream& in) {
    return parse_stream<GenerationRecord>(in, [](const ordered_json& j) {
        GenerationRecord r;
        r.record_id = str_field(j, "record_id");
        r.question_id = str_field(j, "question_id");
        r.model_id = str_field(j, "model_id");
        r.sample_index = int_field(j, "sample_index");
        r.text = str_field(j, "text");
        const ordered_json& tokens = field(j, "tokens");
        if (!tokens.is_array()) throw validation_error("field \"tokens\" must be an array");
        for (const auto& t : tokens) r.tokens.push_back(token_from_json(t));
        r.finish_reason = finish_reason_from_string(str_field(j, "finish_reason"));
        throw_if_invalid(validate(r));
        return r;
    });
}

std::vector<FactUnit> parse_facts(std::istream& in) {
    return parse_stream<FactUnit>(in, [](const ordered_json& j) {
        FactUnit f;
        f.fact_id = str_field(j, "fact_id");
        f.record_id = str_field(j, "record_id");
        f.text = str_field(j, "text");
        const ordered_json& span = field(j, "token_span");
        if (!span.is_array()) throw validation_error("field \"token_span\" must be an array");
        for (const auto& v : span) {
            if (!v.is_number_integer()) throw validation_error("token_span must contain integers");
            f.token_span.push_back(v.get<int>());
        }
        throw_if_invalid(validate(f));
        return f;
    });
}

std::vector<GenLabel> parse_labels(std::istream& in) {
    return parse_stream<GenLabel>(in, [](const ordered_json& j) {
        GenLabel l;
        l.record_id = str_field(j, "record_id");
        l.label = label_kind_from_string(str_field(j, "label"));
        if (j.contains("nli_verdict") && !j["nli_verdict"].is_null()) {
            l.nli_verdict = nli_verdict_from_string(str_field(j, "nli_verdict"));
        }
        if (j.contains("retrieval_top_doc") && !j["retrieval_top_doc"].is_null()) {
            l.retrieval_top_doc = str_field(j, "retrieval_top_doc");
        }
        if (j.contains("rationale")) l.rationale = str_field(j, "rationale");
        throw_if_invalid(validate(l));
        return l;
    });
}

std::vector<ScoredResult> parse_scores(std::istream& in) {
    return parse_stream<ScoredResult>(in, [](const ordered_json& j) {
        ScoredResult s;
        s.subject_kind = subject_kind_from_string(str_field(j, "subject_kind"));
        s.subject_id = str_field(j, "subject_id");
        s.method = score_method_from_string(str_field(j, "method"));
        s.value = num_field(j, "value");
        throw_if_invalid(validate(s));
        return s;
    });
}

std::vector<TrapQuestion> parse_questions(std::istream& in) {
    return parse_stream<TrapQuestion>(in, [](const ordered_json& j) {
        TrapQuestion q;
        q.question_id = str_field(j, "question_id");
        q.fake_name = str_field(j, "fake_name");
        q.strategy = forge_strategy_from_string(str_field(j, "strategy"));
        const ordered_json& sources = field(j, "source_names");
        if (!sources.is_array()) throw validation_error("field \"source_names\" must be an array");
        for (const auto& s : sources) {
            if (!s.is_string()) throw validation_error("source_names must contain strings");
            q.source_names.push_back(s.get<std::string>());
        }
        q.prompt_text = str_field(j, "prompt_text");
        q.verification = trace_from_json(field(j, "verification"));
        throw_if_invalid(validate(q));
        return q;
    });
}

std::vector<CorpusDoc> parse_corpus(std::istream& in) {
    std::set<std::string> seen;
    return parse_stream<CorpusDoc>(in, [&seen](const ordered_json& j) {
        CorpusDoc d;
        d.doc_id = str_field(j, "doc_id");
        d.title = str_field(j, "title");
        d.body = str_field(j, "body");
        if (d.doc_id.empty()) throw validation_error("doc_id empty");
        if (!seen.insert(d.doc_id).second) throw validation_error("duplicate doc_id \"" + d.doc_id + "\"");
        return d;
    });
}

std::vector<GenerationRecord> read_records_file(const std::string& path) { return parse_file(path, parse_records); }
std::vector<FactUnit> read_facts_file(const std::string& path) { return parse_file(path, parse_facts); }
std::vector<GenLabel> read_labels_file(const std::string& path) { return parse_file(path, parse_labels); }
std::vector<ScoredResult> read_scores_file(const std::string& path) { return parse_file(path, parse_scores); }
std::vector<TrapQuestion> read_questions_file(const std::string& path) { return parse_file(path, parse_questions); }
std::vector<CorpusDoc> read_corpus_file(const std::string& path) { return parse_file(path, parse_corpus); }

}  // namespace veritrap
