#include "veritrap/config.hpp"

#include <cstdlib>

#include <json.hpp>

#include "veritrap/util.hpp"

namespace veritrap {

using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void unknown_key(const std::string& scope, const std::string& key) {
    throw validation_error("config: unknown key \"" + (scope.empty() ? key : scope + "." + key) + "\"");
}

template <typename T>
T get_as(const ordered_json& v, const std::string& scope, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const ordered_json::exception&) {
        throw validation_error("config: bad value for \"" + scope + "." + key + "\"");
    }
}

void apply_paths(PipelinePaths& p, const ordered_json& j) {
    for (const auto& [key, value] : j.items()) {
        std::string s = get_as<std::string>(value, "paths", key);
        if (key == "names") p.names = s;
        else if (key == "corpus") p.corpus = s;
        else if (key == "questions") p.questions = s;
        else if (key == "records") p.records = s;
        else if (key == "fact_texts") p.fact_texts = s;
        else if (key == "facts") p.facts = s;
        else if (key == "labels") p.labels = s;
        else if (key == "truth") p.truth = s;
        else if (key == "scores") p.scores = s;
        else if (key == "index_cache") p.index_cache = s;
        else if (key == "review") p.review = s;
        else if (key == "report_txt") p.report_txt = s;
        else if (key == "report_jsonl") p.report_jsonl = s;
        else if (key == "hallucination_hist") p.hallucination_hist = s;
        else if (key == "prompts_dir") p.prompts_dir = s;
        else unknown_key("paths", key);
    }
}

void apply_forge(ForgeConfig& f, const ordered_json& j) {
    for (const auto& [key, value] : j.items()) {
        if (key == "k_candidates") f.k_candidates = get_as<int>(value, "forge", key);
        else if (key == "passes") f.passes_T = get_as<int>(value, "forge", key);
        else if (key == "cot") f.use_cot = get_as<bool>(value, "forge", key);
        else if (key == "question_templates") f.question_templates = get_as<std::vector<std::string>>(value, "forge", key);
        else if (key == "strategy_mix") {
            auto mix = get_as<std::vector<double>>(value, "forge", key);
            if (mix.size() != 3) throw validation_error("config: forge.strategy_mix needs 3 proportions (PR,WF,FWC)");
            f.strategy_mix = {mix[0], mix[1], mix[2]};
        } else if (key == "candidate_retry_budget") f.candidate_retry_budget = get_as<int>(value, "forge", key);
        else if (key == "tie_round_cap") f.tie_round_cap = get_as<int>(value, "forge", key);
        else if (key == "real_regex") f.real_regex = get_as<std::string>(value, "forge", key);
        else if (key == "fake_regex") f.fake_regex = get_as<std::string>(value, "forge", key);
        else if (key == "from_review") f.from_review = get_as<std::string>(value, "forge", key);
        else unknown_key("forge", key);
    }
}

void apply_sampling(SamplingConfig& s, const ordered_json& j) {
    for (const auto& [key, value] : j.items()) {
        if (key == "num_samples") s.num_samples = get_as<int>(value, "sampling", key);
        else if (key == "beam_size") s.beam_size = get_as<int>(value, "sampling", key);
        else if (key == "temperature") s.temperature = get_as<double>(value, "sampling", key);
        else if (key == "max_tokens") s.max_tokens = get_as<int>(value, "sampling", key);
        else if (key == "top_k") {
            if (value.is_null()) s.top_k.reset();
            else s.top_k = get_as<int>(value, "sampling", key);
        } else if (key == "k_alt") s.k_alt = get_as<int>(value, "sampling", key);
        else unknown_key("sampling", key);
    }
}

void apply_classifier(ClassifierConfig& c, bool& per_sample, const ordered_json& j) {
    for (const auto& [key, value] : j.items()) {
        if (key == "refusal_template") c.refusal_template = get_as<std::string>(value, "classifier", key);
        else if (key == "top_n") c.top_n = get_as<int>(value, "classifier", key);
        else if (key == "title_match") {
            const std::string v = get_as<std::string>(value, "classifier", key);
            if (v == "exact_normalized") c.title_match = TitleMatch::exact_normalized;
            else if (v == "token_overlap") c.title_match = TitleMatch::token_overlap;
            else throw validation_error("config: classifier.title_match must be exact_normalized or token_overlap");
        } else if (key == "bm25_tau") {
            if (value.is_null()) c.bm25_tau.reset();
            else c.bm25_tau = get_as<double>(value, "classifier", key);
        } else if (key == "hypothesis_is_generation") {
            c.hypothesis_is_generation = get_as<bool>(value, "classifier", key);
        } else if (key == "per_sample_labels") {
            per_sample = get_as<bool>(value, "classifier", key);
        } else unknown_key("classifier", key);
    }
}

void apply_retrieval(Bm25Params& r, const ordered_json& j) {
    for (const auto& [key, value] : j.items()) {
        if (key == "k1") r.k1 = get_as<double>(value, "retrieval", key);
        else if (key == "b") r.b = get_as<double>(value, "retrieval", key);
        else unknown_key("retrieval", key);
    }
}

void apply_score(ScoreStageConfig& s, const ordered_json& j) {
    for (const auto& [key, value] : j.items()) {
        if (key == "methods") {
            auto names = get_as<std::vector<std::string>>(value, "score", key);
            s.methods.clear();
            for (const std::string& n : names) s.methods.push_back(score_method_from_string(n));
        } else if (key == "theta") {
            s.theta = get_as<double>(value, "score", key);
        } else if (key == "ft_combiner" || key == "ff_combiner") {
            const std::string v = get_as<std::string>(value, "score", key);
            CombinerKind kind;
            if (v == "mean") kind = CombinerKind::mean;
            else if (v == "max") kind = CombinerKind::max;
            else if (v == "noisy_or") kind = CombinerKind::noisy_or;
            else throw validation_error("config: score." + key + " must be mean, max or noisy_or");
            (key == "ft_combiner" ? s.ft_combiner : s.ff_combiner) = kind;
        } else if (key == "negate_entropy") {
            s.negate_entropy = get_as<bool>(value, "score", key);
        } else unknown_key("score", key);
    }
}

void apply_endpoint(ProviderEndpoint& e, const std::string& scope, const ordered_json& j,
                    NliBackendMode* mode = nullptr) {
    for (const auto& [key, value] : j.items()) {
        if (key == "base_url") e.base_url = get_as<std::string>(value, scope, key);
        else if (key == "api_key") e.api_key = get_as<std::string>(value, scope, key);
        else if (key == "model_id") e.model_id = get_as<std::string>(value, scope, key);
        else if (key == "max_in_flight") e.max_in_flight = get_as<int>(value, scope, key);
        else if (key == "retry_budget") e.retry_budget = get_as<int>(value, scope, key);
        else if (key == "mode" && mode) {
            const std::string v = get_as<std::string>(value, scope, key);
            if (v == "classify") *mode = NliBackendMode::classify;
            else if (v == "chat") *mode = NliBackendMode::chat;
            else throw validation_error("config: " + scope + ".mode must be classify or chat");
        } else unknown_key(scope, key);
    }
}

void apply_json(PipelineConfig& config, const ordered_json& j) {
    if (!j.is_object()) throw validation_error("config: top level must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "seed") config.seed = get_as<uint64_t>(value, "", key);
        else if (key == "provider") {
            config.provider = get_as<std::string>(value, "", key);
            if (config.provider != "stub" && config.provider != "live") {
                throw validation_error("config: provider must be stub or live");
            }
        } else if (key == "workers") config.workers = get_as<int>(value, "", key);
        else if (key == "out_dir") config.out_dir = get_as<std::string>(value, "", key);
        else if (key == "paths") apply_paths(config.paths, value);
        else if (key == "forge") apply_forge(config.forge, value);
        else if (key == "sampling") apply_sampling(config.sampling, value);
        else if (key == "classifier") apply_classifier(config.classifier, config.per_sample_labels, value);
        else if (key == "retrieval") apply_retrieval(config.retrieval, value);
        else if (key == "score") apply_score(config.score, value);
        else if (key == "endpoints") {
            for (const auto& [ep, body] : value.items()) {
                if (ep == "llm") apply_endpoint(config.llm, "endpoints.llm", body);
                else if (ep == "nli") apply_endpoint(config.nli, "endpoints.nli", body, &config.nli_mode);
                else unknown_key("endpoints", ep);
            }
        } else unknown_key("", key);
    }
}

void apply_env(PipelineConfig& config) {
    auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string();
    };
    if (std::string v = env("VERITRAP_LLM_BASE_URL"); !v.empty()) config.llm.base_url = v;
    if (std::string v = env("VERITRAP_LLM_API_KEY"); !v.empty()) config.llm.api_key = v;
    if (std::string v = env("VERITRAP_LLM_MODEL"); !v.empty()) config.llm.model_id = v;
    if (std::string v = env("VERITRAP_NLI_BASE_URL"); !v.empty()) config.nli.base_url = v;
    if (std::string v = env("VERITRAP_NLI_API_KEY"); !v.empty()) config.nli.api_key = v;
}

ordered_json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return ordered_json::parse(text);
    } catch (const ordered_json::exception& e) {
        throw validation_error(what + ": malformed JSON: " + e.what());
    }
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::string& config_file, const std::string& overrides_json) {
    PipelineConfig config;
    if (!config_file.empty()) {
        apply_json(config, parse_json_text(read_text_file(config_file), config_file));
    }
    apply_env(config);
    if (!overrides_json.empty()) {
        apply_json(config, parse_json_text(overrides_json, "overrides"));
    }
    config.finalize();
    return config;
}

void PipelineConfig::finalize() {
    auto fill = [&](std::string& path, const std::string& value) {
        if (path.empty()) path = value;
    };
    fill(paths.names, "names.txt");
    fill(paths.corpus, "corpus.jsonl");
    fill(paths.questions, out_dir + "/questions.jsonl");
    fill(paths.records, out_dir + "/records.jsonl");
    fill(paths.fact_texts, out_dir + "/fact_texts.jsonl");
    fill(paths.facts, out_dir + "/facts.jsonl");
    fill(paths.labels, out_dir + "/labels.jsonl");
    fill(paths.truth, out_dir + "/truth.jsonl");
    fill(paths.scores, out_dir + "/scores.jsonl");
    fill(paths.index_cache, out_dir + "/index.cache");
    fill(paths.review, out_dir + "/review.txt");
    fill(paths.report_txt, out_dir + "/report.txt");
    fill(paths.report_jsonl, out_dir + "/report.jsonl");
    fill(paths.hallucination_hist, out_dir + "/hallucination_hist.jsonl");
    fill(paths.prompts_dir, "prompts");

    if (workers < 0) throw validation_error("config: workers must be >= 0");
    if (!(score.theta > 0.0 && score.theta < 1.0)) {
        throw validation_error("config: score.theta must be in (0,1)");
    }
    if (score.methods.empty()) throw validation_error("config: score.methods must be non-empty");
    forge.validate();
    sampling.validate();
    classifier.validate();
    if (!(retrieval.k1 > 0.0)) throw validation_error("config: retrieval.k1 must be > 0");
    if (retrieval.b < 0.0 || retrieval.b > 1.0) throw validation_error("config: retrieval.b must be in [0,1]");
    if (llm.max_in_flight < 1 || nli.max_in_flight < 1) {
        throw validation_error("config: max_in_flight must be >= 1");
    }
}

std::string PipelineConfig::canonical_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["provider"] = provider;
    j["out_dir"] = out_dir;
    ordered_json p;
    p["names"] = paths.names;
    p["corpus"] = paths.corpus;
    p["questions"] = paths.questions;
    p["records"] = paths.records;
    p["fact_texts"] = paths.fact_texts;
    p["facts"] = paths.facts;
    p["labels"] = paths.labels;
    p["truth"] = paths.truth;
    p["scores"] = paths.scores;
    p["index_cache"] = paths.index_cache;
    p["review"] = paths.review;
    p["report_txt"] = paths.report_txt;
    p["report_jsonl"] = paths.report_jsonl;
    p["hallucination_hist"] = paths.hallucination_hist;
    p["prompts_dir"] = paths.prompts_dir;
    j["paths"] = std::move(p);
    ordered_json f;
    f["k_candidates"] = forge.k_candidates;
    f["passes"] = forge.passes_T;
    f["cot"] = forge.use_cot;
    f["question_templates"] = forge.question_templates;
    f["strategy_mix"] = {forge.strategy_mix.pr, forge.strategy_mix.wf, forge.strategy_mix.fwc};
    f["candidate_retry_budget"] = forge.candidate_retry_budget;
    f["tie_round_cap"] = forge.tie_round_cap;
    f["real_regex"] = forge.real_regex;
    f["fake_regex"] = forge.fake_regex;
    f["from_review"] = forge.from_review;
    j["forge"] = std::move(f);
    ordered_json s;
    s["num_samples"] = sampling.num_samples;
    s["beam_size"] = sampling.beam_size;
    s["temperature"] = sampling.temperature;
    s["max_tokens"] = sampling.max_tokens;
    if (sampling.top_k) s["top_k"] = *sampling.top_k;
    else s["top_k"] = nullptr;
    s["k_alt"] = sampling.k_alt;
    j["sampling"] = std::move(s);
    ordered_json c;
    c["refusal_template"] = classifier.refusal_template;
    c["top_n"] = classifier.top_n;
    c["title_match"] = classifier.title_match == TitleMatch::exact_normalized ? "exact_normalized" : "token_overlap";
    if (classifier.bm25_tau) c["bm25_tau"] = *classifier.bm25_tau;
    else c["bm25_tau"] = nullptr;
    c["hypothesis_is_generation"] = classifier.hypothesis_is_generation;
    c["per_sample_labels"] = per_sample_labels;
    j["classifier"] = std::move(c);
    j["retrieval"] = {{"k1", retrieval.k1}, {"b", retrieval.b}};
    ordered_json sc;
    std::vector<std::string> method_names;
    for (ScoreMethod m : score.methods) method_names.push_back(to_string(m));
    sc["methods"] = method_names;
    sc["theta"] = score.theta;
    auto combiner_name = [](CombinerKind k) {
        switch (k) {
            case CombinerKind::mean: return "mean";
            case CombinerKind::max: return "max";
            default: return "noisy_or";
        }
    };
    sc["ft_combiner"] = combiner_name(score.ft_combiner);
    sc["ff_combiner"] = combiner_name(score.ff_combiner);
    sc["negate_entropy"] = score.negate_entropy;
    j["score"] = std::move(sc);
    auto endpoint_json = [](const ProviderEndpoint& e) {
        ordered_json out;
        out["base_url"] = e.base_url;
        out["api_key"] = e.api_key.empty() ? "" : "<redacted>";
        out["model_id"] = e.model_id;
        out["max_in_flight"] = e.max_in_flight;
        out["retry_budget"] = e.retry_budget;
        return out;
    };
    j["endpoints"] = {{"llm", endpoint_json(llm)}, {"nli", endpoint_json(nli)}};
    j["endpoints"]["nli"]["mode"] = nli_mode == NliBackendMode::classify ? "classify" : "chat";
    return j.dump();
}

}  // namespace veritrap
