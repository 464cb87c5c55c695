#include "veritrap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "veritrap/evalkit.hpp"
#include "veritrap/util.hpp"

namespace veritrap {

using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"forge", "index",    "ask",   "decompose",
                                                   "map",   "classify", "score", "eval"};
    return names;
}

namespace {

// Runs fn(i) for every input index on a bounded worker pool; per-index
// exceptions are captured so callers can turn them into failure entries.
// Output order is input order regardless of worker count.
template <typename Fn>
std::vector<std::exception_ptr> parallel_for(size_t count, int workers, Fn fn) {
    std::vector<std::exception_ptr> errors(count);
    if (count == 0) return errors;
    unsigned n = workers > 0 ? static_cast<unsigned>(workers) : std::thread::hardware_concurrency();
    if (n == 0) n = 4;
    n = std::min<unsigned>(n, static_cast<unsigned>(count));

    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (n <= 1) {
        worker();
        return errors;
    }
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    return errors;
}

std::string error_text(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const std::exception& e) {
        return e.what();
    } catch (...) {
        return "unknown error";
    }
}

// Hard (non-subject) errors propagate; everything else becomes a failure row.
bool is_hard_error(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const Error& e) {
        return e.category() == ErrorCategory::transport;
    } catch (...) {
        return true;
    }
}

std::vector<std::string> read_name_lines(const std::string& path) {
    std::vector<std::string> names;
    for (const std::string& line : split_lines(read_text_file(path))) {
        const std::string t = trim(line);
        if (!t.empty() && t[0] != '#') names.push_back(t);
    }
    return names;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline implementation
// ---------------------------------------------------------------------------

struct Pipeline::Impl {
    PipelineConfig config;
    PromptSet prompts;
    std::unique_ptr<TextProvider> text;
    std::unique_ptr<NliProvider> nli_provider;
    uint64_t config_hash = 0;

    explicit Impl(PipelineConfig cfg) : config(std::move(cfg)) {
        prompts = PromptSet::load(config.paths.prompts_dir);
        if (config.provider == "stub") {
            ProviderEndpoint llm = config.llm;
            if (llm.model_id.empty()) llm.model_id = "stub-model";
            text = std::make_unique<StubTextProvider>(config.seed, llm);
            nli_provider = std::make_unique<StubNliProvider>(config.seed, config.nli);
        } else {
            text = std::make_unique<HttpTextProvider>(config.llm);
            nli_provider = std::make_unique<HttpNliProvider>(config.nli, config.nli_mode);
        }
        config_hash = fnv1a(config.canonical_json());
    }

    std::string manifest_path(const std::string& stage) const {
        return config.out_dir + "/manifests/" + stage + ".json";
    }
    std::string failures_path(const std::string& stage) const {
        return config.out_dir + "/failures/" + stage + ".jsonl";
    }

    void require_inputs(const std::string& stage, const std::vector<std::string>& inputs) const {
        for (const std::string& path : inputs) {
            if (!file_exists(path)) {
                throw validation_error(stage + ": missing input file " + path);
            }
        }
    }

    bool up_to_date(const std::string& stage, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, StageResult* result) const {
        const std::string path = manifest_path(stage);
        if (!file_exists(path)) return false;
        ordered_json m;
        try {
            m = ordered_json::parse(read_text_file(path));
        } catch (...) {
            return false;
        }
        if (m.value("config_hash", "") != hex64(config_hash)) return false;
        auto check = [&](const char* key, const std::vector<std::string>& files) {
            if (!m.contains(key) || !m[key].is_object()) return false;
            const ordered_json& section = m[key];
            if (section.size() != files.size()) return false;
            for (const std::string& f : files) {
                if (!section.contains(f) || !file_exists(f)) return false;
                if (section[f].get<std::string>() != hex64(hash_file(f))) return false;
            }
            return true;
        };
        if (!check("inputs", inputs) || !check("outputs", outputs)) return false;
        result->input_count = m.value("input_count", 0);
        result->succeeded = m.value("succeeded", 0);
        result->filtered = m.value("filtered", 0);
        if (m.value("failures", 0) != 0) return false;  // redo stages that had failures
        return true;
    }

    void write_manifest(const std::string& stage, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, const StageResult& result) const {
        ordered_json m;
        m["stage"] = stage;
        m["config_hash"] = hex64(config_hash);
        ordered_json in = ordered_json::object();
        for (const std::string& f : inputs) in[f] = hex64(hash_file(f));
        m["inputs"] = std::move(in);
        ordered_json out = ordered_json::object();
        for (const std::string& f : outputs) out[f] = hex64(hash_file(f));
        m["outputs"] = std::move(out);
        m["input_count"] = result.input_count;
        m["succeeded"] = result.succeeded;
        m["filtered"] = result.filtered;
        m["failures"] = static_cast<int>(result.failures.size());
        write_text_file(manifest_path(stage), m.dump(2) + "\n");
    }

    void write_failures(const std::string& stage, const StageResult& result) const {
        const std::string path = failures_path(stage);
        if (result.failures.empty()) {
            std::error_code ec;
            std::filesystem::remove(path, ec);
            return;
        }
        std::string content;
        for (const StageFailure& f : result.failures) {
            ordered_json j = {{"subject_id", f.subject_id}, {"error", f.error}};
            content += j.dump() + "\n";
        }
        write_text_file(path, content);
    }

    // ---- stages -----------------------------------------------------------

    StageResult run_forge() {
        if (!config.forge.from_review.empty()) return run_forge_from_review();
        StageResult result;
        result.stage = "forge";
        const std::vector<std::string> inputs = {config.paths.names};
        const std::vector<std::string> outputs = {config.paths.questions, config.paths.review};
        require_inputs("forge", inputs);
        if (up_to_date("forge", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }

        const std::vector<std::string> real_names = read_name_lines(config.paths.names);
        if (real_names.empty()) throw validation_error("forge: no names in " + config.paths.names);

        const ForgeConfig& fc = config.forge;
        fc.validate();
        const double generator_share = fc.strategy_mix.pr + fc.strategy_mix.wf;
        int k_pr = 0;
        if (generator_share > 0.0) {
            k_pr = static_cast<int>(std::lround(fc.k_candidates * fc.strategy_mix.pr / generator_share));
        }
        const int k_wf = fc.k_candidates - k_pr;
        result.input_count = fc.k_candidates;

        CandidateList potential;
        potential.stage = CandidateStage::potential;
        auto gather = [&](ForgeStrategy strategy, int k) {
            if (k <= 0) return;
            try {
                CandidateList part = generate_candidates(real_names, strategy, k, *text, prompts,
                                                         derive_seed(config.seed, "forge-candidates",
                                                                     to_string(strategy)),
                                                         fc.candidate_retry_budget);
                for (Candidate& c : part.names) potential.names.push_back(std::move(c));
            } catch (const PartialResultError& e) {
                for (const Candidate& c : e.produced().names) potential.names.push_back(c);
                result.failures.push_back({std::string("candidates-") + to_string(strategy), e.what()});
            }
        };
        gather(ForgeStrategy::PR, k_pr);
        gather(ForgeStrategy::WF, k_wf);

        // Verify candidates in parallel; rounds for one name stay sequential.
        std::vector<std::optional<VerificationTrace>> traces(potential.names.size());
        std::vector<std::exception_ptr> errors =
            parallel_for(potential.names.size(), config.workers, [&](size_t i) {
                traces[i] = verify_name(potential.names[i].name, *text, fc, prompts,
                                        derive_seed(config.seed, "forge-verify", potential.names[i].name));
            });

        CandidateList verified;
        verified.stage = CandidateStage::verified;
        std::set<std::string> real_keys;
        for (const std::string& n : real_names) real_keys.insert(normalize_name(n));
        for (size_t i = 0; i < potential.names.size(); ++i) {
            if (errors[i]) {
                if (is_hard_error(errors[i])) std::rethrow_exception(errors[i]);
                result.failures.push_back({potential.names[i].name, error_text(errors[i])});
                continue;
            }
            if (real_keys.count(normalize_name(potential.names[i].name))) {
                // No real-name leakage into emitted questions.
                result.filtered += 1;
                continue;
            }
            Candidate c = potential.names[i];
            c.verification = traces[i];
            verified.names.push_back(std::move(c));
        }

        write_text_file(config.paths.review, export_review_file(verified));

        CandidateList final_list = verified;
        final_list.stage = CandidateStage::final;
        std::vector<std::string> warnings;
        std::vector<TrapQuestion> questions = build_trap_questions(final_list, fc, &warnings);
        result.filtered += static_cast<int>(warnings.size());

        std::string content;
        for (const TrapQuestion& q : questions) content += to_jsonl(q) + "\n";
        write_text_file(config.paths.questions, content);
        result.succeeded = static_cast<int>(questions.size());
        return result;
    }

    StageResult run_forge_from_review() {
        StageResult result;
        result.stage = "forge";
        const std::vector<std::string> inputs = {config.forge.from_review};
        require_inputs("forge", inputs);
        CandidateList final_list = import_review_file(read_text_file(config.forge.from_review));
        result.input_count = static_cast<int>(final_list.names.size());
        std::vector<std::string> warnings;
        std::vector<TrapQuestion> questions = build_trap_questions(final_list, config.forge, &warnings);
        result.filtered = static_cast<int>(warnings.size());
        std::string content;
        for (const TrapQuestion& q : questions) content += to_jsonl(q) + "\n";
        write_text_file(config.paths.questions, content);
        result.succeeded = static_cast<int>(questions.size());
        return result;
    }

    StageResult run_index() {
        StageResult result;
        result.stage = "index";
        const std::vector<std::string> inputs = {config.paths.corpus};
        const std::vector<std::string> outputs = {config.paths.index_cache};
        require_inputs("index", inputs);
        if (up_to_date("index", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }
        std::vector<CorpusDoc> corpus = read_corpus_file(config.paths.corpus);
        InvertedIndex index = build_index(corpus, config.retrieval);
        save_index_cache(index, config.paths.index_cache);
        result.input_count = static_cast<int>(corpus.size());
        result.succeeded = index.doc_count;
        return result;
    }

    StageResult run_ask() {
        StageResult result;
        result.stage = "ask";
        const std::vector<std::string> inputs = {config.paths.questions};
        const std::vector<std::string> outputs = {config.paths.records};
        require_inputs("ask", inputs);
        if (up_to_date("ask", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }
        const std::vector<TrapQuestion> questions = read_questions_file(config.paths.questions);
        result.input_count = static_cast<int>(questions.size());

        std::vector<std::vector<GenerationRecord>> per_question(questions.size());
        std::vector<std::exception_ptr> errors =
            parallel_for(questions.size(), config.workers, [&](size_t i) {
                std::vector<GenerationRecord> records =
                    complete(*text, questions[i].prompt_text, config.sampling,
                             derive_seed(config.seed, "ask", questions[i].question_id));
                for (GenerationRecord& r : records) {
                    r.question_id = questions[i].question_id;
                    r.record_id = questions[i].question_id + "-s" + std::to_string(r.sample_index);
                }
                per_question[i] = std::move(records);
            });

        std::string content;
        for (size_t i = 0; i < questions.size(); ++i) {
            if (errors[i]) {
                if (is_hard_error(errors[i])) std::rethrow_exception(errors[i]);
                result.failures.push_back({questions[i].question_id, error_text(errors[i])});
                continue;
            }
            for (const GenerationRecord& r : per_question[i]) content += to_jsonl(r) + "\n";
            result.succeeded += 1;
        }
        write_text_file(config.paths.records, content);
        return result;
    }

    StageResult run_decompose() {
        StageResult result;
        result.stage = "decompose";
        const std::vector<std::string> inputs = {config.paths.records};
        const std::vector<std::string> outputs = {config.paths.fact_texts};
        require_inputs("decompose", inputs);
        if (up_to_date("decompose", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }
        const std::vector<GenerationRecord> records = read_records_file(config.paths.records);
        result.input_count = static_cast<int>(records.size());

        std::vector<std::vector<std::string>> facts(records.size());
        std::vector<std::exception_ptr> errors = parallel_for(records.size(), config.workers, [&](size_t i) {
            facts[i] = decompose_facts(*text, records[i], prompts,
                                       derive_seed(config.seed, "decompose", records[i].record_id));
        });

        std::string content;
        for (size_t i = 0; i < records.size(); ++i) {
            if (errors[i]) {
                if (is_hard_error(errors[i])) std::rethrow_exception(errors[i]);
                result.failures.push_back({records[i].record_id, error_text(errors[i])});
                continue;
            }
            ordered_json j = {{"record_id", records[i].record_id}, {"facts", facts[i]}};
            content += j.dump() + "\n";
            result.succeeded += 1;
        }
        write_text_file(config.paths.fact_texts, content);
        return result;
    }

    StageResult run_map() {
        StageResult result;
        result.stage = "map";
        const std::vector<std::string> inputs = {config.paths.records, config.paths.fact_texts};
        const std::vector<std::string> outputs = {config.paths.facts};
        require_inputs("map", inputs);
        if (up_to_date("map", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }
        const std::vector<GenerationRecord> records = read_records_file(config.paths.records);
        std::map<std::string, const GenerationRecord*> by_id;
        for (const GenerationRecord& r : records) by_id[r.record_id] = &r;

        struct Entry {
            std::string record_id;
            std::vector<std::string> fact_texts;
        };
        std::vector<Entry> entries;
        {
            std::ifstream in(config.paths.fact_texts);
            std::string line;
            size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (trim(line).empty()) continue;
                try {
                    ordered_json j = ordered_json::parse(line);
                    entries.push_back({j.at("record_id").get<std::string>(),
                                       j.at("facts").get<std::vector<std::string>>()});
                } catch (const ordered_json::exception& e) {
                    throw validation_error(config.paths.fact_texts + " line " + std::to_string(line_no) +
                                           ": " + e.what());
                }
            }
        }
        result.input_count = static_cast<int>(entries.size());

        std::vector<std::vector<FactUnit>> mapped(entries.size());
        std::vector<std::exception_ptr> errors = parallel_for(entries.size(), config.workers, [&](size_t i) {
            auto it = by_id.find(entries[i].record_id);
            if (it == by_id.end()) {
                throw validation_error("map: record " + entries[i].record_id + " not found in " +
                                       config.paths.records);
            }
            const GenerationRecord& record = *it->second;
            std::vector<FactUnit> units;
            for (size_t f = 0; f < entries[i].fact_texts.size(); ++f) {
                const std::string& fact_text = entries[i].fact_texts[f];
                MapWordsResult words = map_fact_words(
                    *text, record, fact_text, prompts,
                    derive_seed(config.seed, "map", record.record_id + "#" + std::to_string(f)));
                FactUnit unit;
                unit.fact_id = record.record_id + "-f" + std::to_string(f);
                unit.record_id = record.record_id;
                unit.text = fact_text;
                unit.token_span = align_words_to_tokens(words.words, record.tokens);
                std::vector<std::string> violations = validate_fact(unit, record);
                if (!violations.empty()) {
                    std::string msg = "map: invalid fact " + unit.fact_id;
                    for (const std::string& v : violations) msg += ": " + v;
                    throw validation_error(msg);
                }
                units.push_back(std::move(unit));
            }
            mapped[i] = std::move(units);
        });

        std::string content;
        for (size_t i = 0; i < entries.size(); ++i) {
            if (errors[i]) {
                if (is_hard_error(errors[i])) std::rethrow_exception(errors[i]);
                result.failures.push_back({entries[i].record_id, error_text(errors[i])});
                continue;
            }
            for (const FactUnit& f : mapped[i]) content += to_jsonl(f) + "\n";
            result.succeeded += 1;
        }
        write_text_file(config.paths.facts, content);
        return result;
    }

    StageResult run_classify() {
        StageResult result;
        result.stage = "classify";
        const std::vector<std::string> inputs = {config.paths.records, config.paths.questions,
                                                 config.paths.corpus};
        const std::vector<std::string> outputs = {config.paths.labels, config.paths.truth};
        require_inputs("classify", inputs);
        if (up_to_date("classify", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }
        const std::vector<GenerationRecord> records = read_records_file(config.paths.records);
        const std::vector<TrapQuestion> questions = read_questions_file(config.paths.questions);
        std::map<std::string, std::string> name_by_question;
        for (const TrapQuestion& q : questions) name_by_question[q.question_id] = q.fake_name;

        InvertedIndex index =
            load_or_build_index(config.paths.corpus, config.paths.index_cache, config.retrieval);
        IndexSearcher searcher(index);
        result.input_count = static_cast<int>(records.size());

        // With per-sample labels off, one representative per (question, model)
        // is classified and siblings reuse its label.
        std::map<std::pair<std::string, std::string>, size_t> representative;
        std::vector<size_t> to_classify;
        for (size_t i = 0; i < records.size(); ++i) {
            const auto key = std::make_pair(records[i].question_id, records[i].model_id);
            auto it = representative.find(key);
            if (config.per_sample_labels || it == representative.end()) {
                if (it == representative.end()) representative[key] = i;
                to_classify.push_back(i);
            }
        }

        std::vector<std::optional<GenLabel>> labels(records.size());
        std::vector<std::exception_ptr> stage_errors(records.size());
        std::vector<std::exception_ptr> errors =
            parallel_for(to_classify.size(), config.workers, [&](size_t n) {
                const size_t i = to_classify[n];
                const GenerationRecord& record = records[i];
                auto name_it = name_by_question.find(record.question_id);
                if (name_it == name_by_question.end()) {
                    throw validation_error("classify: no question entry for " + record.question_id);
                }
                labels[i] = classify(record, name_it->second, *nli_provider, searcher, config.classifier,
                                     derive_seed(config.seed, "classify", record.record_id));
            });
        for (size_t n = 0; n < to_classify.size(); ++n) stage_errors[to_classify[n]] = errors[n];

        std::string label_content, truth_content;
        for (size_t i = 0; i < records.size(); ++i) {
            const GenerationRecord& record = records[i];
            GenLabel label;
            if (labels[i]) {
                if (stage_errors[i]) {
                    if (is_hard_error(stage_errors[i])) std::rethrow_exception(stage_errors[i]);
                }
                label = *labels[i];
            } else if (!config.per_sample_labels) {
                const auto key = std::make_pair(record.question_id, record.model_id);
                const size_t rep = representative.at(key);
                if (stage_errors[rep] || !labels[rep]) {
                    result.failures.push_back({record.record_id, "representative sample failed to classify"});
                    continue;
                }
                label = *labels[rep];
                label.record_id = record.record_id;
                label.rationale += " (label reused from sample " +
                                   std::to_string(records[rep].sample_index) + ")";
            }
            if (stage_errors[i]) {
                if (is_hard_error(stage_errors[i])) std::rethrow_exception(stage_errors[i]);
                result.failures.push_back({record.record_id, error_text(stage_errors[i])});
                continue;
            }
            label_content += to_jsonl(label) + "\n";
            ordered_json truth = {{"subject_id", record.record_id},
                                  {"incorrect", label.label == LabelKind::FF ? 1 : 0}};
            truth_content += truth.dump() + "\n";
            result.succeeded += 1;
        }
        write_text_file(config.paths.labels, label_content);
        write_text_file(config.paths.truth, truth_content);
        return result;
    }

    StageResult run_score() {
        StageResult result;
        result.stage = "score";
        const std::vector<std::string> inputs = {config.paths.records, config.paths.facts,
                                                 config.paths.labels};
        const std::vector<std::string> outputs = {config.paths.scores};
        require_inputs("score", inputs);
        if (up_to_date("score", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }
        const std::vector<GenerationRecord> records = read_records_file(config.paths.records);
        const std::vector<FactUnit> all_facts = read_facts_file(config.paths.facts);
        const std::vector<GenLabel> labels = read_labels_file(config.paths.labels);

        std::map<std::string, std::vector<FactUnit>> facts_by_record;
        for (const FactUnit& f : all_facts) facts_by_record[f.record_id].push_back(f);
        std::map<std::string, const GenLabel*> label_by_record;
        for (const GenLabel& l : labels) label_by_record[l.record_id] = &l;

        const std::set<ScoreMethod> wanted(config.score.methods.begin(), config.score.methods.end());
        result.input_count = static_cast<int>(records.size());

        std::vector<std::vector<ScoredResult>> rows(records.size());
        std::vector<std::exception_ptr> errors = parallel_for(records.size(), config.workers, [&](size_t i) {
            rows[i] = score_record(records[i], label_by_record, facts_by_record, wanted);
        });

        std::string content;
        for (size_t i = 0; i < records.size(); ++i) {
            if (errors[i]) {
                if (is_hard_error(errors[i])) std::rethrow_exception(errors[i]);
                result.failures.push_back({records[i].record_id, error_text(errors[i])});
                continue;
            }
            for (const ScoredResult& s : rows[i]) content += to_jsonl(s) + "\n";
            result.succeeded += 1;
        }
        write_text_file(config.paths.scores, content);
        return result;
    }

    std::vector<ScoredResult> score_record(const GenerationRecord& record,
                                           const std::map<std::string, const GenLabel*>& label_by_record,
                                           const std::map<std::string, std::vector<FactUnit>>& facts_by_record,
                                           const std::set<ScoreMethod>& wanted) {
        auto label_it = label_by_record.find(record.record_id);
        if (label_it == label_by_record.end()) {
            throw validation_error("score: no label for record " + record.record_id);
        }
        const GenLabel& label = *label_it->second;
        static const std::vector<FactUnit> kNoFacts;
        auto facts_it = facts_by_record.find(record.record_id);
        const std::vector<FactUnit>& facts = facts_it == facts_by_record.end() ? kNoFacts : facts_it->second;

        std::vector<ScoredResult> out;
        const double sign = config.score.negate_entropy ? -1.0 : 1.0;
        if (wanted.count(ScoreMethod::PE)) {
            out.push_back({SubjectKind::generation, record.record_id, ScoreMethod::PE, sign * pe(record)});
        }
        if (wanted.count(ScoreMethod::LNPE)) {
            out.push_back({SubjectKind::generation, record.record_id, ScoreMethod::LNPE, sign * ln_pe(record)});
        }

        const bool want_mp = wanted.count(ScoreMethod::MP_MEAN) || wanted.count(ScoreMethod::MP_MAX);
        if (want_mp && !facts.empty()) {
            std::vector<double> mp;
            mp.reserve(facts.size());
            for (const FactUnit& f : facts) mp.push_back(max_prob(f, record));
            if (wanted.count(ScoreMethod::MP_MEAN)) {
                out.push_back({SubjectKind::generation, record.record_id, ScoreMethod::MP_MEAN,
                               combine(mp, {CombinerKind::mean})});
            }
            if (wanted.count(ScoreMethod::MP_MAX)) {
                out.push_back({SubjectKind::generation, record.record_id, ScoreMethod::MP_MAX,
                               combine(mp, {CombinerKind::max})});
            }
        }

        const bool want_ccp = wanted.count(ScoreMethod::CCP_MEAN) || wanted.count(ScoreMethod::CCP_MAX);
        if (want_ccp && !facts.empty()) {
            // One NLI verdict per (token, alternative); cached across facts.
            std::map<int, double> word_scores;
            for (const FactUnit& f : facts) {
                for (int idx : f.token_span) {
                    if (word_scores.count(idx)) continue;
                    const TokenEvent& token = record.tokens[static_cast<size_t>(idx)];
                    std::map<std::string, NliVerdict> verdicts;
                    const std::string original = strip_subword_markers(token.surface);
                    for (size_t a = 0; a < token.alternatives.size(); ++a) {
                        const AlternativeToken& alt = token.alternatives[a];
                        const std::string premise = strip_subword_markers(alt.surface);
                        if (premise.empty() || original.empty()) {
                            verdicts[alt.surface] = NliVerdict::neutral;
                            continue;
                        }
                        verdicts[alt.surface] =
                            nli(*nli_provider, premise, original,
                                derive_seed(config.seed, "ccp",
                                            record.record_id + "#" + std::to_string(idx) + "#" +
                                                std::to_string(a)));
                    }
                    word_scores[idx] = ccp_word(token, verdicts).value;
                }
            }
            std::vector<double> ccp;
            ccp.reserve(facts.size());
            for (const FactUnit& f : facts) ccp.push_back(ccp_claim(f, record, word_scores));
            if (wanted.count(ScoreMethod::CCP_MEAN)) {
                out.push_back({SubjectKind::generation, record.record_id, ScoreMethod::CCP_MEAN,
                               combine(ccp, {CombinerKind::mean})});
            }
            if (wanted.count(ScoreMethod::CCP_MAX)) {
                out.push_back({SubjectKind::generation, record.record_id, ScoreMethod::CCP_MAX,
                               combine(ccp, {CombinerKind::max})});
            }
        }

        RuConfig ru_config{{config.score.ft_combiner}, {config.score.ff_combiner}};
        if (wanted.count(ScoreMethod::RU_GEN)) {
            std::vector<ScoredResult> gen =
                ru_score(record, label, facts, ScoreGranularity::generation, ru_config);
            out.insert(out.end(), gen.begin(), gen.end());
        }
        if (wanted.count(ScoreMethod::RU_FACT)) {
            std::vector<ScoredResult> fact_rows =
                ru_score(record, label, facts, ScoreGranularity::fact, ru_config);
            // FR dispatch yields a generation-level row; keep it only when
            // RU_GEN was not already requested.
            for (const ScoredResult& r : fact_rows) {
                if (r.method == ScoreMethod::RU_GEN && wanted.count(ScoreMethod::RU_GEN)) continue;
                out.push_back(r);
            }
        }
        return out;
    }

    StageResult run_eval() {
        StageResult result;
        result.stage = "eval";
        const std::vector<std::string> inputs = {config.paths.scores, config.paths.labels,
                                                 config.paths.truth, config.paths.records,
                                                 config.paths.facts};
        const std::vector<std::string> outputs = {config.paths.report_txt, config.paths.report_jsonl,
                                                  config.paths.hallucination_hist};
        require_inputs("eval", inputs);
        if (up_to_date("eval", inputs, outputs, &result)) {
            result.skipped = true;
            return result;
        }
        const std::vector<ScoredResult> scores = read_scores_file(config.paths.scores);
        const std::vector<GenLabel> labels = read_labels_file(config.paths.labels);
        const std::vector<GenerationRecord> records = read_records_file(config.paths.records);
        const std::vector<FactUnit> facts = read_facts_file(config.paths.facts);

        std::map<std::string, const GenerationRecord*> record_by_id;
        for (const GenerationRecord& r : records) record_by_id[r.record_id] = &r;
        std::map<std::string, std::string> fact_owner;
        for (const FactUnit& f : facts) fact_owner[f.fact_id] = f.record_id;

        // truth.jsonl: {"subject_id": ..., "incorrect": 0|1}
        std::map<std::string, bool> truth;
        {
            std::ifstream in(config.paths.truth);
            std::string line;
            size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (trim(line).empty()) continue;
                try {
                    ordered_json j = ordered_json::parse(line);
                    truth[j.at("subject_id").get<std::string>()] = j.at("incorrect").get<int>() != 0;
                } catch (const ordered_json::exception& e) {
                    throw validation_error(config.paths.truth + " line " + std::to_string(line_no) + ": " +
                                           e.what());
                }
            }
        }

        result.input_count = static_cast<int>(scores.size());
        std::map<std::string, std::vector<EvalSubject>> subjects;
        std::vector<std::string> uncovered;
        for (const ScoredResult& s : scores) {
            std::string record_id = s.subject_id;
            if (s.subject_kind == SubjectKind::fact) {
                auto it = fact_owner.find(s.subject_id);
                if (it == fact_owner.end()) {
                    uncovered.push_back(s.subject_id + " (" + to_string(s.method) + "): unknown fact");
                    continue;
                }
                record_id = it->second;
            }
            auto rec_it = record_by_id.find(record_id);
            if (rec_it == record_by_id.end()) {
                uncovered.push_back(s.subject_id + " (" + to_string(s.method) + "): unknown record");
                continue;
            }
            // Per-fact truth lines take precedence; otherwise the fact
            // inherits its generation's label.
            auto truth_it = truth.find(s.subject_id);
            if (truth_it == truth.end() && s.subject_kind == SubjectKind::fact) {
                truth_it = truth.find(record_id);
            }
            if (truth_it == truth.end()) {
                uncovered.push_back(s.subject_id + " (" + to_string(s.method) + "): no truth label");
                continue;
            }
            subjects[to_string(s.method)].push_back(
                {rec_it->second->model_id, s.value, truth_it->second});
            result.succeeded += 1;
        }

        std::vector<std::string> method_order;
        for (ScoreMethod m : {ScoreMethod::PE, ScoreMethod::LNPE, ScoreMethod::MP_MEAN,
                              ScoreMethod::MP_MAX, ScoreMethod::CCP_MEAN, ScoreMethod::CCP_MAX,
                              ScoreMethod::RU_GEN, ScoreMethod::RU_FACT}) {
            method_order.push_back(to_string(m));
        }
        Report report = build_report(subjects, method_order);
        for (const std::string& u : uncovered) report.coverage_notes.push_back(u);

        // Per-model distribution of per-question FF fractions.
        std::vector<LabeledGeneration> generation_labels;
        for (const GenLabel& l : labels) {
            auto it = record_by_id.find(l.record_id);
            if (it == record_by_id.end()) continue;
            generation_labels.push_back({it->second->model_id, it->second->question_id, l.label});
        }
        const std::vector<ModelHallucination> hallu = hallucination_rate(generation_labels);

        std::string hist_content;
        for (const ModelHallucination& m : hallu) {
            for (const QuestionHallucination& q : m.per_question) {
                ordered_json j = {{"model_id", m.model_id},
                                  {"question_id", q.question_id},
                                  {"ff_fraction", q.ff_fraction},
                                  {"samples", q.samples}};
                hist_content += j.dump() + "\n";
            }
            ordered_json summary = {{"model_id", m.model_id},
                                    {"mean_ff_fraction", m.mean_fraction},
                                    {"questions", static_cast<int>(m.per_question.size())}};
            hist_content += summary.dump() + "\n";
        }
        write_text_file(config.paths.hallucination_hist, hist_content);

        std::string text_report = report.render_text();
        text_report += "\nhallucination rate (per-question FF fraction):\n";
        for (const ModelHallucination& m : hallu) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "  %s: mean %.4f over %zu questions\n", m.model_id.c_str(),
                          m.mean_fraction, m.per_question.size());
            text_report += buf;
        }

        // How many subjects each method flags at the configured threshold.
        const ThresholdConfig threshold{config.score.theta};
        char theta_line[64];
        std::snprintf(theta_line, sizeof(theta_line), "\nflagged high-uncertainty at theta=%.2f:\n",
                      config.score.theta);
        text_report += theta_line;
        for (const auto& [method, rows] : subjects) {
            int high = 0;
            for (const EvalSubject& s : rows) {
                if (apply_threshold(s.score, threshold) == UncertaintyBand::high_uncertainty) ++high;
            }
            char buf[96];
            std::snprintf(buf, sizeof(buf), "  %-8s %d/%zu\n", method.c_str(), high, rows.size());
            text_report += buf;
        }
        write_text_file(config.paths.report_txt, text_report);
        write_text_file(config.paths.report_jsonl, report.render_jsonl());
        return result;
    }

    StageResult run_stage(const std::string& name) {
        StageResult result;
        if (name == "forge") result = run_forge();
        else if (name == "index") result = run_index();
        else if (name == "ask") result = run_ask();
        else if (name == "decompose") result = run_decompose();
        else if (name == "map") result = run_map();
        else if (name == "classify") result = run_classify();
        else if (name == "score") result = run_score();
        else if (name == "eval") result = run_eval();
        else throw usage_error("unknown stage \"" + name + "\"");

        if (!result.skipped) {
            write_failures(name, result);
            const std::vector<std::string> io = stage_files(name);
            write_manifest(name, stage_inputs(name), io, result);
        }
        return result;
    }

    std::vector<std::string> stage_inputs(const std::string& name) const {
        if (name == "forge") {
            if (!config.forge.from_review.empty()) return {config.forge.from_review};
            return {config.paths.names};
        }
        if (name == "index") return {config.paths.corpus};
        if (name == "ask") return {config.paths.questions};
        if (name == "decompose") return {config.paths.records};
        if (name == "map") return {config.paths.records, config.paths.fact_texts};
        if (name == "classify") return {config.paths.records, config.paths.questions, config.paths.corpus};
        if (name == "score") return {config.paths.records, config.paths.facts, config.paths.labels};
        return {config.paths.scores, config.paths.labels, config.paths.truth, config.paths.records,
                config.paths.facts};
    }

    std::vector<std::string> stage_files(const std::string& name) const {
        if (name == "forge") {
            if (!config.forge.from_review.empty()) return {config.paths.questions};
            return {config.paths.questions, config.paths.review};
        }
        if (name == "index") return {config.paths.index_cache};
        if (name == "ask") return {config.paths.records};
        if (name == "decompose") return {config.paths.fact_texts};
        if (name == "map") return {config.paths.facts};
        if (name == "classify") return {config.paths.labels, config.paths.truth};
        if (name == "score") return {config.paths.scores};
        return {config.paths.report_txt, config.paths.report_jsonl, config.paths.hallucination_hist};
    }
};

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    impl_ = std::make_unique<Impl>(config_);
}

Pipeline::~Pipeline() = default;

std::vector<StageResult> Pipeline::run(const std::string& name) {
    std::vector<StageResult> results;
    if (name == "pipeline") {
        for (const std::string& stage : stage_names()) results.push_back(impl_->run_stage(stage));
    } else {
        results.push_back(impl_->run_stage(name));
    }
    return results;
}

std::string summarize(const std::vector<StageResult>& results) {
    std::ostringstream out;
    for (const StageResult& r : results) {
        out << r.stage << ": ";
        if (r.skipped) {
            out << "up-to-date (skipped)";
        } else {
            out << r.succeeded << "/" << r.input_count << " subjects";
            if (r.filtered > 0) out << ", " << r.filtered << " filtered";
            if (!r.failures.empty()) out << ", " << r.failures.size() << " FAILED";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace veritrap
