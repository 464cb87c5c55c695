#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "veritrap/classifier.hpp"
#include "veritrap/estimators.hpp"
#include "veritrap/forge.hpp"
#include "veritrap/gateway.hpp"
#include "veritrap/retrieval.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// Merged settings for all pipeline stages. Precedence: built-in defaults,
// then the config file, then VERITRAP_* environment variables, then explicit
// overrides (CLI flags).
// ---------------------------------------------------------------------------

struct PipelinePaths {
    std::string names;      // plain text, one real name per line
    std::string corpus;     // corpus.jsonl
    std::string questions;  // questions.jsonl
    std::string records;
    std::string fact_texts;
    std::string facts;
    std::string labels;
    std::string truth;
    std::string scores;
    std::string index_cache;
    std::string review;
    std::string report_txt;
    std::string report_jsonl;
    std::string hallucination_hist;
    std::string prompts_dir;
};

struct ScoreStageConfig {
    std::vector<ScoreMethod> methods = {ScoreMethod::PE,       ScoreMethod::LNPE,
                                        ScoreMethod::MP_MEAN,  ScoreMethod::MP_MAX,
                                        ScoreMethod::CCP_MEAN, ScoreMethod::CCP_MAX,
                                        ScoreMethod::RU_GEN,   ScoreMethod::RU_FACT};
    double theta = 0.5;
    CombinerKind ft_combiner = CombinerKind::mean;
    CombinerKind ff_combiner = CombinerKind::noisy_or;
    bool negate_entropy = false;  // flip PE/LN-PE to the standard entropy sign
};

struct PipelineConfig {
    uint64_t seed = 0;
    std::string provider = "stub";  // stub | live
    int workers = 0;                // 0 = available parallelism
    std::string out_dir = "out";
    PipelinePaths paths;
    ForgeConfig forge;
    SamplingConfig sampling;
    ClassifierConfig classifier;
    bool per_sample_labels = true;
    Bm25Params retrieval;
    ScoreStageConfig score;
    ProviderEndpoint llm;
    ProviderEndpoint nli;
    NliBackendMode nli_mode = NliBackendMode::classify;

    // Parses and merges; either argument may be empty. Unknown keys are
    // validation errors.
    static PipelineConfig load(const std::string& config_file, const std::string& overrides_json);

    // Fills empty paths with out_dir-based defaults and validates settings.
    void finalize();

    // Canonical dump with secrets redacted; the basis of stage manifests'
    // config hash.
    std::string canonical_json() const;
};

}  // namespace veritrap
