#pragma once

#include <memory>
#include <string>
#include <vector>

#include "veritrap/config.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// Stage orchestration: forge -> index -> ask -> decompose -> map -> classify
// -> score -> eval, each resumable through a content-addressed manifest.
// ---------------------------------------------------------------------------

struct StageFailure {
    std::string subject_id;
    std::string error;
};

struct StageResult {
    std::string stage;
    bool skipped = false;  // manifest said the stage is up to date
    int input_count = 0;
    int succeeded = 0;
    int filtered = 0;  // legitimately dropped subjects (e.g. names verified real)
    std::vector<StageFailure> failures;

    bool partial() const { return !failures.empty(); }
};

// Stage names in execution order.
const std::vector<std::string>& stage_names();

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    // Runs one stage (or every stage for "pipeline"). Subject-scoped errors
    // become failure-manifest entries; infrastructure errors throw.
    std::vector<StageResult> run(const std::string& name);

    const PipelineConfig& config() const { return config_; }

private:
    struct Impl;
    PipelineConfig config_;
    std::unique_ptr<Impl> impl_;
};

// Renders per-stage summary lines ("forge: 10/10 subjects -> out/questions.jsonl").
std::string summarize(const std::vector<StageResult>& results);

}  // namespace veritrap
