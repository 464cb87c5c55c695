#include "veritrap.h"

#include <cmath>
#include <string>

#include "veritrap/estimators.hpp"
#include "veritrap/evalkit.hpp"
#include "veritrap/pipeline.hpp"

using namespace veritrap;

struct vt_pipeline {
    std::unique_ptr<Pipeline> pipeline;
    std::string last_error;
    std::string last_summary;
};

namespace {

vt_status status_of(const Error& e) {
    switch (e.exit_code()) {
        case 2: return VT_ERROR_TRANSPORT;
        case 3: return VT_ERROR_PARTIAL;
        default: return VT_ERROR_VALIDATION;
    }
}

template <typename Fn>
vt_status guarded(vt_pipeline* handle, Fn fn) {
    try {
        handle->last_error.clear();
        return fn();
    } catch (const Error& e) {
        handle->last_error = e.what();
        return status_of(e);
    } catch (const std::exception& e) {
        handle->last_error = e.what();
        return VT_ERROR_VALIDATION;
    }
}

bool valid_logprobs(const double* logprobs, size_t n) {
    if (!logprobs || n == 0) return false;
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(logprobs[i]) || logprobs[i] > 0.0) return false;
    }
    return true;
}

double mean_logprob(const double* logprobs, size_t n) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += logprobs[i];
    return sum / static_cast<double>(n);
}

}  // namespace

extern "C" {

const char* vt_version(void) { return "veritrap 1.0.0"; }

vt_status vt_pipeline_new(const char* config_file, const char* overrides_json, vt_pipeline** out) {
    if (!out) return VT_ERROR_VALIDATION;
    *out = nullptr;
    auto handle = new vt_pipeline();
    const vt_status status = guarded(handle, [&] {
        PipelineConfig config = PipelineConfig::load(config_file ? config_file : "",
                                                     overrides_json ? overrides_json : "");
        handle->pipeline = std::make_unique<Pipeline>(std::move(config));
        return VT_OK;
    });
    if (status != VT_OK) {
        // Keep the handle so the caller can read the error, but without a
        // pipeline it cannot run stages.
        *out = handle;
        return status;
    }
    *out = handle;
    return VT_OK;
}

void vt_pipeline_free(vt_pipeline* pipeline) { delete pipeline; }

vt_status vt_pipeline_run(vt_pipeline* pipeline, const char* stage) {
    if (!pipeline) return VT_ERROR_VALIDATION;
    if (!stage || !*stage) {
        pipeline->last_error = "stage name is null or empty";
        return VT_ERROR_VALIDATION;
    }
    return guarded(pipeline, [&]() -> vt_status {
        if (!pipeline->pipeline) {
            pipeline->last_error = "pipeline handle was not configured successfully";
            return VT_ERROR_VALIDATION;
        }
        std::vector<StageResult> results = pipeline->pipeline->run(stage);
        pipeline->last_summary = summarize(results);
        for (const StageResult& r : results) {
            if (r.partial()) {
                pipeline->last_error = "stage " + r.stage + " left " +
                                       std::to_string(r.failures.size()) +
                                       " subjects unprocessed (see failure manifest)";
                return VT_ERROR_PARTIAL;
            }
        }
        return VT_OK;
    });
}

const char* vt_pipeline_last_error(const vt_pipeline* pipeline) {
    return pipeline ? pipeline->last_error.c_str() : "";
}

const char* vt_pipeline_last_summary(const vt_pipeline* pipeline) {
    return pipeline ? pipeline->last_summary.c_str() : "";
}

vt_status vt_ru_fr(const double* logprobs, size_t n, double* out) {
    if (!out || !valid_logprobs(logprobs, n)) return VT_ERROR_VALIDATION;
    *out = 1.0 - std::exp(mean_logprob(logprobs, n));
    return VT_OK;
}

vt_status vt_ru_ft(const double* logprobs, size_t n, double* out) {
    return vt_ru_fr(logprobs, n, out);  // identical algebra over a fact span
}

vt_status vt_ru_ff(const double* logprobs, size_t n, double* out) {
    if (!out || !valid_logprobs(logprobs, n)) return VT_ERROR_VALIDATION;
    *out = std::exp(mean_logprob(logprobs, n));
    return VT_OK;
}

vt_status vt_roc_auc(const double* scores, const unsigned char* incorrect, size_t n, double* out) {
    if (!out || !scores || !incorrect || n == 0) return VT_ERROR_VALIDATION;
    std::vector<LabeledScore> data(n);
    for (size_t i = 0; i < n; ++i) data[i] = {scores[i], incorrect[i] != 0};
    try {
        *out = roc_auc(data);
        return VT_OK;
    } catch (const Error&) {
        return VT_ERROR_VALIDATION;
    }
}

}  // extern "C"
