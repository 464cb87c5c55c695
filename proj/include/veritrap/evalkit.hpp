#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "veritrap/records.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// Evaluation metrics and report assembly.
// ---------------------------------------------------------------------------

struct LabeledScore {
    double score = 0.0;
    bool incorrect = false;  // 1 = hallucinated/incorrect (positive class)
};

// Probability that a random positive outranks a random negative, ties
// counting one half. Computed via average-rank statistics; equals pairwise
// enumeration exactly. Throws domain_error on single-class input.
double roc_auc(const std::vector<LabeledScore>& data);

// Sample Pearson correlation. Throws domain_error when either series is
// constant or the lengths differ / are < 2.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Average ranks: ties receive the mean rank of their block, 1-based.
std::vector<double> average_ranks(const std::vector<double>& values);

// Pearson correlation of average-ranked data.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct PrfResult {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Binary classification metrics; positive class = 1 ("fake"). f1 is 0 when
// precision + recall is 0. Throws usage_error on length mismatch.
PrfResult prf(const std::vector<int>& predictions, const std::vector<int>& truths);

struct QuestionHallucination {
    std::string question_id;
    double ff_fraction = 0.0;
    int samples = 0;
};

struct ModelHallucination {
    std::string model_id;
    std::vector<QuestionHallucination> per_question;  // sorted by question_id
    double mean_fraction = 0.0;
};

struct LabeledGeneration {
    std::string model_id;
    std::string question_id;
    LabelKind label = LabelKind::FF;
};

// Per-model distribution of per-question FF fractions, plus the mean.
std::vector<ModelHallucination> hallucination_rate(const std::vector<LabeledGeneration>& labels);

// One subject row ready for metric computation: the method score paired with
// the binary correctness truth.
struct EvalSubject {
    std::string model_id;
    double score = 0.0;
    bool incorrect = false;
};

struct ReportCell {
    std::string method;
    std::string model;
    std::string metric;               // ROC | PC | SC
    std::optional<double> value;      // absent -> "n/a"
    std::string note;                 // why the value is absent
};

struct Report {
    std::vector<std::string> methods;  // row order
    std::vector<std::string> models;   // column-group order
    std::vector<ReportCell> cells;
    std::vector<std::string> coverage_notes;

    std::string render_text() const;    // aligned table
    std::string render_jsonl() const;   // one cell per line
};

// Builds the method x model comparison table. `subjects` maps a method name
// to its scored subjects (already joined with truth labels).
Report build_report(const std::map<std::string, std::vector<EvalSubject>>& subjects,
                    const std::vector<std::string>& method_order);

}  // namespace veritrap
