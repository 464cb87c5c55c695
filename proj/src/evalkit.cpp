#include "veritrap/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace veritrap {

using ordered_json = nlohmann::ordered_json;

std::vector<double> average_ranks(const std::vector<double>& values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // Block [i, j] shares the mean of ranks i+1 .. j+1 (1-based).
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double roc_auc(const std::vector<LabeledScore>& data) {
    size_t positives = 0, negatives = 0;
    for (const LabeledScore& d : data) (d.incorrect ? positives : negatives)++;
    if (positives == 0 || negatives == 0) {
        throw domain_error("roc_auc: need at least one example of each class");
    }
    std::vector<double> scores;
    scores.reserve(data.size());
    for (const LabeledScore& d : data) scores.push_back(d.score);
    const std::vector<double> ranks = average_ranks(scores);

    double rank_sum_pos = 0.0;
    for (size_t i = 0; i < data.size(); ++i) {
        if (data[i].incorrect) rank_sum_pos += ranks[i];
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw usage_error("pearson: series lengths differ");
    const size_t n = x.size();
    if (n < 2) throw domain_error("pearson: need at least 2 points");
    double mean_x = 0.0, mean_y = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mean_x;
        const double dy = y[i] - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw domain_error("pearson: constant series");
    return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw usage_error("spearman: series lengths differ");
    return pearson(average_ranks(x), average_ranks(y));
}

PrfResult prf(const std::vector<int>& predictions, const std::vector<int>& truths) {
    if (predictions.size() != truths.size()) throw usage_error("prf: length mismatch");
    if (predictions.empty()) throw usage_error("prf: empty input");
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const bool pred = predictions[i] != 0;
        const bool truth = truths[i] != 0;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && truth) ++fn;
        else ++tn;
    }
    PrfResult r;
    const double total = static_cast<double>(tp + fp + fn + tn);
    r.accuracy = static_cast<double>(tp + tn) / total;
    r.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    r.f1 = (r.precision + r.recall) == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

std::vector<ModelHallucination> hallucination_rate(const std::vector<LabeledGeneration>& labels) {
    // model -> question -> (ff count, total)
    std::map<std::string, std::map<std::string, std::pair<int, int>>> counts;
    for (const LabeledGeneration& l : labels) {
        auto& cell = counts[l.model_id][l.question_id];
        cell.second += 1;
        if (l.label == LabelKind::FF) cell.first += 1;
    }
    std::vector<ModelHallucination> out;
    for (const auto& [model, questions] : counts) {
        ModelHallucination m;
        m.model_id = model;
        double sum = 0.0;
        for (const auto& [question, cell] : questions) {
            const double frac = static_cast<double>(cell.first) / static_cast<double>(cell.second);
            m.per_question.push_back({question, frac, cell.second});
            sum += frac;
        }
        m.mean_fraction = m.per_question.empty() ? 0.0 : sum / static_cast<double>(m.per_question.size());
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

std::string format_value(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return std::string(buf);
}

}  // namespace

Report build_report(const std::map<std::string, std::vector<EvalSubject>>& subjects,
                    const std::vector<std::string>& method_order) {
    Report report;
    std::set<std::string> model_set;
    for (const auto& [method, rows] : subjects) {
        for (const EvalSubject& s : rows) model_set.insert(s.model_id);
    }
    report.models.assign(model_set.begin(), model_set.end());
    for (const std::string& m : method_order) {
        if (subjects.count(m)) report.methods.push_back(m);
    }
    // Methods present in the data but not in the canonical order go last.
    for (const auto& [method, rows] : subjects) {
        if (std::find(report.methods.begin(), report.methods.end(), method) == report.methods.end()) {
            report.methods.push_back(method);
        }
    }

    for (const std::string& method : report.methods) {
        const std::vector<EvalSubject>& rows = subjects.at(method);
        for (const std::string& model : report.models) {
            std::vector<LabeledScore> labeled;
            std::vector<double> xs, ys;
            for (const EvalSubject& s : rows) {
                if (s.model_id != model) continue;
                labeled.push_back({s.score, s.incorrect});
                xs.push_back(s.score);
                ys.push_back(s.incorrect ? 1.0 : 0.0);
            }
            if (labeled.empty()) {
                report.coverage_notes.push_back(method + " has no subjects for model " + model);
                for (const char* metric : {"ROC", "PC", "SC"}) {
                    report.cells.push_back({method, model, metric, std::nullopt, "no subjects"});
                }
                continue;
            }
            auto push = [&](const char* metric, auto compute) {
                ReportCell cell{method, model, metric, std::nullopt, ""};
                try {
                    cell.value = compute();
                } catch (const Error& e) {
                    cell.note = e.what();
                    report.coverage_notes.push_back(method + "/" + model + " " + metric + ": " + e.what());
                }
                report.cells.push_back(std::move(cell));
            };
            push("ROC", [&] { return roc_auc(labeled); });
            push("PC", [&] { return pearson(xs, ys); });
            push("SC", [&] { return spearman(xs, ys); });
        }
    }
    return report;
}

std::string Report::render_text() const {
    std::ostringstream out;
    if (methods.empty()) {
        out << "(empty report: no scores)\n";
        return out.str();
    }
    size_t method_width = 6;
    for (const std::string& m : methods) method_width = std::max(method_width, m.size());

    auto cell_value = [&](const std::string& method, const std::string& model,
                          const std::string& metric) -> std::string {
        for (const ReportCell& c : cells) {
            if (c.method == method && c.model == model && c.metric == metric) return format_value(c.value);
        }
        return "n/a";
    };

    const int col = 8;
    out << std::string(method_width, ' ');
    for (const std::string& model : models) {
        std::string header = " | " + model;
        const size_t group = static_cast<size_t>(col) * 3 + 2;
        if (header.size() < group + 3) header += std::string(group + 3 - header.size(), ' ');
        out << header;
    }
    out << "\n" << std::string(method_width, ' ');
    for (size_t i = 0; i < models.size(); ++i) {
        out << " | ";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%-*s%-*s%-*s", col, "ROC", col, "PC", col + 2, "SC");
        out << buf;
    }
    out << "\n";
    for (const std::string& method : methods) {
        out << method << std::string(method_width - method.size(), ' ');
        for (const std::string& model : models) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), " | %-*s%-*s%-*s", col, cell_value(method, model, "ROC").c_str(),
                          col, cell_value(method, model, "PC").c_str(), col + 2,
                          cell_value(method, model, "SC").c_str());
            out << buf;
        }
        out << "\n";
    }
    if (!coverage_notes.empty()) {
        out << "\ncoverage:\n";
        for (const std::string& note : coverage_notes) out << "  - " << note << "\n";
    }
    return out.str();
}

std::string Report::render_jsonl() const {
    std::ostringstream out;
    for (const ReportCell& c : cells) {
        ordered_json j;
        j["method"] = c.method;
        j["model"] = c.model;
        j["metric"] = c.metric;
        if (c.value) {
            j["value"] = *c.value;
        } else {
            j["value"] = nullptr;
            j["note"] = c.note.empty() ? "n/a" : c.note;
        }
        out << j.dump() << "\n";
    }
    return out.str();
}

}  // namespace veritrap
