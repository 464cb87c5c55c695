// veritrap CLI: thin front-end over the shared-library C API. Flags are
// folded into a JSON overrides object; precedence is config file < env <
// flags. Exit codes: 0 ok, 1 validation, 2 transport, 3 partial failure.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "veritrap.h"

using json = nlohmann::ordered_json;

namespace {

struct CommonFlags {
    std::string config;
    std::string provider;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::string out;
    std::string methods;
};

void add_common(CLI::App* cmd, CommonFlags& flags, const char* out_help) {
    cmd->add_option("--config", flags.config, "JSON config file");
    cmd->add_option("--provider", flags.provider, "Model provider: stub or live")
        ->check(CLI::IsMember({"stub", "live"}));
    cmd->add_option("--seed", flags.seed, "Root random seed");
    cmd->add_option("--workers", flags.workers, "Worker pool size (0 = all cores)");
    cmd->add_option("--out", flags.out, out_help);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int run(const std::string& stage, const std::string& config, const json& overrides) {
    vt_pipeline* handle = nullptr;
    vt_status status = vt_pipeline_new(config.empty() ? nullptr : config.c_str(),
                                       overrides.empty() ? nullptr : overrides.dump().c_str(), &handle);
    if (status != VT_OK) {
        std::fprintf(stderr, "veritrap: %s\n", vt_pipeline_last_error(handle));
        vt_pipeline_free(handle);
        return status;
    }
    status = vt_pipeline_run(handle, stage.c_str());
    std::fputs(vt_pipeline_last_summary(handle), stdout);
    if (status != VT_OK) {
        std::fprintf(stderr, "veritrap: %s\n", vt_pipeline_last_error(handle));
    }
    vt_pipeline_free(handle);
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"veritrap: trap-question forging, labeling, uncertainty scoring and evaluation"};
    app.require_subcommand(1);

    struct SubcommandSpec {
        const char* name;
        const char* help;
        const char* out_help;
    };
    const std::vector<SubcommandSpec> specs = {
        {"forge", "Forge fake-name trap questions from real names", "Output questions.jsonl path"},
        {"index", "Build the BM25 index cache from a corpus", "Output index cache path"},
        {"ask", "Sample generations for every trap question", "Output directory"},
        {"decompose", "Decompose generations into atomic fact texts", "Output directory"},
        {"map", "Map fact texts to token spans", "Output directory"},
        {"classify", "Assign FR/FT/FF labels via NLI + retrieval grounding", "Output directory"},
        {"score", "Score generations and facts with all configured methods", "Output directory"},
        {"eval", "Compute ROC/PC/SC tables and hallucination rates", "Output directory"},
        {"pipeline", "Run every stage in order, resuming completed ones", "Output directory"},
    };

    std::map<std::string, CommonFlags> flags;
    std::map<std::string, CLI::App*> commands;
    for (const SubcommandSpec& spec : specs) {
        CLI::App* cmd = app.add_subcommand(spec.name, spec.help);
        add_common(cmd, flags[spec.name], spec.out_help);
        commands[spec.name] = cmd;
    }

    // forge-specific flags
    std::string names_path, review_path, from_review, strategy_mix;
    std::optional<int> k_candidates, passes;
    bool cot = false;
    commands["forge"]->add_option("--names", names_path, "Real names, one per line");
    commands["forge"]->add_option("-k,--candidates", k_candidates, "Candidate list size");
    commands["forge"]->add_option("--passes", passes, "Verification passes T");
    commands["forge"]->add_flag("--cot", cot, "Chain-of-thought verification prompts");
    commands["forge"]->add_option("--strategy-mix", strategy_mix, "PR,WF,FWC proportions (e.g. 0.35,0.58,0.07)");
    commands["forge"]->add_option("--review", review_path, "Review file to export");
    commands["forge"]->add_option("--from-review", from_review,
                                  "Build questions from an edited review file instead of forging");

    // index-specific flags
    std::string corpus_path;
    commands["index"]->add_option("--corpus", corpus_path, "corpus.jsonl path");

    // score-specific flags
    std::string methods;
    bool negate_entropy = false;
    commands["score"]->add_option("--methods", methods, "Comma-separated method filter (e.g. RU_GEN,LNPE)");
    commands["score"]->add_flag("--negate-entropy", negate_entropy,
                                "Flip PE/LN-PE to the standard entropy sign");

    // classify-specific flags (also honored by pipeline)
    std::optional<bool> per_sample_labels;
    for (const char* cmd : {"classify", "pipeline"}) {
        commands[cmd]->add_flag("--per-sample-labels,!--no-per-sample-labels", per_sample_labels,
                                "Classify every sample (default) or reuse the first sample's label");
    }

    CLI11_PARSE(app, argc, argv);

    const std::string stage = app.get_subcommands().front()->get_name();
    const CommonFlags& common = flags[stage];

    json overrides = json::object();
    if (!common.provider.empty()) overrides["provider"] = common.provider;
    if (common.seed) overrides["seed"] = *common.seed;
    if (common.workers) overrides["workers"] = *common.workers;
    if (!common.out.empty()) {
        if (stage == "forge") overrides["paths"]["questions"] = common.out;
        else if (stage == "index") overrides["paths"]["index_cache"] = common.out;
        else overrides["out_dir"] = common.out;
    }
    if (stage == "forge") {
        if (!names_path.empty()) overrides["paths"]["names"] = names_path;
        if (!review_path.empty()) overrides["paths"]["review"] = review_path;
        if (!from_review.empty()) overrides["forge"]["from_review"] = from_review;
        if (k_candidates) overrides["forge"]["k_candidates"] = *k_candidates;
        if (passes) overrides["forge"]["passes"] = *passes;
        if (cot) overrides["forge"]["cot"] = true;
        if (!strategy_mix.empty()) {
            json mix = json::array();
            for (const std::string& part : split_csv(strategy_mix)) mix.push_back(std::stod(part));
            overrides["forge"]["strategy_mix"] = mix;
        }
    } else if (stage == "index") {
        if (!corpus_path.empty()) overrides["paths"]["corpus"] = corpus_path;
    } else if (stage == "score") {
        if (!methods.empty()) {
            json list = json::array();
            for (const std::string& m : split_csv(methods)) list.push_back(m);
            overrides["score"]["methods"] = list;
        }
        if (negate_entropy) overrides["score"]["negate_entropy"] = true;
    }
    if (per_sample_labels) overrides["classifier"]["per_sample_labels"] = *per_sample_labels;

    return run(stage, common.config, overrides);
}
