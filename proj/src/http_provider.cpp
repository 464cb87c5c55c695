#include <algorithm>
#include <chrono>
#include <thread>

#include <json.hpp>

#include "veritrap/gateway.hpp"
#include "veritrap/util.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace veritrap {

using json = nlohmann::json;

namespace {

// base_url "https://host[:port][/prefix]" -> (client target, path prefix)
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    size_t scheme = base_url.find("://");
    size_t path_start = scheme == std::string::npos ? base_url.find('/') : base_url.find('/', scheme + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

struct HttpReply {
    int status = 0;
    std::string body;
};

// POSTs JSON with exponential backoff on transport failures, 429 and 5xx.
HttpReply post_json(const ProviderEndpoint& endpoint, const std::string& path, const std::string& body) {
    auto [host, prefix] = split_base_url(endpoint.base_url);
    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt <= endpoint.retry_budget; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(250LL << (attempt - 1)));
        }
        httplib::Client client(host);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);
        auto res = client.Post(prefix + path, headers, body, "application/json");
        if (!res) {
            last_failure = "connection error (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_failure = "HTTP " + std::to_string(res->status);
            continue;
        }
        return {res->status, res->body};
    }
    throw transport_error("POST " + endpoint.base_url + path + " failed after " +
                          std::to_string(endpoint.retry_budget + 1) + " attempts: " + last_failure);
}

}  // namespace

NliVerdict parse_nli_label(const std::string& label) {
    const std::string l = lowercase(trim(label));
    if (l == "entailment" || l == "entail" || l == "e") return NliVerdict::entail;
    if (l == "contradiction" || l == "contradict" || l == "c") return NliVerdict::contradict;
    if (l == "neutral" || l == "n") return NliVerdict::neutral;
    throw validation_error("nli: unknown label \"" + label + "\"");
}

std::vector<GenerationRecord> parse_chat_completion(const std::string& body, const SamplingConfig& config,
                                                    const std::string& model_id) {
    json response;
    try {
        response = json::parse(body);
    } catch (const json::exception& e) {
        throw transport_error(std::string("chat completion: malformed response JSON: ") + e.what());
    }
    if (!response.contains("choices") || !response["choices"].is_array()) {
        throw transport_error("chat completion: response has no choices array");
    }
    std::vector<GenerationRecord> out;
    int sample = 0;
    for (const json& choice : response["choices"]) {
        GenerationRecord record;
        record.model_id = model_id;
        record.sample_index = sample++;
        record.text = choice.value("/message/content"_json_pointer, std::string());
        const json* logprobs = choice.contains("logprobs") && !choice["logprobs"].is_null()
                                   ? &choice["logprobs"]
                                   : nullptr;
        if (!logprobs || !logprobs->contains("content") || !(*logprobs)["content"].is_array()) {
            throw capability_error(
                "chat completion: the endpoint returned no token logprobs; enable logprobs "
                "(request sets \"logprobs\": true, \"top_logprobs\": " +
                std::to_string(config.k_alt) + ") or use a backend that supports them");
        }
        int index = 0;
        for (const json& entry : (*logprobs)["content"]) {
            TokenEvent t;
            t.index = index++;
            t.surface = entry.value("token", std::string());
            // Serving stacks occasionally emit tiny positive logprobs; clamp
            // rounding noise, reject anything larger.
            double lp = entry.value("logprob", 0.0);
            if (lp > 0.0 && lp < 1e-6) lp = 0.0;
            t.logprob = lp;
            if (entry.contains("top_logprobs") && entry["top_logprobs"].is_array()) {
                for (const json& alt : entry["top_logprobs"]) {
                    double alp = alt.value("logprob", 0.0);
                    if (alp > 0.0 && alp < 1e-6) alp = 0.0;
                    t.alternatives.push_back({alt.value("token", std::string()), alp});
                }
                std::stable_sort(t.alternatives.begin(), t.alternatives.end(),
                                 [](const AlternativeToken& a, const AlternativeToken& b) {
                                     return a.logprob > b.logprob;
                                 });
                if (static_cast<int>(t.alternatives.size()) > config.k_alt) {
                    t.alternatives.resize(static_cast<size_t>(config.k_alt));
                }
            }
            record.tokens.push_back(std::move(t));
        }
        const std::string finish = choice.value("finish_reason", "stop");
        record.finish_reason = finish == "length" ? FinishReason::length : FinishReason::stop;
        out.push_back(std::move(record));
    }
    return out;
}

// ---------------------------------------------------------------------------
// HttpTextProvider
// ---------------------------------------------------------------------------

HttpTextProvider::HttpTextProvider(ProviderEndpoint endpoint)
    : endpoint_(std::move(endpoint)), gate_(endpoint_.max_in_flight) {
    if (endpoint_.base_url.empty()) {
        throw validation_error("llm endpoint: base_url is empty (set VERITRAP_LLM_BASE_URL or the config)");
    }
}

HttpTextProvider::~HttpTextProvider() = default;

std::vector<GenerationRecord> HttpTextProvider::complete(const std::string& prompt,
                                                         const SamplingConfig& config, uint64_t) {
    InFlightGate::Ticket ticket = gate_.acquire();

    json request;
    request["model"] = endpoint_.model_id;
    request["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
    request["temperature"] = config.temperature;
    request["max_tokens"] = config.max_tokens;
    request["n"] = config.num_samples;
    request["logprobs"] = true;
    request["top_logprobs"] = config.k_alt;
    if (config.top_k) request["top_k"] = *config.top_k;

    bool with_beams = config.beam_size > 1;
    for (;;) {
        json attempt = request;
        if (with_beams) {
            attempt["use_beam_search"] = true;
            attempt["best_of"] = config.beam_size;
        }
        HttpReply reply = post_json(endpoint_, "/v1/chat/completions", attempt.dump());
        if (reply.status >= 400) {
            if (with_beams) {
                // Backend rejects beam parameters; downgrade to plain sampling.
                with_beams = false;
                continue;
            }
            throw transport_error("chat completion: HTTP " + std::to_string(reply.status) + ": " +
                                  reply.body.substr(0, 400));
        }
        return parse_chat_completion(reply.body, config, endpoint_.model_id);
    }
}

// ---------------------------------------------------------------------------
// HttpNliProvider
// ---------------------------------------------------------------------------

HttpNliProvider::HttpNliProvider(ProviderEndpoint endpoint, NliBackendMode mode)
    : endpoint_(std::move(endpoint)), mode_(mode), gate_(endpoint_.max_in_flight) {
    if (endpoint_.base_url.empty()) {
        throw validation_error("nli endpoint: base_url is empty (set VERITRAP_NLI_BASE_URL or the config)");
    }
}

HttpNliProvider::~HttpNliProvider() = default;

NliVerdict HttpNliProvider::classify(const std::string& premise, const std::string& hypothesis,
                                     uint64_t) {
    InFlightGate::Ticket ticket = gate_.acquire();

    if (mode_ == NliBackendMode::classify) {
        json request = {{"premise", premise}, {"hypothesis", hypothesis}};
        if (!endpoint_.model_id.empty()) request["model"] = endpoint_.model_id;
        HttpReply reply = post_json(endpoint_, "/classify", request.dump());
        if (reply.status >= 400) {
            throw transport_error("nli classify: HTTP " + std::to_string(reply.status) + ": " +
                                  reply.body.substr(0, 400));
        }
        try {
            json response = json::parse(reply.body);
            return parse_nli_label(response.at("label").get<std::string>());
        } catch (const json::exception& e) {
            throw transport_error(std::string("nli classify: malformed response: ") + e.what());
        }
    }

    // Prompt-based fallback through the chat endpoint.
    json request;
    request["model"] = endpoint_.model_id;
    request["messages"] = json::array(
        {{{"role", "user"},
          {"content", "Does the premise entail the hypothesis? Answer entailment/contradiction/neutral.\n"
                      "Premise: " +
                          premise + "\nHypothesis: " + hypothesis}}});
    request["temperature"] = 0.01;
    request["max_tokens"] = 8;
    HttpReply reply = post_json(endpoint_, "/v1/chat/completions", request.dump());
    if (reply.status >= 400) {
        throw transport_error("nli chat: HTTP " + std::to_string(reply.status) + ": " +
                              reply.body.substr(0, 400));
    }
    try {
        json response = json::parse(reply.body);
        const std::string content =
            lowercase(response.at("choices").at(0).at("message").at("content").get<std::string>());
        const size_t e = content.find("entail");
        const size_t c = content.find("contradict");
        const size_t n = content.find("neutral");
        size_t best = std::min({e, c, n});
        if (best == std::string::npos) {
            throw transport_error("nli chat: reply carries no entailment verdict: " + content.substr(0, 200));
        }
        if (best == e) return NliVerdict::entail;
        if (best == c) return NliVerdict::contradict;
        return NliVerdict::neutral;
    } catch (const json::exception& e) {
        throw transport_error(std::string("nli chat: malformed response: ") + e.what());
    }
}

}  // namespace veritrap
