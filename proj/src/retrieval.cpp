#include "veritrap/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "veritrap/util.hpp"

namespace veritrap {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> terms;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!current.empty()) {
            terms.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

namespace {

void check_params(const Bm25Params& p) {
    if (!(p.k1 > 0.0)) throw validation_error("bm25: k1 must be > 0");
    if (p.b < 0.0 || p.b > 1.0) throw validation_error("bm25: b must be in [0,1]");
}

uint64_t hash_corpus(const std::vector<CorpusDoc>& corpus) {
    uint64_t h = fnv1a("bm25-corpus-v1");
    for (const CorpusDoc& d : corpus) {
        h = fnv1a(d.doc_id, h);
        h = fnv1a("\x1f", h);
        h = fnv1a(d.title, h);
        h = fnv1a("\x1f", h);
        h = fnv1a(d.body, h);
        h = fnv1a("\x1e", h);
    }
    return h;
}

}  // namespace

InvertedIndex build_index(const std::vector<CorpusDoc>& corpus, Bm25Params params) {
    check_params(params);
    InvertedIndex index;
    index.params = params;
    index.corpus_hash = hash_corpus(corpus);

    std::set<std::string> seen;
    long long total_length = 0;
    for (const CorpusDoc& doc : corpus) {
        if (!seen.insert(doc.doc_id).second) {
            throw validation_error("build_index: duplicate doc_id \"" + doc.doc_id + "\"");
        }
        std::map<std::string, int> tf;
        int length = 0;
        for (const std::string& term : tokenize(doc.body)) {
            tf[term] += 1;
            length += 1;
        }
        // Title occurrences count twice: once as ordinary text, once more
        // because grounding queries are names and names live in titles.
        for (const std::string& term : tokenize(doc.title)) {
            tf[term] += 2;
            length += 2;
        }
        index.doc_lengths[doc.doc_id] = length;
        index.titles[doc.doc_id] = doc.title;
        for (const auto& [term, count] : tf) {
            index.postings[term].push_back({doc.doc_id, count});
        }
        total_length += length;
        index.doc_count += 1;
    }
    for (auto& [term, posts] : index.postings) {
        std::sort(posts.begin(), posts.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
    }
    index.avg_doc_length = index.doc_count == 0
                               ? 0.0
                               : static_cast<double>(total_length) / static_cast<double>(index.doc_count);
    return index;
}

double score(const InvertedIndex& index, const std::string& query, const std::string& doc_id) {
    auto len_it = index.doc_lengths.find(doc_id);
    if (len_it == index.doc_lengths.end()) {
        throw usage_error("bm25 score: unknown doc_id \"" + doc_id + "\"");
    }
    const double len = static_cast<double>(len_it->second);
    const double avg = index.avg_doc_length > 0.0 ? index.avg_doc_length : 1.0;
    const double k1 = index.params.k1;
    const double b = index.params.b;
    const double n_docs = static_cast<double>(index.doc_count);

    double total = 0.0;
    for (const std::string& term : tokenize(query)) {
        auto post_it = index.postings.find(term);
        if (post_it == index.postings.end()) continue;
        const std::vector<Posting>& posts = post_it->second;
        auto doc_it = std::lower_bound(posts.begin(), posts.end(), doc_id,
                                       [](const Posting& p, const std::string& id) { return p.doc_id < id; });
        if (doc_it == posts.end() || doc_it->doc_id != doc_id) continue;
        const double tf = static_cast<double>(doc_it->tf);
        const double df = static_cast<double>(posts.size());
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
    }
    return total;
}

std::vector<SearchHit> search(const InvertedIndex& index, const std::string& query, int top_n) {
    if (top_n < 1) throw usage_error("search: top_n must be >= 1");
    std::set<std::string> candidates;
    for (const std::string& term : tokenize(query)) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        for (const Posting& p : it->second) candidates.insert(p.doc_id);
    }
    std::vector<SearchHit> hits;
    hits.reserve(candidates.size());
    for (const std::string& doc_id : candidates) {
        double s = score(index, query, doc_id);
        if (s > 0.0) hits.push_back({doc_id, s});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (static_cast<int>(hits.size()) > top_n) hits.resize(static_cast<size_t>(top_n));
    return hits;
}

void save_index_cache(const InvertedIndex& index, const std::string& path) {
    ordered_json j;
    j["format"] = "veritrap-index-cache";
    j["version"] = 1;
    j["corpus_hash"] = hex64(index.corpus_hash);
    j["k1"] = index.params.k1;
    j["b"] = index.params.b;
    j["doc_count"] = index.doc_count;
    j["avg_doc_length"] = index.avg_doc_length;
    ordered_json lengths = ordered_json::object();
    for (const auto& [doc, len] : index.doc_lengths) lengths[doc] = len;
    j["doc_lengths"] = std::move(lengths);
    ordered_json titles = ordered_json::object();
    for (const auto& [doc, title] : index.titles) titles[doc] = title;
    j["titles"] = std::move(titles);
    ordered_json postings = ordered_json::object();
    for (const auto& [term, posts] : index.postings) {
        ordered_json arr = ordered_json::array();
        for (const Posting& p : posts) arr.push_back({p.doc_id, p.tf});
        postings[term] = std::move(arr);
    }
    j["postings"] = std::move(postings);
    write_text_file(path, j.dump() + "\n");
}

InvertedIndex load_index_cache(const std::string& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_text_file(path));
    } catch (const ordered_json::exception& e) {
        throw validation_error("index cache " + path + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "veritrap-index-cache") {
        throw validation_error("index cache " + path + ": not a veritrap index cache");
    }
    InvertedIndex index;
    index.corpus_hash = std::stoull(j.at("corpus_hash").get<std::string>(), nullptr, 16);
    index.params.k1 = j.at("k1").get<double>();
    index.params.b = j.at("b").get<double>();
    index.doc_count = j.at("doc_count").get<int>();
    index.avg_doc_length = j.at("avg_doc_length").get<double>();
    for (const auto& [doc, len] : j.at("doc_lengths").items()) index.doc_lengths[doc] = len.get<int>();
    for (const auto& [doc, title] : j.at("titles").items()) index.titles[doc] = title.get<std::string>();
    for (const auto& [term, posts] : j.at("postings").items()) {
        std::vector<Posting>& out = index.postings[term];
        for (const auto& p : posts) out.push_back({p.at(0).get<std::string>(), p.at(1).get<int>()});
    }
    return index;
}

InvertedIndex load_or_build_index(const std::string& corpus_path, const std::string& cache_path,
                                  Bm25Params params) {
    check_params(params);
    std::vector<CorpusDoc> corpus = read_corpus_file(corpus_path);
    const uint64_t want_hash = hash_corpus(corpus);
    if (!cache_path.empty() && file_exists(cache_path)) {
        try {
            InvertedIndex cached = load_index_cache(cache_path);
            if (cached.corpus_hash == want_hash && cached.params.k1 == params.k1 &&
                cached.params.b == params.b) {
                return cached;
            }
        } catch (const Error&) {
            // Stale or unreadable cache; rebuild below.
        }
    }
    InvertedIndex fresh = build_index(corpus, params);
    if (!cache_path.empty()) save_index_cache(fresh, cache_path);
    return fresh;
}

}  // namespace veritrap
