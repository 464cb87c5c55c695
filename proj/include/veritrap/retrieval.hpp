#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "veritrap/records.hpp"

namespace veritrap {

// ---------------------------------------------------------------------------
// Okapi BM25 over an in-memory inverted index. Grounding queries are entity
// names, so title terms are indexed with one additional count. The IDF is
// the non-negative variant ln(1 + (N - df + 0.5)/(df + 0.5)).
// ---------------------------------------------------------------------------

struct Bm25Params {
    double k1 = 1.2;  // > 0
    double b = 0.75;  // in [0,1]
};

struct Posting {
    std::string doc_id;
    int tf = 0;
};

struct InvertedIndex {
    Bm25Params params;
    std::map<std::string, std::vector<Posting>> postings;  // postings sorted by doc_id
    std::map<std::string, int> doc_lengths;
    std::map<std::string, std::string> titles;  // kept for title-match grounding
    double avg_doc_length = 0.0;
    int doc_count = 0;
    uint64_t corpus_hash = 0;
};

struct SearchHit {
    std::string doc_id;
    double score = 0.0;
};

// Lowercases and splits on any non-alphanumeric byte; empty terms dropped.
std::vector<std::string> tokenize(const std::string& text);

// Throws validation_error on duplicate doc_ids or invalid params.
InvertedIndex build_index(const std::vector<CorpusDoc>& corpus, Bm25Params params = {});

// BM25 score of one document for a query; terms absent from the document
// contribute zero. A duplicated query term is summed once per occurrence.
// Throws a lookup (usage) error for an unknown doc_id.
double score(const InvertedIndex& index, const std::string& query, const std::string& doc_id);

// Descending score, ties broken by ascending doc_id; zero-score documents
// are excluded, so the result may be empty.
std::vector<SearchHit> search(const InvertedIndex& index, const std::string& query, int top_n);

// On-disk cache keyed by the corpus content hash and the BM25 parameters.
void save_index_cache(const InvertedIndex& index, const std::string& path);
InvertedIndex load_index_cache(const std::string& path);

// Loads `cache_path` when it matches (corpus hash + params); otherwise builds
// from the corpus file and refreshes the cache.
InvertedIndex load_or_build_index(const std::string& corpus_path, const std::string& cache_path,
                                  Bm25Params params = {});

}  // namespace veritrap
