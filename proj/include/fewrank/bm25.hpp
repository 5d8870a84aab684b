#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fewrank/corpus.hpp"

namespace fewrank {

struct BM25Params {
    double k1 = 0.9;  // Anserini MS MARCO defaults
    double b = 0.4;
};

using Analyzer = std::function<std::vector<std::string>(const std::string&)>;
Analyzer default_analyzer();

struct Posting {
    std::string docid;
    int term_frequency = 0;
};

// Immutable after build; retrieve is callable concurrently across queries.
struct InvertedIndex {
    std::map<std::string, std::vector<Posting>> postings;
    std::map<std::string, int> doc_length;
    double avg_doc_length = 0.0;
    size_t doc_count = 0;
    Analyzer analyzer;

    int doc_frequency(const std::string& term) const {
        auto it = postings.find(term);
        return it == postings.end() ? 0 : static_cast<int>(it->second.size());
    }
};

InvertedIndex build_index(const Collection& collection, Analyzer analyzer = default_analyzer());

// Per-term Okapi BM25 contribution with explicit collection statistics.
// Exposed so properties about N/avgdl can be tested with the stats pinned.
double bm25_term_score(int tf, int df, int doc_len, size_t doc_count, double avg_doc_length,
                       const BM25Params& params);

double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_terms,
                  const std::string& docid, const BM25Params& params = {});

// Top-k candidates by descending score, ties by ascending docid.
// Documents scoring 0 (no query term in common) are excluded.
std::vector<RunEntry> retrieve(const InvertedIndex& index, const Query& query, int k,
                               const BM25Params& params = {}, const std::string& tag = "bm25");

}  // namespace fewrank
