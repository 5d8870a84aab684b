#include "fewrank/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "fewrank/error.hpp"
#include "fewrank/text.hpp"

namespace fewrank {

Analyzer default_analyzer() {
    return [](const std::string& text) { return tokenize_words(text); };
}

InvertedIndex build_index(const Collection& collection, Analyzer analyzer) {
    if (collection.size() == 0) throw UsageError("cannot index an empty collection");
    InvertedIndex index;
    index.analyzer = analyzer;
    index.doc_count = collection.size();
    size_t total_len = 0;
    for (const auto& doc : collection.documents()) {
        auto terms = analyzer(doc.text);
        index.doc_length[doc.id] = static_cast<int>(terms.size());
        total_len += terms.size();
        std::map<std::string, int> tf;
        for (const auto& t : terms) ++tf[t];
        for (const auto& [term, freq] : tf) index.postings[term].push_back({doc.id, freq});
    }
    index.avg_doc_length = static_cast<double>(total_len) / static_cast<double>(index.doc_count);
    return index;
}

double bm25_term_score(int tf, int df, int doc_len, size_t doc_count, double avg_doc_length,
                       const BM25Params& params) {
    if (tf == 0 || df == 0) return 0.0;
    // Lucene-style idf, never negative.
    double idf = std::log(1.0 + (static_cast<double>(doc_count) - df + 0.5) / (df + 0.5));
    double norm = params.k1 * (1.0 - params.b + params.b * doc_len / avg_doc_length);
    return idf * tf * (params.k1 + 1.0) / (tf + norm);
}

double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_terms,
                  const std::string& docid, const BM25Params& params) {
    auto len_it = index.doc_length.find(docid);
    if (len_it == index.doc_length.end()) throw DataError("unknown document id \"" + docid + "\"");
    double score = 0.0;
    for (const auto& term : query_terms) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        int tf = 0;
        for (const auto& p : it->second) {
            if (p.docid == docid) {
                tf = p.term_frequency;
                break;
            }
        }
        score += bm25_term_score(tf, static_cast<int>(it->second.size()), len_it->second,
                                 index.doc_count, index.avg_doc_length, params);
    }
    return score;
}

std::vector<RunEntry> retrieve(const InvertedIndex& index, const Query& query, int k,
                               const BM25Params& params, const std::string& tag) {
    if (k < 1) throw UsageError("retrieve requires k >= 1");
    auto terms = index.analyzer(query.text);
    std::unordered_map<std::string, double> acc;
    for (const auto& term : terms) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        int df = static_cast<int>(it->second.size());
        for (const auto& p : it->second) {
            acc[p.docid] += bm25_term_score(p.term_frequency, df, index.doc_length.at(p.docid),
                                            index.doc_count, index.avg_doc_length, params);
        }
    }
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(acc.size());
    for (const auto& [docid, score] : acc) {
        if (score > 0.0) scored.emplace_back(docid, score);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(scored.size()) > k) scored.resize(k);
    std::vector<RunEntry> out;
    out.reserve(scored.size());
    for (size_t i = 0; i < scored.size(); ++i)
        out.push_back({scored[i].first, static_cast<int>(i) + 1, scored[i].second, tag});
    return out;
}

}  // namespace fewrank
