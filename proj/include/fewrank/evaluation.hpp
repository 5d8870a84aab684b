#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fewrank/corpus.hpp"

namespace fewrank {

struct MetricResult {
    std::map<std::string, double> per_query;
    double mean = 0.0;
    std::string metric_name;
    int cutoff = 0;
};

struct SignificanceResult {
    double p_value = 1.0;
    double statistic = 0.0;  // mean per-query difference a - b
    size_t n_queries = 0;
    std::string method;
};

MetricResult mrr_at_k(const Run& run, const Qrels& qrels, int k = 10);
MetricResult ndcg_at_k(const Run& run, const Qrels& qrels, int k = 20);

// Relevance score for a (query, document) pair; higher ranks first.
using PairScorer = std::function<double(const Query&, const Document&)>;

// Rescore the top-`depth` first-stage candidates per query and re-sort,
// ties broken by ascending docid. Candidates beyond depth are dropped.
Run rerank(const PairScorer& scorer, const Run& first_stage,
           const std::map<std::string, Query>& queries, const Collection& collection,
           int depth, const std::string& tag = "rerank");

// Two-sided paired sign-flip permutation test on per-query differences.
// Exact enumeration when n <= 20, else `resamples` seeded draws.
SignificanceResult paired_significance(const MetricResult& a, const MetricResult& b,
                                       uint64_t seed = 0, size_t resamples = 100000);

struct FoldAssignment {
    std::map<std::string, int> fold_of;
    int n_folds = 0;
};

// Called once per fold with (train qids, eval qids, fold index); returns
// per-query metric values for the eval queries.
using FoldRunner = std::function<std::map<std::string, double>(
    const std::vector<std::string>&, const std::vector<std::string>&, int)>;

MetricResult cross_validate(const FoldAssignment& folds, const FoldRunner& run_fold,
                            const std::string& metric_name = "mrr", int cutoff = 10);

}  // namespace fewrank
