#include "fewrank/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "fewrank/error.hpp"
#include "fewrank/rng.hpp"

namespace fewrank {

namespace {

double mean_of(const std::map<std::string, double>& per_query) {
    if (per_query.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [qid, v] : per_query) sum += v;
    return sum / static_cast<double>(per_query.size());
}

const std::map<std::string, int>& judged_or_throw(const Qrels& qrels, const std::string& qid) {
    auto it = qrels.judgments.find(qid);
    if (it == qrels.judgments.end()) throw DataError("query \"" + qid + "\" absent from qrels");
    return it->second;
}

}  // namespace

MetricResult mrr_at_k(const Run& run, const Qrels& qrels, int k) {
    if (k < 1) throw UsageError("mrr_at_k requires k >= 1");
    MetricResult res;
    res.metric_name = "mrr";
    res.cutoff = k;
    for (const auto& [qid, list] : run.entries) {
        const auto& judged = judged_or_throw(qrels, qid);
        double rr = 0.0;
        for (const auto& e : list) {
            if (e.rank > k) break;
            auto jt = judged.find(e.docid);
            if (jt != judged.end() && jt->second >= 1) {
                rr = 1.0 / e.rank;
                break;
            }
        }
        res.per_query[qid] = rr;
    }
    res.mean = mean_of(res.per_query);
    return res;
}

MetricResult ndcg_at_k(const Run& run, const Qrels& qrels, int k) {
    if (k < 1) throw UsageError("ndcg_at_k requires k >= 1");
    MetricResult res;
    res.metric_name = "ndcg";
    res.cutoff = k;
    for (const auto& [qid, list] : run.entries) {
        const auto& judged = judged_or_throw(qrels, qid);
        double dcg = 0.0;
        for (const auto& e : list) {
            if (e.rank > k) break;
            auto jt = judged.find(e.docid);
            int grade = jt == judged.end() ? 0 : jt->second;
            dcg += (std::pow(2.0, grade) - 1.0) / std::log2(e.rank + 1.0);
        }
        std::vector<int> grades;
        grades.reserve(judged.size());
        for (const auto& [docid, g] : judged) grades.push_back(g);
        std::sort(grades.rbegin(), grades.rend());
        double idcg = 0.0;
        for (size_t i = 0; i < grades.size() && static_cast<int>(i) < k; ++i)
            idcg += (std::pow(2.0, grades[i]) - 1.0) / std::log2(i + 2.0);
        res.per_query[qid] = idcg == 0.0 ? 0.0 : dcg / idcg;
    }
    res.mean = mean_of(res.per_query);
    return res;
}

Run rerank(const PairScorer& scorer, const Run& first_stage,
           const std::map<std::string, Query>& queries, const Collection& collection,
           int depth, const std::string& tag) {
    if (depth < 1) throw UsageError("rerank requires depth >= 1");
    Run out;
    for (const auto& [qid, list] : first_stage.entries) {
        auto qit = queries.find(qid);
        if (qit == queries.end()) throw DataError("query \"" + qid + "\" has no text");
        std::vector<std::pair<std::string, double>> scored;
        for (const auto& e : list) {
            if (e.rank > depth) break;
            if (!collection.contains(e.docid))
                throw DataError("candidate document \"" + e.docid + "\" missing from collection");
            scored.emplace_back(e.docid, scorer(qit->second, collection.lookup(e.docid)));
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        auto& entries = out.entries[qid];
        for (size_t i = 0; i < scored.size(); ++i)
            entries.push_back({scored[i].first, static_cast<int>(i) + 1, scored[i].second, tag});
    }
    return out;
}

SignificanceResult paired_significance(const MetricResult& a, const MetricResult& b,
                                       uint64_t seed, size_t resamples) {
    if (a.per_query.size() != b.per_query.size())
        throw DataError("significance test requires identical query sets");
    std::vector<double> diffs;
    diffs.reserve(a.per_query.size());
    for (const auto& [qid, va] : a.per_query) {
        auto it = b.per_query.find(qid);
        if (it == b.per_query.end())
            throw DataError("query \"" + qid + "\" present in one result only");
        diffs.push_back(va - it->second);
    }
    const size_t n = diffs.size();
    if (n == 0) throw DataError("significance test on empty results");

    double observed = 0.0;
    for (double d : diffs) observed += d;
    observed /= static_cast<double>(n);
    const double threshold = std::abs(observed) - 1e-12;

    SignificanceResult res;
    res.statistic = observed;
    res.n_queries = n;

    if (n <= 20) {
        res.method = "sign-flip permutation (exact)";
        const uint64_t total = 1ULL << n;
        uint64_t hits = 0;
        for (uint64_t mask = 0; mask < total; ++mask) {
            double sum = 0.0;
            for (size_t i = 0; i < n; ++i)
                sum += (mask >> i) & 1 ? -diffs[i] : diffs[i];
            if (std::abs(sum / static_cast<double>(n)) >= threshold) ++hits;
        }
        res.p_value = static_cast<double>(hits) / static_cast<double>(total);
    } else {
        res.method = "sign-flip permutation (monte-carlo)";
        Rng rng(derive_seed(seed, "paired-significance"));
        size_t hits = 0;
        for (size_t r = 0; r < resamples; ++r) {
            double sum = 0.0;
            for (size_t i = 0; i < n; ++i)
                sum += rng.next_u64() & 1 ? -diffs[i] : diffs[i];
            if (std::abs(sum / static_cast<double>(n)) >= threshold) ++hits;
        }
        // include the identity assignment so p never reaches 0
        res.p_value = static_cast<double>(hits + 1) / static_cast<double>(resamples + 1);
    }
    return res;
}

MetricResult cross_validate(const FoldAssignment& folds, const FoldRunner& run_fold,
                            const std::string& metric_name, int cutoff) {
    if (folds.n_folds < 1) throw UsageError("cross_validate requires at least one fold");
    std::vector<std::vector<std::string>> members(folds.n_folds);
    for (const auto& [qid, f] : folds.fold_of) {
        if (f < 0 || f >= folds.n_folds) throw DataError("fold index out of range for query " + qid);
        members[f].push_back(qid);
    }
    for (int f = 0; f < folds.n_folds; ++f)
        if (members[f].empty()) throw DataError("fold " + std::to_string(f) + " has zero queries");

    MetricResult res;
    res.metric_name = metric_name;
    res.cutoff = cutoff;
    for (int f = 0; f < folds.n_folds; ++f) {
        std::vector<std::string> train;
        for (int g = 0; g < folds.n_folds; ++g)
            if (g != f) train.insert(train.end(), members[g].begin(), members[g].end());
        auto fold_result = run_fold(train, members[f], f);
        for (const auto& [qid, v] : fold_result) {
            if (res.per_query.count(qid)) throw DataError("query " + qid + " evaluated in two folds");
            res.per_query[qid] = v;
        }
    }
    res.mean = mean_of(res.per_query);
    return res;
}

}  // namespace fewrank
