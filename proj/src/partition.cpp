#include "fewrank/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fewrank/error.hpp"
#include "fewrank/rng.hpp"

namespace fewrank {

namespace {

std::vector<std::string> positives_of(const Qrels& qrels, const std::string& qid) {
    std::vector<std::string> out;
    auto it = qrels.judgments.find(qid);
    if (it == qrels.judgments.end()) return out;
    for (const auto& [docid, grade] : it->second)
        if (grade >= 1) out.push_back(docid);
    return out;
}

std::vector<std::string> eligible_negatives(const Qrels& qrels, const Run& first_stage,
                                            const std::string& qid) {
    std::vector<std::string> out;
    auto rit = first_stage.entries.find(qid);
    if (rit == first_stage.entries.end()) return out;
    for (const auto& e : rit->second)
        if (qrels.grade(qid, e.docid) < 1) out.push_back(e.docid);
    return out;
}

}  // namespace

TrainSplit sample_msmarco_split(const Qrels& qrels, const Run& first_stage, size_t k_queries,
                                uint64_t seed) {
    std::vector<std::string> eligible;
    for (const auto& [qid, judged] : qrels.judgments) {
        if (positives_of(qrels, qid).empty()) continue;
        if (eligible_negatives(qrels, first_stage, qid).empty()) continue;
        eligible.push_back(qid);
    }
    if (k_queries > eligible.size())
        throw DataError("requested " + std::to_string(k_queries) + " training queries but only " +
                        std::to_string(eligible.size()) + " are eligible");

    Rng rng(derive_seed(seed, "msmarco-split"));
    rng.shuffle(eligible);
    eligible.resize(k_queries);
    std::sort(eligible.begin(), eligible.end());

    TrainSplit split;
    split.seed = seed;
    for (const auto& qid : eligible) {
        auto pos = positives_of(qrels, qid);
        auto neg = eligible_negatives(qrels, first_stage, qid);
        TrainTriple t;
        t.qid = qid;
        t.positive_docid = pos[rng.below(pos.size())];
        t.negative_docid = neg[rng.below(neg.size())];
        split.triples.push_back(std::move(t));
    }
    return split;
}

std::vector<TrainSplit> sample_fewshot_sets(const Qrels& qrels, const Run& first_stage,
                                            uint64_t seed, size_t n_sets, size_t shots) {
    std::vector<TrainSplit> sets;
    sets.reserve(n_sets);
    for (size_t i = 0; i < n_sets; ++i)
        sets.push_back(sample_msmarco_split(qrels, first_stage, shots,
                                            derive_seed(seed, "fewshot-set-" + std::to_string(i))));
    return sets;
}

DevSet build_dev_set(const Qrels& qrels, const Run& first_stage, const TrainSplit& train,
                     uint64_t seed) {
    std::set<std::string> in_train;
    for (const auto& t : train.triples) in_train.insert(t.qid);

    std::vector<std::string> held_out;
    for (const auto& [qid, list] : first_stage.entries) {
        if (in_train.count(qid)) continue;
        if (positives_of(qrels, qid).empty()) continue;
        held_out.push_back(qid);
    }
    if (held_out.empty()) throw DataError("no held-out queries available for a development set");

    size_t want = train.triples.size() <= 50 ? train.triples.size() : 500;
    size_t take = std::min(want, held_out.size());

    Rng rng(derive_seed(seed, "dev-set"));
    rng.shuffle(held_out);
    held_out.resize(take);
    std::sort(held_out.begin(), held_out.end());

    DevSet dev;
    dev.seed = seed;
    for (const auto& qid : held_out) {
        const auto& list = first_stage.entries.at(qid);
        auto& cands = dev.candidates[qid];
        cands.reserve(list.size());
        for (const auto& e : list) cands.push_back(e.docid);
    }
    return dev;
}

Qrels sample_label_fraction(const Qrels& qrels, double r, uint64_t seed) {
    if (r <= 0.0 || r > 1.0) throw UsageError("label fraction r must lie in (0, 1]");
    const size_t total = qrels.label_count();
    if (total == 0) throw DataError("qrels has no labels");
    const size_t target = static_cast<size_t>(std::floor(r * static_cast<double>(total)));
    if (target == total) return qrels;
    if (target == 0) throw DataError("label fraction r leaves zero labels");

    Rng rng(derive_seed(seed, "label-fraction"));

    // Phase 1: drop uniformly chosen queries until fewer than `target`
    // labels remain, then re-insert the last dropped query.
    std::vector<std::string> alive;
    for (const auto& [qid, judged] : qrels.judgments) alive.push_back(qid);
    size_t remaining = total;
    std::string last_dropped;
    while (remaining >= target && !alive.empty()) {
        size_t pick = static_cast<size_t>(rng.below(alive.size()));
        last_dropped = alive[pick];
        remaining -= qrels.judgments.at(last_dropped).size();
        alive.erase(alive.begin() + static_cast<long>(pick));
    }
    alive.push_back(last_dropped);

    Qrels out;
    size_t count = 0;
    for (const auto& qid : alive) {
        out.judgments[qid] = qrels.judgments.at(qid);
        count += qrels.judgments.at(qid).size();
    }

    // Phase 2: round-robin over ascending query-id, removing one uniformly
    // chosen label per visit. A query down to its last label is skipped
    // while any other query still has two or more.
    std::vector<std::string> order;
    for (const auto& [qid, judged] : out.judgments) order.push_back(qid);
    while (count > target) {
        bool removed_this_cycle = false;
        for (const auto& qid : order) {
            if (count == target) break;
            auto& judged = out.judgments[qid];
            if (judged.empty()) continue;
            if (judged.size() == 1) {
                bool other_can_yield = false;
                for (const auto& [other, oj] : out.judgments)
                    if (other != qid && oj.size() >= 2) { other_can_yield = true; break; }
                if (other_can_yield) continue;
            }
            size_t pick = static_cast<size_t>(rng.below(judged.size()));
            auto it = judged.begin();
            std::advance(it, static_cast<long>(pick));
            judged.erase(it);
            --count;
            removed_this_cycle = true;
        }
        if (!removed_this_cycle) break;
    }
    for (auto it = out.judgments.begin(); it != out.judgments.end();) {
        if (it->second.empty()) it = out.judgments.erase(it);
        else ++it;
    }
    return out;
}

FoldAssignment make_folds(const std::vector<std::string>& query_ids, int n_folds, uint64_t seed) {
    if (n_folds < 1) throw UsageError("n_folds must be >= 1");
    if (query_ids.size() < static_cast<size_t>(n_folds))
        throw DataError("need at least " + std::to_string(n_folds) + " queries for " +
                        std::to_string(n_folds) + " folds, got " + std::to_string(query_ids.size()));
    std::vector<std::string> shuffled = query_ids;
    std::sort(shuffled.begin(), shuffled.end());
    Rng rng(derive_seed(seed, "folds"));
    rng.shuffle(shuffled);
    FoldAssignment folds;
    folds.n_folds = n_folds;
    for (size_t i = 0; i < shuffled.size(); ++i) {
        auto [it, inserted] = folds.fold_of.emplace(shuffled[i], static_cast<int>(i % n_folds));
        if (!inserted) throw DataError("duplicate query id \"" + shuffled[i] + "\"");
    }
    return folds;
}

void write_split(const TrainSplit& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& t : split.triples)
        out << t.qid << '\t' << t.positive_docid << '\t' << t.negative_docid << '\n';
}

TrainSplit load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    TrainSplit split;
    std::string line;
    size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        TrainTriple t;
        if (!(std::getline(ss, t.qid, '\t') && std::getline(ss, t.positive_docid, '\t') &&
              std::getline(ss, t.negative_docid)))
            throw DataError(path + ":" + std::to_string(lineno) + ": expected qid<TAB>pos<TAB>neg");
        if (!seen.insert(t.qid).second)
            throw DataError(path + ": duplicate query id \"" + t.qid + "\"");
        split.triples.push_back(std::move(t));
    }
    return split;
}

void write_folds(const FoldAssignment& folds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& [qid, f] : folds.fold_of) out << qid << '\t' << f << '\n';
}

FoldAssignment load_folds(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    FoldAssignment folds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError(path + ": expected qid<TAB>fold");
        int f = std::stoi(line.substr(tab + 1));
        folds.fold_of[line.substr(0, tab)] = f;
        folds.n_folds = std::max(folds.n_folds, f + 1);
    }
    return folds;
}

}  // namespace fewrank
