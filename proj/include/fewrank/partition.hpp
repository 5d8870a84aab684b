#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fewrank/corpus.hpp"
#include "fewrank/evaluation.hpp"

namespace fewrank {

struct TrainTriple {
    std::string qid;
    std::string positive_docid;
    std::string negative_docid;
};

struct TrainSplit {
    std::vector<TrainTriple> triples;
    uint64_t seed = 0;
};

struct DevSet {
    std::map<std::string, std::vector<std::string>> candidates;  // qid -> docids, first-stage order
    uint64_t seed = 0;
};

// One training query paired with a relevant passage and a first-stage
// negative that carries no positive grade.
TrainSplit sample_msmarco_split(const Qrels& qrels, const Run& first_stage, size_t k_queries,
                                uint64_t seed);

// Few-shot sets for template-candidate ranking; defaults follow the
// 5 x 2-way-16-shot recipe.
std::vector<TrainSplit> sample_fewshot_sets(const Qrels& qrels, const Run& first_stage,
                                            uint64_t seed, size_t n_sets = 5,
                                            size_t shots = 16);

// Dev queries are held out from the train split. |dev| == |train| when
// |train| <= 50, else min(500, available). Each dev query keeps its full
// first-stage candidate list.
DevSet build_dev_set(const Qrels& qrels, const Run& first_stage, const TrainSplit& train,
                     uint64_t seed);

// Label-fraction subsampling: drop uniformly chosen queries until fewer
// than floor(r*M) labels remain, re-insert the last dropped query, then
// remove one uniformly chosen label per surviving query in round-robin
// order over ascending query-id until exactly floor(r*M) labels remain.
Qrels sample_label_fraction(const Qrels& qrels, double r, uint64_t seed);

FoldAssignment make_folds(const std::vector<std::string>& query_ids, int n_folds, uint64_t seed);

void write_split(const TrainSplit& split, const std::string& path);
TrainSplit load_split(const std::string& path);
void write_folds(const FoldAssignment& folds, const std::string& path);
FoldAssignment load_folds(const std::string& path);

}  // namespace fewrank
