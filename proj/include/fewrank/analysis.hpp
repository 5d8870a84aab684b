#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fewrank/corpus.hpp"
#include "fewrank/scorer.hpp"
#include "fewrank/training.hpp"

namespace fewrank {

// One scored pair for diagnostics: what produced it and where it came from.
struct LabeledPair {
    std::string pair_id;
    std::string label;  // e.g. pos/neg/entailment/neutral/contradiction
    Query query;
    Document document;
};

struct EmbeddingDump {
    struct Row {
        std::string pair_id;
        std::string label;
        Eigen::VectorXd h_t;
    };
    std::vector<Row> rows;
    int dimension = 0;
};

// Decision-token hidden states, one row per pair, taken exactly as
// score_pair takes h_t.
EmbeddingDump extract_embeddings(const ScorerModelF& model, const std::vector<LabeledPair>& pairs,
                                 const Template& tpl, const Verbalizer& verbalizer);

struct ScoreHistogram {
    struct Bin {
        double lower = 0.0;
        double upper = 0.0;
        size_t positive = 0;
        size_t negative = 0;
    };
    std::vector<Bin> bins;
    double mean_positive = 0.0;
    double mean_negative = 0.0;
    double separation = 0.0;  // mean_positive - mean_negative
};

struct ScoredPair {
    double score = 0.0;  // must lie in [0, 1]
    bool positive = false;
};

// Equal-width bins over [0, 1], right-closed final bin.
ScoreHistogram score_histogram(const std::vector<ScoredPair>& scores, int bin_count = 20);

struct ProjectedPoint {
    std::string pair_id;
    std::string label;
    double x = 0.0;
    double y = 0.0;
};

// Mean-centered PCA onto the top-2 principal axes (variance-ordered).
std::vector<ProjectedPoint> project_2d(const EmbeddingDump& dump);

// PCA reconstruction error with k retained components; used to check the
// monotonicity property.
double pca_reconstruction_error(const EmbeddingDump& dump, int k);

void write_embeddings_tsv(const EmbeddingDump& dump, const std::string& path);
void write_projection_tsv(const std::vector<ProjectedPoint>& points, const std::string& path);
void write_histogram_json(const ScoreHistogram& hist, const std::string& path);

}  // namespace fewrank
