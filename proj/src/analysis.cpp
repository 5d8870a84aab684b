#include "fewrank/analysis.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fewrank/error.hpp"

namespace fewrank {

EmbeddingDump extract_embeddings(const ScorerModelF& model, const std::vector<LabeledPair>& pairs,
                                 const Template& tpl, const Verbalizer& verbalizer) {
    EmbeddingDump dump;
    dump.dimension = model.config().d_model;
    for (const auto& p : pairs) {
        ScoreOutput out;
        try {
            if (model.config().encoder_only)
                out = model.score_mask_pair(verbalizer, model.encode_input(tpl, p.query, p.document));
            else
                out = model.score_pair(verbalizer, model.encode_input(tpl, p.query, p.document));
        } catch (const std::exception& e) {
            throw DataError("pair \"" + p.pair_id + "\": " + e.what());
        }
        dump.rows.push_back({p.pair_id, p.label, std::move(out.h_t)});
    }
    return dump;
}

ScoreHistogram score_histogram(const std::vector<ScoredPair>& scores, int bin_count) {
    if (bin_count < 1) throw UsageError("bin_count must be >= 1");
    ScoreHistogram hist;
    hist.bins.resize(static_cast<size_t>(bin_count));
    const double width = 1.0 / bin_count;
    for (int i = 0; i < bin_count; ++i) {
        hist.bins[static_cast<size_t>(i)].lower = i * width;
        hist.bins[static_cast<size_t>(i)].upper = i + 1 == bin_count ? 1.0 : (i + 1) * width;
    }
    size_t n_pos = 0, n_neg = 0;
    double sum_pos = 0.0, sum_neg = 0.0;
    for (const auto& s : scores) {
        if (s.score < 0.0 || s.score > 1.0)
            throw DataError("score outside [0, 1]: " + std::to_string(s.score));
        auto idx = static_cast<size_t>(s.score * bin_count);
        if (idx >= static_cast<size_t>(bin_count)) idx = static_cast<size_t>(bin_count) - 1;
        if (s.positive) {
            ++hist.bins[idx].positive;
            sum_pos += s.score;
            ++n_pos;
        } else {
            ++hist.bins[idx].negative;
            sum_neg += s.score;
            ++n_neg;
        }
    }
    hist.mean_positive = n_pos ? sum_pos / static_cast<double>(n_pos) : 0.0;
    hist.mean_negative = n_neg ? sum_neg / static_cast<double>(n_neg) : 0.0;
    hist.separation = hist.mean_positive - hist.mean_negative;
    return hist;
}

namespace {

// Top-k principal axes of the mean-centered rows, deterministic sign.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> pca_axes(const EmbeddingDump& dump, int k) {
    const auto n = static_cast<Eigen::Index>(dump.rows.size());
    const auto d = static_cast<Eigen::Index>(dump.dimension);
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (dump.rows[static_cast<size_t>(i)].h_t.size() != d)
            throw DataError("embedding rows disagree on dimension");
        X.row(i) = dump.rows[static_cast<size_t>(i)].h_t.transpose();
    }
    Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
    Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::MatrixXd axes(d, k);
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd axis = solver.eigenvectors().col(d - 1 - j);  // descending eigenvalue
        Eigen::Index imax = 0;
        axis.cwiseAbs().maxCoeff(&imax);
        if (axis(imax) < 0.0) axis = -axis;
        axes.col(j) = axis;
    }
    return {X, axes};
}

}  // namespace

std::vector<ProjectedPoint> project_2d(const EmbeddingDump& dump) {
    if (dump.rows.size() < 3) throw DataError("PCA projection needs at least 3 rows");
    auto [X, axes] = pca_axes(dump, 2);
    Eigen::MatrixXd proj = X * axes;
    std::vector<ProjectedPoint> out;
    out.reserve(dump.rows.size());
    for (size_t i = 0; i < dump.rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out.push_back({dump.rows[i].pair_id, dump.rows[i].label, proj(r, 0), proj(r, 1)});
    }
    return out;
}

double pca_reconstruction_error(const EmbeddingDump& dump, int k) {
    if (dump.rows.size() < 3) throw DataError("PCA needs at least 3 rows");
    if (k < 1) throw UsageError("k must be >= 1");
    auto [X, axes] = pca_axes(dump, k);
    Eigen::MatrixXd recon = (X * axes) * axes.transpose();
    return (X - recon).squaredNorm();
}

void write_embeddings_tsv(const EmbeddingDump& dump, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    char buf[64];
    for (const auto& r : dump.rows) {
        out << r.pair_id << '\t' << r.label;
        for (Eigen::Index i = 0; i < r.h_t.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.8g", r.h_t(i));
            out << '\t' << buf;
        }
        out << '\n';
    }
}

void write_projection_tsv(const std::vector<ProjectedPoint>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    char buf[64];
    for (const auto& p : points) {
        out << p.pair_id << '\t' << p.label;
        std::snprintf(buf, sizeof(buf), "%.8g", p.x);
        out << '\t' << buf;
        std::snprintf(buf, sizeof(buf), "%.8g", p.y);
        out << '\t' << buf << '\n';
    }
}

void write_histogram_json(const ScoreHistogram& hist, const std::string& path) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : hist.bins)
        bins.push_back({{"lower", b.lower},
                        {"upper", b.upper},
                        {"positive", b.positive},
                        {"negative", b.negative}});
    nlohmann::json j{{"bins", bins},
                     {"mean_positive", hist.mean_positive},
                     {"mean_negative", hist.mean_negative},
                     {"separation", hist.separation}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace fewrank
