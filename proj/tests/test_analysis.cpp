#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "fewrank/analysis.hpp"
#include "fewrank/error.hpp"
#include "helpers.hpp"

using namespace fewrank;
using fewrank::test::TempDir;

namespace {

struct Fixture {
    SyntheticData data;
    Vocab vocab;

    Fixture() {
        SynthConfig sc;
        sc.n_nli = 30;
        sc.n_qa = 30;
        sc.n_docs = 20;
        sc.n_queries = 6;
        sc.seed = 44;
        data = make_synthetic_tasks(sc);
        vocab = build_vocab(data);
    }

    ScorerModelF model() const {
        MicroModelConfig cfg;
        cfg.d_model = 32;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.max_len = 32;
        cfg.seed = 4;
        return ScorerModelF(cfg, vocab);
    }

    std::vector<LabeledPair> ranking_pairs(size_t n) const {
        std::vector<LabeledPair> pairs;
        for (size_t i = 0; i < n; ++i) {
            const auto& q = data.queries[i % data.queries.size()];
            const auto& d = data.collection.documents()[i % data.collection.size()];
            bool pos = data.qrels.grade(q.id, d.id) >= 1;
            pairs.push_back({q.id + ":" + d.id, pos ? "pos" : "neg", q, d});
        }
        return pairs;
    }
};

}  // namespace

TEST_CASE("extract_embeddings: shape, determinism, parameter safety") {
    Fixture f;
    auto model = f.model();
    auto pairs = f.ranking_pairs(12);
    auto checksum = parameter_checksum(model);
    auto dump = extract_embeddings(model, pairs, Template::manual_seq2seq(), Verbalizer::ranking());
    CHECK(parameter_checksum(model) == checksum);
    REQUIRE(dump.rows.size() == 12);
    CHECK(dump.dimension == 32);
    for (const auto& r : dump.rows) CHECK(r.h_t.size() == 32);

    // identical pair scored twice gives identical vectors
    std::vector<LabeledPair> twice = {pairs[0], pairs[0]};
    auto d2 = extract_embeddings(model, twice, Template::manual_seq2seq(), Verbalizer::ranking());
    CHECK(d2.rows[0].h_t == d2.rows[1].h_t);

    // h_t equals score_pair's h_t
    auto out = model.score_pair(Verbalizer::ranking(),
                                model.encode_input(Template::manual_seq2seq(), pairs[0].query,
                                                   pairs[0].document));
    CHECK(dump.rows[0].h_t == out.h_t);
}

TEST_CASE("mixed ranking and task pairs cover the label taxonomy") {
    Fixture f;
    auto model = f.model();
    auto pairs = f.ranking_pairs(6);
    for (size_t i = 0; i < 6; ++i) {
        const auto& ex = f.data.nli.examples[i];
        pairs.push_back({"nli:" + std::to_string(i), f.data.nli.label_names.at(ex.label),
                         Query{"t", ex.text_a}, Document{"t", ex.text_b}});
    }
    auto dump = extract_embeddings(model, pairs, Template::manual_seq2seq(), Verbalizer::ranking());
    std::set<std::string> labels;
    for (const auto& r : dump.rows) labels.insert(r.label);
    std::set<std::string> allowed = {"pos", "neg", "entailment", "neutral", "contradiction"};
    for (const auto& l : labels) CHECK(allowed.count(l) == 1);
    CHECK(labels.count("pos") + labels.count("neg") > 0);
    CHECK(labels.count("entailment") + labels.count("neutral") + labels.count("contradiction") >
          0);
}

TEST_CASE("score_histogram bins and conserves counts") {
    std::vector<ScoredPair> scores;
    for (int i = 0; i < 30; ++i) scores.push_back({0.5, i % 2 == 0});
    auto hist = score_histogram(scores, 20);
    REQUIRE(hist.bins.size() == 20);
    size_t nonzero = 0, pos_total = 0, neg_total = 0;
    for (const auto& b : hist.bins) {
        if (b.positive + b.negative > 0) ++nonzero;
        pos_total += b.positive;
        neg_total += b.negative;
    }
    CHECK(nonzero == 1);
    CHECK(pos_total == 15);
    CHECK(neg_total == 15);

    // boundary scores land inside [0, 1]
    auto edge = score_histogram({{0.0, true}, {1.0, false}}, 20);
    CHECK(edge.bins.front().positive == 1);
    CHECK(edge.bins.back().negative == 1);

    CHECK_THROWS_AS(score_histogram({{1.5, true}}, 20), DataError);
    CHECK_THROWS_AS(score_histogram({{-0.1, true}}, 20), DataError);
    CHECK_THROWS_AS(score_histogram({{0.5, true}}, 0), UsageError);
}

TEST_CASE("score_histogram reports the separation statistic") {
    std::vector<ScoredPair> scores = {{0.9, true}, {0.7, true}, {0.2, false}, {0.4, false}};
    auto hist = score_histogram(scores, 10);
    CHECK(hist.mean_positive == doctest::Approx(0.8));
    CHECK(hist.mean_negative == doctest::Approx(0.3));
    CHECK(hist.separation == doctest::Approx(0.5));
}

TEST_CASE("project_2d preserves exactly planar point clouds") {
    Rng rng(3);
    const int d = 16, n = 40;
    // random orthonormal-ish plane via Gram-Schmidt
    Eigen::VectorXd u = Eigen::VectorXd::Zero(d), v = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) {
        u(i) = rng.normal();
        v(i) = rng.normal();
    }
    u.normalize();
    v -= u * u.dot(v);
    v.normalize();

    EmbeddingDump dump;
    dump.dimension = d;
    std::vector<std::pair<double, double>> coords;
    for (int i = 0; i < n; ++i) {
        double a = rng.normal(0, 3), b = rng.normal(0, 1);
        coords.emplace_back(a, b);
        dump.rows.push_back({"p" + std::to_string(i), "x", a * u + b * v});
    }
    auto proj = project_2d(dump);
    REQUIRE(proj.size() == static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double orig = std::hypot(coords[i].first - coords[j].first,
                                     coords[i].second - coords[j].second);
            double got = std::hypot(proj[i].x - proj[j].x, proj[i].y - proj[j].y);
            CHECK(std::abs(orig - got) <= 1e-9);
        }
}

TEST_CASE("project_2d orders axes by variance and is deterministic") {
    Rng rng(8);
    EmbeddingDump dump;
    dump.dimension = 10;
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd v(10);
        for (int j = 0; j < 10; ++j) v(j) = rng.normal(0, j == 0 ? 5.0 : 1.0);
        dump.rows.push_back({"p" + std::to_string(i), "x", v});
    }
    auto proj = project_2d(dump);
    double var_x = 0, var_y = 0, mean_x = 0, mean_y = 0;
    for (const auto& p : proj) {
        mean_x += p.x;
        mean_y += p.y;
    }
    mean_x /= proj.size();
    mean_y /= proj.size();
    for (const auto& p : proj) {
        var_x += (p.x - mean_x) * (p.x - mean_x);
        var_y += (p.y - mean_y) * (p.y - mean_y);
    }
    CHECK(var_x >= var_y);

    auto again = project_2d(dump);
    for (size_t i = 0; i < proj.size(); ++i) {
        CHECK(proj[i].x == again[i].x);
        CHECK(proj[i].y == again[i].y);
    }

    EmbeddingDump tiny;
    tiny.dimension = 4;
    tiny.rows = {{"a", "x", Eigen::VectorXd::Zero(4)}, {"b", "x", Eigen::VectorXd::Zero(4)}};
    CHECK_THROWS_AS(project_2d(tiny), DataError);
}

TEST_CASE("duplicated point cloud projects identically per point") {
    Rng rng(12);
    EmbeddingDump dump;
    dump.dimension = 6;
    for (int i = 0; i < 10; ++i) {
        Eigen::VectorXd v(6);
        for (int j = 0; j < 6; ++j) v(j) = rng.normal();
        dump.rows.push_back({"a" + std::to_string(i), "x", v});
    }
    EmbeddingDump doubled = dump;
    for (int i = 0; i < 10; ++i)
        doubled.rows.push_back({"b" + std::to_string(i), "x", dump.rows[i].h_t});
    auto proj = project_2d(doubled);
    for (int i = 0; i < 10; ++i) {
        CHECK(proj[i].x == doctest::Approx(proj[i + 10].x).epsilon(1e-12));
        CHECK(proj[i].y == doctest::Approx(proj[i + 10].y).epsilon(1e-12));
    }
}

TEST_CASE("PCA reconstruction error never grows with more components") {
    Rng rng(15);
    EmbeddingDump dump;
    dump.dimension = 12;
    for (int i = 0; i < 30; ++i) {
        Eigen::VectorXd v(12);
        for (int j = 0; j < 12; ++j) v(j) = rng.normal();
        dump.rows.push_back({"p" + std::to_string(i), "x", v});
    }
    double e1 = pca_reconstruction_error(dump, 1);
    double e2 = pca_reconstruction_error(dump, 2);
    CHECK(e2 <= e1 + 1e-9);
}

TEST_CASE("analysis artifacts serialize") {
    TempDir tmp("analysis");
    Fixture f;
    auto model = f.model();
    auto dump = extract_embeddings(model, f.ranking_pairs(5), Template::manual_seq2seq(),
                                   Verbalizer::ranking());
    write_embeddings_tsv(dump, tmp.file("emb.tsv"));
    write_projection_tsv(project_2d(dump), tmp.file("proj.tsv"));
    auto hist = score_histogram({{0.5, true}, {0.25, false}});
    write_histogram_json(hist, tmp.file("hist.json"));
    CHECK(!fewrank::test::slurp(tmp.file("emb.tsv")).empty());
    CHECK(!fewrank::test::slurp(tmp.file("proj.tsv")).empty());
    auto j = fewrank::test::slurp(tmp.file("hist.json"));
    CHECK(j.find("separation") != std::string::npos);
}
