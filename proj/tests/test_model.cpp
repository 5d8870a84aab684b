#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fewrank/error.hpp"
#include "fewrank/scorer.hpp"
#include "fewrank/training.hpp"
#include "helpers.hpp"

using namespace fewrank;
using fewrank::test::TempDir;

namespace {

Vocab tiny_vocab() {
    return Vocab({"query", "document", "relevant", "is", "to", "irrelevant", "true", "false",
                  "yes", "maybe", "no", "alpha", "beta", "gamma", "delta", "epsilon", "zeta",
                  "eta", "theta"});
}

MicroModelConfig tiny_config(bool encoder_only = false) {
    MicroModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 32;
    cfg.seed = 17;
    cfg.encoder_only = encoder_only;
    return cfg;
}

// Mean CE over a batch: analytic grads plus a forward-only evaluator for
// central finite differences.
template <typename Model>
double batch_loss_value(const Model& model, const Verbalizer& verb,
                        const std::vector<std::pair<EncodedInput, int>>& batch) {
    typename Model::TapeT tape;
    auto leaves = model.param_leaves(tape);
    std::vector<typename Model::Id> losses;
    for (const auto& [input, label] : batch)
        losses.push_back(model.example_loss(tape, leaves, input, verb, label));
    return static_cast<double>(tape.value(tape.mean(losses))(0, 0));
}

}  // namespace

TEST_CASE("config validation") {
    MicroModelConfig bad = tiny_config();
    bad.n_heads = 3;  // 8 % 3 != 0
    CHECK_THROWS_AS(ScorerModelF(bad, tiny_vocab()), UsageError);
    MicroModelConfig zero = tiny_config();
    zero.n_layers = 0;
    CHECK_THROWS_AS(ScorerModelF(zero, tiny_vocab()), UsageError);
}

TEST_CASE("same config and seed give bit-identical parameters") {
    ScorerModelF a(tiny_config(), tiny_vocab());
    ScorerModelF b(tiny_config(), tiny_vocab());
    CHECK(parameter_checksum(a) == parameter_checksum(b));

    MicroModelConfig other = tiny_config();
    other.seed = 18;
    ScorerModelF c(other, tiny_vocab());
    CHECK(parameter_checksum(a) != parameter_checksum(c));
}

TEST_CASE("forward on a length-1 input yields a finite h_t of dimension d_model") {
    ScorerModelF model(tiny_config(), tiny_vocab());
    EncodedInput input;
    input.ids = {model.vocab().id_of("alpha")};
    auto out = model.score_pair(Verbalizer::ranking(), input);
    CHECK(out.h_t.size() == 8);
    for (Eigen::Index i = 0; i < out.h_t.size(); ++i) CHECK(std::isfinite(out.h_t(i)));
}

TEST_CASE("restricted softmax worked examples") {
    auto verb = Verbalizer::ranking();
    SUBCASE("equal logits split evenly") {
        auto probs = restricted_softmax(verb, {{"true", 1.3}, {"false", 1.3}});
        CHECK(probs.at(1) == doctest::Approx(0.5));
        CHECK(probs.at(0) == doctest::Approx(0.5));
    }
    SUBCASE("logits (2, 0)") {
        auto probs = restricted_softmax(verb, {{"true", 2.0}, {"false", 0.0}});
        CHECK(probs.at(1) == doctest::Approx(0.880797).epsilon(1e-6));
    }
    SUBCASE("three labels, all zero") {
        Verbalizer nli({{0, "no"}, {1, "maybe"}, {2, "yes"}});
        auto probs = restricted_softmax(nli, {{"no", 0.0}, {"maybe", 0.0}, {"yes", 0.0}});
        for (int y : {0, 1, 2}) CHECK(probs.at(y) == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("softmax properties over random heads") {
    Rng rng(55);
    auto verb = Verbalizer::ranking();
    for (int trial = 0; trial < 200; ++trial) {
        double lt = rng.normal(0, 3), lf = rng.normal(0, 3);
        auto probs = restricted_softmax(verb, {{"true", lt}, {"false", lf}});
        double sum = 0;
        for (auto& [y, p] : probs) sum += p;
        CHECK(std::abs(sum - 1.0) <= 1e-9);

        // shift invariance
        double c = rng.normal(0, 10);
        auto shifted = restricted_softmax(verb, {{"true", lt + c}, {"false", lf + c}});
        CHECK(std::abs(shifted.at(1) - probs.at(1)) <= 1e-9);

        // monotonicity
        auto bumped = restricted_softmax(verb, {{"true", lt + 0.1}, {"false", lf}});
        CHECK(bumped.at(1) > probs.at(1));
    }
}

TEST_CASE("ce_loss worked examples") {
    ScoreOutput out;
    out.probs = {{1, 0.5}, {0, 0.5}};
    CHECK(ce_loss(out, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    out.probs = {{1, 1.0}, {0, 0.0}};
    CHECK(ce_loss(out, 1) == doctest::Approx(0.0));
    CHECK_THROWS_AS(ce_loss(out, 9), DataError);
}

TEST_CASE("scoring through the model matches the label head recomputation") {
    auto verb = Verbalizer::ranking();
    for (bool encoder_only : {false, true}) {
        MicroModelConfig cfg = tiny_config(encoder_only);
        ScorerModelF model(cfg, tiny_vocab());
        EncodedInput input = model.encode_input(
            encoder_only ? Template::manual_mask() : Template::manual_seq2seq(),
            {"q", "alpha beta"}, {"d", "gamma delta alpha"});
        ScoreOutput out = encoder_only ? model.score_mask_pair(verb, input)
                                       : model.score_pair(verb, input);
        // dual route: LabelWordHead rows dotted with h_t directly
        auto head = model.label_word_head(verb);
        auto logits = label_logits(head, out.h_t);
        auto probs = restricted_softmax(verb, logits);
        for (int y : verb.labels()) CHECK(out.probs.at(y) == doctest::Approx(probs.at(y)).epsilon(1e-9));
        for (const auto& [word, l] : out.logits)
            CHECK(l == doctest::Approx(logits.at(word)).epsilon(1e-9));
        double sum = 0;
        for (auto& [y, p] : out.probs) sum += p;
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("mask scoring needs exactly one mask token") {
    ScorerModelF model(tiny_config(true), tiny_vocab());
    auto verb = Verbalizer::ranking();
    EncodedInput no_mask;
    no_mask.ids = {5, 6, 7};
    CHECK_THROWS_AS(model.score_mask_pair(verb, no_mask), DataError);
    EncodedInput two;
    two.ids = {Vocab::kMask, 5, Vocab::kMask};
    two.mask_pos = 0;
    CHECK_THROWS_AS(model.score_mask_pair(verb, two), DataError);
    // encoder-decoder model refuses the mask path and vice versa
    ScorerModelF encdec(tiny_config(false), tiny_vocab());
    EncodedInput one;
    one.ids = {Vocab::kMask, 5};
    one.mask_pos = 0;
    CHECK_THROWS_AS(encdec.score_mask_pair(verb, one), UsageError);
    CHECK_THROWS_AS(model.score_pair(verb, no_mask), UsageError);
}

TEST_CASE("document truncation preserves the query and the template") {
    MicroModelConfig cfg = tiny_config();
    cfg.max_len = 12;
    ScorerModelF model(cfg, tiny_vocab());
    auto tpl = Template::manual_seq2seq();

    std::string long_doc = "alpha beta gamma delta epsilon zeta eta theta alpha beta gamma";
    auto input = model.encode_input(tpl, {"q", "alpha beta"}, {"d", long_doc});
    CHECK(input.ids.size() == 12);
    // suffix literal "relevant" survives truncation
    CHECK(input.ids.back() == model.vocab().id_of("relevant"));

    // query + template alone overflow -> hard rejection
    std::string long_query = "alpha beta gamma delta epsilon zeta eta theta alpha beta";
    CHECK_THROWS_AS(model.encode_input(tpl, {"q", long_query}, {"d", "x"}), DataError);
}

TEST_CASE("forward is deterministic for fixed parameters") {
    ScorerModelF model(tiny_config(), tiny_vocab());
    auto verb = Verbalizer::ranking();
    auto input = model.encode_input(Template::manual_seq2seq(), {"q", "alpha"}, {"d", "beta gamma"});
    auto a = model.score_pair(verb, input);
    auto b = model.score_pair(verb, input);
    CHECK(a.probs.at(1) == b.probs.at(1));
    CHECK(a.h_t == b.h_t);
}

TEST_CASE("label words outside the vocabulary are rejected") {
    ScorerModelF model(tiny_config(), tiny_vocab());
    EncodedInput input;
    input.ids = {5};
    CHECK_THROWS_AS(model.score_pair(Verbalizer({{0, "nonexistent"}, {1, "true"}}), input),
                    DataError);
    CHECK_THROWS_AS(model.score_pair(Verbalizer({{0, "two words"}, {1, "true"}}), input),
                    DataError);
}

TEST_CASE("gradients match central finite differences at 64-bit") {
    SynthConfig sc;
    sc.n_nli = 4;
    sc.n_qa = 4;
    sc.n_docs = 6;
    sc.n_queries = 2;
    sc.seed = 1;
    auto data = make_synthetic_tasks(sc);
    auto vocab = build_vocab(data);

    for (bool encoder_only : {false, true}) {
        CAPTURE(encoder_only);
        MicroModelConfig cfg;
        cfg.d_model = 8;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.max_len = 32;
        cfg.seed = 11;
        cfg.encoder_only = encoder_only;
        ScorerModelD model(cfg, vocab);
        auto verb = Verbalizer::ranking();
        auto tpl = encoder_only ? Template::manual_mask() : Template::manual_seq2seq();

        std::vector<std::pair<EncodedInput, int>> batch;
        batch.emplace_back(
            model.encode_input(tpl, data.queries[0], data.collection.documents()[0]), 1);
        batch.emplace_back(
            model.encode_input(tpl, data.queries[1], data.collection.documents()[1]), 0);

        TapeD tape;
        auto leaves = model.param_leaves(tape);
        std::vector<TapeD::Id> losses;
        for (const auto& [input, label] : batch)
            losses.push_back(model.example_loss(tape, leaves, input, verb, label));
        auto root = tape.mean(losses);
        tape.backward(root);
        auto grads = model.read_grads(tape, leaves);

        double max_rel = 0.0;
        size_t pi = 0;
        for (auto& p : model.parameters()) {
            auto& g = grads[pi++];
            for (Eigen::Index r = 0; r < p.mat->rows(); ++r) {
                for (Eigen::Index c = 0; c < p.mat->cols(); ++c) {
                    double orig = (*p.mat)(r, c);
                    double h = 1e-5 * std::max(1.0, std::abs(orig));
                    (*p.mat)(r, c) = orig + h;
                    double lp = batch_loss_value(model, verb, batch);
                    (*p.mat)(r, c) = orig - h;
                    double lm = batch_loss_value(model, verb, batch);
                    (*p.mat)(r, c) = orig;
                    double num = (lp - lm) / (2 * h);
                    double ana = g(r, c);
                    double denom = std::max(std::abs(num), std::abs(ana));
                    if (denom < 1e-8) continue;  // both effectively zero
                    max_rel = std::max(max_rel, std::abs(num - ana) / denom);
                }
            }
        }
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("checkpoints reproduce identical forward outputs") {
    TempDir tmp("ckpt");
    SynthConfig sc;
    sc.n_nli = 4;
    sc.n_qa = 4;
    sc.n_docs = 6;
    sc.n_queries = 2;
    sc.seed = 2;
    auto data = make_synthetic_tasks(sc);
    ScorerModelF model(tiny_config(), build_vocab(data));
    auto verb = Verbalizer::ranking();
    auto input =
        model.encode_input(Template::manual_seq2seq(), data.queries[0],
                           data.collection.documents()[0]);
    auto before = model.score_pair(verb, input);

    auto path = tmp.file("model.ckpt");
    model.save(path);
    auto loaded = ScorerModelF::load(path);
    CHECK(parameter_checksum(loaded) == parameter_checksum(model));
    auto after = loaded.score_pair(verb, input);
    CHECK(after.probs.at(1) == before.probs.at(1));
    CHECK(after.h_t == before.h_t);
    CHECK(loaded.config().d_model == model.config().d_model);
    CHECK(loaded.vocab().size() == model.vocab().size());

    CHECK_THROWS_AS(ScorerModelF::load(tmp.file("missing.ckpt")), DataError);
    fewrank::test::write_file(tmp.file("junk.ckpt"), "not a checkpoint at all");
    CHECK_THROWS_AS(ScorerModelF::load(tmp.file("junk.ckpt")), DataError);
}

TEST_CASE("vocab tokenization keeps special tokens atomic") {
    Vocab vocab({"apple", "is", "relevant", "irrelevant", "to", "banana"});
    auto tokens = vocab.tokenize("apple is [MASK] (relevant|irrelevant) to banana");
    REQUIRE(tokens.size() == 7);
    CHECK(tokens[2] == "[MASK]");
    CHECK(vocab.encode("apple [MASK]")[1] == Vocab::kMask);
    CHECK(vocab.id_of("nonexistent") == Vocab::kUnk);
    CHECK(vocab.word_of(Vocab::kBos) == "[BOS]");
    CHECK_THROWS_AS(vocab.word_of(9999), UsageError);
}

TEST_CASE("continuous prompt scoring uses the trainable segments") {
    SynthConfig sc;
    sc.n_nli = 4;
    sc.n_qa = 4;
    sc.n_docs = 6;
    sc.n_queries = 2;
    sc.seed = 3;
    auto data = make_synthetic_tasks(sc);
    ScorerModelF model(tiny_config(), build_vocab(data));
    auto prompt = model.make_prompt(
        {"Task: Find the relevance between Query and Document. Query:", "Document:", "Relevant:"});
    CHECK(prompt.s1.rows() == 9);
    CHECK(prompt.s2.rows() == 1);
    CHECK(prompt.s3.rows() == 1);
    CHECK(prompt.embedding_dim() == 8);

    auto [q_ids, d_ids] = model.encode_prompt_input(prompt, data.queries[0],
                                                    data.collection.documents()[0]);
    auto out = model.score_with_prompt(Verbalizer::ranking(), prompt, q_ids, d_ids);
    CHECK(std::isfinite(out.probs.at(1)));

    // perturbing a prompt vector changes the score; the model is untouched
    auto checksum = parameter_checksum(model);
    prompt.s1.row(0).array() += 0.5f;
    auto out2 = model.score_with_prompt(Verbalizer::ranking(), prompt, q_ids, d_ids);
    CHECK(out2.probs.at(1) != out.probs.at(1));
    CHECK(parameter_checksum(model) == checksum);
}
