#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fewrank/error.hpp"
#include "fewrank/prompting.hpp"
#include "fewrank/text.hpp"
#include "helpers.hpp"

using namespace fewrank;
using fewrank::test::TempDir;
using fewrank::test::write_file;

TEST_CASE("manual seq2seq rendering") {
    auto tpl = Template::manual_seq2seq();
    CHECK(render_seq2seq(tpl, {"q", "hello"}, {"d", "world"}) ==
          "Query: hello Document: world Relevant:");
    CHECK(render_seq2seq(tpl, {"q", ""}, {"d", "x"}) == "Query:  Document: x Relevant:");
}

TEST_CASE("no-word prompt removes every prompt word") {
    CHECK(render_seq2seq(Template::no_words(), {"q", "hello"}, {"d", "world"}) == "hello world");
}

TEST_CASE("mask rendering carries exactly one mask token") {
    auto tpl = Template::manual_mask();
    auto text = render_mask(tpl, {"q", "apple"}, {"d", "fruit facts"});
    CHECK(text == "apple is [MASK] (relevant|irrelevant) to fruit facts");

    auto auto_tpl = Template(
        TemplateKind::mask_auto,
        {TemplatePiece::slot(TemplatePiece::Type::query), TemplatePiece::lit("? Which is "),
         TemplatePiece::slot(TemplatePiece::Type::mask), TemplatePiece::lit("? "),
         TemplatePiece::slot(TemplatePiece::Type::document)});
    CHECK(render_mask(auto_tpl, {"q", "a"}, {"d", "b"}) == "a? Which is [MASK]? b");
}

TEST_CASE("template invariants are enforced at construction") {
    using P = TemplatePiece;
    // missing [d]
    CHECK_THROWS_AS(Template(TemplateKind::seq2seq_manual, {P::slot(P::Type::query)}), DataError);
    // two [q] slots
    CHECK_THROWS_AS(Template(TemplateKind::seq2seq_manual,
                             {P::slot(P::Type::query), P::slot(P::Type::query),
                              P::slot(P::Type::document)}),
                    DataError);
    // mask kind without a mask
    CHECK_THROWS_AS(Template(TemplateKind::mask_manual,
                             {P::slot(P::Type::query), P::slot(P::Type::document)}),
                    DataError);
    // mask in a seq2seq template
    CHECK_THROWS_AS(Template(TemplateKind::seq2seq_manual,
                             {P::slot(P::Type::query), P::slot(P::Type::document),
                              P::slot(P::Type::mask)}),
                    DataError);
    // continuous without all three segments
    CHECK_THROWS_AS(Template(TemplateKind::continuous,
                             {P::slot(P::Type::s1), P::slot(P::Type::query),
                              P::slot(P::Type::document)}),
                    DataError);
}

TEST_CASE("wrong template kind is rejected at render") {
    CHECK_THROWS_AS(render_mask(Template::manual_seq2seq(), {"q", "a"}, {"d", "b"}), UsageError);
    CHECK_THROWS_AS(render_seq2seq(Template::manual_mask(), {"q", "a"}, {"d", "b"}), UsageError);
}

TEST_CASE("rendered strings contain query, document and literals in order") {
    Rng rng(21);
    std::vector<Template> templates = {Template::manual_seq2seq(), Template::manual_mask(),
                                       Template::no_words()};
    for (int trial = 0; trial < 50; ++trial) {
        std::string qtext = "term" + std::to_string(rng.below(100));
        std::string dtext = "body " + std::to_string(rng.below(100)) + " words";
        for (const auto& tpl : templates) {
            std::string text = tpl.kind() == TemplateKind::mask_manual
                                   ? render_mask(tpl, {"q", qtext}, {"d", dtext})
                                   : render_seq2seq(tpl, {"q", qtext}, {"d", dtext});
            CHECK(text.find(qtext) != std::string::npos);
            CHECK(text.find(dtext) != std::string::npos);
            size_t cursor = 0;
            for (const auto& p : tpl.pieces()) {
                if (p.type != TemplatePiece::Type::literal) continue;
                size_t at = text.find(p.text, cursor);
                CHECK(at != std::string::npos);
                cursor = at + p.text.size();
            }
        }
    }
}

TEST_CASE("verbalizer maps ranking labels to true/false bijectively") {
    auto verb = Verbalizer::ranking();
    CHECK(verb.verbalize(1) == "true");
    CHECK(verb.verbalize(0) == "false");
    CHECK(verb.deverbalize("true") == 1);
    for (int y : verb.labels()) CHECK(verb.deverbalize(verb.verbalize(y)) == y);

    Verbalizer nli({{0, "no"}, {1, "maybe"}, {2, "yes"}});
    for (int y : nli.labels()) CHECK(nli.deverbalize(nli.verbalize(y)) == y);

    CHECK_THROWS_AS(verb.verbalize(7), DataError);
    CHECK_THROWS_AS(verb.deverbalize("unknown"), DataError);
    CHECK_THROWS_AS(Verbalizer({{0, "same"}, {1, "same"}}), DataError);
}

TEST_CASE("label words must be single tokens") {
    auto tokenizer = [](const std::string& s) { return tokenize_words(s); };
    CHECK_NOTHROW(require_single_token_words(Verbalizer::ranking(), tokenizer));
    CHECK_THROWS_AS(require_single_token_words(Verbalizer({{0, "no"}, {1, "two words"}}),
                                               tokenizer),
                    DataError);
}

TEST_CASE("assemble_continuous concatenates segments in order") {
    ContinuousPrompt prompt;
    const int d = 4;
    prompt.s1 = Eigen::MatrixXf::Constant(2, d, 1.0f);
    prompt.s2 = Eigen::MatrixXf::Constant(1, d, 2.0f);
    prompt.s3 = Eigen::MatrixXf::Constant(1, d, 3.0f);
    Eigen::MatrixXf q = Eigen::MatrixXf::Constant(3, d, 4.0f);
    Eigen::MatrixXf doc = Eigen::MatrixXf::Constant(4, d, 5.0f);

    auto out = assemble_continuous(prompt, q, doc);
    CHECK(out.rows() == 11);
    CHECK(out.cols() == d);
    CHECK(out(0, 0) == 1.0f);
    CHECK(out(2, 0) == 4.0f);
    CHECK(out(5, 0) == 2.0f);
    CHECK(out(6, 0) == 5.0f);
    CHECK(out(10, 0) == 3.0f);

    // frozen q/d rows are copied, not aliased
    out(2, 0) = 99.0f;
    CHECK(q(0, 0) == 4.0f);

    // zero-length middle segment is allowed
    prompt.s2.resize(0, d);
    CHECK(assemble_continuous(prompt, q, doc).rows() == 10);

    Eigen::MatrixXf bad = Eigen::MatrixXf::Zero(2, d + 1);
    CHECK_THROWS_AS(assemble_continuous(prompt, bad, doc), DataError);
}

TEST_CASE("template JSON round-trips and candidate files load") {
    TempDir tmp("tpl");
    auto tpl = Template::manual_seq2seq();
    auto restored = Template::from_json(tpl.to_json());
    CHECK(restored.kind() == tpl.kind());
    REQUIRE(restored.pieces().size() == tpl.pieces().size());
    for (size_t i = 0; i < tpl.pieces().size(); ++i) {
        CHECK(restored.pieces()[i].type == tpl.pieces()[i].type);
        CHECK(restored.pieces()[i].text == tpl.pieces()[i].text);
    }

    auto path = write_file(tmp.file("cands.jsonl"), Template::manual_seq2seq().to_json() + "\n" +
                                                        Template::no_words().to_json() + "\n");
    auto set = load_template_candidates(path);
    CHECK(set.candidates.size() == 2);

    CHECK_THROWS_AS(Template::from_json("{\"pieces\": []}"), DataError);
    CHECK_THROWS_AS(load_template_candidates(tmp.file("missing.jsonl")), DataError);
}

TEST_CASE("candidate ranking picks the best and breaks ties by order") {
    TemplateCandidateSet set;
    set.candidates = {Template::manual_seq2seq(), Template::no_words()};
    std::vector<TrainSplit> sets(3);

    // rigged trainer: second candidate wins on one few-shot set
    TemplateTrainer trainer = [](const Template& tpl, const TrainSplit&) {
        return tpl.kind() == TemplateKind::none_words ? 0.9 : 0.5;
    };
    auto best = rank_template_candidates(set, sets, trainer);
    CHECK(best.kind() == TemplateKind::none_words);
    CHECK(set.scores.at(0) == doctest::Approx(0.5));
    CHECK(set.scores.at(1) == doctest::Approx(0.9));

    // single candidate returned unconditionally
    TemplateCandidateSet single;
    single.candidates = {Template::manual_mask()};
    auto only = rank_template_candidates(single, sets, [](const Template&, const TrainSplit&) {
        return 0.0;
    });
    CHECK(only.kind() == TemplateKind::mask_manual);

    // ties go to the first candidate
    TemplateCandidateSet tied;
    tied.candidates = {Template::manual_seq2seq(), Template::no_words()};
    auto first = rank_template_candidates(tied, sets, [](const Template&, const TrainSplit&) {
        return 0.7;
    });
    CHECK(first.kind() == TemplateKind::seq2seq_manual);
}

TEST_CASE("candidate ranking attaches the candidate to trainer failures") {
    TemplateCandidateSet set;
    set.candidates = {Template::manual_seq2seq()};
    std::vector<TrainSplit> sets(1);
    CHECK_THROWS_WITH_AS(
        rank_template_candidates(set, sets,
                                 [](const Template&, const TrainSplit&) -> double {
                                     throw DataError("trainer exploded");
                                 }),
        doctest::Contains("candidate 0"), DataError);
}

TEST_CASE("prompt files round-trip") {
    TempDir tmp("prompt");
    ContinuousPrompt prompt;
    prompt.s1 = Eigen::MatrixXf::Random(3, 8);
    prompt.s2 = Eigen::MatrixXf::Random(1, 8);
    prompt.s3 = Eigen::MatrixXf::Random(2, 8);
    prompt.init_texts = {"a", "b", "c"};
    save_prompt(prompt, tmp.file("p.bin"));
    auto loaded = load_prompt(tmp.file("p.bin"));
    CHECK(loaded.s1 == prompt.s1);
    CHECK(loaded.s2 == prompt.s2);
    CHECK(loaded.s3 == prompt.s3);
    CHECK(loaded.init_texts == prompt.init_texts);
}
