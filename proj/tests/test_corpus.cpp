#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fewrank/corpus.hpp"
#include "fewrank/error.hpp"
#include "helpers.hpp"

using namespace fewrank;
using fewrank::test::TempDir;
using fewrank::test::write_file;
using fewrank::test::slurp;

TEST_CASE("load_collection parses docid TAB text") {
    TempDir tmp("corpus");
    auto path = write_file(tmp.file("c.tsv"), "d1\thello\nd2\tworld\n");
    auto c = load_collection(path);
    CHECK(c.size() == 2);
    CHECK(c.lookup("d2").text == "world");
    CHECK(c.documents()[0].id == "d1");
}

TEST_CASE("load_collection on empty file gives empty collection") {
    TempDir tmp("corpus");
    auto c = load_collection(write_file(tmp.file("c.tsv"), ""));
    CHECK(c.size() == 0);
}

TEST_CASE("load_collection rejects duplicate ids naming the offender") {
    TempDir tmp("corpus");
    auto path = write_file(tmp.file("c.tsv"), "d1\ta\nd1\tb\n");
    CHECK_THROWS_WITH_AS(load_collection(path), doctest::Contains("d1"), DataError);
}

TEST_CASE("load_collection rejects malformed lines with the line number") {
    TempDir tmp("corpus");
    auto path = write_file(tmp.file("c.tsv"), "d1\ta\nno-tab-here\n");
    CHECK_THROWS_WITH_AS(load_collection(path), doctest::Contains(":2"), DataError);
}

TEST_CASE("load_collection rejects tabs inside text") {
    TempDir tmp("corpus");
    auto path = write_file(tmp.file("c.tsv"), "d1\ta\tb\n");
    CHECK_THROWS_AS(load_collection(path), DataError);
}

TEST_CASE("collection lookup fails cleanly on unknown ids") {
    Collection c({{"d1", "x"}});
    CHECK(c.contains("d1"));
    CHECK(!c.contains("nope"));
    CHECK_THROWS_WITH_AS(c.lookup("nope"), doctest::Contains("nope"), DataError);
}

TEST_CASE("load_qrels parses and validates") {
    TempDir tmp("qrels");
    auto q = load_qrels(write_file(tmp.file("q.txt"), "q1 0 d1 1\n"));
    CHECK(q.judgments.at("q1").at("d1") == 1);

    auto q2 = load_qrels(write_file(tmp.file("q2.txt"), "q1 0 d1 2\nq1 0 d2 0\n"));
    CHECK(q2.judgments.at("q1").size() == 2);
    CHECK(q2.label_count() == 2);

    CHECK_THROWS_AS(load_qrels(write_file(tmp.file("q3.txt"), "q1 0 d1 -1\n")), DataError);
    CHECK_THROWS_AS(load_qrels(write_file(tmp.file("q4.txt"), "q1 0 d1 1\nq1 0 d1 2\n")),
                    DataError);
}

TEST_CASE("write_run emits the TREC line format") {
    TempDir tmp("run");
    Run r;
    r.entries["q1"] = {{"d2", 1, 0.9, "tag"}, {"d1", 2, 0.3, "tag"}};
    write_run(r, tmp.file("r.trec"));
    auto text = slurp(tmp.file("r.trec"));
    CHECK(text == "q1 Q0 d2 1 0.900000 tag\nq1 Q0 d1 2 0.300000 tag\n");
}

TEST_CASE("load_run validates ranks, order and duplicates") {
    TempDir tmp("run");
    CHECK_THROWS_WITH_AS(
        load_run(write_file(tmp.file("gap.trec"), "q1 Q0 d1 1 0.9 t\nq1 Q0 d2 3 0.8 t\n")),
        doctest::Contains("non-contiguous"), DataError);
    CHECK_THROWS_AS(
        load_run(write_file(tmp.file("inv.trec"), "q1 Q0 d1 1 0.5 t\nq1 Q0 d2 2 0.8 t\n")),
        DataError);
    CHECK_THROWS_AS(
        load_run(write_file(tmp.file("dup.trec"), "q1 Q0 d1 1 0.9 t\nq1 Q0 d1 2 0.8 t\n")),
        DataError);
}

TEST_CASE("run round-trip is the identity after one serialization") {
    TempDir tmp("run");
    Rng rng(404);
    for (int trial = 0; trial < 25; ++trial) {
        auto c = fewrank::test::random_eval_case(rng, 8, 20);
        auto p1 = tmp.file("a.trec"), p2 = tmp.file("b.trec");
        write_run(c.run, p1);
        Run reloaded = load_run(p1);
        write_run(reloaded, p2);
        CHECK(slurp(p1) == slurp(p2));
        REQUIRE(reloaded.entries.size() == c.run.entries.size());
        for (const auto& [qid, list] : c.run.entries) {
            const auto& other = reloaded.entries.at(qid);
            REQUIRE(other.size() == list.size());
            for (size_t i = 0; i < list.size(); ++i) {
                CHECK(other[i].docid == list[i].docid);
                CHECK(other[i].rank == list[i].rank);
                CHECK(other[i].score == doctest::Approx(list[i].score).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("collection and qrels round-trip through their formats") {
    TempDir tmp("rt");
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        std::string ctext, qtext;
        size_t n = 1 + rng.below(20);
        for (size_t i = 0; i < n; ++i) {
            ctext += "d" + std::to_string(i) + "\ttext " + std::to_string(rng.below(100)) + "\n";
            qtext += "q" + std::to_string(rng.below(5)) + " 0 d" + std::to_string(i) + " " +
                     std::to_string(rng.below(3)) + "\n";
        }
        auto cpath = write_file(tmp.file("c.tsv"), ctext);
        auto c = load_collection(cpath);
        std::string round;
        for (const auto& d : c.documents()) round += d.id + "\t" + d.text + "\n";
        CHECK(round == ctext);

        auto qpath = write_file(tmp.file("q.txt"), qtext);
        auto qr = load_qrels(qpath);
        std::string qround;
        size_t labels = 0;
        for (const auto& [qid, docs] : qr.judgments)
            for (const auto& [docid, grade] : docs) {
                qround += qid + " 0 " + docid + " " + std::to_string(grade) + "\n";
                ++labels;
            }
        auto qr2 = load_qrels(write_file(tmp.file("q2.txt"), qround));
        CHECK(qr2.judgments == qr.judgments);
        CHECK(labels == qr.label_count());
    }
}

TEST_CASE("load_queries rejects duplicates") {
    TempDir tmp("queries");
    auto qs = load_queries(write_file(tmp.file("q.tsv"), "q1\thello\nq2\tthere\n"));
    CHECK(qs.size() == 2);
    CHECK(query_map(qs).at("q2").text == "there");
    CHECK_THROWS_AS(load_queries(write_file(tmp.file("d.tsv"), "q1\ta\nq1\tb\n")), DataError);
}

TEST_CASE("missing files are rejected with the path") {
    CHECK_THROWS_WITH_AS(load_collection("/nonexistent/x.tsv"), doctest::Contains("/nonexistent"),
                         DataError);
    CHECK_THROWS_AS(load_qrels("/nonexistent/x.txt"), DataError);
    CHECK_THROWS_AS(load_run("/nonexistent/x.trec"), DataError);
}
