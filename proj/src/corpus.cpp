#include "fewrank/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fewrank/error.hpp"

namespace fewrank {

Collection::Collection(std::vector<Document> docs) : docs_(std::move(docs)) {
    for (size_t i = 0; i < docs_.size(); ++i) {
        if (docs_[i].id.empty()) throw DataError("document with empty id at position " + std::to_string(i));
        auto [it, inserted] = by_id_.emplace(docs_[i].id, i);
        if (!inserted) throw DataError("duplicate document id \"" + docs_[i].id + "\"");
    }
}

const Document& Collection::lookup(const std::string& docid) const {
    auto it = by_id_.find(docid);
    if (it == by_id_.end()) throw DataError("unknown document id \"" + docid + "\"");
    return docs_[it->second];
}

size_t Qrels::label_count() const {
    size_t n = 0;
    for (const auto& [qid, docs] : judgments) n += docs.size();
    return n;
}

int Qrels::grade(const std::string& qid, const std::string& docid) const {
    auto it = judgments.find(qid);
    if (it == judgments.end()) return 0;
    auto jt = it->second.find(docid);
    return jt == it->second.end() ? 0 : jt->second;
}

namespace {

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return in;
}

}  // namespace

Collection load_collection(const std::string& path) {
    auto in = open_or_throw(path);
    std::vector<Document> docs;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected docid<TAB>text");
        if (line.find('\t', tab + 1) != std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) + ": tab inside document text");
        docs.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return Collection(std::move(docs));
}

std::vector<Query> load_queries(const std::string& path) {
    auto in = open_or_throw(path);
    std::vector<Query> queries;
    std::map<std::string, bool> seen;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected qid<TAB>text");
        std::string qid = line.substr(0, tab);
        if (seen.count(qid)) throw DataError(path + ": duplicate query id \"" + qid + "\"");
        seen[qid] = true;
        queries.push_back({qid, line.substr(tab + 1)});
    }
    return queries;
}

Qrels load_qrels(const std::string& path) {
    auto in = open_or_throw(path);
    Qrels qrels;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, iter, docid;
        long grade = 0;
        if (!(ss >> qid >> iter >> docid >> grade))
            throw DataError(path + ":" + std::to_string(lineno) + ": expected `qid 0 docid grade`");
        if (grade < 0)
            throw DataError(path + ":" + std::to_string(lineno) + ": negative grade for (" + qid + ", " + docid + ")");
        auto [it, inserted] = qrels.judgments[qid].emplace(docid, static_cast<int>(grade));
        if (!inserted)
            throw DataError(path + ":" + std::to_string(lineno) + ": repeated judgment for (" + qid + ", " + docid + ")");
    }
    return qrels;
}

void validate_run(const Run& run) {
    for (const auto& [qid, list] : run.entries) {
        std::map<std::string, bool> seen;
        for (size_t i = 0; i < list.size(); ++i) {
            const auto& e = list[i];
            if (e.rank != static_cast<int>(i) + 1)
                throw DataError("run query " + qid + ": non-contiguous ranks (got " +
                                std::to_string(e.rank) + " at position " + std::to_string(i + 1) + ")");
            if (i > 0 && e.score > list[i - 1].score)
                throw DataError("run query " + qid + ": score increases at rank " + std::to_string(e.rank));
            if (seen.count(e.docid))
                throw DataError("run query " + qid + ": duplicate docid \"" + e.docid + "\"");
            seen[e.docid] = true;
        }
    }
}

Run load_run(const std::string& path) {
    auto in = open_or_throw(path);
    Run run;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, q0, docid, tag;
        int rank = 0;
        double score = 0.0;
        if (!(ss >> qid >> q0 >> docid >> rank >> score >> tag))
            throw DataError(path + ":" + std::to_string(lineno) + ": expected `qid Q0 docid rank score tag`");
        run.entries[qid].push_back({docid, rank, score, tag});
    }
    validate_run(run);
    return run;
}

void write_run(const Run& run, const std::string& path) {
    validate_run(run);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    char buf[64];
    for (const auto& [qid, list] : run.entries) {
        for (const auto& e : list) {
            std::snprintf(buf, sizeof(buf), "%.6f", e.score);
            out << qid << " Q0 " << e.docid << ' ' << e.rank << ' ' << buf << ' ' << e.tag << '\n';
        }
    }
}

std::map<std::string, Query> query_map(const std::vector<Query>& queries) {
    std::map<std::string, Query> m;
    for (const auto& q : queries) m[q.id] = q;
    return m;
}

}  // namespace fewrank
