#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "fewrank/corpus.hpp"
#include "fewrank/rng.hpp"

namespace fewrank::test {

// Scratch directory removed at scope exit.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("fewrank_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Random valid run + qrels over shared query ids, for metric oracles and
// round-trip properties.
struct RandomEvalCase {
    Run run;
    Qrels qrels;
};

inline RandomEvalCase random_eval_case(Rng& rng, size_t max_queries = 50, size_t max_docs = 100) {
    RandomEvalCase out;
    size_t n_queries = 1 + rng.below(max_queries);
    for (size_t qi = 0; qi < n_queries; ++qi) {
        std::string qid = "q" + std::to_string(qi);
        size_t n_docs = 1 + rng.below(max_docs);
        std::vector<RunEntry> entries;
        double score = 10.0;
        for (size_t di = 0; di < n_docs; ++di) {
            std::string docid = "d" + std::to_string(di);
            score -= rng.uniform();
            entries.push_back({docid, static_cast<int>(di) + 1, score, "t"});
            // ~half the documents judged, grades 0..3
            if (rng.below(2) == 0) out.qrels.judgments[qid][docid] = static_cast<int>(rng.below(4));
        }
        // every run query must be present in qrels
        if (!out.qrels.judgments.count(qid)) out.qrels.judgments[qid]["dx"] = 0;
        out.run.entries[qid] = std::move(entries);
    }
    return out;
}

}  // namespace fewrank::test
