#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace fewrank {

struct Query {
    std::string id;
    std::string text;
};

struct Document {
    std::string id;
    std::string text;
};

// Immutable after load; safe to share across concurrent readers.
class Collection {
public:
    Collection() = default;
    explicit Collection(std::vector<Document> docs);
    Collection(std::initializer_list<Document> docs)
        : Collection(std::vector<Document>(docs)) {}

    const std::vector<Document>& documents() const { return docs_; }
    size_t size() const { return docs_.size(); }
    bool contains(const std::string& docid) const { return by_id_.count(docid) > 0; }
    const Document& lookup(const std::string& docid) const;  // throws DataError on unknown id

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, size_t> by_id_;
};

// query-id -> document-id -> relevance grade (>= 0)
struct Qrels {
    std::map<std::string, std::map<std::string, int>> judgments;

    size_t label_count() const;
    int grade(const std::string& qid, const std::string& docid) const;  // 0 if unjudged
};

struct RunEntry {
    std::string docid;
    int rank = 0;
    double score = 0.0;
    std::string tag;
};

// Ranked result lists per query. Invariants: ranks 1..n contiguous,
// scores non-increasing with rank, no duplicate docid per query.
struct Run {
    std::map<std::string, std::vector<RunEntry>> entries;
};

void validate_run(const Run& run);  // throws DataError on invariant violation

Collection load_collection(const std::string& path);
std::vector<Query> load_queries(const std::string& path);
Qrels load_qrels(const std::string& path);
Run load_run(const std::string& path);
void write_run(const Run& run, const std::string& path);

std::map<std::string, Query> query_map(const std::vector<Query>& queries);

}  // namespace fewrank
