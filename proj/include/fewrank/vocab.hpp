#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fewrank/error.hpp"
#include "fewrank/text.hpp"

namespace fewrank {

// Word-level vocabulary with reserved special tokens. Token ids are
// stable: specials first, then words in insertion order.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;   // decoder start token
    static constexpr int kUnk = 2;
    static constexpr int kMask = 3;

    Vocab();
    explicit Vocab(const std::vector<std::string>& words);  // deduplicates, keeps order

    int add(const std::string& word);
    int id_of(const std::string& word) const;  // kUnk when absent
    bool contains(const std::string& word) const { return by_word_.count(word) > 0; }
    const std::string& word_of(int id) const;
    size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    // Splits out bracketed special tokens, word-tokenizes the rest.
    std::vector<std::string> tokenize(const std::string& text) const;
    std::vector<int> encode(const std::string& text) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> by_word_;
};

}  // namespace fewrank
