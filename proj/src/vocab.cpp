#include "fewrank/vocab.hpp"

namespace fewrank {

namespace {
const std::vector<std::string> kSpecials = {"[PAD]", "[BOS]", "[UNK]", "[MASK]"};
}

Vocab::Vocab() {
    for (const auto& s : kSpecials) add(s);
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
    for (const auto& w : words) add(w);
}

int Vocab::add(const std::string& word) {
    if (word.empty()) throw DataError("empty vocabulary word");
    auto it = by_word_.find(word);
    if (it != by_word_.end()) return it->second;
    int id = static_cast<int>(words_.size());
    words_.push_back(word);
    by_word_.emplace(word, id);
    return id;
}

int Vocab::id_of(const std::string& word) const {
    auto it = by_word_.find(word);
    return it == by_word_.end() ? kUnk : it->second;
}

const std::string& Vocab::word_of(int id) const {
    if (id < 0 || id >= static_cast<int>(words_.size()))
        throw UsageError("token id out of range: " + std::to_string(id));
    return words_[static_cast<size_t>(id)];
}

std::vector<std::string> Vocab::tokenize(const std::string& text) const {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t next_special = std::string::npos;
        size_t special_idx = 0;
        for (size_t i = 0; i < kSpecials.size(); ++i) {
            size_t at = text.find(kSpecials[i], pos);
            if (at < next_special) {
                next_special = at;
                special_idx = i;
            }
        }
        size_t plain_end = next_special == std::string::npos ? text.size() : next_special;
        for (auto& w : tokenize_words(std::string_view(text).substr(pos, plain_end - pos)))
            out.push_back(std::move(w));
        if (next_special == std::string::npos) break;
        out.push_back(kSpecials[special_idx]);
        pos = next_special + kSpecials[special_idx].size();
    }
    return out;
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize(text)) ids.push_back(id_of(tok));
    return ids;
}

}  // namespace fewrank
