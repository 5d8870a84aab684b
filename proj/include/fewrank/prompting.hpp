#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewrank/corpus.hpp"
#include "fewrank/partition.hpp"

namespace fewrank {

inline constexpr const char* kMaskToken = "[MASK]";

enum class TemplateKind { seq2seq_manual, mask_manual, mask_auto, continuous, none_words };

std::string to_string(TemplateKind kind);
TemplateKind template_kind_from_string(const std::string& s);

struct TemplatePiece {
    enum class Type { literal, query, document, mask, s1, s2, s3 };
    Type type = Type::literal;
    std::string text;  // literal pieces only

    static TemplatePiece lit(std::string t) { return {Type::literal, std::move(t)}; }
    static TemplatePiece slot(Type t) { return {t, {}}; }
};

// Prompt-rendering rule: literal prompt words around [q]/[d] slots.
// Mask kinds carry exactly one [MASK]; the continuous kind carries the
// three tunable segments [s1] [s2] [s3].
class Template {
public:
    Template(TemplateKind kind, std::vector<TemplatePiece> pieces);

    TemplateKind kind() const { return kind_; }
    const std::vector<TemplatePiece>& pieces() const { return pieces_; }

    static Template manual_seq2seq();  // "Query: [q] Document: [d] Relevant:"
    static Template no_words();        // "[q] [d]", all prompt words removed
    static Template manual_mask();     // "[q] is [MASK] (relevant|irrelevant) to [d]"
    static Template continuous_default();

    std::string to_json() const;
    static Template from_json(const std::string& json_text);

private:
    TemplateKind kind_;
    std::vector<TemplatePiece> pieces_;
};

std::string render_seq2seq(const Template& tpl, const Query& q, const Document& d);
std::string render_mask(const Template& tpl, const Query& q, const Document& d);

// Bijection between task labels and label words.
class Verbalizer {
public:
    explicit Verbalizer(std::map<int, std::string> label_to_word);

    const std::string& verbalize(int label) const;
    int deverbalize(const std::string& word) const;

    std::vector<int> labels() const;
    const std::map<int, std::string>& mapping() const { return label_to_word_; }
    size_t size() const { return label_to_word_.size(); }

    static Verbalizer ranking();  // 1 -> "true", 0 -> "false"

private:
    std::map<int, std::string> label_to_word_;
    std::map<std::string, int> word_to_label_;
};

// Label words must tokenize to exactly one token; throws otherwise.
void require_single_token_words(
    const Verbalizer& verbalizer,
    const std::function<std::vector<std::string>(const std::string&)>& tokenize);

// Tunable prompt segments for the frozen-model tuning mode. Rows are
// token positions, columns the model embedding dimension.
struct ContinuousPrompt {
    Eigen::MatrixXf s1, s2, s3;
    std::array<std::string, 3> init_texts;

    int embedding_dim() const { return static_cast<int>(s1.cols()); }
    size_t total_tokens() const { return s1.rows() + s2.rows() + s3.rows(); }
};

// [s1] [q] [s2] [d] [s3]; q/d rows are the frozen vocabulary embeddings.
Eigen::MatrixXf assemble_continuous(const ContinuousPrompt& prompt,
                                    const Eigen::MatrixXf& q_embeddings,
                                    const Eigen::MatrixXf& d_embeddings);

void save_prompt(const ContinuousPrompt& prompt, const std::string& path);
ContinuousPrompt load_prompt(const std::string& path);

struct TemplateCandidateSet {
    std::vector<Template> candidates;
    std::map<size_t, double> scores;  // filled by rank_template_candidates
};

TemplateCandidateSet load_template_candidates(const std::string& path);  // one JSON per line

// Fine-tunes every candidate on every few-shot set via `train_and_eval`
// (returns the dev metric); candidate score = max over sets; returns the
// argmax with ties broken by candidate order.
using TemplateTrainer = std::function<double(const Template&, const TrainSplit&)>;
Template rank_template_candidates(TemplateCandidateSet& candidates,
                                  const std::vector<TrainSplit>& fewshot_sets,
                                  const TemplateTrainer& train_and_eval);

}  // namespace fewrank
