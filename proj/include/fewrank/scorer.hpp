#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fewrank/corpus.hpp"
#include "fewrank/error.hpp"
#include "fewrank/label_head.hpp"
#include "fewrank/prompting.hpp"
#include "fewrank/rng.hpp"
#include "fewrank/tensor.hpp"
#include "fewrank/vocab.hpp"

namespace fewrank {

struct MicroModelConfig {
    int vocab_size = 0;  // 0 -> taken from the vocabulary at construction
    int d_model = 64;
    int n_layers = 2;  // encoder and decoder layer counts
    int n_heads = 4;
    int max_len = 64;
    uint64_t seed = 0;
    int d_ff = 0;               // 0 -> 4 * d_model
    bool encoder_only = false;  // mask-position scoring instead of a decoder
    bool tie_embeddings = false;

    void validate() const {
        if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_len < 2)
            throw UsageError("model config: all counts must be >= 1 (max_len >= 2)");
        if (d_model % n_heads != 0)
            throw UsageError("model config: d_model must be divisible by n_heads");
    }
};

// Encoder token ids ready for the model, document already truncated.
struct EncodedInput {
    std::vector<int> ids;
    int mask_pos = -1;  // position of the single [MASK] token, -1 if none
};

// Micro encoder-decoder scorer. Pre-layer-norm transformer, sinusoidal
// positions, single-step greedy decode: only the first decoder token is
// ever read, so no generation loop exists. T is float in the training
// pipeline and double in gradient-check mode.
template <typename T>
class ScorerModel {
public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using TapeT = Tape<T>;
    using Id = typename TapeT::Id;

    struct ParamRef {
        std::string name;
        Mat* mat;
    };

    ScorerModel(MicroModelConfig config, Vocab vocab)
        : cfg_(config), vocab_(std::move(vocab)) {
        if (cfg_.vocab_size == 0) cfg_.vocab_size = static_cast<int>(vocab_.size());
        if (cfg_.vocab_size != static_cast<int>(vocab_.size()))
            throw UsageError("config vocab_size disagrees with the vocabulary");
        if (cfg_.d_ff == 0) cfg_.d_ff = 4 * cfg_.d_model;
        cfg_.validate();
        init_params();
        init_positional();
    }

    const MicroModelConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }

    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        out.reserve(params_.size());
        for (auto& [name, mat] : params_) out.push_back({name, &mat});
        return out;
    }
    std::vector<std::pair<std::string, const Mat*>> parameters_const() const {
        std::vector<std::pair<std::string, const Mat*>> out;
        for (const auto& [name, mat] : params_) out.emplace_back(name, &mat);
        return out;
    }
    size_t parameter_count() const {
        size_t n = 0;
        for (const auto& [name, mat] : params_) n += static_cast<size_t>(mat.size());
        return n;
    }

    const Mat& param(const std::string& name) const {
        for (const auto& [n, m] : params_)
            if (n == name) return m;
        throw UsageError("unknown parameter " + name);
    }

    // --- input construction ------------------------------------------------

    // Fills template slots with tokenized query/document. The document is
    // truncated from the right to fit max_len; the query never is. Throws
    // if the template plus query alone overflow.
    EncodedInput encode_input(const Template& tpl, const Query& q, const Document& d) const {
        std::vector<std::vector<int>> segments;
        int doc_segment = -1;
        for (const auto& p : tpl.pieces()) {
            switch (p.type) {
                case TemplatePiece::Type::literal:
                    segments.push_back(vocab_.encode(p.text));
                    break;
                case TemplatePiece::Type::query:
                    segments.push_back(vocab_.encode(q.text));
                    break;
                case TemplatePiece::Type::document:
                    doc_segment = static_cast<int>(segments.size());
                    segments.push_back(vocab_.encode(d.text));
                    break;
                case TemplatePiece::Type::mask:
                    segments.push_back({Vocab::kMask});
                    break;
                default:
                    throw UsageError("continuous templates use encode_prompt_input");
            }
        }
        size_t total = 0;
        for (const auto& s : segments) total += s.size();
        size_t limit = static_cast<size_t>(cfg_.max_len);
        if (total > limit) {
            size_t overflow = total - limit;
            auto& doc = segments[doc_segment];
            if (doc.size() < overflow)
                throw DataError("rendered input overflows max_len even with an empty document");
            doc.resize(doc.size() - overflow);
        }
        EncodedInput input;
        for (const auto& s : segments) input.ids.insert(input.ids.end(), s.begin(), s.end());
        for (size_t i = 0; i < input.ids.size(); ++i) {
            if (input.ids[i] == Vocab::kMask) {
                input.mask_pos = static_cast<int>(i);
                break;
            }
        }
        return input;
    }

    // Token id lists for the [s1] [q] [s2] [d] [s3] scheme; the document
    // side is truncated so the assembled sequence fits max_len.
    std::pair<std::vector<int>, std::vector<int>> encode_prompt_input(
        const ContinuousPrompt& prompt, const Query& q, const Document& d) const {
        auto q_ids = vocab_.encode(q.text);
        auto d_ids = vocab_.encode(d.text);
        size_t fixed = prompt.total_tokens() + q_ids.size();
        size_t limit = static_cast<size_t>(cfg_.max_len);
        if (fixed > limit)
            throw DataError("prompt segments plus query overflow max_len");
        if (fixed + d_ids.size() > limit) d_ids.resize(limit - fixed);
        return {std::move(q_ids), std::move(d_ids)};
    }

    // --- scoring -----------------------------------------------------------

    LabelWordHead label_word_head(const Verbalizer& verbalizer) const {
        LabelWordHead head;
        for (const auto& [label, word] : verbalizer.mapping()) {
            int id = label_token_id(word);
            head.vectors[word] = lm_matrix().row(id).template cast<double>();
        }
        return head;
    }

    ScoreOutput score_pair(const Verbalizer& verbalizer, const EncodedInput& input) const {
        if (cfg_.encoder_only)
            throw UsageError("score_pair requires an encoder-decoder model");
        TapeT tape;
        auto leaves = param_leaves(tape);
        Id enc = build_encoder(tape, leaves, encoder_rows(tape, leaves, input.ids));
        Id h = decode_first_token(tape, leaves, enc);
        return output_from_hidden(verbalizer, tape, h);
    }

    ScoreOutput score_pair(const Verbalizer& verbalizer, const Template& tpl, const Query& q,
                           const Document& d) const {
        return score_pair(verbalizer, encode_input(tpl, q, d));
    }

    // Hidden state read at the [MASK] position of an encoder-only model.
    ScoreOutput score_mask_pair(const Verbalizer& verbalizer, const EncodedInput& input) const {
        if (!cfg_.encoder_only)
            throw UsageError("score_mask_pair requires an encoder-only model");
        int masks = 0;
        for (int id : input.ids)
            if (id == Vocab::kMask) ++masks;
        if (masks != 1)
            throw DataError("mask scoring needs exactly one [MASK] token, got " +
                            std::to_string(masks));
        TapeT tape;
        auto leaves = param_leaves(tape);
        Id enc = build_encoder(tape, leaves, encoder_rows(tape, leaves, input.ids));
        Id h = tape.row(enc, input.mask_pos);
        return output_from_hidden(verbalizer, tape, h);
    }

    ScoreOutput score_with_prompt(const Verbalizer& verbalizer, const ContinuousPrompt& prompt,
                                  const std::vector<int>& q_ids,
                                  const std::vector<int>& d_ids) const {
        if (cfg_.encoder_only)
            throw UsageError("prompt scoring requires an encoder-decoder model");
        TapeT tape;
        auto leaves = param_leaves(tape);
        auto prompt_leaves = prompt_param_leaves(tape, prompt);
        Id rows = prompt_rows(tape, leaves, prompt_leaves, q_ids, d_ids);
        Id enc = build_encoder(tape, leaves, rows);
        Id h = decode_first_token(tape, leaves, enc);
        return output_from_hidden(verbalizer, tape, h);
    }

    // --- training graph ----------------------------------------------------

    struct ParamLeaves {
        std::vector<Id> ids;  // aligned with parameters() order
    };

    ParamLeaves param_leaves(TapeT& tape) const {
        ParamLeaves leaves;
        for (const auto& [name, mat] : params_) leaves.ids.push_back(tape.leaf(mat));
        return leaves;
    }

    struct PromptLeaves {
        Id s1, s2, s3;
    };

    PromptLeaves prompt_param_leaves(TapeT& tape, const ContinuousPrompt& prompt) const {
        if (prompt.embedding_dim() != cfg_.d_model)
            throw DataError("prompt embedding dimension does not match d_model");
        return {tape.leaf(prompt.s1.template cast<T>()), tape.leaf(prompt.s2.template cast<T>()),
                tape.leaf(prompt.s3.template cast<T>())};
    }

    // Scalar CE loss of one example against the label-word logits.
    Id example_loss(TapeT& tape, const ParamLeaves& leaves, const EncodedInput& input,
                    const Verbalizer& verbalizer, int gold_label) const {
        Id h;
        if (cfg_.encoder_only) {
            int masks = 0;
            for (int id : input.ids)
                if (id == Vocab::kMask) ++masks;
            if (masks != 1) throw DataError("mask training input needs exactly one [MASK]");
            Id enc = build_encoder(tape, leaves, encoder_rows(tape, leaves, input.ids));
            h = tape.row(enc, input.mask_pos);
        } else {
            Id enc = build_encoder(tape, leaves, encoder_rows(tape, leaves, input.ids));
            h = decode_first_token(tape, leaves, enc);
        }
        return label_ce(tape, leaves, h, verbalizer, gold_label);
    }

    Id example_loss_with_prompt(TapeT& tape, const ParamLeaves& leaves,
                                const PromptLeaves& prompt_leaves, const std::vector<int>& q_ids,
                                const std::vector<int>& d_ids, const Verbalizer& verbalizer,
                                int gold_label) const {
        Id rows = prompt_rows(tape, leaves, prompt_leaves, q_ids, d_ids);
        Id enc = build_encoder(tape, leaves, rows);
        Id h = decode_first_token(tape, leaves, enc);
        return label_ce(tape, leaves, h, verbalizer, gold_label);
    }

    // Copies current gradients out of the tape, aligned with parameters().
    std::vector<Mat> read_grads(const TapeT& tape, const ParamLeaves& leaves) const {
        std::vector<Mat> grads;
        grads.reserve(leaves.ids.size());
        size_t i = 0;
        for (const auto& [name, mat] : params_) {
            const Mat& g = tape.grad(leaves.ids[i++]);
            grads.push_back(g.size() == 0 ? Mat::Zero(mat.rows(), mat.cols()) : g);
        }
        return grads;
    }

    int label_token_id(const std::string& word) const {
        auto tokens = vocab_.tokenize(word);
        if (tokens.size() != 1)
            throw DataError("label word \"" + word + "\" is not a single token");
        if (!vocab_.contains(tokens[0]))
            throw DataError("label word \"" + word + "\" is not in the vocabulary");
        return vocab_.id_of(tokens[0]);
    }

    // Verbalizer labels in ascending order with their label-word token ids.
    std::vector<std::pair<int, int>> label_ids(const Verbalizer& verbalizer) const {
        std::vector<std::pair<int, int>> out;
        for (const auto& [label, word] : verbalizer.mapping())
            out.emplace_back(label, label_token_id(word));
        return out;
    }

    // --- persistence ---------------------------------------------------

    void save(const std::string& path) const;
    static ScorerModel load(const std::string& path);

    // Frozen embedding rows at input scale (continuous prompt vectors live
    // at this scale; no further scaling is applied to them).
    Eigen::MatrixXf embedding_rows(const std::vector<int>& ids) const {
        const Mat& E = param("embed.tok");
        Eigen::MatrixXf out(static_cast<Eigen::Index>(ids.size()), cfg_.d_model);
        for (size_t i = 0; i < ids.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) =
                E.row(ids[i]).template cast<float>() * static_cast<float>(embed_scale());
        return out;
    }

    ContinuousPrompt make_prompt(const std::array<std::string, 3>& init_texts) const {
        ContinuousPrompt prompt;
        prompt.init_texts = init_texts;
        Eigen::MatrixXf* parts[3] = {&prompt.s1, &prompt.s2, &prompt.s3};
        for (int i = 0; i < 3; ++i) {
            auto ids = vocab_.encode(init_texts[static_cast<size_t>(i)]);
            if (ids.empty()) throw DataError("prompt init text tokenizes to nothing");
            *parts[i] = embedding_rows(ids);
        }
        return prompt;
    }

private:
    MicroModelConfig cfg_;
    Vocab vocab_;
    std::vector<std::pair<std::string, Mat>> params_;
    Mat positional_;  // max_len x d_model, fixed sinusoidal table

    const Mat& lm_matrix() const { return cfg_.tie_embeddings ? param("embed.tok") : param("lm_head.w"); }

    Id lm_leaf(const ParamLeaves& leaves) const { return leaf_of(leaves, cfg_.tie_embeddings ? "embed.tok" : "lm_head.w"); }

    Id leaf_of(const ParamLeaves& leaves, const std::string& name) const {
        for (size_t i = 0; i < params_.size(); ++i)
            if (params_[i].first == name) return leaves.ids[i];
        throw UsageError("unknown parameter " + name);
    }

    void add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng,
                   double stddev) {
        Mat m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                m(r, c) = static_cast<T>(stddev == 0.0 ? 0.0 : rng.normal(0.0, stddev));
        params_.emplace_back(name, std::move(m));
    }

    void add_ln(const std::string& prefix, Rng&) {
        Mat g = Mat::Ones(1, cfg_.d_model);
        Mat b = Mat::Zero(1, cfg_.d_model);
        params_.emplace_back(prefix + ".g", std::move(g));
        params_.emplace_back(prefix + ".b", std::move(b));
    }

    void add_attn(const std::string& prefix, Rng& rng) {
        const int d = cfg_.d_model;
        const double attn_std = std::sqrt(1.0 / d);
        add_param(prefix + ".wq", d, d, rng, attn_std);
        // wk starts as a copy of wq so Q.K^T is identity-aligned at init
        // and same-token matching is visible before any training
        params_.emplace_back(prefix + ".wk", params_.back().second);
        add_param(prefix + ".wv", d, d, rng, attn_std);
        add_param(prefix + ".wo", d, d, rng, attn_std);
    }

    void add_block(const std::string& prefix, Rng& rng, bool with_cross) {
        const int d = cfg_.d_model, ff = cfg_.d_ff;
        const double ffn_in_std = std::sqrt(2.0 / (d + ff));
        add_ln(prefix + ".ln1", rng);
        add_attn(prefix + ".self", rng);
        if (with_cross) {
            add_ln(prefix + ".ln_cross", rng);
            add_attn(prefix + ".cross", rng);
        }
        add_ln(prefix + ".ln2", rng);
        add_param(prefix + ".ffn.w1", d, ff, rng, ffn_in_std);
        add_param(prefix + ".ffn.b1", 1, ff, rng, 0.0);
        add_param(prefix + ".ffn.w2", ff, d, rng, ffn_in_std);
        add_param(prefix + ".ffn.b2", 1, d, rng, 0.0);
    }

    void init_params() {
        Rng rng(derive_seed(cfg_.seed, "model-init"));
        const int d = cfg_.d_model;
        add_param("embed.tok", cfg_.vocab_size, d, rng, std::sqrt(1.0 / d));
        for (int i = 0; i < cfg_.n_layers; ++i)
            add_block("enc." + std::to_string(i), rng, false);
        add_ln("enc.final_ln", rng);
        if (!cfg_.encoder_only) {
            for (int i = 0; i < cfg_.n_layers; ++i)
                add_block("dec." + std::to_string(i), rng, true);
            add_ln("dec.final_ln", rng);
        }
        if (!cfg_.tie_embeddings)
            add_param("lm_head.w", cfg_.vocab_size, d, rng, std::sqrt(1.0 / d));
    }

    void init_positional() {
        positional_.resize(cfg_.max_len, cfg_.d_model);
        for (int pos = 0; pos < cfg_.max_len; ++pos) {
            for (int i = 0; i < cfg_.d_model; ++i) {
                double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / cfg_.d_model);
                positional_(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
            }
        }
    }

    // Token embeddings are scaled by sqrt(d_model) before the positional
    // table is added, keeping identity signal comparable to position.
    T embed_scale() const { return static_cast<T>(std::sqrt(static_cast<double>(cfg_.d_model))); }

    Id encoder_rows(TapeT& tape, const ParamLeaves& leaves, const std::vector<int>& ids) const {
        if (ids.empty()) throw DataError("cannot score an empty token sequence");
        if (static_cast<int>(ids.size()) > cfg_.max_len)
            throw DataError("input length " + std::to_string(ids.size()) + " exceeds max_len");
        Id x = tape.scale(tape.gather_rows(leaf_of(leaves, "embed.tok"), ids), embed_scale());
        return tape.add_const(x, positional_.topRows(static_cast<Eigen::Index>(ids.size())));
    }

    Id prompt_rows(TapeT& tape, const ParamLeaves& leaves, const PromptLeaves& prompt_leaves,
                   const std::vector<int>& q_ids, const std::vector<int>& d_ids) const {
        Id E = leaf_of(leaves, "embed.tok");
        std::vector<Id> parts;
        parts.push_back(prompt_leaves.s1);
        if (!q_ids.empty()) parts.push_back(tape.scale(tape.gather_rows(E, q_ids), embed_scale()));
        parts.push_back(prompt_leaves.s2);
        if (!d_ids.empty()) parts.push_back(tape.scale(tape.gather_rows(E, d_ids), embed_scale()));
        parts.push_back(prompt_leaves.s3);
        Id x = tape.concat_rows(parts);
        Eigen::Index len = tape.value(x).rows();
        if (len > cfg_.max_len) throw DataError("assembled prompt input exceeds max_len");
        return tape.add_const(x, positional_.topRows(len));
    }

    Id attention(TapeT& tape, Id x_q, Id x_kv, const ParamLeaves& leaves,
                 const std::string& prefix) const {
        Id q = tape.matmul(x_q, leaf_of(leaves, prefix + ".wq"));
        Id k = tape.matmul(x_kv, leaf_of(leaves, prefix + ".wk"));
        Id v = tape.matmul(x_kv, leaf_of(leaves, prefix + ".wv"));
        const int dk = cfg_.d_model / cfg_.n_heads;
        const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
        std::vector<Id> heads;
        for (int h = 0; h < cfg_.n_heads; ++h) {
            Id qh = tape.slice_cols(q, h * dk, dk);
            Id kh = tape.slice_cols(k, h * dk, dk);
            Id vh = tape.slice_cols(v, h * dk, dk);
            Id scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk);
            heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
        }
        return tape.matmul(tape.concat_cols(heads), leaf_of(leaves, prefix + ".wo"));
    }

    Id ffn(TapeT& tape, Id x, const ParamLeaves& leaves, const std::string& prefix) const {
        Id h = tape.add_rowvec(tape.matmul(x, leaf_of(leaves, prefix + ".w1")),
                               leaf_of(leaves, prefix + ".b1"));
        return tape.add_rowvec(tape.matmul(tape.gelu(h), leaf_of(leaves, prefix + ".w2")),
                               leaf_of(leaves, prefix + ".b2"));
    }

    Id layer_norm_at(TapeT& tape, Id x, const ParamLeaves& leaves,
                     const std::string& prefix) const {
        return tape.layer_norm(x, leaf_of(leaves, prefix + ".g"), leaf_of(leaves, prefix + ".b"));
    }

    // Pre-LN encoder stack; returns final-normed states (L x d).
    Id build_encoder(TapeT& tape, const ParamLeaves& leaves, Id rows) const {
        Id x = rows;
        for (int i = 0; i < cfg_.n_layers; ++i) {
            std::string p = "enc." + std::to_string(i);
            Id a = layer_norm_at(tape, x, leaves, p + ".ln1");
            x = tape.add(x, attention(tape, a, a, leaves, p + ".self"));
            Id b = layer_norm_at(tape, x, leaves, p + ".ln2");
            x = tape.add(x, ffn(tape, b, leaves, p + ".ffn"));
        }
        return layer_norm_at(tape, x, leaves, "enc.final_ln");
    }

    // Single decoder step from [BOS]; returns the 1 x d hidden state of
    // the first decoder token.
    Id decode_first_token(TapeT& tape, const ParamLeaves& leaves, Id encoder_out) const {
        Id x = tape.scale(tape.gather_rows(leaf_of(leaves, "embed.tok"), {Vocab::kBos}),
                          embed_scale());
        x = tape.add_const(x, positional_.topRows(1));
        for (int i = 0; i < cfg_.n_layers; ++i) {
            std::string p = "dec." + std::to_string(i);
            Id a = layer_norm_at(tape, x, leaves, p + ".ln1");
            x = tape.add(x, attention(tape, a, a, leaves, p + ".self"));
            Id b = layer_norm_at(tape, x, leaves, p + ".ln_cross");
            x = tape.add(x, attention(tape, b, encoder_out, leaves, p + ".cross"));
            Id c = layer_norm_at(tape, x, leaves, p + ".ln2");
            x = tape.add(x, ffn(tape, c, leaves, p + ".ffn"));
        }
        x = layer_norm_at(tape, x, leaves, "dec.final_ln");
        return tape.row(x, 0);
    }

    // 1 x K label-word logits row ordered by ascending label.
    Id label_logits_row(TapeT& tape, const ParamLeaves& leaves, Id h,
                        const Verbalizer& verbalizer) const {
        std::vector<int> ids;
        for (const auto& [label, id] : label_ids(verbalizer)) ids.push_back(id);
        Id rows = tape.gather_rows(lm_leaf(leaves), ids);
        return tape.matmul_nt(h, rows);
    }

    Id label_ce(TapeT& tape, const ParamLeaves& leaves, Id h, const Verbalizer& verbalizer,
                int gold_label) const {
        auto pairs = label_ids(verbalizer);
        Eigen::Index target = -1;
        for (size_t i = 0; i < pairs.size(); ++i)
            if (pairs[i].first == gold_label) target = static_cast<Eigen::Index>(i);
        if (target < 0)
            throw DataError("gold label " + std::to_string(gold_label) +
                            " outside the verbalizer's label set");
        return tape.cross_entropy(label_logits_row(tape, leaves, h, verbalizer), target);
    }

    ScoreOutput output_from_hidden(const Verbalizer& verbalizer, TapeT& tape, Id h) const {
        Eigen::VectorXd h_t = tape.value(h).row(0).transpose().template cast<double>();
        std::map<std::string, double> logits;
        for (const auto& [label, id] : label_ids(verbalizer))
            logits[verbalizer.verbalize(label)] =
                lm_matrix().row(id).template cast<double>().dot(h_t);
        return make_score_output(verbalizer, std::move(h_t), std::move(logits));
    }
};

using ScorerModelF = ScorerModel<float>;
using ScorerModelD = ScorerModel<double>;

// --- checkpoint archive: config JSON + named f32 tensors -------------------

namespace detail {

inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline constexpr const char* kCkptMagic = "FEWRANK1";

}  // namespace detail

template <typename T>
void ScorerModel<T>::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(detail::kCkptMagic, 8);
    nlohmann::json header{{"config",
                           {{"vocab_size", cfg_.vocab_size},
                            {"d_model", cfg_.d_model},
                            {"n_layers", cfg_.n_layers},
                            {"n_heads", cfg_.n_heads},
                            {"max_len", cfg_.max_len},
                            {"seed", cfg_.seed},
                            {"d_ff", cfg_.d_ff},
                            {"encoder_only", cfg_.encoder_only},
                            {"tie_embeddings", cfg_.tie_embeddings}}},
                          {"vocab", vocab_.words()}};
    std::string h = header.dump();
    detail::write_u32(out, static_cast<uint32_t>(h.size()));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    detail::write_u32(out, static_cast<uint32_t>(params_.size()));
    for (const auto& [name, mat] : params_) {
        detail::write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(out, static_cast<uint32_t>(mat.rows()));
        detail::write_u32(out, static_cast<uint32_t>(mat.cols()));
        Eigen::MatrixXf f = mat.template cast<float>();
        out.write(reinterpret_cast<const char*>(f.data()),
                  static_cast<std::streamsize>(sizeof(float) * f.size()));
    }
    if (!out) throw DataError("write failed: " + path);
}

template <typename T>
ScorerModel<T> ScorerModel<T>::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != detail::kCkptMagic)
        throw DataError("not a checkpoint file: " + path);
    uint32_t hlen = detail::read_u32(in);
    std::string h(hlen, '\0');
    in.read(h.data(), hlen);
    if (!in) throw DataError("truncated checkpoint: " + path);
    nlohmann::json header = nlohmann::json::parse(h);
    const auto& jc = header.at("config");
    MicroModelConfig cfg;
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.d_model = jc.at("d_model").get<int>();
    cfg.n_layers = jc.at("n_layers").get<int>();
    cfg.n_heads = jc.at("n_heads").get<int>();
    cfg.max_len = jc.at("max_len").get<int>();
    cfg.seed = jc.at("seed").get<uint64_t>();
    cfg.d_ff = jc.at("d_ff").get<int>();
    cfg.encoder_only = jc.at("encoder_only").get<bool>();
    cfg.tie_embeddings = jc.at("tie_embeddings").get<bool>();
    auto words = header.at("vocab").get<std::vector<std::string>>();
    // reconstruct: the first four words are the fixed specials
    std::vector<std::string> plain(words.begin() + 4, words.end());
    ScorerModel model(cfg, Vocab(plain));
    uint32_t n_tensors = detail::read_u32(in);
    if (n_tensors != model.params_.size())
        throw DataError("checkpoint tensor count mismatch in " + path);
    for (auto& [name, mat] : model.params_) {
        uint32_t nlen = detail::read_u32(in);
        std::string tname(nlen, '\0');
        in.read(tname.data(), nlen);
        uint32_t rows = detail::read_u32(in), cols = detail::read_u32(in);
        if (tname != name || rows != static_cast<uint32_t>(mat.rows()) ||
            cols != static_cast<uint32_t>(mat.cols()))
            throw DataError("checkpoint tensor \"" + tname + "\" does not match model layout");
        Eigen::MatrixXf f(rows, cols);
        in.read(reinterpret_cast<char*>(f.data()),
                static_cast<std::streamsize>(sizeof(float) * f.size()));
        mat = f.cast<T>();
    }
    if (!in) throw DataError("truncated checkpoint: " + path);
    return model;
}

}  // namespace fewrank
