#include "fewrank/prompting.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "fewrank/error.hpp"

namespace fewrank {

using nlohmann::json;

std::string to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::seq2seq_manual: return "seq2seq_manual";
        case TemplateKind::mask_manual: return "mask_manual";
        case TemplateKind::mask_auto: return "mask_auto";
        case TemplateKind::continuous: return "continuous";
        case TemplateKind::none_words: return "none_words";
    }
    throw UsageError("unknown template kind");
}

TemplateKind template_kind_from_string(const std::string& s) {
    if (s == "seq2seq_manual") return TemplateKind::seq2seq_manual;
    if (s == "mask_manual") return TemplateKind::mask_manual;
    if (s == "mask_auto") return TemplateKind::mask_auto;
    if (s == "continuous") return TemplateKind::continuous;
    if (s == "none_words") return TemplateKind::none_words;
    throw DataError("unknown template kind \"" + s + "\"");
}

Template::Template(TemplateKind kind, std::vector<TemplatePiece> pieces)
    : kind_(kind), pieces_(std::move(pieces)) {
    int q = 0, d = 0, mask = 0, s1 = 0, s2 = 0, s3 = 0;
    for (const auto& p : pieces_) {
        switch (p.type) {
            case TemplatePiece::Type::query: ++q; break;
            case TemplatePiece::Type::document: ++d; break;
            case TemplatePiece::Type::mask: ++mask; break;
            case TemplatePiece::Type::s1: ++s1; break;
            case TemplatePiece::Type::s2: ++s2; break;
            case TemplatePiece::Type::s3: ++s3; break;
            case TemplatePiece::Type::literal: break;
        }
    }
    if (q != 1 || d != 1)
        throw DataError("template must contain exactly one [q] and one [d] slot");
    bool is_mask_kind = kind_ == TemplateKind::mask_manual || kind_ == TemplateKind::mask_auto;
    if (is_mask_kind && mask != 1)
        throw DataError("mask template must contain exactly one [MASK] slot");
    if (!is_mask_kind && mask != 0)
        throw DataError("[MASK] slot only allowed in mask templates");
    if (kind_ == TemplateKind::continuous) {
        if (s1 != 1 || s2 != 1 || s3 != 1)
            throw DataError("continuous template must contain [s1], [s2] and [s3]");
    } else if (s1 + s2 + s3 != 0) {
        throw DataError("tunable segments only allowed in continuous templates");
    }
}

Template Template::manual_seq2seq() {
    using P = TemplatePiece;
    return Template(TemplateKind::seq2seq_manual,
                    {P::lit("Query: "), P::slot(P::Type::query), P::lit(" Document: "),
                     P::slot(P::Type::document), P::lit(" Relevant:")});
}

Template Template::no_words() {
    using P = TemplatePiece;
    return Template(TemplateKind::none_words,
                    {P::slot(P::Type::query), P::lit(" "), P::slot(P::Type::document)});
}

Template Template::manual_mask() {
    using P = TemplatePiece;
    return Template(TemplateKind::mask_manual,
                    {P::slot(P::Type::query), P::lit(" is "), P::slot(P::Type::mask),
                     P::lit(" (relevant|irrelevant) to "), P::slot(P::Type::document)});
}

Template Template::continuous_default() {
    using P = TemplatePiece;
    return Template(TemplateKind::continuous,
                    {P::slot(P::Type::s1), P::slot(P::Type::query), P::slot(P::Type::s2),
                     P::slot(P::Type::document), P::slot(P::Type::s3)});
}

namespace {

const char* slot_name(TemplatePiece::Type t) {
    switch (t) {
        case TemplatePiece::Type::query: return "q";
        case TemplatePiece::Type::document: return "d";
        case TemplatePiece::Type::mask: return "mask";
        case TemplatePiece::Type::s1: return "s1";
        case TemplatePiece::Type::s2: return "s2";
        case TemplatePiece::Type::s3: return "s3";
        case TemplatePiece::Type::literal: break;
    }
    throw UsageError("not a slot");
}

TemplatePiece::Type slot_from_name(const std::string& s) {
    if (s == "q") return TemplatePiece::Type::query;
    if (s == "d") return TemplatePiece::Type::document;
    if (s == "mask") return TemplatePiece::Type::mask;
    if (s == "s1") return TemplatePiece::Type::s1;
    if (s == "s2") return TemplatePiece::Type::s2;
    if (s == "s3") return TemplatePiece::Type::s3;
    throw DataError("unknown slot \"" + s + "\"");
}

std::string render(const Template& tpl, const Query& q, const Document& d) {
    std::string out;
    for (const auto& p : tpl.pieces()) {
        switch (p.type) {
            case TemplatePiece::Type::literal: out += p.text; break;
            case TemplatePiece::Type::query: out += q.text; break;
            case TemplatePiece::Type::document: out += d.text; break;
            case TemplatePiece::Type::mask: out += kMaskToken; break;
            default:
                throw UsageError("cannot render tunable segments as text");
        }
    }
    return out;
}

}  // namespace

std::string Template::to_json() const {
    json pieces = json::array();
    for (const auto& p : pieces_) {
        if (p.type == TemplatePiece::Type::literal)
            pieces.push_back(json{{"lit", p.text}});
        else
            pieces.push_back(json{{"slot", slot_name(p.type)}});
    }
    return json{{"kind", to_string(kind_)}, {"pieces", pieces}}.dump();
}

Template Template::from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    if (!j.contains("kind") || !j.contains("pieces"))
        throw DataError("template JSON needs `kind` and `pieces`");
    std::vector<TemplatePiece> pieces;
    for (const auto& p : j.at("pieces")) {
        if (p.contains("lit"))
            pieces.push_back(TemplatePiece::lit(p.at("lit").get<std::string>()));
        else if (p.contains("slot"))
            pieces.push_back(TemplatePiece::slot(slot_from_name(p.at("slot").get<std::string>())));
        else
            throw DataError("template piece needs `lit` or `slot`");
    }
    return Template(template_kind_from_string(j.at("kind").get<std::string>()), std::move(pieces));
}

std::string render_seq2seq(const Template& tpl, const Query& q, const Document& d) {
    if (tpl.kind() != TemplateKind::seq2seq_manual && tpl.kind() != TemplateKind::none_words)
        throw UsageError("render_seq2seq requires a seq2seq_manual or none_words template");
    return render(tpl, q, d);
}

std::string render_mask(const Template& tpl, const Query& q, const Document& d) {
    if (tpl.kind() != TemplateKind::mask_manual && tpl.kind() != TemplateKind::mask_auto)
        throw UsageError("render_mask requires a mask template");
    return render(tpl, q, d);
}

Verbalizer::Verbalizer(std::map<int, std::string> label_to_word)
    : label_to_word_(std::move(label_to_word)) {
    if (label_to_word_.empty()) throw DataError("verbalizer must map at least one label");
    for (const auto& [label, word] : label_to_word_) {
        if (word.empty()) throw DataError("empty label word for label " + std::to_string(label));
        auto [it, inserted] = word_to_label_.emplace(word, label);
        if (!inserted)
            throw DataError("label word \"" + word + "\" mapped from two labels");
    }
}

const std::string& Verbalizer::verbalize(int label) const {
    auto it = label_to_word_.find(label);
    if (it == label_to_word_.end())
        throw DataError("unknown label " + std::to_string(label));
    return it->second;
}

int Verbalizer::deverbalize(const std::string& word) const {
    auto it = word_to_label_.find(word);
    if (it == word_to_label_.end()) throw DataError("unknown label word \"" + word + "\"");
    return it->second;
}

std::vector<int> Verbalizer::labels() const {
    std::vector<int> out;
    for (const auto& [label, word] : label_to_word_) out.push_back(label);
    return out;
}

Verbalizer Verbalizer::ranking() {
    return Verbalizer({{1, "true"}, {0, "false"}});
}

void require_single_token_words(
    const Verbalizer& verbalizer,
    const std::function<std::vector<std::string>(const std::string&)>& tokenize) {
    for (const auto& [label, word] : verbalizer.mapping()) {
        auto tokens = tokenize(word);
        if (tokens.size() != 1)
            throw DataError("label word \"" + word + "\" tokenizes to " +
                            std::to_string(tokens.size()) + " tokens, need exactly 1");
    }
}

Eigen::MatrixXf assemble_continuous(const ContinuousPrompt& prompt,
                                    const Eigen::MatrixXf& q_embeddings,
                                    const Eigen::MatrixXf& d_embeddings) {
    const auto dim = prompt.s1.cols();
    if (prompt.s2.cols() != dim || prompt.s3.cols() != dim)
        throw DataError("continuous prompt segments disagree on embedding dimension");
    if (q_embeddings.cols() != dim || d_embeddings.cols() != dim)
        throw DataError("token embedding dimension does not match the prompt's");
    Eigen::MatrixXf out(prompt.s1.rows() + q_embeddings.rows() + prompt.s2.rows() +
                            d_embeddings.rows() + prompt.s3.rows(),
                        dim);
    Eigen::Index row = 0;
    for (const Eigen::MatrixXf* part :
         {&prompt.s1, &q_embeddings, &prompt.s2, &d_embeddings, &prompt.s3}) {
        out.middleRows(row, part->rows()) = *part;
        row += part->rows();
    }
    return out;
}

void save_prompt(const ContinuousPrompt& prompt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    json header{{"format", "fewrank-prompt"},
                {"dim", prompt.embedding_dim()},
                {"lengths", {prompt.s1.rows(), prompt.s2.rows(), prompt.s3.rows()}},
                {"init_texts", prompt.init_texts}};
    std::string h = header.dump();
    uint32_t len = static_cast<uint32_t>(h.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Eigen::MatrixXf* part : {&prompt.s1, &prompt.s2, &prompt.s3})
        out.write(reinterpret_cast<const char*>(part->data()),
                  static_cast<std::streamsize>(sizeof(float) * part->size()));
}

ContinuousPrompt load_prompt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string h(len, '\0');
    in.read(h.data(), len);
    if (!in) throw DataError("truncated prompt file: " + path);
    json header = json::parse(h);
    if (header.value("format", "") != "fewrank-prompt")
        throw DataError("not a prompt file: " + path);
    ContinuousPrompt prompt;
    int dim = header.at("dim").get<int>();
    auto lengths = header.at("lengths").get<std::vector<long>>();
    auto texts = header.at("init_texts").get<std::vector<std::string>>();
    if (lengths.size() != 3 || texts.size() != 3) throw DataError("malformed prompt header");
    std::copy(texts.begin(), texts.end(), prompt.init_texts.begin());
    Eigen::MatrixXf* parts[3] = {&prompt.s1, &prompt.s2, &prompt.s3};
    for (int i = 0; i < 3; ++i) {
        parts[i]->resize(lengths[i], dim);
        in.read(reinterpret_cast<char*>(parts[i]->data()),
                static_cast<std::streamsize>(sizeof(float) * parts[i]->size()));
    }
    if (!in) throw DataError("truncated prompt file: " + path);
    return prompt;
}

TemplateCandidateSet load_template_candidates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    TemplateCandidateSet set;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        set.candidates.push_back(Template::from_json(line));
    }
    if (set.candidates.empty()) throw DataError("no template candidates in " + path);
    return set;
}

Template rank_template_candidates(TemplateCandidateSet& candidates,
                                  const std::vector<TrainSplit>& fewshot_sets,
                                  const TemplateTrainer& train_and_eval) {
    if (candidates.candidates.empty()) throw UsageError("no template candidates");
    if (fewshot_sets.empty()) throw UsageError("no few-shot sets");
    size_t best = 0;
    double best_score = -1.0;
    for (size_t i = 0; i < candidates.candidates.size(); ++i) {
        double score = 0.0;
        for (size_t s = 0; s < fewshot_sets.size(); ++s) {
            double metric;
            try {
                metric = train_and_eval(candidates.candidates[i], fewshot_sets[s]);
            } catch (const std::exception& e) {
                throw DataError("template candidate " + std::to_string(i) + " on few-shot set " +
                                std::to_string(s) + ": " + e.what());
            }
            score = std::max(score, metric);
        }
        candidates.scores[i] = score;
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return candidates.candidates[best];
}

}  // namespace fewrank
