#include "fewrank/training.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "fewrank/error.hpp"
#include "fewrank/evaluation.hpp"

namespace fewrank {

TrainConfig default_prefinetune_config() {
    TrainConfig cfg;
    cfg.max_steps = 12000;
    cfg.batch_size = 32;
    return cfg;
}

int resolve_finetune_batch_size(size_t n_queries) { return n_queries <= 50 ? 8 : 32; }

double linear_decay_lr(double lr, int step, int max_steps) {
    return lr * (1.0 - static_cast<double>(step) / static_cast<double>(max_steps));
}

MixStream::MixStream(const MixtureSpec& mixture, uint64_t seed)
    : mixture_(mixture), rng_(derive_seed(seed, "mix-stream")) {
    if (mixture_.tasks.empty()) throw UsageError("mixture has no tasks");
    for (const auto& t : mixture_.tasks)
        if (t.examples.empty()) throw DataError("task \"" + t.name + "\" has no examples");
    weights_ = mixture_.weights;
    if (weights_.empty()) weights_.assign(mixture_.tasks.size(), 1.0);
    if (weights_.size() != mixture_.tasks.size())
        throw UsageError("mixture weights do not match task count");
    for (double w : weights_)
        if (w <= 0.0) throw UsageError("mixture weights must be positive");
    queues_.resize(mixture_.tasks.size());
}

const TaskExample& MixStream::next() {
    size_t task = weights_.size() == 1 ? 0 : rng_.categorical(weights_);
    auto& queue = queues_[task];
    if (queue.empty()) {
        queue.resize(mixture_.tasks[task].examples.size());
        for (size_t i = 0; i < queue.size(); ++i) queue[i] = i;
        rng_.shuffle(queue);
    }
    size_t idx = queue.back();
    queue.pop_back();
    last_task_ = task;
    last_index_ = idx;
    return mixture_.tasks[task].examples[idx];
}

void TrainingLog::write_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& e : entries) {
        nlohmann::json j{{"step", e.step}, {"loss", e.loss}, {"lr", e.lr}};
        if (e.dev_metric) j["dev_metric"] = *e.dev_metric;
        out << j.dump() << '\n';
    }
}

void AdamOptimizer::step(const std::vector<Eigen::MatrixXf*>& params,
                         const std::vector<Eigen::MatrixXf>& grads, double lr) {
    if (params.size() != grads.size()) throw UsageError("Adam: params/grads mismatch");
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(Eigen::MatrixXf::Zero(p->rows(), p->cols()));
            v_.emplace_back(Eigen::MatrixXf::Zero(p->rows(), p->cols()));
        }
    }
    ++t_;
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float correct1 = 1.0f - std::pow(b1, static_cast<float>(t_));
    const float correct2 = 1.0f - std::pow(b2, static_cast<float>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0f - b1) * grads[i];
        v_[i] = (b2 * v_[i].array() + (1.0f - b2) * grads[i].array().square()).matrix();
        Eigen::ArrayXXf mhat = m_[i].array() / correct1;
        Eigen::ArrayXXf vhat = v_[i].array() / correct2;
        params[i]->array() -=
            static_cast<float>(lr) * mhat / (vhat.sqrt() + static_cast<float>(eps_));
    }
}

namespace {

struct EncodedExample {
    EncodedInput input;
    int label = 0;
};

std::vector<EncodedExample> encode_task_examples(const ScorerModelF& model, const TaskSpec& task) {
    std::vector<EncodedExample> out;
    out.reserve(task.examples.size());
    for (const auto& ex : task.examples) {
        Query q{"t", ex.text_a};
        Document d{"t", ex.text_b};
        out.push_back({model.encode_input(task.prompt_template, q, d), ex.label});
    }
    return out;
}

// One optimizer step over a batch of encoded examples; returns mean loss.
double model_step(ScorerModelF& model, const std::vector<const EncodedExample*>& batch,
                  const Verbalizer& verbalizer, AdamOptimizer& opt, double lr) {
    TapeF tape;
    auto leaves = model.param_leaves(tape);
    std::vector<TapeF::Id> losses;
    losses.reserve(batch.size());
    for (const auto* ex : batch)
        losses.push_back(model.example_loss(tape, leaves, ex->input, verbalizer, ex->label));
    TapeF::Id loss = tape.mean(losses);
    tape.backward(loss);
    auto grads = model.read_grads(tape, leaves);
    auto params = model.parameters();
    std::vector<Eigen::MatrixXf*> ptrs;
    ptrs.reserve(params.size());
    for (auto& p : params) ptrs.push_back(p.mat);
    opt.step(ptrs, grads, lr);
    return static_cast<double>(tape.value(loss)(0, 0));
}

std::vector<std::pair<std::string, Eigen::MatrixXf>> snapshot_params(ScorerModelF& model) {
    std::vector<std::pair<std::string, Eigen::MatrixXf>> snap;
    for (const auto& p : model.parameters()) snap.emplace_back(p.name, *p.mat);
    return snap;
}

void restore_params(ScorerModelF& model,
                    const std::vector<std::pair<std::string, Eigen::MatrixXf>>& snap) {
    auto params = model.parameters();
    for (size_t i = 0; i < params.size(); ++i) *params[i].mat = snap[i].second;
}

}  // namespace

double dev_mrr10(const ScorerModelF& model, const RankingSetup& setup, const DevContext& dev) {
    Run reranked;
    for (const auto& [qid, cands] : dev.dev->candidates) {
        const Query& q = dev.queries->at(qid);
        std::vector<std::pair<std::string, double>> scored;
        scored.reserve(cands.size());
        for (const auto& docid : cands) {
            auto out = model.score_pair(setup.verbalizer,
                                        model.encode_input(setup.prompt_template, q,
                                                           dev.collection->lookup(docid)));
            scored.emplace_back(docid, out.probs.at(1));
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        auto& entries = reranked.entries[qid];
        for (size_t i = 0; i < scored.size(); ++i)
            entries.push_back({scored[i].first, static_cast<int>(i) + 1, scored[i].second, "dev"});
    }
    return mrr_at_k(reranked, *dev.qrels, 10).mean;
}

TrainingLog prefinetune(ScorerModelF& model, const MixtureSpec& mixture, const TrainConfig& cfg) {
    if (cfg.mode != TuneMode::model_tuning)
        throw UsageError("prefinetune requires model_tuning mode");
    TrainingLog log;
    if (cfg.max_steps == 0) return log;
    int batch_size = cfg.batch_size > 0 ? cfg.batch_size : 32;

    std::vector<std::vector<EncodedExample>> encoded;
    for (const auto& task : mixture.tasks) encoded.push_back(encode_task_examples(model, task));

    MixStream stream(mixture, cfg.seed);
    AdamOptimizer opt;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        double lr = linear_decay_lr(cfg.learning_rate, step, cfg.max_steps);
        TapeF tape;
        auto leaves = model.param_leaves(tape);
        std::vector<TapeF::Id> losses;
        for (int i = 0; i < batch_size; ++i) {
            stream.next();
            const auto& ex = encoded[stream.last_task()][stream.last_index()];
            losses.push_back(model.example_loss(tape, leaves, ex.input,
                                                mixture.tasks[stream.last_task()].verbalizer,
                                                ex.label));
        }
        TapeF::Id loss = tape.mean(losses);
        tape.backward(loss);
        auto grads = model.read_grads(tape, leaves);
        auto params = model.parameters();
        std::vector<Eigen::MatrixXf*> ptrs;
        for (auto& p : params) ptrs.push_back(p.mat);
        opt.step(ptrs, grads, lr);
        log.entries.push_back({step, static_cast<double>(tape.value(loss)(0, 0)), lr, {}});
    }
    return log;
}

TrainingLog finetune(ScorerModelF& model, const TrainSplit& split,
                     const std::map<std::string, Query>& queries, const Collection& collection,
                     const RankingSetup& setup, const TrainConfig& cfg, const DevContext& dev) {
    if (cfg.mode != TuneMode::model_tuning) throw UsageError("finetune requires model_tuning mode");
    if (split.triples.empty()) throw DataError("empty training split");
    TrainingLog log;
    if (cfg.max_steps == 0) return log;

    std::vector<EncodedExample> examples;
    examples.reserve(split.triples.size() * 2);
    for (const auto& t : split.triples) {
        auto qit = queries.find(t.qid);
        if (qit == queries.end()) throw DataError("split query \"" + t.qid + "\" has no text");
        examples.push_back(
            {model.encode_input(setup.prompt_template, qit->second, collection.lookup(t.positive_docid)), 1});
        examples.push_back(
            {model.encode_input(setup.prompt_template, qit->second, collection.lookup(t.negative_docid)), 0});
    }

    int batch_size =
        cfg.batch_size > 0 ? cfg.batch_size : resolve_finetune_batch_size(split.triples.size());

    const bool with_dev = dev.dev != nullptr;
    double best_metric = -1.0;
    std::vector<std::pair<std::string, Eigen::MatrixXf>> best_snapshot;
    auto maybe_eval = [&](int step) -> std::optional<double> {
        if (!with_dev) return std::nullopt;
        double m = dev_mrr10(model, setup, dev);
        if (m > best_metric) {
            best_metric = m;
            best_snapshot = snapshot_params(model);
        }
        (void)step;
        return m;
    };

    if (with_dev) {
        auto m = maybe_eval(0);
        log.entries.push_back({0, 0.0, 0.0, m});
    }

    Rng epoch_rng(derive_seed(cfg.seed, "finetune-epochs"));
    std::vector<size_t> order;
    size_t cursor = 0;
    AdamOptimizer opt;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        std::vector<const EncodedExample*> batch;
        batch.reserve(static_cast<size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i) {
            if (cursor >= order.size()) {
                order.resize(examples.size());
                for (size_t j = 0; j < order.size(); ++j) order[j] = j;
                epoch_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(&examples[order[cursor++]]);
        }
        double lr = linear_decay_lr(cfg.learning_rate, step, cfg.max_steps);
        double loss = model_step(model, batch, setup.verbalizer, opt, lr);
        TrainLogEntry entry{step, loss, lr, {}};
        if (with_dev && (step % cfg.eval_every == 0 || step == cfg.max_steps))
            entry.dev_metric = maybe_eval(step);
        log.entries.push_back(entry);
    }
    if (with_dev && !best_snapshot.empty()) restore_params(model, best_snapshot);
    return log;
}

PromptTuneResult prompt_tune(const ScorerModelF& model, ContinuousPrompt prompt,
                             const TrainSplit& split, const std::map<std::string, Query>& queries,
                             const Collection& collection, const Verbalizer& verbalizer,
                             const TrainConfig& cfg) {
    if (cfg.mode != TuneMode::prompt_tuning)
        throw UsageError("prompt_tune requires prompt_tuning mode");
    if (split.triples.empty()) throw DataError("empty training split");

    PromptTuneResult result;
    result.trainable_parameters = static_cast<size_t>(prompt.s1.size()) +
                                  static_cast<size_t>(prompt.s2.size()) +
                                  static_cast<size_t>(prompt.s3.size());
    result.frozen_parameters = model.parameter_count();

    struct PromptExample {
        std::vector<int> q_ids, d_ids;
        int label;
    };
    std::vector<PromptExample> examples;
    for (const auto& t : split.triples) {
        auto qit = queries.find(t.qid);
        if (qit == queries.end()) throw DataError("split query \"" + t.qid + "\" has no text");
        for (const auto& [docid, label] :
             {std::pair{t.positive_docid, 1}, std::pair{t.negative_docid, 0}}) {
            auto [q_ids, d_ids] =
                model.encode_prompt_input(prompt, qit->second, collection.lookup(docid));
            examples.push_back({std::move(q_ids), std::move(d_ids), label});
        }
    }

    int batch_size =
        cfg.batch_size > 0 ? cfg.batch_size : resolve_finetune_batch_size(split.triples.size());

    Rng epoch_rng(derive_seed(cfg.seed, "prompt-tune-epochs"));
    std::vector<size_t> order;
    size_t cursor = 0;
    AdamOptimizer opt;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        std::vector<size_t> batch;
        for (int i = 0; i < batch_size; ++i) {
            if (cursor >= order.size()) {
                order.resize(examples.size());
                for (size_t j = 0; j < order.size(); ++j) order[j] = j;
                epoch_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        double lr = linear_decay_lr(cfg.learning_rate, step, cfg.max_steps);
        TapeF tape;
        auto leaves = model.param_leaves(tape);
        auto prompt_leaves = model.prompt_param_leaves(tape, prompt);
        std::vector<TapeF::Id> losses;
        for (size_t idx : batch) {
            const auto& ex = examples[idx];
            losses.push_back(model.example_loss_with_prompt(tape, leaves, prompt_leaves, ex.q_ids,
                                                            ex.d_ids, verbalizer, ex.label));
        }
        TapeF::Id loss = tape.mean(losses);
        tape.backward(loss);

        std::vector<Eigen::MatrixXf*> ptrs = {&prompt.s1, &prompt.s2, &prompt.s3};
        std::vector<Eigen::MatrixXf> grads;
        for (TapeF::Id id : {prompt_leaves.s1, prompt_leaves.s2, prompt_leaves.s3}) {
            const auto& g = tape.grad(id);
            grads.push_back(g.size() == 0
                                ? Eigen::MatrixXf::Zero(tape.value(id).rows(), tape.value(id).cols())
                                : g);
        }
        opt.step(ptrs, grads, lr);
        result.log.entries.push_back({step, static_cast<double>(tape.value(loss)(0, 0)), lr, {}});
    }
    result.prompt = std::move(prompt);
    return result;
}

// --- synthetic tasks ---------------------------------------------------

namespace {

std::vector<std::string> make_word_list(Rng& rng, size_t n) {
    static const char* consonants[] = {"b", "d", "f", "g", "k", "l", "m",
                                       "n", "p", "r", "s", "t", "v", "z"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    std::vector<std::string> all;
    for (const char* c1 : consonants)
        for (const char* v1 : vowels)
            for (const char* c2 : consonants)
                for (const char* v2 : vowels)
                    all.push_back(std::string(c1) + v1 + c2 + v2);
    rng.shuffle(all);
    all.resize(n);
    return all;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::vector<std::string> sample_words(Rng& rng, const std::vector<std::string>& pool, size_t n,
                                      const std::set<std::string>& exclude = {}) {
    std::vector<std::string> out;
    std::set<std::string> used;
    while (out.size() < n) {
        const auto& w = pool[rng.below(pool.size())];
        if (exclude.count(w) || used.count(w)) continue;
        used.insert(w);
        out.push_back(w);
    }
    return out;
}

}  // namespace

SyntheticData make_synthetic_tasks(const SynthConfig& cfg) {
    SyntheticData data;
    Rng rng(derive_seed(cfg.seed, "synthetic-tasks"));
    auto words = make_word_list(rng, 120);

    // nli: hypothesis fully contained in premise -> yes (2); half in, half
    // out -> maybe (1); disjoint -> no (0).
    data.nli.name = "nli_like";
    data.nli.prompt_template =
        Template(TemplateKind::seq2seq_manual,
                 {TemplatePiece::lit("Premise: "), TemplatePiece::slot(TemplatePiece::Type::query),
                  TemplatePiece::lit(" Hypothesis: "),
                  TemplatePiece::slot(TemplatePiece::Type::document),
                  TemplatePiece::lit(" Entailment:")});
    data.nli.verbalizer = Verbalizer({{0, "no"}, {1, "maybe"}, {2, "yes"}});
    data.nli.label_names = {{0, "contradiction"}, {1, "neutral"}, {2, "entailment"}};
    for (int i = 0; i < cfg.n_nli; ++i) {
        auto premise = sample_words(rng, words, 5 + rng.below(4));
        std::set<std::string> in_premise(premise.begin(), premise.end());
        int label = static_cast<int>(rng.below(3));
        std::vector<std::string> hypothesis;
        if (label == 2) {
            size_t n = 2 + rng.below(2);
            std::vector<std::string> shuffled = premise;
            rng.shuffle(shuffled);
            hypothesis.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(n));
        } else if (label == 1) {
            auto inside = sample_words(rng, premise, 1);
            auto outside = sample_words(rng, words, 1 + rng.below(2), in_premise);
            hypothesis = inside;
            hypothesis.insert(hypothesis.end(), outside.begin(), outside.end());
            rng.shuffle(hypothesis);
        } else {
            hypothesis = sample_words(rng, words, 2 + rng.below(2), in_premise);
        }
        data.nli.examples.push_back({join(premise), join(hypothesis), label});
    }

    // qa: answerable iff the question's focus word occurs in the passage.
    data.qa.name = "qa_like";
    data.qa.prompt_template =
        Template(TemplateKind::seq2seq_manual,
                 {TemplatePiece::lit("Question: "), TemplatePiece::slot(TemplatePiece::Type::query),
                  TemplatePiece::lit(" Passage: "),
                  TemplatePiece::slot(TemplatePiece::Type::document),
                  TemplatePiece::lit(" Answerable:")});
    data.qa.verbalizer = Verbalizer::ranking();
    data.qa.label_names = {{0, "unanswerable"}, {1, "answerable"}};
    for (int i = 0; i < cfg.n_qa; ++i) {
        auto question = sample_words(rng, words, 1 + rng.below(2));
        const std::string& focus = question[0];
        int label = static_cast<int>(rng.below(2));
        std::vector<std::string> passage = sample_words(rng, words, 6 + rng.below(5), {focus});
        if (label == 1) {
            size_t at = rng.below(passage.size() + 1);
            passage.insert(passage.begin() + static_cast<long>(at), focus);
        }
        data.qa.examples.push_back({join(question), join(passage), label});
    }

    // ranking corpus: relevance == all query terms contained in the document.
    std::vector<Document> docs;
    std::vector<std::vector<std::string>> doc_words;
    for (int i = 0; i < cfg.n_docs; ++i) {
        auto w = sample_words(rng, words, 6 + rng.below(5));
        char id[16];
        std::snprintf(id, sizeof(id), "d%04d", i);
        docs.push_back({id, join(w)});
        doc_words.push_back(std::move(w));
    }
    data.collection = Collection(std::move(docs));
    for (int i = 0; i < cfg.n_queries; ++i) {
        size_t target = rng.below(doc_words.size());
        // 2-3 terms: single-term queries would make every first-stage
        // candidate a full match, leaving nothing for a reranker to do
        auto terms = sample_words(rng, doc_words[target], 2 + rng.below(2));
        char id[16];
        std::snprintf(id, sizeof(id), "q%03d", i);
        data.queries.push_back({id, join(terms)});
        for (size_t d = 0; d < doc_words.size(); ++d) {
            std::set<std::string> dw(doc_words[d].begin(), doc_words[d].end());
            bool all_in = true;
            for (const auto& t : terms)
                if (!dw.count(t)) { all_in = false; break; }
            if (all_in) data.qrels.judgments[id][data.collection.documents()[d].id] = 1;
        }
    }
    return data;
}

Vocab build_vocab(const SyntheticData& data) {
    Vocab vocab;
    auto add_text = [&vocab](const std::string& text) {
        for (const auto& w : tokenize_words(text)) vocab.add(w);
    };
    auto add_template = [&](const Template& tpl) {
        for (const auto& p : tpl.pieces())
            if (p.type == TemplatePiece::Type::literal) add_text(p.text);
    };
    // ranking prompt scheme words first, then continuous-prompt init words
    add_template(Template::manual_seq2seq());
    add_template(Template::manual_mask());
    add_text("Task: Find the relevance between Query and Document. Query:");
    for (const auto& w : {"true", "false", "yes", "maybe", "no"}) vocab.add(w);
    for (const TaskSpec* task : {&data.nli, &data.qa}) {
        add_template(task->prompt_template);
        for (const auto& [label, word] : task->verbalizer.mapping()) vocab.add(word);
        for (const auto& ex : task->examples) {
            add_text(ex.text_a);
            add_text(ex.text_b);
        }
    }
    for (const auto& d : data.collection.documents()) add_text(d.text);
    for (const auto& q : data.queries) add_text(q.text);
    return vocab;
}

uint64_t parameter_checksum(const ScorerModelF& model) {
    // FNV-1a over the raw float bytes of every parameter, in order.
    uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, mat] : model.parameters_const()) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(mat->data());
        size_t n = sizeof(float) * static_cast<size_t>(mat->size());
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

}  // namespace fewrank
