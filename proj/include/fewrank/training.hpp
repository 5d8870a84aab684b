#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewrank/corpus.hpp"
#include "fewrank/partition.hpp"
#include "fewrank/prompting.hpp"
#include "fewrank/scorer.hpp"

namespace fewrank {

enum class TuneMode { model_tuning, prompt_tuning };

struct TrainConfig {
    double learning_rate = 2e-5;
    int batch_size = 0;  // 0 -> stage default (prefinetune 32; finetune 8/32 by query count)
    int max_steps = 2000;
    uint64_t seed = 0;
    TuneMode mode = TuneMode::model_tuning;
    int eval_every = 50;  // dev checkpoint-selection cadence
};

// Pre-finetuning defaults: 12k steps, batch 32.
TrainConfig default_prefinetune_config();

// Fine-tuning batch size: 8 when there are at most 50 queries, else 32.
int resolve_finetune_batch_size(size_t n_queries);

// Learning rate at 1-based step s under linear decay: lr * (1 - s/max_steps).
double linear_decay_lr(double lr, int step, int max_steps);

struct TaskExample {
    std::string text_a;
    std::string text_b;
    int label = 0;
};

struct TaskSpec {
    std::string name;
    std::vector<TaskExample> examples;
    Template prompt_template = Template::manual_seq2seq();
    Verbalizer verbalizer = Verbalizer::ranking();
    std::map<int, std::string> label_names;  // for analysis dumps
};

struct MixtureSpec {
    std::vector<TaskSpec> tasks;
    std::vector<double> weights;  // empty -> equal

    static MixtureSpec single(TaskSpec task) { return {{std::move(task)}, {}}; }
    static MixtureSpec equal(std::vector<TaskSpec> tasks) { return {std::move(tasks), {}}; }
};

// Task-first sampling (seeded categorical over weights), uniform within
// task via per-task epoch reshuffling.
class MixStream {
public:
    MixStream(const MixtureSpec& mixture, uint64_t seed);
    const TaskExample& next();
    size_t last_task() const { return last_task_; }
    size_t last_index() const { return last_index_; }

private:
    const MixtureSpec& mixture_;
    Rng rng_;
    std::vector<double> weights_;
    std::vector<std::vector<size_t>> queues_;  // remaining indices, drawn from the back
    size_t last_task_ = 0;
    size_t last_index_ = 0;
};

struct TrainLogEntry {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<double> dev_metric;
};

struct TrainingLog {
    std::vector<TrainLogEntry> entries;
    void write_jsonl(const std::string& path) const;
};

// Adam with default moments (0.9, 0.999), epsilon 1e-8, no weight decay.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Eigen::MatrixXf*>& params,
              const std::vector<Eigen::MatrixXf>& grads, double lr);

private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Eigen::MatrixXf> m_, v_;
};

// Ranking prompt scheme used by fine-tuning and reranking.
struct RankingSetup {
    Template prompt_template = Template::manual_seq2seq();
    Verbalizer verbalizer = Verbalizer::ranking();
};

struct DevContext {
    const DevSet* dev = nullptr;
    const Qrels* qrels = nullptr;
    const std::map<std::string, Query>* queries = nullptr;
    const Collection* collection = nullptr;
};

double dev_mrr10(const ScorerModelF& model, const RankingSetup& setup, const DevContext& dev);

// Intermediate-task training with prompt-based CE (model tuning only).
TrainingLog prefinetune(ScorerModelF& model, const MixtureSpec& mixture, const TrainConfig& cfg);

// Ranking fine-tuning; each triple yields a positive and a negative
// example. With a DevContext supplied, returns the checkpoint with the
// best dev MRR@10 (evaluated every cfg.eval_every steps).
TrainingLog finetune(ScorerModelF& model, const TrainSplit& split,
                     const std::map<std::string, Query>& queries, const Collection& collection,
                     const RankingSetup& setup, const TrainConfig& cfg,
                     const DevContext& dev = {});

struct PromptTuneResult {
    ContinuousPrompt prompt;
    size_t trainable_parameters = 0;
    size_t frozen_parameters = 0;
    TrainingLog log;
};

// Tunes only the continuous prompt segments; every model parameter stays
// bit-identical.
PromptTuneResult prompt_tune(const ScorerModelF& model, ContinuousPrompt prompt,
                             const TrainSplit& split, const std::map<std::string, Query>& queries,
                             const Collection& collection, const Verbalizer& verbalizer,
                             const TrainConfig& cfg);

// --- synthetic desk-scale tasks ---------------------------------------

struct SynthConfig {
    int n_nli = 2000;
    int n_qa = 2000;
    int n_docs = 200;
    int n_queries = 60;
    uint64_t seed = 0;
};

struct SyntheticData {
    TaskSpec nli;  // token-overlap entailment, labels {2:yes, 1:maybe, 0:no}
    TaskSpec qa;   // answer-token presence, labels {1:true, 0:false}
    Collection collection;
    std::vector<Query> queries;
    Qrels qrels;
};

SyntheticData make_synthetic_tasks(const SynthConfig& cfg);

// Deterministic shared vocabulary over task texts, corpus, templates,
// label words and prompt-init words.
Vocab build_vocab(const SyntheticData& data);

uint64_t parameter_checksum(const ScorerModelF& model);

}  // namespace fewrank
