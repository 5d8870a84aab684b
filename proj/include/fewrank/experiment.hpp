#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "fewrank/scorer.hpp"
#include "fewrank/training.hpp"

namespace fewrank {

// Full desk-scale transfer experiment: partition -> (prefinetune) ->
// finetune -> rerank -> evaluate, for each variant and seed.
struct ExperimentConfig {
    uint64_t seed = 0;
    int n_seeds = 5;
    std::vector<std::string> variants = {"vanilla", "nli", "qa"};

    SynthConfig synth;
    MicroModelConfig model;

    int k_train_queries = 5;
    int first_stage_depth = 50;

    TrainConfig prefinetune_cfg;
    TrainConfig finetune_cfg;

    std::string output_dir;

    static ExperimentConfig desk_default();
    static ExperimentConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

struct VariantOutcome {
    std::string name;
    std::vector<double> dev_mrr;     // per seed
    std::vector<double> separation;  // per seed, mean pos - mean neg on dev pairs
    double mean_mrr = 0.0;
};

struct TransferOutcome {
    std::vector<uint64_t> seeds;
    std::map<std::string, VariantOutcome> variants;

    double mean(const std::string& variant) const { return variants.at(variant).mean_mrr; }
};

// Runs the experiment; when cfg.output_dir is set, writes splits, runs,
// training logs, per-variant metrics and a results table underneath it.
TransferOutcome run_transfer_experiment(const ExperimentConfig& cfg, std::ostream* progress);

std::string results_table(const TransferOutcome& outcome);
void write_outcome_json(const TransferOutcome& outcome, const std::string& path);

}  // namespace fewrank
