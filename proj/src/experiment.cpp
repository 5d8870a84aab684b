#include "fewrank/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fewrank/analysis.hpp"
#include "fewrank/bm25.hpp"
#include "fewrank/error.hpp"
#include "fewrank/evaluation.hpp"
#include "fewrank/partition.hpp"

namespace fewrank {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentConfig ExperimentConfig::desk_default() {
    ExperimentConfig cfg;
    cfg.seed = 7;
    cfg.n_seeds = 5;

    cfg.model.d_model = 64;
    cfg.model.n_layers = 2;
    cfg.model.n_heads = 4;
    cfg.model.max_len = 32;

    cfg.prefinetune_cfg.learning_rate = 1e-3;
    cfg.prefinetune_cfg.batch_size = 32;
    cfg.prefinetune_cfg.max_steps = 800;

    cfg.finetune_cfg.learning_rate = 2e-4;
    cfg.finetune_cfg.max_steps = 300;
    cfg.finetune_cfg.eval_every = 25;
    return cfg;
}

namespace {

TrainConfig train_config_from_json(const json& j, TrainConfig base, const std::string& field) {
    if (!j.is_object()) throw DataError("config field \"" + field + "\" must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "learning_rate") base.learning_rate = value.get<double>();
        else if (key == "batch_size") base.batch_size = value.get<int>();
        else if (key == "max_steps") base.max_steps = value.get<int>();
        else if (key == "eval_every") base.eval_every = value.get<int>();
        else throw DataError("unknown config field \"" + field + "." + key + "\"");
    }
    return base;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("config " + path + ": " + e.what());
    }
    ExperimentConfig cfg = desk_default();
    if (!j.contains("seed")) throw DataError("config field \"seed\" is mandatory");
    for (const auto& [key, value] : j.items()) {
        if (key == "seed") cfg.seed = value.get<uint64_t>();
        else if (key == "n_seeds") cfg.n_seeds = value.get<int>();
        else if (key == "variants") cfg.variants = value.get<std::vector<std::string>>();
        else if (key == "k_train_queries") cfg.k_train_queries = value.get<int>();
        else if (key == "first_stage_depth") cfg.first_stage_depth = value.get<int>();
        else if (key == "output_dir") cfg.output_dir = value.get<std::string>();
        else if (key == "synth") {
            for (const auto& [sk, sv] : value.items()) {
                if (sk == "n_nli") cfg.synth.n_nli = sv.get<int>();
                else if (sk == "n_qa") cfg.synth.n_qa = sv.get<int>();
                else if (sk == "n_docs") cfg.synth.n_docs = sv.get<int>();
                else if (sk == "n_queries") cfg.synth.n_queries = sv.get<int>();
                else throw DataError("unknown config field \"synth." + sk + "\"");
            }
        } else if (key == "model") {
            for (const auto& [mk, mv] : value.items()) {
                if (mk == "d_model") cfg.model.d_model = mv.get<int>();
                else if (mk == "n_layers") cfg.model.n_layers = mv.get<int>();
                else if (mk == "n_heads") cfg.model.n_heads = mv.get<int>();
                else if (mk == "max_len") cfg.model.max_len = mv.get<int>();
                else if (mk == "d_ff") cfg.model.d_ff = mv.get<int>();
                else throw DataError("unknown config field \"model." + mk + "\"");
            }
        } else if (key == "prefinetune") {
            cfg.prefinetune_cfg = train_config_from_json(value, cfg.prefinetune_cfg, "prefinetune");
        } else if (key == "finetune") {
            cfg.finetune_cfg = train_config_from_json(value, cfg.finetune_cfg, "finetune");
        } else {
            throw DataError("unknown config field \"" + key + "\"");
        }
    }
    for (const auto& v : cfg.variants)
        if (v != "vanilla" && v != "nli" && v != "qa")
            throw DataError("unknown variant \"" + v + "\" (expected vanilla|nli|qa)");
    return cfg;
}

std::string ExperimentConfig::to_json() const {
    json j{{"seed", seed},
           {"n_seeds", n_seeds},
           {"variants", variants},
           {"k_train_queries", k_train_queries},
           {"first_stage_depth", first_stage_depth},
           {"output_dir", output_dir},
           {"synth",
            {{"n_nli", synth.n_nli},
             {"n_qa", synth.n_qa},
             {"n_docs", synth.n_docs},
             {"n_queries", synth.n_queries}}},
           {"model",
            {{"d_model", model.d_model},
             {"n_layers", model.n_layers},
             {"n_heads", model.n_heads},
             {"max_len", model.max_len},
             {"d_ff", model.d_ff}}},
           {"prefinetune",
            {{"learning_rate", prefinetune_cfg.learning_rate},
             {"batch_size", prefinetune_cfg.batch_size},
             {"max_steps", prefinetune_cfg.max_steps}}},
           {"finetune",
            {{"learning_rate", finetune_cfg.learning_rate},
             {"batch_size", finetune_cfg.batch_size},
             {"max_steps", finetune_cfg.max_steps},
             {"eval_every", finetune_cfg.eval_every}}}};
    return j.dump(2);
}

namespace {

struct SeedContext {
    SyntheticData data;
    Vocab vocab;
    Run first_stage;
    TrainSplit split;
    DevSet dev;
    std::map<std::string, Query> queries;
};

SeedContext build_seed_context(const ExperimentConfig& cfg, uint64_t seed) {
    SeedContext ctx;
    SynthConfig synth = cfg.synth;
    synth.seed = seed;
    ctx.data = make_synthetic_tasks(synth);
    ctx.vocab = build_vocab(ctx.data);
    ctx.queries = query_map(ctx.data.queries);

    auto index = build_index(ctx.data.collection);
    for (const auto& q : ctx.data.queries) {
        auto entries = retrieve(index, q, cfg.first_stage_depth);
        if (!entries.empty()) ctx.first_stage.entries[q.id] = std::move(entries);
    }
    ctx.split = sample_msmarco_split(ctx.data.qrels, ctx.first_stage,
                                     static_cast<size_t>(cfg.k_train_queries), seed);
    ctx.dev = build_dev_set(ctx.data.qrels, ctx.first_stage, ctx.split, seed);
    return ctx;
}

// Mean positive minus mean negative model score over the dev pairs.
double dev_separation(const ScorerModelF& model, const RankingSetup& setup,
                      const SeedContext& ctx) {
    std::vector<ScoredPair> scored;
    for (const auto& [qid, cands] : ctx.dev.candidates) {
        const Query& q = ctx.queries.at(qid);
        for (const auto& docid : cands) {
            auto out = model.score_pair(
                setup.verbalizer,
                model.encode_input(setup.prompt_template, q, ctx.data.collection.lookup(docid)));
            scored.push_back({out.probs.at(1), ctx.data.qrels.grade(qid, docid) >= 1});
        }
    }
    return score_histogram(scored).separation;
}

Run rerank_dev(const ScorerModelF& model, const RankingSetup& setup, const SeedContext& ctx) {
    PairScorer scorer = [&](const Query& q, const Document& d) {
        return model.score_pair(setup.verbalizer, model.encode_input(setup.prompt_template, q, d))
            .probs.at(1);
    };
    Run dev_run;
    int depth = 1;
    for (const auto& [qid, cands] : ctx.dev.candidates) {
        dev_run.entries[qid] = ctx.first_stage.entries.at(qid);
        depth = std::max(depth, static_cast<int>(cands.size()));
    }
    return rerank(scorer, dev_run, ctx.queries, ctx.data.collection, depth);
}

void write_metric_json(const MetricResult& m, const std::string& path) {
    json per_query = json::object();
    for (const auto& [qid, v] : m.per_query) per_query[qid] = v;
    json j{{"metric", m.metric_name}, {"cutoff", m.cutoff}, {"mean", m.mean},
           {"per_query", per_query}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace

TransferOutcome run_transfer_experiment(const ExperimentConfig& cfg, std::ostream* progress) {
    TransferOutcome outcome;
    const bool writing = !cfg.output_dir.empty();
    if (writing) {
        fs::create_directories(cfg.output_dir);
        std::ofstream cfg_out(cfg.output_dir + "/config.json");
        cfg_out << cfg.to_json() << '\n';
    }
    for (const auto& v : cfg.variants) outcome.variants[v] = {v, {}, {}, 0.0};

    RankingSetup setup;
    for (int s = 0; s < cfg.n_seeds; ++s) {
        uint64_t seed = derive_seed(cfg.seed, "experiment-seed-" + std::to_string(s));
        outcome.seeds.push_back(seed);
        if (progress) *progress << "[seed " << s << "] building data + first stage\n";
        SeedContext ctx = build_seed_context(cfg, seed);

        std::string seed_dir = cfg.output_dir + "/seed" + std::to_string(s);
        if (writing) {
            fs::create_directories(seed_dir);
            write_run(ctx.first_stage, seed_dir + "/first_stage.trec");
            write_split(ctx.split, seed_dir + "/split.tsv");
            Run dev_candidates;
            for (const auto& [qid, cands] : ctx.dev.candidates)
                dev_candidates.entries[qid] = ctx.first_stage.entries.at(qid);
            write_run(dev_candidates, seed_dir + "/dev_candidates.trec");
        }

        for (const auto& variant : cfg.variants) {
            MicroModelConfig mc = cfg.model;
            mc.vocab_size = 0;
            mc.seed = derive_seed(seed, "model-" + variant);
            ScorerModelF model(mc, ctx.vocab);

            std::string variant_dir = seed_dir + "/" + variant;
            if (writing) fs::create_directories(variant_dir);

            if (variant != "vanilla") {
                TrainConfig pf = cfg.prefinetune_cfg;
                pf.seed = derive_seed(seed, "prefinetune-" + variant);
                const TaskSpec& task = variant == "nli" ? ctx.data.nli : ctx.data.qa;
                if (progress) *progress << "[seed " << s << "] prefinetune " << variant << "\n";
                auto log = prefinetune(model, MixtureSpec::single(task), pf);
                if (writing) log.write_jsonl(variant_dir + "/prefinetune_log.jsonl");
            }

            TrainConfig ft = cfg.finetune_cfg;
            ft.seed = derive_seed(seed, "finetune-" + variant);
            DevContext dev{&ctx.dev, &ctx.data.qrels, &ctx.queries, &ctx.data.collection};
            if (progress) *progress << "[seed " << s << "] finetune " << variant << "\n";
            auto log = finetune(model, ctx.split, ctx.queries, ctx.data.collection, setup, ft, dev);
            if (writing) log.write_jsonl(variant_dir + "/finetune_log.jsonl");

            Run dev_run = rerank_dev(model, setup, ctx);
            MetricResult mrr = mrr_at_k(dev_run, ctx.data.qrels, 10);
            double separation = dev_separation(model, setup, ctx);

            auto& vo = outcome.variants[variant];
            vo.dev_mrr.push_back(mrr.mean);
            vo.separation.push_back(separation);
            if (progress)
                *progress << "[seed " << s << "] " << variant << " dev MRR@10 " << mrr.mean
                          << " separation " << separation << "\n";
            if (writing) {
                write_run(dev_run, variant_dir + "/dev_rerank.trec");
                write_metric_json(mrr, variant_dir + "/metrics.json");
            }
        }
    }
    for (auto& [name, vo] : outcome.variants) {
        double sum = 0.0;
        for (double v : vo.dev_mrr) sum += v;
        vo.mean_mrr = vo.dev_mrr.empty() ? 0.0 : sum / static_cast<double>(vo.dev_mrr.size());
    }
    if (writing) {
        write_outcome_json(outcome, cfg.output_dir + "/results.json");
        std::ofstream table(cfg.output_dir + "/results_table.txt");
        table << results_table(outcome);
    }
    return outcome;
}

std::string results_table(const TransferOutcome& outcome) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %12s %12s  per-seed dev MRR@10\n", "variant",
                  "mean MRR@10", "mean sep");
    out += buf;
    for (const auto& [name, vo] : outcome.variants) {
        double sep = 0.0;
        for (double v : vo.separation) sep += v;
        if (!vo.separation.empty()) sep /= static_cast<double>(vo.separation.size());
        std::snprintf(buf, sizeof(buf), "%-10s %12.4f %12.4f  [", name.c_str(), vo.mean_mrr, sep);
        out += buf;
        for (size_t i = 0; i < vo.dev_mrr.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s%.4f", i ? ", " : "", vo.dev_mrr[i]);
            out += buf;
        }
        out += "]\n";
    }
    return out;
}

void write_outcome_json(const TransferOutcome& outcome, const std::string& path) {
    json variants = json::object();
    for (const auto& [name, vo] : outcome.variants)
        variants[name] = {{"dev_mrr", vo.dev_mrr},
                          {"separation", vo.separation},
                          {"mean_mrr", vo.mean_mrr}};
    json j{{"seeds", outcome.seeds}, {"variants", variants}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace fewrank
