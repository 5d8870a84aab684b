#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "fewrank/analysis.hpp"
#include "fewrank/bm25.hpp"
#include "fewrank/corpus.hpp"
#include "fewrank/error.hpp"
#include "fewrank/evaluation.hpp"
#include "fewrank/experiment.hpp"
#include "fewrank/partition.hpp"
#include "fewrank/prompting.hpp"
#include "fewrank/scorer.hpp"
#include "fewrank/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fewrank;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

json metric_to_json(const MetricResult& m) {
    json per_query = json::object();
    for (const auto& [qid, v] : m.per_query) per_query[qid] = v;
    return json{{"metric", m.metric_name}, {"cutoff", m.cutoff}, {"mean", m.mean},
                {"per_query", per_query}};
}

MetricResult metric_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    json j = json::parse(in);
    MetricResult m;
    m.metric_name = j.at("metric").get<std::string>();
    m.cutoff = j.at("cutoff").get<int>();
    m.mean = j.at("mean").get<double>();
    for (const auto& [qid, v] : j.at("per_query").items()) m.per_query[qid] = v.get<double>();
    return m;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << text;
}

Template template_for_scheme(const std::string& scheme) {
    if (scheme == "manual") return Template::manual_seq2seq();
    if (scheme == "no-words") return Template::no_words();
    throw DataError("unknown prompt scheme \"" + scheme + "\" (manual|no-words)");
}

// Synthetic task TSV: text_a<TAB>text_b<TAB>label
void write_task_tsv(const TaskSpec& task, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& ex : task.examples)
        out << ex.text_a << '\t' << ex.text_b << '\t' << ex.label << '\n';
}

TaskSpec load_task_tsv(const std::string& path, const TaskSpec& shape) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    TaskSpec task = shape;
    task.examples.clear();
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected a<TAB>b<TAB>label");
        task.examples.push_back(
            {line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), std::stoi(line.substr(t2 + 1))});
    }
    return task;
}

void write_queries_tsv(const std::vector<Query>& queries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& q : queries) out << q.id << '\t' << q.text << '\n';
}

void write_collection_tsv(const Collection& collection, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& d : collection.documents()) out << d.id << '\t' << d.text << '\n';
}

void write_qrels(const Qrels& qrels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& [qid, docs] : qrels.judgments)
        for (const auto& [docid, grade] : docs) out << qid << " 0 " << docid << ' ' << grade << '\n';
}

PairScorer model_scorer(const ScorerModelF& model, const RankingSetup& setup) {
    return [&model, setup](const Query& q, const Document& d) {
        return model.score_pair(setup.verbalizer, model.encode_input(setup.prompt_template, q, d))
            .probs.at(1);
    };
}

PairScorer prompt_scorer(const ScorerModelF& model, const ContinuousPrompt& prompt,
                         const Verbalizer& verbalizer) {
    return [&model, &prompt, verbalizer](const Query& q, const Document& d) {
        auto [q_ids, d_ids] = model.encode_prompt_input(prompt, q, d);
        return model.score_with_prompt(verbalizer, prompt, q_ids, d_ids).probs.at(1);
    };
}

SyntheticData synth_from_dir(const std::string& dir) {
    SynthConfig sc;
    sc.n_nli = 1;
    sc.n_qa = 1;
    sc.n_docs = 2;
    sc.n_queries = 1;
    SyntheticData shape = make_synthetic_tasks(sc);  // carries templates/verbalizers
    SyntheticData data;
    data.nli = load_task_tsv(dir + "/nli.tsv", shape.nli);
    data.qa = load_task_tsv(dir + "/qa.tsv", shape.qa);
    data.collection = load_collection(dir + "/collection.tsv");
    data.queries = load_queries(dir + "/queries.tsv");
    data.qrels = load_qrels(dir + "/qrels.txt");
    return data;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot prompt-based neural reranking pipeline"};
    app.require_subcommand(1);

    std::string collection_path, queries_path, qrels_path, run_path, out_path, model_path;
    uint64_t seed = 0;

    auto* cmd_index = app.add_subcommand("index", "build an inverted index and print stats");
    cmd_index->add_option("--collection", collection_path, "collection TSV")->required();

    auto* cmd_retrieve = app.add_subcommand("retrieve", "BM25 first-stage retrieval");
    int retrieve_k = 1000;
    double bm25_k1 = 0.9, bm25_b = 0.4;
    cmd_retrieve->add_option("--collection", collection_path)->required();
    cmd_retrieve->add_option("--queries", queries_path)->required();
    cmd_retrieve->add_option("--k", retrieve_k, "retrieval depth");
    cmd_retrieve->add_option("--k1", bm25_k1);
    cmd_retrieve->add_option("--b", bm25_b);
    cmd_retrieve->add_option("--out", out_path, "output run file")->required();

    auto* cmd_partition = app.add_subcommand("partition", "build few-shot splits");
    std::string scheme = "msmarco";
    int part_k = 5, n_folds = 5;
    double label_fraction = 1.0;
    std::string dev_out;
    cmd_partition->add_option("--scheme", scheme, "msmarco|labels|folds");
    cmd_partition->add_option("--qrels", qrels_path);
    cmd_partition->add_option("--run", run_path, "first-stage run (msmarco scheme)");
    cmd_partition->add_option("--k", part_k, "training queries (msmarco scheme)");
    cmd_partition->add_option("--r", label_fraction, "label fraction (labels scheme)");
    cmd_partition->add_option("--folds", n_folds, "fold count (folds scheme)");
    cmd_partition->add_option("--seed", seed)->required();
    cmd_partition->add_option("--out", out_path)->required();
    cmd_partition->add_option("--dev-out", dev_out, "dev candidates run file (msmarco scheme)");

    auto* cmd_synth = app.add_subcommand("synth", "materialize the synthetic tasks");
    std::string out_dir;
    SynthConfig synth_cfg;
    cmd_synth->add_option("--out-dir", out_dir)->required();
    cmd_synth->add_option("--seed", seed)->required();
    cmd_synth->add_option("--n-nli", synth_cfg.n_nli);
    cmd_synth->add_option("--n-qa", synth_cfg.n_qa);
    cmd_synth->add_option("--n-docs", synth_cfg.n_docs);
    cmd_synth->add_option("--n-queries", synth_cfg.n_queries);

    auto* cmd_pft = app.add_subcommand("prefinetune", "intermediate-task training");
    std::string task_name = "nli", synth_dir, log_path;
    TrainConfig pft_cfg = default_prefinetune_config();
    cmd_pft->add_option("--task", task_name, "nli|qa|mix");
    cmd_pft->add_option("--synth-dir", synth_dir, "directory from `synth`")->required();
    cmd_pft->add_option("--steps", pft_cfg.max_steps);
    cmd_pft->add_option("--batch", pft_cfg.batch_size);
    cmd_pft->add_option("--lr", pft_cfg.learning_rate);
    cmd_pft->add_option("--seed", seed)->required();
    int md_model = 64, mn_layers = 2, mn_heads = 4, mmax_len = 32;
    cmd_pft->add_option("--d-model", md_model);
    cmd_pft->add_option("--n-layers", mn_layers);
    cmd_pft->add_option("--n-heads", mn_heads);
    cmd_pft->add_option("--max-len", mmax_len);
    cmd_pft->add_option("--out", out_path, "output checkpoint")->required();
    cmd_pft->add_option("--log", log_path, "training log JSONL");

    auto* cmd_ft = app.add_subcommand("finetune", "ranking fine-tuning on a split");
    std::string split_path, dev_run_path, prompt_scheme = "manual";
    TrainConfig ft_cfg;
    ft_cfg.max_steps = 300;
    ft_cfg.learning_rate = 2e-4;
    ft_cfg.eval_every = 25;
    cmd_ft->add_option("--model", model_path, "input checkpoint")->required();
    cmd_ft->add_option("--split", split_path)->required();
    cmd_ft->add_option("--collection", collection_path)->required();
    cmd_ft->add_option("--queries", queries_path)->required();
    cmd_ft->add_option("--qrels", qrels_path, "needed with --dev");
    cmd_ft->add_option("--dev", dev_run_path, "dev candidates run file");
    cmd_ft->add_option("--scheme", prompt_scheme, "manual|no-words");
    cmd_ft->add_option("--steps", ft_cfg.max_steps);
    cmd_ft->add_option("--batch", ft_cfg.batch_size);
    cmd_ft->add_option("--lr", ft_cfg.learning_rate);
    cmd_ft->add_option("--eval-every", ft_cfg.eval_every);
    cmd_ft->add_option("--seed", seed)->required();
    cmd_ft->add_option("--out", out_path)->required();
    cmd_ft->add_option("--log", log_path);

    auto* cmd_pt = app.add_subcommand("prompt-tune", "tune continuous prompt, model frozen");
    TrainConfig pt_cfg;
    pt_cfg.max_steps = 300;
    pt_cfg.learning_rate = 1e-3;
    cmd_pt->add_option("--model", model_path)->required();
    cmd_pt->add_option("--split", split_path)->required();
    cmd_pt->add_option("--collection", collection_path)->required();
    cmd_pt->add_option("--queries", queries_path)->required();
    cmd_pt->add_option("--steps", pt_cfg.max_steps);
    cmd_pt->add_option("--batch", pt_cfg.batch_size);
    cmd_pt->add_option("--lr", pt_cfg.learning_rate);
    cmd_pt->add_option("--seed", seed)->required();
    cmd_pt->add_option("--out", out_path, "output prompt file")->required();
    cmd_pt->add_option("--log", log_path);

    auto* cmd_rerank = app.add_subcommand("rerank", "rescore first-stage candidates");
    int depth = 1000;
    std::string prompt_path;
    cmd_rerank->add_option("--model", model_path)->required();
    cmd_rerank->add_option("--run", run_path, "first-stage run")->required();
    cmd_rerank->add_option("--collection", collection_path)->required();
    cmd_rerank->add_option("--queries", queries_path)->required();
    cmd_rerank->add_option("--depth", depth);
    cmd_rerank->add_option("--scheme", prompt_scheme, "manual|no-words");
    cmd_rerank->add_option("--prompt", prompt_path, "continuous prompt file");
    cmd_rerank->add_option("--out", out_path)->required();

    auto* cmd_eval = app.add_subcommand("evaluate", "MRR@k / NDCG@k over a run");
    std::string metric_name = "mrr";
    int metric_k = 0;
    cmd_eval->add_option("--run", run_path)->required();
    cmd_eval->add_option("--qrels", qrels_path)->required();
    cmd_eval->add_option("--metric", metric_name, "mrr|ndcg");
    cmd_eval->add_option("--k", metric_k, "cutoff (default 10 for mrr, 20 for ndcg)");
    cmd_eval->add_option("--out", out_path, "also write metric JSON here");

    auto* cmd_compare = app.add_subcommand("compare", "paired significance of two metric files");
    std::string metric_a, metric_b;
    cmd_compare->add_option("--a", metric_a, "metric JSON (system A)")->required();
    cmd_compare->add_option("--b", metric_b, "metric JSON (system B)")->required();
    cmd_compare->add_option("--seed", seed);

    auto* cmd_analyze = app.add_subcommand("analyze", "embedding + score diagnostics");
    std::string task_tsv;
    cmd_analyze->add_option("--model", model_path)->required();
    cmd_analyze->add_option("--run", run_path, "pairs taken from this run")->required();
    cmd_analyze->add_option("--collection", collection_path)->required();
    cmd_analyze->add_option("--queries", queries_path)->required();
    cmd_analyze->add_option("--qrels", qrels_path)->required();
    cmd_analyze->add_option("--task-tsv", task_tsv, "intermediate-task TSV to mix in");
    cmd_analyze->add_option("--task", task_name, "nli|qa shape for --task-tsv");
    cmd_analyze->add_option("--depth", depth, "pairs per query");
    cmd_analyze->add_option("--out-dir", out_dir)->required();

    auto* cmd_runall = app.add_subcommand("run-all", "full transfer experiment from a config");
    std::string config_path;
    cmd_runall->add_option("--config", config_path, "experiment config JSON")->required();
    cmd_runall->add_option("--out", out_dir, "overrides config output_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);  // prints the message; --help lands here with rc 0
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*cmd_index) {
            auto collection = load_collection(collection_path);
            auto index = build_index(collection);
            json j{{"documents", index.doc_count},
                   {"terms", index.postings.size()},
                   {"avg_doc_length", index.avg_doc_length}};
            std::cout << j.dump(2) << '\n';
        } else if (*cmd_retrieve) {
            auto collection = load_collection(collection_path);
            auto queries = load_queries(queries_path);
            auto index = build_index(collection);
            BM25Params params{bm25_k1, bm25_b};
            Run run;
            for (const auto& q : queries) {
                auto entries = retrieve(index, q, retrieve_k, params);
                if (!entries.empty()) run.entries[q.id] = std::move(entries);
            }
            write_run(run, out_path);
        } else if (*cmd_partition) {
            if (scheme == "msmarco") {
                auto qrels = load_qrels(qrels_path);
                auto run = load_run(run_path);
                auto split = sample_msmarco_split(qrels, run, static_cast<size_t>(part_k), seed);
                write_split(split, out_path);
                if (!dev_out.empty()) {
                    auto dev = build_dev_set(qrels, run, split, seed);
                    Run dev_run;
                    for (const auto& [qid, cands] : dev.candidates)
                        dev_run.entries[qid] = run.entries.at(qid);
                    write_run(dev_run, dev_out);
                }
            } else if (scheme == "labels") {
                auto qrels = load_qrels(qrels_path);
                write_qrels(sample_label_fraction(qrels, label_fraction, seed), out_path);
            } else if (scheme == "folds") {
                auto qrels = load_qrels(qrels_path);
                std::vector<std::string> qids;
                for (const auto& [qid, judged] : qrels.judgments) qids.push_back(qid);
                write_folds(make_folds(qids, n_folds, seed), out_path);
            } else {
                throw DataError("unknown partition scheme \"" + scheme + "\"");
            }
        } else if (*cmd_synth) {
            synth_cfg.seed = seed;
            auto data = make_synthetic_tasks(synth_cfg);
            fs::create_directories(out_dir);
            write_task_tsv(data.nli, out_dir + "/nli.tsv");
            write_task_tsv(data.qa, out_dir + "/qa.tsv");
            write_collection_tsv(data.collection, out_dir + "/collection.tsv");
            write_queries_tsv(data.queries, out_dir + "/queries.tsv");
            write_qrels(data.qrels, out_dir + "/qrels.txt");
        } else if (*cmd_pft) {
            auto data = synth_from_dir(synth_dir);
            auto vocab = build_vocab(data);
            MicroModelConfig mc;
            mc.d_model = md_model;
            mc.n_layers = mn_layers;
            mc.n_heads = mn_heads;
            mc.max_len = mmax_len;
            mc.seed = derive_seed(seed, "model-init");
            ScorerModelF model(mc, vocab);
            MixtureSpec mixture = task_name == "nli"  ? MixtureSpec::single(data.nli)
                                  : task_name == "qa" ? MixtureSpec::single(data.qa)
                                  : task_name == "mix"
                                      ? MixtureSpec::equal({data.nli, data.qa})
                                      : throw DataError("unknown task \"" + task_name + "\"");
            pft_cfg.seed = derive_seed(seed, "prefinetune");
            auto log = prefinetune(model, mixture, pft_cfg);
            model.save(out_path);
            if (!log_path.empty()) log.write_jsonl(log_path);
        } else if (*cmd_ft) {
            auto model = ScorerModelF::load(model_path);
            auto split = load_split(split_path);
            auto collection = load_collection(collection_path);
            auto queries = query_map(load_queries(queries_path));
            RankingSetup setup;
            setup.prompt_template = template_for_scheme(prompt_scheme);
            ft_cfg.seed = derive_seed(seed, "finetune");
            Qrels qrels;
            DevSet dev;
            DevContext dc;
            if (!dev_run_path.empty()) {
                if (qrels_path.empty()) throw DataError("--dev requires --qrels");
                qrels = load_qrels(qrels_path);
                auto dev_run = load_run(dev_run_path);
                for (const auto& [qid, list] : dev_run.entries) {
                    auto& cands = dev.candidates[qid];
                    for (const auto& e : list) cands.push_back(e.docid);
                }
                dc = {&dev, &qrels, &queries, &collection};
            }
            auto log = finetune(model, split, queries, collection, setup, ft_cfg, dc);
            model.save(out_path);
            if (!log_path.empty()) log.write_jsonl(log_path);
        } else if (*cmd_pt) {
            auto model = ScorerModelF::load(model_path);
            auto split = load_split(split_path);
            auto collection = load_collection(collection_path);
            auto queries = query_map(load_queries(queries_path));
            auto prompt = model.make_prompt(
                {"Task: Find the relevance between Query and Document. Query:", "Document:",
                 "Relevant:"});
            pt_cfg.seed = derive_seed(seed, "prompt-tune");
            pt_cfg.mode = TuneMode::prompt_tuning;
            auto result = prompt_tune(model, std::move(prompt), split, queries, collection,
                                      Verbalizer::ranking(), pt_cfg);
            save_prompt(result.prompt, out_path);
            if (!log_path.empty()) result.log.write_jsonl(log_path);
            json j{{"trainable_parameters", result.trainable_parameters},
                   {"frozen_parameters", result.frozen_parameters},
                   {"trainable_fraction",
                    static_cast<double>(result.trainable_parameters) /
                        static_cast<double>(result.trainable_parameters +
                                            result.frozen_parameters)}};
            std::cout << j.dump(2) << '\n';
        } else if (*cmd_rerank) {
            auto model = ScorerModelF::load(model_path);
            auto run = load_run(run_path);
            auto collection = load_collection(collection_path);
            auto queries = query_map(load_queries(queries_path));
            Run out;
            if (!prompt_path.empty()) {
                auto prompt = load_prompt(prompt_path);
                out = rerank(prompt_scorer(model, prompt, Verbalizer::ranking()), run, queries,
                             collection, depth);
            } else {
                RankingSetup setup;
                setup.prompt_template = template_for_scheme(prompt_scheme);
                out = rerank(model_scorer(model, setup), run, queries, collection, depth);
            }
            write_run(out, out_path);
        } else if (*cmd_eval) {
            auto run = load_run(run_path);
            auto qrels = load_qrels(qrels_path);
            MetricResult m;
            if (metric_name == "mrr")
                m = mrr_at_k(run, qrels, metric_k > 0 ? metric_k : 10);
            else if (metric_name == "ndcg")
                m = ndcg_at_k(run, qrels, metric_k > 0 ? metric_k : 20);
            else
                throw DataError("unknown metric \"" + metric_name + "\" (mrr|ndcg)");
            std::cout << metric_to_json(m).dump(2) << '\n';
            if (!out_path.empty()) write_text(out_path, metric_to_json(m).dump(2) + "\n");
        } else if (*cmd_compare) {
            auto a = metric_from_json_file(metric_a);
            auto b = metric_from_json_file(metric_b);
            auto sig = paired_significance(a, b, seed);
            json j{{"p_value", sig.p_value},
                   {"statistic", sig.statistic},
                   {"n_queries", sig.n_queries},
                   {"method", sig.method}};
            std::cout << j.dump(2) << '\n';
        } else if (*cmd_analyze) {
            auto model = ScorerModelF::load(model_path);
            auto run = load_run(run_path);
            auto collection = load_collection(collection_path);
            auto queries = query_map(load_queries(queries_path));
            auto qrels = load_qrels(qrels_path);
            RankingSetup setup;
            std::vector<LabeledPair> pairs;
            std::vector<ScoredPair> scores;
            for (const auto& [qid, list] : run.entries) {
                const Query& q = queries.at(qid);
                for (const auto& e : list) {
                    if (e.rank > depth) break;
                    bool pos = qrels.grade(qid, e.docid) >= 1;
                    const Document& doc = collection.lookup(e.docid);
                    pairs.push_back({qid + ":" + e.docid, pos ? "pos" : "neg", q, doc});
                    auto out = model.score_pair(
                        setup.verbalizer, model.encode_input(setup.prompt_template, q, doc));
                    scores.push_back({out.probs.at(1), pos});
                }
            }
            if (!task_tsv.empty()) {
                SynthConfig sc;
                sc.n_nli = 1;
                sc.n_qa = 1;
                sc.n_docs = 2;
                sc.n_queries = 1;
                auto shape = make_synthetic_tasks(sc);
                auto task = load_task_tsv(task_tsv, task_name == "qa" ? shape.qa : shape.nli);
                for (size_t i = 0; i < task.examples.size(); ++i) {
                    const auto& ex = task.examples[i];
                    pairs.push_back({task.name + ":" + std::to_string(i),
                                     task.label_names.at(ex.label), Query{"t", ex.text_a},
                                     Document{"t", ex.text_b}});
                }
            }
            fs::create_directories(out_dir);
            auto dump = extract_embeddings(model, pairs, setup.prompt_template, setup.verbalizer);
            write_embeddings_tsv(dump, out_dir + "/embeddings.tsv");
            write_projection_tsv(project_2d(dump), out_dir + "/projection.tsv");
            write_histogram_json(score_histogram(scores), out_dir + "/histogram.json");
        } else if (*cmd_runall) {
            auto cfg = ExperimentConfig::from_json_file(config_path);
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (cfg.output_dir.empty())
                throw DataError("config field \"output_dir\" (or --out) is required");
            auto outcome = run_transfer_experiment(cfg, &std::cerr);
            std::cout << results_table(outcome);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return 0;
}
