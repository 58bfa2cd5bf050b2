// t2sg: text-to-scene-graph retrieval toolkit.
//
// Subcommands cover the full workflow: synth -> train -> embed -> query,
// plus ingest/extract/eval/bench utilities. All randomness is controlled by
// --seed; outputs are CSV or JSON.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "t2sg/featurize.hpp"
#include "t2sg/graph_json.hpp"
#include "t2sg/llm_extract.hpp"
#include "t2sg/llm_http.hpp"
#include "t2sg/loss.hpp"
#include "t2sg/model.hpp"
#include "t2sg/network.hpp"
#include "t2sg/retrieval.hpp"
#include "t2sg/store.hpp"
#include "t2sg/synth.hpp"
#include "t2sg/text_extract.hpp"
#include "t2sg/trainer.hpp"

namespace {

struct Range {
    int lo = 0, hi = 0;
};

Range parse_range(const std::string& s) {
    auto colon = s.find(':');
    Range r;
    if (colon == std::string::npos) {
        r.lo = r.hi = std::stoi(s);
    } else {
        r.lo = std::stoi(s.substr(0, colon));
        r.hi = std::stoi(s.substr(colon + 1));
    }
    return r;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path, std::ios::binary);
    if (!file) throw t2sg::IoError("cannot write " + path);
    return file;
}

// Scene graphs named by a manifest, filtered and featurized.
std::vector<t2sg::FeaturizedGraph> load_scenes_from_manifest(const std::string& manifest_path,
                                                             const t2sg::WordVectorTable& table,
                                                             double tau) {
    auto doc = t2sg::detail::parse_json_or_throw(t2sg::read_file(manifest_path));
    const nlohmann::json* entries = doc.is_array() ? &doc : &doc.at("pairs");
    const auto base = std::filesystem::path(manifest_path).parent_path();
    std::vector<t2sg::FeaturizedGraph> scenes;
    for (const auto& e : *entries) {
        std::filesystem::path p(e.at("scene_graph_path").get<std::string>());
        if (!p.is_absolute()) p = base / p;
        auto g = t2sg::parse_scene_graph(t2sg::read_file(p.string()));
        scenes.push_back(t2sg::featurize(table, t2sg::filter_edges(g, tau).graph));
    }
    return scenes;
}

t2sg::FeaturizedGraph load_featurized(const std::string& path, const t2sg::WordVectorTable& table,
                                      bool scene, double tau) {
    if (scene) {
        auto g = t2sg::parse_scene_graph(t2sg::read_file(path));
        return t2sg::featurize(table, t2sg::filter_edges(g, tau).graph);
    }
    return t2sg::featurize(table, t2sg::parse_text_graph(t2sg::read_file(path)));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"text-to-scene-graph retrieval toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI config file; flags override config values");

    // ---- synth ----------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out, synth_vocab, synth_objects = "4:8", synth_subgraph = "2:4";
    t2sg::SynthConfig synth_cfg;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--vocab", synth_vocab, "vocabulary JSON file")->required();
    synth->add_option("--num-scenes", synth_cfg.num_scenes, "scenes to generate");
    synth->add_option("--objects-per-scene", synth_objects, "range lo:hi");
    synth->add_option("--descriptions-per-scene", synth_cfg.descriptions_per_scene, "texts per scene");
    synth->add_option("--subgraph-size", synth_subgraph, "description subgraph range lo:hi");
    synth->add_option("--dim", synth_cfg.dim, "word-vector width");
    synth->add_option("--seed", synth_cfg.seed, "master seed");

    // ---- ingest ---------------------------------------------------------
    auto* ingest = app.add_subcommand("ingest", "parse, filter and featurize scene graphs");
    std::string ingest_vectors, ingest_out;
    std::vector<std::string> ingest_inputs;
    double ingest_tau = 1.5;
    ingest->add_option("--vectors", ingest_vectors, "word-vector file")->required();
    ingest->add_option("--out", ingest_out, "output directory")->required();
    ingest->add_option("--tau", ingest_tau, "edge distance threshold in meters");
    ingest->add_option("inputs", ingest_inputs, "scene-graph JSON files")->required();

    // ---- extract --------------------------------------------------------
    auto* extract = app.add_subcommand("extract", "turn a description into a text-graph");
    std::string ex_desc, ex_in, ex_out, ex_data_dir = "data", ex_prompt, ex_endpoint, ex_model_name;
    bool ex_llm = false;
    extract->add_option("--desc", ex_desc, "description text");
    extract->add_option("--in", ex_in, "file containing the description");
    extract->add_option("--out", ex_out, "output file (default stdout)");
    extract->add_option("--data-dir", ex_data_dir, "directory with relations.txt/attributes.txt");
    extract->add_flag("--llm", ex_llm, "use the LLM endpoint instead of the rule extractor");
    extract->add_option("--llm-endpoint", ex_endpoint, "LLM base URL, e.g. http://localhost:8000")
        ->envname("SG_LLM_ENDPOINT");
    extract->add_option("--llm-model", ex_model_name, "LLM model name")->envname("SG_LLM_MODEL");
    extract->add_option("--prompt", ex_prompt, "prompt template (default <data-dir>/prompt_template.txt)");

    // ---- train ----------------------------------------------------------
    auto* train = app.add_subcommand("train", "train the joint embedding model");
    std::string tr_manifest, tr_vectors, tr_model_out, tr_curve_out, tr_loss_mode = "both";
    t2sg::ModelConfig tr_model_cfg;
    t2sg::TrainConfig tr_cfg;
    double tr_tau = 1.5;
    train->add_option("--manifest", tr_manifest, "training manifest JSON")->required();
    train->add_option("--vectors", tr_vectors, "word-vector file")->required();
    train->add_option("--model-out", tr_model_out, "checkpoint output path")->required();
    train->add_option("--dim", tr_model_cfg.dim, "feature dimension");
    train->add_option("--blocks", tr_model_cfg.num_blocks, "attention modules N");
    train->add_option("--mlp-hidden", tr_model_cfg.mlp_hidden, "matching head width");
    train->add_option("--batch-size", tr_cfg.batch_size, "batch size B");
    train->add_option("--epochs", tr_cfg.epochs, "training epochs");
    train->add_option("--lr", tr_cfg.learning_rate, "learning rate");
    train->add_option("--loss-mode", tr_loss_mode, "cossim|matchprob|both|infonce");
    train->add_option("--seed", tr_cfg.seed, "seed for init and batching");
    train->add_option("--tau", tr_tau, "edge distance threshold in meters");
    train->add_option("--threads", tr_cfg.threads, "parallel pair passes per step");
    train->add_option("--checkpoint-every", tr_cfg.checkpoint_every, "steps between checkpoints");
    train->add_option("--curve-out", tr_curve_out, "loss curve CSV path");

    // ---- embed ----------------------------------------------------------
    auto* embed = app.add_subcommand("embed", "precompute the scene embedding store");
    std::string em_model, em_vectors, em_manifest, em_fixed_text, em_store_out;
    double em_tau = 1.5;
    embed->add_option("--model", em_model, "model checkpoint")->required();
    embed->add_option("--vectors", em_vectors, "word-vector file")->required();
    embed->add_option("--manifest", em_manifest, "manifest naming the scenes")->required();
    embed->add_option("--store", em_store_out, "store output path")->required();
    embed->add_option("--fixed-text", em_fixed_text,
                      "text-graph JSON used as the fixed counterpart (default: first manifest text)");
    embed->add_option("--tau", em_tau, "edge distance threshold in meters");

    // ---- query ----------------------------------------------------------
    auto* query = app.add_subcommand("query", "rank scenes for one description");
    std::string q_model, q_vectors, q_desc, q_text_graph, q_manifest, q_store, q_fixed_scene,
        q_mode = "cos-sim", q_out, q_data_dir = "data";
    int q_k = 10;
    double q_tau = 1.5;
    query->add_option("--model", q_model, "model checkpoint")->required();
    query->add_option("--vectors", q_vectors, "word-vector file")->required();
    query->add_option("--desc", q_desc, "query description (rule-extracted)");
    query->add_option("--text-graph", q_text_graph, "pre-extracted text-graph JSON");
    query->add_option("--manifest", q_manifest, "candidate scenes (pairwise modes)");
    query->add_option("--store", q_store, "embedding store (ret-based mode)");
    query->add_option("--fixed-scene", q_fixed_scene, "scene JSON paired with the query (ret-based)");
    query->add_option("--mode", q_mode, "match-prob|cos-sim|ret-based");
    query->add_option("--k", q_k, "list length");
    query->add_option("--tau", q_tau, "edge distance threshold in meters");
    query->add_option("--data-dir", q_data_dir, "lexicon directory for --desc");
    query->add_option("--out", q_out, "output CSV (default stdout)");

    // ---- eval -----------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "recall tables over a dataset");
    std::string ev_model, ev_vectors, ev_manifest, ev_mode = "all", ev_pool = "ten", ev_ks = "1,2,3,5",
        ev_fixed_text, ev_fixed_scene, ev_out;
    int ev_trials = 1000;
    uint64_t ev_seed = 1;
    double ev_tau = 1.5;
    eval->add_option("--model", ev_model, "model checkpoint")->required();
    eval->add_option("--vectors", ev_vectors, "word-vector file")->required();
    eval->add_option("--manifest", ev_manifest, "evaluation manifest")->required();
    eval->add_option("--mode", ev_mode, "all|match-prob|cos-sim|ret-based");
    eval->add_option("--pool", ev_pool, "ten|all candidate pool");
    eval->add_option("--k", ev_ks, "comma-separated k values");
    eval->add_option("--trials", ev_trials, "sampled queries");
    eval->add_option("--seed", ev_seed, "sampling seed");
    eval->add_option("--tau", ev_tau, "edge distance threshold in meters");
    eval->add_option("--fixed-text", ev_fixed_text, "fixed text-graph JSON (ret-based)");
    eval->add_option("--fixed-scene", ev_fixed_scene, "fixed scene JSON (ret-based)");
    eval->add_option("--out", ev_out, "output CSV (default stdout)");

    // ---- bench ----------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "query latency and store size");
    std::string be_model, be_vectors, be_store, be_manifest, be_fixed_scene, be_out;
    int be_reps = 5;
    double be_tau = 1.5;
    bench->add_option("--model", be_model, "model checkpoint")->required();
    bench->add_option("--vectors", be_vectors, "word-vector file")->required();
    bench->add_option("--store", be_store, "embedding store")->required();
    bench->add_option("--manifest", be_manifest, "manifest providing the query texts")->required();
    bench->add_option("--fixed-scene", be_fixed_scene, "scene JSON paired with queries");
    bench->add_option("--repetitions", be_reps, "timing repetitions");
    bench->add_option("--tau", be_tau, "edge distance threshold in meters");
    bench->add_option("--out", be_out, "output JSON (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 1;
    }

    // flag-value parsing is a usage error, not a runtime failure
    Range synth_obj_range, synth_sub_range;
    std::vector<int> eval_k_list;
    try {
        if (synth->parsed()) {
            synth_obj_range = parse_range(synth_objects);
            synth_sub_range = parse_range(synth_subgraph);
        }
        if (eval->parsed()) eval_k_list = parse_int_list(ev_ks);
        if (query->parsed()) t2sg::match_mode_from_string(q_mode);
    } catch (const std::exception& e) {
        std::cerr << "invalid flag value: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) {
            synth_cfg.objects_min = synth_obj_range.lo;
            synth_cfg.objects_max = synth_obj_range.hi;
            synth_cfg.subgraph_min = synth_sub_range.lo;
            synth_cfg.subgraph_max = synth_sub_range.hi;
            auto vocab = t2sg::SynthVocab::load(synth_vocab);
            auto paths = t2sg::generate_dataset(synth_cfg, vocab, synth_out);
            std::cout << "dataset: " << paths.root << "\nmanifest: " << paths.manifest
                      << "\nvectors: " << paths.word_vectors << "\n";
        } else if (ingest->parsed()) {
            auto table = t2sg::load_word_vectors(ingest_vectors);
            std::filesystem::create_directories(ingest_out);
            int kept_total = 0, dropped_total = 0;
            for (const auto& input : ingest_inputs) {
                auto g = t2sg::parse_scene_graph(t2sg::read_file(input));
                auto filtered = t2sg::filter_edges(g, ingest_tau);
                auto feat = t2sg::featurize(table, filtered.graph);  // validates features
                (void)feat;
                const auto out_path =
                    std::filesystem::path(ingest_out) / (filtered.graph.graph_id + ".json");
                std::ofstream out(out_path, std::ios::binary);
                out << t2sg::serialize_graph(filtered.graph);
                const int dropped = filtered.dropped_by_distance + filtered.dropped_missing_bbox;
                kept_total += int(filtered.graph.edges.size());
                dropped_total += dropped;
                std::cout << filtered.graph.graph_id << ": " << filtered.graph.nodes.size()
                          << " nodes, " << filtered.graph.edges.size() << " edges kept, " << dropped
                          << " dropped (" << filtered.dropped_missing_bbox << " without bbox)\n";
            }
            std::cout << "total: " << kept_total << " edges kept, " << dropped_total << " dropped\n";
        } else if (extract->parsed()) {
            std::string description = ex_desc;
            if (description.empty() && !ex_in.empty()) description = t2sg::read_file(ex_in);
            if (description.empty()) {
                std::cerr << "one of --desc or --in is required\n";
                return 1;
            }
            t2sg::ExtractionResult result;
            if (ex_llm) {
                if (ex_endpoint.empty() || ex_model_name.empty()) {
                    std::cerr << "--llm needs --llm-endpoint and --llm-model\n";
                    return 1;
                }
                const std::string prompt_path =
                    ex_prompt.empty() ? ex_data_dir + "/prompt_template.txt" : ex_prompt;
                auto tmpl = t2sg::PromptTemplate::load(prompt_path);
                t2sg::HttpLlmClient client({ex_endpoint, ex_model_name});
                result = t2sg::extract_llm(description, client, tmpl);
            } else {
                auto lex = t2sg::Lexicon::load_dir(ex_data_dir);
                result = t2sg::extract_rules(description, lex);
            }
            std::ofstream file;
            open_output(ex_out, file) << t2sg::serialize_graph(result.graph);
        } else if (train->parsed()) {
            auto table = t2sg::load_word_vectors(tr_vectors);
            if (table.dim != tr_model_cfg.dim) {
                tr_model_cfg.dim = table.dim;  // model width follows the vectors
            }
            tr_cfg.loss_mode = t2sg::loss_mode_from_string(tr_loss_mode);
            tr_model_cfg.seed = tr_cfg.seed;
            auto set = t2sg::load_training_set(tr_manifest, table, tr_tau);
            auto model = t2sg::JointModel::init(tr_model_cfg);
            t2sg::CheckpointSink sink = [&](const t2sg::JointModel& m, int64_t) {
                t2sg::save_model(m, tr_model_out);
            };
            auto result = t2sg::train(model, set, tr_cfg, sink);
            if (!tr_curve_out.empty()) {
                std::ofstream curve(tr_curve_out, std::ios::binary);
                t2sg::write_loss_curve_csv(result, curve);
            }
            std::cout << "trained " << result.steps << " steps over " << set.scenes.size()
                      << " scenes (" << set.total_pairs() << " pairs); model: " << tr_model_out
                      << "\n";
            if (!result.curve.empty()) {
                std::printf("first step loss %.6f, last step loss %.6f\n",
                            result.curve.front().loss_total, result.curve.back().loss_total);
            }
        } else if (embed->parsed()) {
            auto table = t2sg::load_word_vectors(em_vectors);
            auto model = t2sg::load_model(em_model);
            auto set = t2sg::load_training_set(em_manifest, table, em_tau);
            std::vector<const t2sg::FeaturizedGraph*> scenes;
            for (const auto& s : set.scenes) scenes.push_back(&s.scene);
            const t2sg::FeaturizedGraph* fixed = nullptr;
            t2sg::FeaturizedGraph fixed_storage;
            if (em_fixed_text.empty()) {
                fixed = &set.scenes.front().texts.front();
            } else {
                fixed_storage = load_featurized(em_fixed_text, table, false, em_tau);
                fixed = &fixed_storage;
            }
            auto store = t2sg::precompute_store(model, scenes, *fixed);
            t2sg::save_store(store, em_store_out);
            std::cout << "store: " << em_store_out << " (" << store.records.size() << " scenes, "
                      << store.file_size_bytes() << " bytes, fixed counterpart '"
                      << store.fixed_counterpart_id << "')\n";
        } else if (query->parsed()) {
            auto table = t2sg::load_word_vectors(q_vectors);
            auto model = t2sg::load_model(q_model);
            t2sg::FeaturizedGraph text;
            if (!q_text_graph.empty()) {
                text = load_featurized(q_text_graph, table, false, q_tau);
            } else if (!q_desc.empty()) {
                auto lex = t2sg::Lexicon::load_dir(q_data_dir);
                text = t2sg::featurize(table, t2sg::extract_rules(q_desc, lex).graph);
            } else {
                std::cerr << "one of --desc or --text-graph is required\n";
                return 1;
            }

            const auto mode = t2sg::match_mode_from_string(q_mode);
            t2sg::RetrievalResult result;
            if (mode == t2sg::MatchMode::RetBased) {
                if (q_store.empty() || q_fixed_scene.empty()) {
                    std::cerr << "--mode ret-based needs --store and --fixed-scene\n";
                    return 1;
                }
                auto store = t2sg::load_store(q_store);
                auto fixed_scene = load_featurized(q_fixed_scene, table, true, q_tau);
                std::vector<std::string> ids;
                for (const auto& r : store.records) ids.push_back(r.first);
                result = t2sg::retrieve_ret_based(model, text, fixed_scene, store, ids,
                                                  std::min<size_t>(size_t(q_k), ids.size()));
            } else {
                if (q_manifest.empty()) {
                    std::cerr << "pairwise modes need --manifest with candidate scenes\n";
                    return 1;
                }
                auto scenes = load_scenes_from_manifest(q_manifest, table, q_tau);
                std::vector<const t2sg::FeaturizedGraph*> cands;
                for (const auto& s : scenes) cands.push_back(&s);
                result = t2sg::retrieve(model, text, cands, mode,
                                        std::min<size_t>(size_t(q_k), cands.size()));
            }
            std::ofstream file;
            auto& out = open_output(q_out, file);
            out << "rank,scene_id,score\n";
            char line[256];
            for (size_t i = 0; i < result.ranked.size(); ++i) {
                std::snprintf(line, sizeof line, "%zu,%s,%.9g\n", i + 1,
                              result.ranked[i].first.c_str(), result.ranked[i].second);
                out << line;
            }
        } else if (eval->parsed()) {
            auto table = t2sg::load_word_vectors(ev_vectors);
            auto model = t2sg::load_model(ev_model);
            auto set = t2sg::load_training_set(ev_manifest, table, ev_tau);
            const auto pool = ev_pool == "all" ? t2sg::CandidatePool::AllScenes
                                               : t2sg::CandidatePool::TenCandidates;
            const auto& ks = eval_k_list;

            t2sg::FeaturizedGraph fixed_text_storage, fixed_scene_storage;
            const t2sg::FeaturizedGraph* fixed_text = &set.scenes.front().texts.front();
            const t2sg::FeaturizedGraph* fixed_scene = &set.scenes.front().scene;
            if (!ev_fixed_text.empty()) {
                fixed_text_storage = load_featurized(ev_fixed_text, table, false, ev_tau);
                fixed_text = &fixed_text_storage;
            }
            if (!ev_fixed_scene.empty()) {
                fixed_scene_storage = load_featurized(ev_fixed_scene, table, true, ev_tau);
                fixed_scene = &fixed_scene_storage;
            }

            std::vector<t2sg::MatchMode> modes;
            if (ev_mode == "all") {
                modes = {t2sg::MatchMode::MatchProb, t2sg::MatchMode::CosSim,
                         t2sg::MatchMode::RetBased};
            } else {
                modes = {t2sg::match_mode_from_string(ev_mode)};
            }
            std::vector<std::pair<std::string, t2sg::RecallReport>> rows;
            for (auto mode : modes) {
                t2sg::Rng rng(ev_seed);  // same trials for every mode
                rows.emplace_back(t2sg::to_string(mode),
                                  t2sg::eval_recall(model, set, mode, ks, pool, ev_trials, rng,
                                                    fixed_text, fixed_scene));
            }
            std::ofstream file;
            t2sg::write_recall_csv(rows, open_output(ev_out, file));
        } else if (bench->parsed()) {
            auto table = t2sg::load_word_vectors(be_vectors);
            auto model = t2sg::load_model(be_model);
            auto store = t2sg::load_store(be_store);
            auto set = t2sg::load_training_set(be_manifest, table, be_tau);
            std::vector<const t2sg::FeaturizedGraph*> queries;
            for (const auto& s : set.scenes) {
                for (const auto& t : s.texts) queries.push_back(&t);
            }
            t2sg::FeaturizedGraph fixed_scene_storage;
            const t2sg::FeaturizedGraph* fixed_scene = &set.scenes.front().scene;
            if (!be_fixed_scene.empty()) {
                fixed_scene_storage = load_featurized(be_fixed_scene, table, true, be_tau);
                fixed_scene = &fixed_scene_storage;
            }
            auto result = t2sg::bench(model, store, queries, *fixed_scene, be_reps);
            nlohmann::json j = {{"median_query_seconds", result.median_query_seconds},
                                {"store_bytes", result.store_bytes},
                                {"queries", result.queries},
                                {"repetitions", result.repetitions}};
            std::ofstream file;
            open_output(be_out, file) << j.dump(2) << "\n";
        }
    } catch (const t2sg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
