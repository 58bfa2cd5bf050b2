#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "t2sg/errors.hpp"
#include "t2sg/featurize.hpp"
#include "t2sg/graph_json.hpp"
#include "t2sg/loss.hpp"
#include "t2sg/network.hpp"
#include "t2sg/rng.hpp"

namespace t2sg {

struct TrainConfig {
    int batch_size = 8;  // B; the loss crosses every scene with every text
    int epochs = 10;
    double learning_rate = 1e-3;
    LossMode loss_mode = LossMode::Both;
    uint64_t seed = 1;
    int threads = 1;           // pair passes within a step run in parallel
    int checkpoint_every = 0;  // steps between sink calls; 0 = final only

    void check() const {
        if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2 (in-batch negatives)");
        if (learning_rate < 0.0) throw InvalidArgument("learning_rate must be >= 0");
        if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
    }
};

// One scene with all its paired text-graphs, featurized.
struct SceneEntry {
    std::string scene_id;
    FeaturizedGraph scene;
    std::vector<FeaturizedGraph> texts;
};

struct TrainingSet {
    std::vector<SceneEntry> scenes;

    size_t total_pairs() const {
        size_t n = 0;
        for (const auto& s : scenes) n += s.texts.size();
        return n;
    }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Manifest: a JSON list of {scene_graph_path, text_graph_paths[]} (either a
// top-level array or under a "pairs" key). Paths resolve relative to the
// manifest's directory. Scene graphs are distance-filtered at tau before
// featurization.
inline TrainingSet load_training_set(const std::string& manifest_path, const WordVectorTable& table,
                                     double tau) {
    auto doc = detail::parse_json_or_throw(read_file(manifest_path));
    const nlohmann::json* entries = nullptr;
    if (doc.is_array()) {
        entries = &doc;
    } else if (doc.is_object() && doc.contains("pairs") && doc["pairs"].is_array()) {
        entries = &doc["pairs"];
    } else {
        throw MalformedDocument("manifest must be a list of {scene_graph_path, text_graph_paths}");
    }

    const auto base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    TrainingSet set;
    for (const auto& e : *entries) {
        if (!e.is_object() || !e.contains("scene_graph_path") || !e.contains("text_graph_paths")) {
            throw MalformedDocument("manifest entry needs scene_graph_path and text_graph_paths");
        }
        SceneEntry entry;
        SemanticGraph scene = parse_scene_graph(read_file(resolve(e["scene_graph_path"].get<std::string>())));
        entry.scene_id = scene.graph_id;
        entry.scene = featurize(table, filter_edges(scene, tau).graph);
        for (const auto& tp : e["text_graph_paths"]) {
            SemanticGraph text = parse_text_graph(read_file(resolve(tp.get<std::string>())));
            entry.texts.push_back(featurize(table, text));
        }
        if (entry.texts.empty()) {
            throw MalformedDocument("manifest entry for '" + entry.scene_id + "' has no text graphs");
        }
        set.scenes.push_back(std::move(entry));
    }
    return set;
}

struct BatchItem {
    int scene_index = 0;
    int text_index = 0;
};

// B matched pairs with pairwise-distinct scenes, each with one of its texts
// drawn uniformly.
inline std::vector<BatchItem> build_batch(const TrainingSet& set, int batch_size, Rng& rng) {
    if (int(set.scenes.size()) < batch_size) {
        throw InsufficientScenes("need " + std::to_string(batch_size) + " distinct scenes, have " +
                                 std::to_string(set.scenes.size()));
    }
    auto chosen = rng.sample_without_replacement(set.scenes.size(), size_t(batch_size));
    std::vector<BatchItem> batch;
    batch.reserve(size_t(batch_size));
    for (size_t idx : chosen) {
        const auto& texts = set.scenes[idx].texts;
        batch.push_back({int(idx), int(rng.index(texts.size()))});
    }
    return batch;
}

struct BatchEval {
    BatchScores scores;
    double loss_cossim = 0.0;
    double loss_match = 0.0;
    double loss_total = 0.0;
};

// Loss (and optionally parameter gradients) of one aligned batch: texts[i]
// matches scenes[i], every (scene_i, text_k) crossing is a forward pass.
// Pair passes are data-parallel; per-thread gradients reduce in a fixed
// order so results are reproducible for a given thread count.
inline BatchEval run_batch(const JointModel& model,
                           const std::vector<const FeaturizedGraph*>& texts,
                           const std::vector<const FeaturizedGraph*>& scenes, LossMode mode,
                           int threads, JointModel* grads_out) {
    if (texts.size() != scenes.size() || texts.size() < 2) {
        throw InvalidArgument("run_batch needs B >= 2 aligned (text, scene) pairs");
    }
    const int b = int(texts.size());
    const int n_pairs = b * b;
    std::vector<net::PairCache> caches(static_cast<size_t>(n_pairs));

    threads = std::max(1, threads);
    auto parallel_for = [&](auto&& body) {
        if (threads == 1) {
            for (int f = 0; f < n_pairs; ++f) body(f, 0);
            return;
        }
        std::vector<std::thread> pool;
        const int chunk = (n_pairs + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                const int lo = t * chunk;
                const int hi = std::min(n_pairs, lo + chunk);
                for (int f = lo; f < hi; ++f) body(f, t);
            });
        }
        for (auto& th : pool) th.join();
    };

    BatchEval eval;
    eval.scores = BatchScores::aligned(b);
    parallel_for([&](int flat, int) {
        embed_pair(model, *texts[size_t(flat % b)], *scenes[size_t(flat / b)], &caches[size_t(flat)]);
    });
    for (int f = 0; f < n_pairs; ++f) {
        const auto& c = caches[size_t(f)];
        eval.scores.cos_matrix(f / b, f % b) = cosine(c.s_scene, c.s_text);
        eval.scores.match_matrix(f / b, f % b) = c.m;
    }

    Mat d_cos(b, b), d_match(b, b);
    eval.loss_total = loss_total(eval.scores, mode, grads_out ? &d_cos : nullptr,
                                 grads_out ? &d_match : nullptr, &eval.loss_cossim,
                                 &eval.loss_match);
    if (!grads_out) return eval;

    std::vector<JointModel> grads_per_thread;
    grads_per_thread.reserve(size_t(threads));
    for (int t = 0; t < threads; ++t) grads_per_thread.push_back(model.zeros_like());

    const int dim = model.config.dim;
    parallel_for([&](int flat, int thread_idx) {
        const auto& c = caches[size_t(flat)];
        const int i = flat / b, k = flat % b;

        Vec d_s_scene(size_t(dim), 0.0), d_s_text(size_t(dim), 0.0);
        const double dc = d_cos(i, k);
        const double ns = norm2(c.s_scene.data(), dim);
        const double nt = norm2(c.s_text.data(), dim);
        if (dc != 0.0 && ns > 0.0 && nt > 0.0) {
            const double cos_ik = eval.scores.cos_matrix(i, k);
            for (int x = 0; x < dim; ++x) {
                d_s_scene[size_t(x)] =
                    dc * (c.s_text[size_t(x)] / (ns * nt) - cos_ik * c.s_scene[size_t(x)] / (ns * ns));
                d_s_text[size_t(x)] =
                    dc * (c.s_scene[size_t(x)] / (ns * nt) - cos_ik * c.s_text[size_t(x)] / (nt * nt));
            }
        }
        backward_pair(model, *texts[size_t(k)], *scenes[size_t(i)], c, d_match(i, k), d_s_text,
                      d_s_scene, grads_per_thread[size_t(thread_idx)]);
    });

    *grads_out = std::move(grads_per_thread[0]);
    if (threads > 1) {
        std::vector<Mat*> dst;
        grads_out->for_each_tensor([&](const std::string&, Mat& t) { dst.push_back(&t); });
        for (int t = 1; t < threads; ++t) {
            std::vector<Mat*> src;
            grads_per_thread[size_t(t)].for_each_tensor(
                [&](const std::string&, Mat& m) { src.push_back(&m); });
            for (size_t ti = 0; ti < dst.size(); ++ti)
                for (size_t x = 0; x < dst[ti]->v.size(); ++x) dst[ti]->v[x] += src[ti]->v[x];
        }
    }
    return eval;
}

// Adam with bias correction; beta = (0.9, 0.999), eps = 1e-8.
struct AdamState {
    JointModel m, v;
    int64_t t = 0;

    static AdamState init(const JointModel& model) {
        return {model.zeros_like(), model.zeros_like(), 0};
    }
};

inline void adam_update(JointModel& params, JointModel& grads, AdamState& state, double lr,
                        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(beta2, double(state.t));
    std::vector<Mat*> p, g, mm, vv;
    params.for_each_tensor([&](const std::string&, Mat& t) { p.push_back(&t); });
    grads.for_each_tensor([&](const std::string&, Mat& t) { g.push_back(&t); });
    state.m.for_each_tensor([&](const std::string&, Mat& t) { mm.push_back(&t); });
    state.v.for_each_tensor([&](const std::string&, Mat& t) { vv.push_back(&t); });
    for (size_t ti = 0; ti < p.size(); ++ti) {
        auto& pv = p[ti]->v;
        auto& gv = g[ti]->v;
        auto& mv = mm[ti]->v;
        auto& sv = vv[ti]->v;
        for (size_t i = 0; i < pv.size(); ++i) {
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * gv[i];
            sv[i] = beta2 * sv[i] + (1.0 - beta2) * gv[i] * gv[i];
            pv[i] -= lr * (mv[i] / bc1) / (std::sqrt(sv[i] / bc2) + eps);
        }
    }
}

struct StepResult {
    double loss_cossim = 0.0;
    double loss_match = 0.0;
    double loss_total = 0.0;
};

// One optimization step: run the batch, check for divergence, Adam update.
inline StepResult train_step(JointModel& model, const TrainingSet& set,
                             const std::vector<BatchItem>& batch, const TrainConfig& cfg,
                             AdamState& adam) {
    std::vector<const FeaturizedGraph*> texts, scenes;
    for (const auto& item : batch) {
        const auto& entry = set.scenes[size_t(item.scene_index)];
        scenes.push_back(&entry.scene);
        texts.push_back(&entry.texts[size_t(item.text_index)]);
    }

    JointModel grads = model.zeros_like();
    BatchEval eval = run_batch(model, texts, scenes, cfg.loss_mode, cfg.threads, &grads);
    if (!std::isfinite(eval.loss_total)) {
        throw DivergedLoss("non-finite loss at optimizer step " + std::to_string(adam.t + 1));
    }
    if (!grads.finite()) {
        throw DivergedLoss("non-finite gradient at optimizer step " + std::to_string(adam.t + 1));
    }

    adam_update(model, grads, adam, cfg.learning_rate);
    return {eval.loss_cossim, eval.loss_match, eval.loss_total};
}

struct TrainRecord {
    int64_t step = 0;
    double loss_cossim = 0.0;
    double loss_match = 0.0;
    double loss_total = 0.0;
};

struct TrainResult {
    std::vector<TrainRecord> curve;
    int64_t steps = 0;
};

using CheckpointSink = std::function<void(const JointModel&, int64_t step)>;

// Runs epochs x (pairs / B) steps. Deterministic for a given seed and thread
// count. On divergence the sink receives the last good parameters before
// DivergedLoss propagates.
inline TrainResult train(JointModel& model, const TrainingSet& set, const TrainConfig& cfg,
                         const CheckpointSink& sink = {}) {
    cfg.check();
    if (set.scenes.empty()) throw InvalidArgument("train: empty dataset");

    Rng rng(cfg.seed);
    AdamState adam = AdamState::init(model);
    const int64_t steps_per_epoch = std::max<int64_t>(1, int64_t(set.total_pairs()) / cfg.batch_size);

    TrainResult result;
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            auto batch = build_batch(set, cfg.batch_size, rng);
            StepResult sr;
            try {
                sr = train_step(model, set, batch, cfg, adam);
            } catch (const DivergedLoss&) {
                if (sink) sink(model, step);
                throw;
            }
            ++step;
            result.curve.push_back({step, sr.loss_cossim, sr.loss_match, sr.loss_total});
            if (sink && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
                sink(model, step);
            }
        }
    }
    result.steps = step;
    if (sink) sink(model, step);
    return result;
}

inline void write_loss_curve_csv(const TrainResult& result, std::ostream& out) {
    out << "step,loss_cossim,loss_match,loss_total\n";
    char buf[160];
    for (const auto& r : result.curve) {
        std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step),
                      r.loss_cossim, r.loss_match, r.loss_total);
        out << buf;
    }
}

}  // namespace t2sg
