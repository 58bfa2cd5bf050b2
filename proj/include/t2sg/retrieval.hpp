#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "t2sg/errors.hpp"
#include "t2sg/network.hpp"
#include "t2sg/rng.hpp"
#include "t2sg/store.hpp"
#include "t2sg/trainer.hpp"

namespace t2sg {

// The three matching-score procedures. RetBased ranks by cosine against
// precomputed scene embeddings; because the network takes a pair, queries
// are embedded against a fixed counterpart scene graph.
enum class MatchMode { MatchProb, CosSim, RetBased };

inline const char* to_string(MatchMode m) {
    switch (m) {
        case MatchMode::MatchProb: return "match-prob";
        case MatchMode::CosSim: return "cos-sim";
        case MatchMode::RetBased: return "ret-based";
    }
    return "?";
}

inline MatchMode match_mode_from_string(const std::string& s) {
    if (s == "match-prob") return MatchMode::MatchProb;
    if (s == "cos-sim") return MatchMode::CosSim;
    if (s == "ret-based") return MatchMode::RetBased;
    throw InvalidArgument("unknown match mode: " + s);
}

// Pairwise matching score: the head's matching probability or the cosine of
// the two embeddings.
inline double score_pair(const JointModel& model, const FeaturizedGraph& text,
                         const FeaturizedGraph& scene, MatchMode mode) {
    if (mode == MatchMode::RetBased) {
        throw InvalidArgument("score_pair handles MatchProb and CosSim; RetBased scores against a store");
    }
    EmbeddingPair pair = embed_pair(model, text, scene);
    return mode == MatchMode::MatchProb ? pair.match_prob : cosine(pair.s_text, pair.s_scene);
}

inline std::vector<float> to_f32(const Vec& v) {
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = float(v[i]);
    return out;
}

// Embeds every scene against one fixed text-graph and stores the resulting
// scene embeddings, keyed by scene id.
inline EmbeddingStore precompute_store(const JointModel& model,
                                       const std::vector<const FeaturizedGraph*>& scenes,
                                       const FeaturizedGraph& fixed_text) {
    EmbeddingStore store;
    store.dim = uint32_t(model.config.dim);
    store.fixed_counterpart_id = fixed_text.graph_id;
    for (const auto* scene : scenes) {
        EmbeddingPair pair = embed_pair(model, fixed_text, *scene);
        store.add(scene->graph_id, to_f32(pair.s_scene));
    }
    return store;
}

struct RetrievalResult {
    std::string query_id;
    std::vector<std::pair<std::string, double>> ranked;  // (scene_id, score), descending
    MatchMode mode = MatchMode::CosSim;
};

namespace detail {

// Descending score, ties broken by ascending scene id so rankings are
// deterministic.
inline void rank_candidates(std::vector<std::pair<std::string, double>>& scored, size_t k) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > k) scored.resize(k);
}

}  // namespace detail

// Pairwise retrieval: scores the query against every candidate graph.
inline RetrievalResult retrieve(const JointModel& model, const FeaturizedGraph& text,
                                const std::vector<const FeaturizedGraph*>& candidates,
                                MatchMode mode, size_t k) {
    if (mode == MatchMode::RetBased) {
        throw InvalidArgument("use retrieve_ret_based for store-backed retrieval");
    }
    if (k > candidates.size()) throw InvalidArgument("k exceeds candidate count");
    RetrievalResult res;
    res.query_id = text.graph_id;
    res.mode = mode;
    res.ranked.reserve(candidates.size());
    for (const auto* scene : candidates) {
        res.ranked.emplace_back(scene->graph_id, score_pair(model, text, *scene, mode));
    }
    detail::rank_candidates(res.ranked, k);
    return res;
}

// Store-backed retrieval: the query is embedded once against the fixed
// counterpart scene, then ranked by cosine against the stored vectors.
inline RetrievalResult retrieve_ret_based(const JointModel& model, const FeaturizedGraph& text,
                                          const FeaturizedGraph& fixed_scene,
                                          const EmbeddingStore& store,
                                          const std::vector<std::string>& candidate_ids, size_t k) {
    if (k > candidate_ids.size()) throw InvalidArgument("k exceeds candidate count");
    EmbeddingPair pair = embed_pair(model, text, fixed_scene);
    RetrievalResult res;
    res.query_id = text.graph_id;
    res.mode = MatchMode::RetBased;
    res.ranked.reserve(candidate_ids.size());
    for (const auto& id : candidate_ids) {
        const auto& emb = store.at(id);  // UnknownSceneId when absent
        Vec stored(emb.begin(), emb.end());
        res.ranked.emplace_back(id, cosine(pair.s_text, stored));
    }
    detail::rank_candidates(res.ranked, k);
    return res;
}

enum class CandidatePool { TenCandidates, AllScenes };

struct RecallReport {
    std::vector<int> ks;
    std::vector<double> mean;    // recall fraction in [0, 1] per k
    std::vector<double> stddev;  // across trial groups
    int trials = 0;
    int groups = 0;
};

// Scores one query text against the scenes named by candidate indices into
// the dataset; lets tests substitute oracle scorers for the model.
using QueryScorer = std::function<std::vector<double>(const FeaturizedGraph& text,
                                                      const std::vector<int>& candidate_scenes)>;

// Per trial: sample a (scene, text) truth pair and a candidate pool, rank,
// and record whether the truth lands in the top k. The ranking for all ks
// comes from one trial, so recall is monotone in k by construction. The
// stddev is computed over contiguous trial groups, default 10.
inline RecallReport eval_recall_with_scorer(const TrainingSet& dataset, const QueryScorer& scorer,
                                            std::vector<int> ks, CandidatePool pool, int trials,
                                            Rng& rng, int groups = 10) {
    const int n_scenes = int(dataset.scenes.size());
    if (pool == CandidatePool::TenCandidates && n_scenes < 10) {
        throw InsufficientScenes("TenCandidates pool needs at least 10 scenes, have " +
                                 std::to_string(n_scenes));
    }
    if (n_scenes < 1 || trials < 1) throw InvalidArgument("eval_recall: empty dataset or trials");
    std::sort(ks.begin(), ks.end());

    RecallReport report;
    report.ks = ks;
    report.trials = trials;
    report.groups = std::max(1, std::min(groups, trials));
    report.mean.assign(ks.size(), 0.0);
    report.stddev.assign(ks.size(), 0.0);

    std::vector<std::vector<double>> group_hits(ks.size(),
                                                std::vector<double>(size_t(report.groups), 0.0));
    std::vector<int> group_size(size_t(report.groups), 0);

    for (int t = 0; t < trials; ++t) {
        const int truth = int(rng.index(uint64_t(n_scenes)));
        const auto& entry = dataset.scenes[size_t(truth)];
        const auto& text = entry.texts[rng.index(entry.texts.size())];

        std::vector<int> cands;
        if (pool == CandidatePool::AllScenes) {
            cands.resize(size_t(n_scenes));
            for (int i = 0; i < n_scenes; ++i) cands[size_t(i)] = i;
        } else {
            cands.push_back(truth);
            auto order = rng.sample_without_replacement(size_t(n_scenes), size_t(n_scenes));
            for (size_t i = 0; i < order.size() && cands.size() < 10; ++i) {
                if (int(order[i]) != truth) cands.push_back(int(order[i]));
            }
        }

        std::vector<double> scores = scorer(text, cands);
        // rank of the truth under descending score, id-ascending tie-break
        int truth_pos = 0;
        for (size_t i = 0; i < cands.size(); ++i) {
            if (cands[i] == truth) truth_pos = int(i);
        }
        const double ts = scores[size_t(truth_pos)];
        const auto& truth_id = dataset.scenes[size_t(truth)].scene_id;
        int rank = 1;
        for (size_t i = 0; i < cands.size(); ++i) {
            if (int(i) == truth_pos) continue;
            const auto& cid = dataset.scenes[size_t(cands[i])].scene_id;
            if (scores[i] > ts || (scores[i] == ts && cid < truth_id)) ++rank;
        }

        const int g = t % report.groups;
        ++group_size[size_t(g)];
        for (size_t ki = 0; ki < ks.size(); ++ki) {
            if (rank <= ks[ki]) group_hits[ki][size_t(g)] += 1.0;
        }
    }

    for (size_t ki = 0; ki < ks.size(); ++ki) {
        double total = 0.0;
        for (int g = 0; g < report.groups; ++g) total += group_hits[ki][size_t(g)];
        report.mean[ki] = total / double(trials);
        double var = 0.0;
        int used = 0;
        for (int g = 0; g < report.groups; ++g) {
            if (group_size[size_t(g)] == 0) continue;
            const double r = group_hits[ki][size_t(g)] / double(group_size[size_t(g)]);
            var += (r - report.mean[ki]) * (r - report.mean[ki]);
            ++used;
        }
        report.stddev[ki] = used > 1 ? std::sqrt(var / double(used - 1)) : 0.0;
    }
    return report;
}

// Model-backed scorer for a mode. RetBased precomputes the store over the
// dataset's scenes once and embeds each query against fixed_scene.
inline QueryScorer make_mode_scorer(const JointModel& model, const TrainingSet& dataset,
                                    MatchMode mode, const FeaturizedGraph* fixed_text = nullptr,
                                    const FeaturizedGraph* fixed_scene = nullptr) {
    if (mode != MatchMode::RetBased) {
        return [&model, &dataset, mode](const FeaturizedGraph& text, const std::vector<int>& cands) {
            std::vector<double> scores(cands.size());
            for (size_t i = 0; i < cands.size(); ++i) {
                scores[i] = score_pair(model, text, dataset.scenes[size_t(cands[i])].scene, mode);
            }
            return scores;
        };
    }
    if (!fixed_text || !fixed_scene) {
        throw InvalidArgument("RetBased scoring needs a fixed text and a fixed scene counterpart");
    }
    std::vector<const FeaturizedGraph*> scenes;
    for (const auto& s : dataset.scenes) scenes.push_back(&s.scene);
    auto store = std::make_shared<EmbeddingStore>(precompute_store(model, scenes, *fixed_text));
    const FeaturizedGraph* fs = fixed_scene;
    const JointModel* mp = &model;
    const TrainingSet* dp = &dataset;
    return [mp, dp, fs, store](const FeaturizedGraph& text, const std::vector<int>& cands) {
        EmbeddingPair pair = embed_pair(*mp, text, *fs);
        std::vector<double> scores(cands.size());
        for (size_t i = 0; i < cands.size(); ++i) {
            const auto& emb = store->at(dp->scenes[size_t(cands[i])].scene_id);
            Vec stored(emb.begin(), emb.end());
            scores[i] = cosine(pair.s_text, stored);
        }
        return scores;
    };
}

inline RecallReport eval_recall(const JointModel& model, const TrainingSet& dataset, MatchMode mode,
                                const std::vector<int>& ks, CandidatePool pool, int trials, Rng& rng,
                                const FeaturizedGraph* fixed_text = nullptr,
                                const FeaturizedGraph* fixed_scene = nullptr) {
    auto scorer = make_mode_scorer(model, dataset, mode, fixed_text, fixed_scene);
    return eval_recall_with_scorer(dataset, scorer, ks, pool, trials, rng);
}

inline void write_recall_csv(const std::vector<std::pair<std::string, RecallReport>>& rows,
                             std::ostream& out) {
    if (rows.empty()) return;
    out << "mode";
    for (int k : rows.front().second.ks) out << ",top" << k;
    out << "\n";
    char cell[64];
    for (const auto& [mode, rep] : rows) {
        out << mode;
        for (size_t i = 0; i < rep.ks.size(); ++i) {
            std::snprintf(cell, sizeof cell, ",%.2f±%.2f", 100.0 * rep.mean[i], 100.0 * rep.stddev[i]);
            out << cell;
        }
        out << "\n";
    }
}

struct BenchResult {
    double median_query_seconds = 0.0;
    size_t store_bytes = 0;
    int queries = 0;
    int repetitions = 0;
};

// Times one query end to end: embed the text against the fixed counterpart
// scene, then rank it against every stored embedding. Warm-up pass first,
// then the median over repetitions x queries.
inline BenchResult bench(const JointModel& model, const EmbeddingStore& store,
                         const std::vector<const FeaturizedGraph*>& queries,
                         const FeaturizedGraph& fixed_scene, int repetitions) {
    if (queries.empty()) throw EmptyQuerySet("bench needs at least one query");
    if (repetitions < 1) throw InvalidArgument("repetitions must be >= 1");

    auto run_query = [&](const FeaturizedGraph& text) {
        EmbeddingPair pair = embed_pair(model, text, fixed_scene);
        double best = -2.0;
        size_t best_idx = 0;
        Vec stored;
        for (size_t i = 0; i < store.records.size(); ++i) {
            const auto& emb = store.records[i].second;
            stored.assign(emb.begin(), emb.end());
            const double c = cosine(pair.s_text, stored);
            if (c > best) {
                best = c;
                best_idx = i;
            }
        }
        return best_idx;
    };

    size_t sink = run_query(*queries[0]);  // warm-up

    std::vector<double> times;
    times.reserve(size_t(repetitions) * queries.size());
    for (int r = 0; r < repetitions; ++r) {
        for (const auto* q : queries) {
            const auto t0 = std::chrono::steady_clock::now();
            sink += run_query(*q);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
    }
    volatile size_t keep = sink;  // the ranking work must not be optimized out
    (void)keep;
    std::sort(times.begin(), times.end());

    BenchResult res;
    res.median_query_seconds = times[times.size() / 2];
    res.store_bytes = store.file_size_bytes();
    res.queries = int(queries.size());
    res.repetitions = repetitions;
    return res;
}

}  // namespace t2sg
