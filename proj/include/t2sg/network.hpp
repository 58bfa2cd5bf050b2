#pragma once

#include <cmath>
#include <vector>

#include "t2sg/featurize.hpp"
#include "t2sg/linalg.hpp"
#include "t2sg/model.hpp"

namespace t2sg {

struct ForwardOptions {
    // Message passing follows stored edge direction (node attends to its
    // in-neighbors); set to true to treat edges as undirected.
    bool symmetrize_neighbors = false;
};

struct EmbeddingPair {
    Vec s_scene;
    Vec s_text;
    double match_prob = 0.0;  // in [0, 1]
};

namespace net {

// One attention slot of a node: the self slot (edge == -1) or an incoming
// edge. Keys/values cached for the backward pass.
struct SelfSlot {
    int src = 0;
    int edge = -1;
    Vec k, v;
    double alpha = 0.0;
};

struct SelfAttnCache {
    Mat h_in;
    Mat q;
    std::vector<std::vector<SelfSlot>> rows;
    Mat h_out;
};

struct CrossCache {
    Mat a_in, b_in;
    Mat qa, kb, vb;  // direction a <- b
    Mat alpha_ab;    // A x B
    Mat qb, ka, va;  // direction b <- a
    Mat alpha_ba;    // B x A
    Mat a_out, b_out;
};

struct BlockCache {
    SelfAttnCache self_text, self_scene;
    CrossCache cross;
};

struct PairCache {
    std::vector<BlockCache> blocks;
    Vec s_text, s_scene;
    Vec concat;
    Vec z1, a1, z2, a2;
    double z3 = 0.0, m = 0.0;
};

// Gradients of the loss w.r.t. the input feature matrices of one pair.
struct InputGradients {
    Mat text_nodes, text_edges;
    Mat scene_nodes, scene_edges;
};

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// q_i = Wq h_i; slot keys/values k = Wk h_j + We e_ji, v = Wv h_j + We e_ji
// (biases included, self slot has zero edge feature); alpha = softmax of
// scaled dot products; out_i = h_i + sum_j alpha_ij v_j.
inline void self_attention_forward(const SelfAttentionParams& p, const FeaturizedGraph& g,
                                   const Mat& h_in, SelfAttnCache& cache,
                                   const ForwardOptions& opt) {
    const int n = h_in.rows;
    const int d = h_in.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d));

    cache.h_in = h_in;
    cache.q = Mat(n, d);
    cache.rows.assign(size_t(n), {});
    cache.h_out = Mat(n, d);

    for (int i = 0; i < n; ++i) affine(p.Wq, h_in.row(i), p.bq, cache.q.row(i));

    for (int i = 0; i < n; ++i) {
        auto& slots = cache.rows[size_t(i)];
        slots.push_back({i, -1, Vec(size_t(d)), Vec(size_t(d)), 0.0});
        for (size_t e = 0; e < g.edge_list.size(); ++e) {
            const auto [src, dst] = g.edge_list[e];
            if (dst == i) slots.push_back({src, int(e), Vec(size_t(d)), Vec(size_t(d)), 0.0});
            else if (opt.symmetrize_neighbors && src == i)
                slots.push_back({dst, int(e), Vec(size_t(d)), Vec(size_t(d)), 0.0});
        }

        std::vector<double> logits(slots.size());
        for (size_t s = 0; s < slots.size(); ++s) {
            auto& slot = slots[s];
            affine(p.Wk, h_in.row(slot.src), p.bk, slot.k.data());
            affine(p.Wv, h_in.row(slot.src), p.bv, slot.v.data());
            if (slot.edge >= 0) {
                matvec_add(p.We, g.edge_features.row(slot.edge), slot.k.data());
                matvec_add(p.We, g.edge_features.row(slot.edge), slot.v.data());
            }
            logits[s] = dot(cache.q.row(i), slot.k.data(), d) * inv_sqrt_d;
        }
        softmax(logits.data(), int(logits.size()));

        double* out = cache.h_out.row(i);
        const double* in = h_in.row(i);
        for (int c = 0; c < d; ++c) out[c] = in[c];
        for (size_t s = 0; s < slots.size(); ++s) {
            slots[s].alpha = logits[s];
            for (int c = 0; c < d; ++c) out[c] += logits[s] * slots[s].v[c];
        }
    }
}

inline void self_attention_backward(const SelfAttentionParams& p, const FeaturizedGraph& g,
                                    const SelfAttnCache& cache, const Mat& d_out,
                                    SelfAttentionParams& grad, Mat& d_h_in, Mat* d_edges) {
    const int n = cache.h_in.rows;
    const int d = cache.h_in.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d));

    Vec dq(static_cast<size_t>(d)), dk(static_cast<size_t>(d)), dv(static_cast<size_t>(d)),
        dkv(static_cast<size_t>(d));

    for (int i = 0; i < n; ++i) {
        const double* gi = d_out.row(i);
        for (int c = 0; c < d; ++c) d_h_in(i, c) += gi[c];  // residual

        const auto& slots = cache.rows[size_t(i)];
        std::vector<double> d_alpha(slots.size());
        double weighted = 0.0;
        for (size_t s = 0; s < slots.size(); ++s) {
            d_alpha[s] = dot(gi, slots[s].v.data(), d);
            weighted += slots[s].alpha * d_alpha[s];
        }

        std::fill(dq.begin(), dq.end(), 0.0);
        for (size_t s = 0; s < slots.size(); ++s) {
            const auto& slot = slots[s];
            const double ds = slot.alpha * (d_alpha[s] - weighted) * inv_sqrt_d;

            for (int c = 0; c < d; ++c) {
                dq[c] += ds * slot.k[c];
                dk[c] = ds * cache.q(i, c);
                dv[c] = slot.alpha * gi[c];
            }

            outer_add(grad.Wk, dk.data(), cache.h_in.row(slot.src));
            outer_add(grad.Wv, dv.data(), cache.h_in.row(slot.src));
            for (int c = 0; c < d; ++c) {
                grad.bk.v[size_t(c)] += dk[c];
                grad.bv.v[size_t(c)] += dv[c];
            }
            matvec_t_add(p.Wk, dk.data(), d_h_in.row(slot.src));
            matvec_t_add(p.Wv, dv.data(), d_h_in.row(slot.src));

            if (slot.edge >= 0) {
                for (int c = 0; c < d; ++c) dkv[c] = dk[c] + dv[c];
                outer_add(grad.We, dkv.data(), g.edge_features.row(slot.edge));
                if (d_edges) matvec_t_add(p.We, dkv.data(), d_edges->row(slot.edge));
            }
        }

        outer_add(grad.Wq, dq.data(), cache.h_in.row(i));
        for (int c = 0; c < d; ++c) grad.bq.v[size_t(c)] += dq[c];
        matvec_t_add(p.Wq, dq.data(), d_h_in.row(i));
    }
}

// Complete bipartite attention, both directions from the pre-update values;
// no edge features.
inline void cross_attention_forward(const CrossAttentionParams& p, const Mat& a_in,
                                    const Mat& b_in, CrossCache& cache) {
    const int na = a_in.rows, nb = b_in.rows, d = a_in.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d));

    cache.a_in = a_in;
    cache.b_in = b_in;
    cache.qa = Mat(na, d);
    cache.kb = Mat(nb, d);
    cache.vb = Mat(nb, d);
    cache.alpha_ab = Mat(na, nb);
    cache.qb = Mat(nb, d);
    cache.ka = Mat(na, d);
    cache.va = Mat(na, d);
    cache.alpha_ba = Mat(nb, na);
    cache.a_out = a_in;
    cache.b_out = b_in;

    for (int i = 0; i < na; ++i) {
        affine(p.Wq, a_in.row(i), p.bq, cache.qa.row(i));
        affine(p.Wk, a_in.row(i), p.bk, cache.ka.row(i));
        affine(p.Wv, a_in.row(i), p.bv, cache.va.row(i));
    }
    for (int j = 0; j < nb; ++j) {
        affine(p.Wq, b_in.row(j), p.bq, cache.qb.row(j));
        affine(p.Wk, b_in.row(j), p.bk, cache.kb.row(j));
        affine(p.Wv, b_in.row(j), p.bv, cache.vb.row(j));
    }

    for (int i = 0; i < na; ++i) {
        double* alpha = cache.alpha_ab.row(i);
        for (int j = 0; j < nb; ++j) alpha[j] = dot(cache.qa.row(i), cache.kb.row(j), d) * inv_sqrt_d;
        softmax(alpha, nb);
        double* out = cache.a_out.row(i);
        for (int j = 0; j < nb; ++j) {
            const double* v = cache.vb.row(j);
            for (int c = 0; c < d; ++c) out[c] += alpha[j] * v[c];
        }
    }
    for (int j = 0; j < nb; ++j) {
        double* beta = cache.alpha_ba.row(j);
        for (int i = 0; i < na; ++i) beta[i] = dot(cache.qb.row(j), cache.ka.row(i), d) * inv_sqrt_d;
        softmax(beta, na);
        double* out = cache.b_out.row(j);
        for (int i = 0; i < na; ++i) {
            const double* v = cache.va.row(i);
            for (int c = 0; c < d; ++c) out[c] += beta[i] * v[c];
        }
    }
}

inline void cross_attention_backward(const CrossAttentionParams& p, const CrossCache& cache,
                                     const Mat& d_a_out, const Mat& d_b_out,
                                     CrossAttentionParams& grad, Mat& d_a_in, Mat& d_b_in) {
    const int na = cache.a_in.rows, nb = cache.b_in.rows, d = cache.a_in.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d));

    Mat dqa(na, d), dka(na, d), dva(na, d);
    Mat dqb(nb, d), dkb(nb, d), dvb(nb, d);

    // residual
    for (int i = 0; i < na; ++i)
        for (int c = 0; c < d; ++c) d_a_in(i, c) += d_a_out(i, c);
    for (int j = 0; j < nb; ++j)
        for (int c = 0; c < d; ++c) d_b_in(j, c) += d_b_out(j, c);

    std::vector<double> d_alpha;
    // direction a <- b
    for (int i = 0; i < na; ++i) {
        const double* gi = d_a_out.row(i);
        const double* alpha = cache.alpha_ab.row(i);
        d_alpha.assign(size_t(nb), 0.0);
        double weighted = 0.0;
        for (int j = 0; j < nb; ++j) {
            d_alpha[size_t(j)] = dot(gi, cache.vb.row(j), d);
            weighted += alpha[j] * d_alpha[size_t(j)];
            for (int c = 0; c < d; ++c) dvb(j, c) += alpha[j] * gi[c];
        }
        for (int j = 0; j < nb; ++j) {
            const double ds = alpha[j] * (d_alpha[size_t(j)] - weighted) * inv_sqrt_d;
            for (int c = 0; c < d; ++c) {
                dqa(i, c) += ds * cache.kb(j, c);
                dkb(j, c) += ds * cache.qa(i, c);
            }
        }
    }
    // direction b <- a
    for (int j = 0; j < nb; ++j) {
        const double* gj = d_b_out.row(j);
        const double* beta = cache.alpha_ba.row(j);
        d_alpha.assign(size_t(na), 0.0);
        double weighted = 0.0;
        for (int i = 0; i < na; ++i) {
            d_alpha[size_t(i)] = dot(gj, cache.va.row(i), d);
            weighted += beta[i] * d_alpha[size_t(i)];
            for (int c = 0; c < d; ++c) dva(i, c) += beta[i] * gj[c];
        }
        for (int i = 0; i < na; ++i) {
            const double ds = beta[i] * (d_alpha[size_t(i)] - weighted) * inv_sqrt_d;
            for (int c = 0; c < d; ++c) {
                dqb(j, c) += ds * cache.ka(i, c);
                dka(i, c) += ds * cache.qb(j, c);
            }
        }
    }

    // shared parameters accumulate from both directions
    for (int i = 0; i < na; ++i) {
        outer_add(grad.Wq, dqa.row(i), cache.a_in.row(i));
        outer_add(grad.Wk, dka.row(i), cache.a_in.row(i));
        outer_add(grad.Wv, dva.row(i), cache.a_in.row(i));
        for (int c = 0; c < d; ++c) {
            grad.bq.v[size_t(c)] += dqa(i, c);
            grad.bk.v[size_t(c)] += dka(i, c);
            grad.bv.v[size_t(c)] += dva(i, c);
        }
        matvec_t_add(p.Wq, dqa.row(i), d_a_in.row(i));
        matvec_t_add(p.Wk, dka.row(i), d_a_in.row(i));
        matvec_t_add(p.Wv, dva.row(i), d_a_in.row(i));
    }
    for (int j = 0; j < nb; ++j) {
        outer_add(grad.Wq, dqb.row(j), cache.b_in.row(j));
        outer_add(grad.Wk, dkb.row(j), cache.b_in.row(j));
        outer_add(grad.Wv, dvb.row(j), cache.b_in.row(j));
        for (int c = 0; c < d; ++c) {
            grad.bq.v[size_t(c)] += dqb(j, c);
            grad.bk.v[size_t(c)] += dkb(j, c);
            grad.bv.v[size_t(c)] += dvb(j, c);
        }
        matvec_t_add(p.Wq, dqb.row(j), d_b_in.row(j));
        matvec_t_add(p.Wk, dkb.row(j), d_b_in.row(j));
        matvec_t_add(p.Wv, dvb.row(j), d_b_in.row(j));
    }
}

inline Vec mean_pool(const Mat& h) {
    Vec out(size_t(h.cols), 0.0);
    for (int r = 0; r < h.rows; ++r) {
        const double* row = h.row(r);
        for (int c = 0; c < h.cols; ++c) out[size_t(c)] += row[c];
    }
    for (auto& x : out) x /= double(h.rows);
    return out;
}

}  // namespace net

// Single-graph self-attention over the graph's own features (first block
// input); exposed for unit checks against the loop oracle.
inline Mat self_attention(const SelfAttentionParams& params, const FeaturizedGraph& g,
                          const ForwardOptions& opt = {}) {
    net::SelfAttnCache cache;
    net::self_attention_forward(params, g, g.node_features, cache, opt);
    return cache.h_out;
}

// Bipartite cross-attention update of both node sets from pre-update values.
inline std::pair<Mat, Mat> cross_attention(const CrossAttentionParams& params, const Mat& a_nodes,
                                           const Mat& b_nodes) {
    net::CrossCache cache;
    net::cross_attention_forward(params, a_nodes, b_nodes, cache);
    return {cache.a_out, cache.b_out};
}

// Full forward: N blocks of (self-attention on each graph, cross-attention
// between them), mean pooling, then the matching head on [s_text, s_scene].
inline EmbeddingPair embed_pair(const JointModel& model, const FeaturizedGraph& text,
                                const FeaturizedGraph& scene, net::PairCache* cache_out = nullptr,
                                const ForwardOptions& opt = {}) {
    if (text.node_features.rows < 1 || scene.node_features.rows < 1) {
        throw InvalidArgument("embed_pair: both graphs need at least one node");
    }
    const int d = model.config.dim;
    if (text.node_features.cols != d || scene.node_features.cols != d) {
        throw DimensionMismatch("feature width does not match model dim");
    }

    net::PairCache local;
    net::PairCache& cache = cache_out ? *cache_out : local;
    cache.blocks.assign(size_t(model.config.num_blocks), {});

    Mat h_text = text.node_features;
    Mat h_scene = scene.node_features;
    for (int b = 0; b < model.config.num_blocks; ++b) {
        auto& bc = cache.blocks[size_t(b)];
        const auto& params = model.blocks[size_t(b)];
        net::self_attention_forward(params.self_attn, text, h_text, bc.self_text, opt);
        net::self_attention_forward(params.self_attn, scene, h_scene, bc.self_scene, opt);
        net::cross_attention_forward(params.cross_attn, bc.self_text.h_out, bc.self_scene.h_out,
                                     bc.cross);
        h_text = bc.cross.a_out;
        h_scene = bc.cross.b_out;
    }

    cache.s_text = net::mean_pool(h_text);
    cache.s_scene = net::mean_pool(h_scene);

    cache.concat.resize(size_t(2 * d));
    std::copy(cache.s_text.begin(), cache.s_text.end(), cache.concat.begin());
    std::copy(cache.s_scene.begin(), cache.s_scene.end(), cache.concat.begin() + d);

    const auto& head = model.head;
    const int h1 = head.W1.rows;
    cache.z1.resize(size_t(h1));
    affine(head.W1, cache.concat.data(), head.b1, cache.z1.data());
    cache.a1 = cache.z1;
    for (auto& x : cache.a1) x = std::max(0.0, x);
    cache.z2.resize(size_t(head.W2.rows));
    affine(head.W2, cache.a1.data(), head.b2, cache.z2.data());
    cache.a2 = cache.z2;
    for (auto& x : cache.a2) x = std::max(0.0, x);
    double z3 = head.b3.v[0] + dot(head.W3.row(0), cache.a2.data(), int(cache.a2.size()));
    cache.z3 = z3;
    cache.m = net::sigmoid(z3);

    EmbeddingPair out;
    out.s_text = cache.s_text;
    out.s_scene = cache.s_scene;
    out.match_prob = cache.m;
    return out;
}

// Backward through one cached forward pass. Upstream gradients are
// d(loss)/d(match_prob) and d(loss)/d(pooled embeddings); parameter
// gradients accumulate into grads, input-feature gradients optionally into
// input_grads.
inline void backward_pair(const JointModel& model, const FeaturizedGraph& text,
                          const FeaturizedGraph& scene, const net::PairCache& cache, double d_m,
                          const Vec& d_s_text, const Vec& d_s_scene, JointModel& grads,
                          net::InputGradients* input_grads = nullptr) {
    const int d = model.config.dim;
    const auto& head = model.head;

    // head
    const double dz3 = d_m * cache.m * (1.0 - cache.m);
    Vec da2(cache.a2.size());
    for (size_t i = 0; i < cache.a2.size(); ++i) {
        grads.head.W3.v[i] += dz3 * cache.a2[i];
        da2[i] = dz3 * head.W3.v[i];
    }
    grads.head.b3.v[0] += dz3;

    Vec dz2(cache.z2.size());
    for (size_t i = 0; i < cache.z2.size(); ++i) dz2[i] = cache.z2[i] > 0.0 ? da2[i] : 0.0;
    outer_add(grads.head.W2, dz2.data(), cache.a1.data());
    Vec da1(cache.a1.size(), 0.0);
    matvec_t_add(head.W2, dz2.data(), da1.data());
    for (size_t i = 0; i < dz2.size(); ++i) grads.head.b2.v[i] += dz2[i];

    Vec dz1(cache.z1.size());
    for (size_t i = 0; i < cache.z1.size(); ++i) dz1[i] = cache.z1[i] > 0.0 ? da1[i] : 0.0;
    outer_add(grads.head.W1, dz1.data(), cache.concat.data());
    Vec dconcat(size_t(2 * d), 0.0);
    matvec_t_add(head.W1, dz1.data(), dconcat.data());
    for (size_t i = 0; i < dz1.size(); ++i) grads.head.b1.v[i] += dz1[i];

    // pooled embeddings receive the head path plus the direct loss path
    const int n_text = cache.blocks.back().cross.a_out.rows;
    const int n_scene = cache.blocks.back().cross.b_out.rows;
    Mat d_h_text(n_text, d), d_h_scene(n_scene, d);
    for (int c = 0; c < d; ++c) {
        const double gt = (d_s_text[size_t(c)] + dconcat[size_t(c)]) / double(n_text);
        const double gs = (d_s_scene[size_t(c)] + dconcat[size_t(c) + size_t(d)]) / double(n_scene);
        for (int i = 0; i < n_text; ++i) d_h_text(i, c) = gt;
        for (int i = 0; i < n_scene; ++i) d_h_scene(i, c) = gs;
    }

    for (int b = model.config.num_blocks - 1; b >= 0; --b) {
        const auto& bc = cache.blocks[size_t(b)];
        const auto& params = model.blocks[size_t(b)];
        auto& gblock = grads.blocks[size_t(b)];

        Mat d_mid_text(n_text, d), d_mid_scene(n_scene, d);
        net::cross_attention_backward(params.cross_attn, bc.cross, d_h_text, d_h_scene,
                                      gblock.cross_attn, d_mid_text, d_mid_scene);

        Mat d_in_text(n_text, d), d_in_scene(n_scene, d);
        net::self_attention_backward(params.self_attn, text, bc.self_text, d_mid_text,
                                     gblock.self_attn, d_in_text,
                                     input_grads ? &input_grads->text_edges : nullptr);
        net::self_attention_backward(params.self_attn, scene, bc.self_scene, d_mid_scene,
                                     gblock.self_attn, d_in_scene,
                                     input_grads ? &input_grads->scene_edges : nullptr);
        d_h_text = std::move(d_in_text);
        d_h_scene = std::move(d_in_scene);
    }

    if (input_grads) {
        for (int i = 0; i < n_text; ++i)
            for (int c = 0; c < d; ++c) input_grads->text_nodes(i, c) += d_h_text(i, c);
        for (int i = 0; i < n_scene; ++i)
            for (int c = 0; c < d; ++c) input_grads->scene_nodes(i, c) += d_h_scene(i, c);
    }
}

inline net::InputGradients make_input_gradients(const FeaturizedGraph& text,
                                                const FeaturizedGraph& scene) {
    net::InputGradients g;
    g.text_nodes = Mat(text.node_features.rows, text.node_features.cols);
    g.text_edges = Mat(std::max(1, text.edge_features.rows), text.node_features.cols);
    g.scene_nodes = Mat(scene.node_features.rows, scene.node_features.cols);
    g.scene_edges = Mat(std::max(1, scene.edge_features.rows), scene.node_features.cols);
    return g;
}

}  // namespace t2sg
