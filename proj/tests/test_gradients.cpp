#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "t2sg/trainer.hpp"

using namespace t2sg;

namespace {

struct GradCheckResult {
    double worst_group_rel_err = 0.0;
    std::string worst_group;
};

double batch_loss(const JointModel& model, const std::vector<const FeaturizedGraph*>& texts,
                  const std::vector<const FeaturizedGraph*>& scenes, LossMode mode) {
    return run_batch(model, texts, scenes, mode, 1, nullptr).loss_total;
}

// Central finite differences against the analytic gradient, compared per
// parameter group by norm relative error.
GradCheckResult grad_check(JointModel model, const std::vector<const FeaturizedGraph*>& texts,
                           const std::vector<const FeaturizedGraph*>& scenes, LossMode mode,
                           double eps = 1e-5) {
    JointModel analytic = model.zeros_like();
    run_batch(model, texts, scenes, mode, 1, &analytic);

    GradCheckResult result;
    std::vector<std::pair<std::string, Mat*>> params;
    model.for_each_tensor([&](const std::string& name, Mat& t) { params.emplace_back(name, &t); });
    std::vector<Mat*> grads;
    analytic.for_each_tensor([&](const std::string&, Mat& t) { grads.push_back(&t); });

    for (size_t ti = 0; ti < params.size(); ++ti) {
        Mat& tensor = *params[ti].second;
        const Mat& grad = *grads[ti];
        double num2 = 0.0, ana2 = 0.0, diff2 = 0.0;
        for (size_t i = 0; i < tensor.v.size(); ++i) {
            const double saved = tensor.v[i];
            tensor.v[i] = saved + eps;
            const double up = batch_loss(model, texts, scenes, mode);
            tensor.v[i] = saved - eps;
            const double down = batch_loss(model, texts, scenes, mode);
            tensor.v[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            num2 += fd * fd;
            ana2 += grad.v[i] * grad.v[i];
            diff2 += (fd - grad.v[i]) * (fd - grad.v[i]);
        }
        // 1e-6 floor: key biases have exactly-zero gradients (softmax rows
        // are invariant to uniform logit shifts), leaving only FD noise
        const double denom = std::max({std::sqrt(num2), std::sqrt(ana2), 1e-6});
        const double rel = std::sqrt(diff2) / denom;
        if (rel > result.worst_group_rel_err) {
            result.worst_group_rel_err = rel;
            result.worst_group = params[ti].first;
        }
    }
    return result;
}

std::pair<std::vector<FeaturizedGraph>, std::vector<FeaturizedGraph>> random_pairs(Rng& rng, int b,
                                                                                   int dim,
                                                                                   int max_nodes) {
    std::vector<FeaturizedGraph> texts, scenes;
    for (int i = 0; i < b; ++i) {
        texts.push_back(oracle::random_featurized_graph(rng, max_nodes, dim,
                                                        "t" + std::to_string(i), GraphKind::Text));
        scenes.push_back(oracle::random_featurized_graph(rng, max_nodes, dim,
                                                         "s" + std::to_string(i), GraphKind::Scene));
    }
    return {std::move(texts), std::move(scenes)};
}

}  // namespace

TEST_SUITE("gradients") {

TEST_CASE("zero upstream gradient means zero parameter gradients") {
    const int dim = 6;
    Rng rng(21);
    ModelConfig cfg{dim, 1, 5, 3};
    auto model = oracle::random_model(cfg, rng);
    auto text = oracle::random_featurized_graph(rng, 4, dim, "t", GraphKind::Text);
    auto scene = oracle::random_featurized_graph(rng, 4, dim, "s", GraphKind::Scene);

    net::PairCache cache;
    embed_pair(model, text, scene, &cache);
    auto grads = model.zeros_like();
    Vec zero(size_t(dim), 0.0);
    backward_pair(model, text, scene, cache, 0.0, zero, zero, grads);
    grads.for_each_tensor([&](const std::string&, const Mat& t) {
        for (double x : t.v) CHECK(x == 0.0);
    });
}

TEST_CASE("no gradient crosses zeroed cross-attention parameters") {
    const int dim = 6;
    Rng rng(22);
    ModelConfig cfg{dim, 1, 5, 3};
    auto model = oracle::random_model(cfg, rng);
    for (auto& blk : model.blocks) {
        blk.cross_attn.Wq.fill(0.0);
        blk.cross_attn.bq.fill(0.0);
        blk.cross_attn.Wk.fill(0.0);
        blk.cross_attn.bk.fill(0.0);
        blk.cross_attn.Wv.fill(0.0);
        blk.cross_attn.bv.fill(0.0);
    }
    auto text = oracle::random_featurized_graph(rng, 4, dim, "t", GraphKind::Text);
    auto scene = oracle::random_featurized_graph(rng, 4, dim, "s", GraphKind::Scene);

    net::PairCache cache;
    embed_pair(model, text, scene, &cache);
    auto grads = model.zeros_like();
    auto input_grads = make_input_gradients(text, scene);
    // upstream only on the text embedding: nothing may reach scene features
    Vec d_text(size_t(dim), 1.0), zero(size_t(dim), 0.0);
    backward_pair(model, text, scene, cache, 0.0, d_text, zero, grads, &input_grads);
    for (double x : input_grads.scene_nodes.v) CHECK(x == 0.0);
    for (double x : input_grads.scene_edges.v) CHECK(x == 0.0);
    // and the text side does receive gradient
    double total = 0.0;
    for (double x : input_grads.text_nodes.v) total += std::abs(x);
    CHECK(total > 0.0);
}

TEST_CASE("finite differences agree for every parameter group (small net)") {
    Rng rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        const int dim = 5;
        ModelConfig cfg{dim, 1, 4, rng.next_u64()};
        auto model = oracle::random_model(cfg, rng);
        auto [texts, scenes] = random_pairs(rng, 2, dim, 4);
        std::vector<const FeaturizedGraph*> tp{&texts[0], &texts[1]};
        std::vector<const FeaturizedGraph*> sp{&scenes[0], &scenes[1]};
        auto res = grad_check(model, tp, sp, LossMode::Both);
        INFO("worst group: ", res.worst_group);
        CHECK(res.worst_group_rel_err < 1e-4);
    }
}

TEST_CASE("finite differences agree with two blocks") {
    Rng rng(24);
    const int dim = 4;
    ModelConfig cfg{dim, 2, 4, rng.next_u64()};
    auto model = oracle::random_model(cfg, rng);
    auto [texts, scenes] = random_pairs(rng, 2, dim, 3);
    std::vector<const FeaturizedGraph*> tp{&texts[0], &texts[1]};
    std::vector<const FeaturizedGraph*> sp{&scenes[0], &scenes[1]};
    auto res = grad_check(model, tp, sp, LossMode::Both);
    INFO("worst group: ", res.worst_group);
    CHECK(res.worst_group_rel_err < 1e-4);
}

TEST_CASE("finite differences agree for the single-term and InfoNCE modes") {
    Rng rng(25);
    const int dim = 4;
    for (auto mode : {LossMode::CosSim, LossMode::MatchProb, LossMode::CosineInfoNCE}) {
        ModelConfig cfg{dim, 1, 4, rng.next_u64()};
        auto model = oracle::random_model(cfg, rng);
        auto [texts, scenes] = random_pairs(rng, 2, dim, 3);
        std::vector<const FeaturizedGraph*> tp{&texts[0], &texts[1]};
        std::vector<const FeaturizedGraph*> sp{&scenes[0], &scenes[1]};
        auto res = grad_check(model, tp, sp, mode);
        INFO("mode: ", std::string(to_string(mode)), " worst group: ", res.worst_group);
        CHECK(res.worst_group_rel_err < 1e-4);
    }
}

TEST_CASE("threaded gradients equal serial gradients") {
    Rng rng(26);
    const int dim = 6;
    ModelConfig cfg{dim, 1, 5, rng.next_u64()};
    auto model = oracle::random_model(cfg, rng);
    auto [texts, scenes] = random_pairs(rng, 4, dim, 4);
    std::vector<const FeaturizedGraph*> tp, sp;
    for (auto& t : texts) tp.push_back(&t);
    for (auto& s : scenes) sp.push_back(&s);

    auto serial = model.zeros_like();
    auto threaded = model.zeros_like();
    run_batch(model, tp, sp, LossMode::Both, 1, &serial);
    run_batch(model, tp, sp, LossMode::Both, 2, &threaded);

    std::vector<Mat*> a, b;
    serial.for_each_tensor([&](const std::string&, Mat& t) { a.push_back(&t); });
    threaded.for_each_tensor([&](const std::string&, Mat& t) { b.push_back(&t); });
    for (size_t ti = 0; ti < a.size(); ++ti) {
        for (size_t i = 0; i < a[ti]->v.size(); ++i) {
            CHECK(a[ti]->v[i] == doctest::Approx(b[ti]->v[i]).epsilon(1e-12));
        }
    }
}

}  // TEST_SUITE
