#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "t2sg/synth.hpp"
#include "t2sg/trainer.hpp"

using namespace t2sg;

namespace {

// tiny in-memory training set with exact-match featurized graphs
TrainingSet toy_set(Rng& rng, int scenes, int texts_per_scene, int dim) {
    TrainingSet set;
    for (int i = 0; i < scenes; ++i) {
        SceneEntry entry;
        entry.scene_id = "scene" + std::to_string(i);
        entry.scene = oracle::random_featurized_graph(rng, 5, dim, entry.scene_id, GraphKind::Scene);
        for (int t = 0; t < texts_per_scene; ++t) {
            // text graph = noisy subset of the scene nodes
            FeaturizedGraph text;
            text.graph_id = entry.scene_id + "_t" + std::to_string(t);
            text.kind = GraphKind::Text;
            const int n = std::max(1, entry.scene.node_features.rows - 1);
            text.node_features = Mat(n, dim);
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < dim; ++c) {
                    text.node_features(r, c) = entry.scene.node_features(r, c) + 0.01 * rng.normal();
                }
            }
            text.edge_features = Mat(0, dim);
            entry.texts.push_back(std::move(text));
        }
        set.scenes.push_back(std::move(entry));
    }
    return set;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("build_batch covers the dataset exactly when sizes match") {
    Rng rng(41);
    auto set = toy_set(rng, 4, 2, 4);
    auto batch = build_batch(set, 4, rng);
    std::set<int> seen;
    for (const auto& item : batch) seen.insert(item.scene_index);
    CHECK(seen.size() == 4);
}

TEST_CASE("build_batch refuses too-small datasets") {
    Rng rng(42);
    auto set = toy_set(rng, 3, 1, 4);
    CHECK_THROWS_AS(build_batch(set, 8, rng), InsufficientScenes);
}

TEST_CASE("scene sampling is uniform (chi-square style 3-sigma bound)") {
    Rng rng(43);
    auto set = toy_set(rng, 50, 1, 2);
    const int draws = 10000;
    const int b = 8;
    std::vector<int> counts(50, 0);
    for (int i = 0; i < draws; ++i) {
        for (const auto& item : build_batch(set, b, rng)) counts[size_t(item.scene_index)]++;
    }
    const double p = double(b) / 50.0;
    const double expect = draws * p;
    const double sigma = std::sqrt(draws * p * (1.0 - p));
    for (int s = 0; s < 50; ++s) {
        CHECK(std::abs(counts[size_t(s)] - expect) < 3.0 * sigma);
    }
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
    Rng rng(44);
    auto set = toy_set(rng, 4, 1, 4);
    ModelConfig cfg{4, 1, 4, 5};
    auto model = JointModel::init(cfg);
    auto before = model;

    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 2;
    tc.learning_rate = 0.0;
    tc.seed = 9;
    train(model, set, tc);

    std::vector<Mat*> a, b;
    model.for_each_tensor([&](const std::string&, Mat& t) { a.push_back(&t); });
    before.for_each_tensor([&](const std::string&, Mat& t) { b.push_back(&t); });
    for (size_t ti = 0; ti < a.size(); ++ti) CHECK(a[ti]->v == b[ti]->v);
}

TEST_CASE("training on a small synthetic set reduces the loss") {
    Rng rng(45);
    auto set = toy_set(rng, 8, 2, 6);
    ModelConfig cfg{6, 1, 8, 5};
    auto model = JointModel::init(cfg);

    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 12;
    tc.learning_rate = 1e-2;
    tc.seed = 9;
    auto result = train(model, set, tc);
    REQUIRE(!result.curve.empty());

    // mean loss over the first vs last quarter of the curve
    const size_t q = std::max<size_t>(1, result.curve.size() / 4);
    double first = 0.0, last = 0.0;
    for (size_t i = 0; i < q; ++i) first += result.curve[i].loss_total;
    for (size_t i = result.curve.size() - q; i < result.curve.size(); ++i) last += result.curve[i].loss_total;
    CHECK(last < first);
}

TEST_CASE("training is reproducible for a fixed seed") {
    Rng rng(46);
    auto set = toy_set(rng, 6, 2, 4);
    TrainConfig tc;
    tc.batch_size = 3;
    tc.epochs = 2;
    tc.seed = 77;

    ModelConfig cfg{4, 1, 4, 5};
    auto m1 = JointModel::init(cfg);
    auto m2 = JointModel::init(cfg);
    auto r1 = train(m1, set, tc);
    auto r2 = train(m2, set, tc);
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (size_t i = 0; i < r1.curve.size(); ++i) {
        CHECK(r1.curve[i].loss_total == r2.curve[i].loss_total);
    }
}

TEST_CASE("injected NaN feature aborts with DivergedLoss after sinking a checkpoint") {
    Rng rng(47);
    auto set = toy_set(rng, 4, 1, 4);
    set.scenes[1].scene.node_features(0, 0) = std::nan("");
    ModelConfig cfg{4, 1, 4, 5};
    auto model = JointModel::init(cfg);

    TrainConfig tc;
    tc.batch_size = 4;  // every scene in the batch, NaN guaranteed
    tc.epochs = 1;
    int sank = 0;
    CheckpointSink sink = [&](const JointModel&, int64_t) { ++sank; };
    CHECK_THROWS_AS(train(model, set, tc, sink), DivergedLoss);
    CHECK(sank == 1);  // last good parameters were offered to the sink
}

TEST_CASE("loss curve CSV has one row per step") {
    Rng rng(48);
    auto set = toy_set(rng, 4, 1, 4);
    ModelConfig cfg{4, 1, 4, 5};
    auto model = JointModel::init(cfg);
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 3;
    auto result = train(model, set, tc);

    std::stringstream out;
    write_loss_curve_csv(result, out);
    std::string line;
    int rows = 0;
    while (std::getline(out, line)) ++rows;
    CHECK(rows == int(result.curve.size()) + 1);
}

TEST_CASE("manifest loader resolves relative paths and filters scenes") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "t2sg_manifest_test";
    fs::create_directories(dir / "g");

    SemanticGraph scene;
    scene.graph_id = "s1";
    scene.kind = GraphKind::Scene;
    GraphNode a, b;
    a.node_id = 0; a.label = "lamp";
    Box box1; box1.min[0] = 0; box1.min[1] = 0; box1.min[2] = 0;
    box1.max[0] = 1; box1.max[1] = 1; box1.max[2] = 1;
    a.bbox = box1;
    b.node_id = 1; b.label = "desk";
    Box box2 = box1;
    box2.min[0] = 4.0; box2.max[0] = 5.0;  // 3 m away: filtered at tau 1.5
    b.bbox = box2;
    scene.nodes = {a, b};
    scene.edges = {{0, 1, "next to"}};

    SemanticGraph text;
    text.graph_id = "t1";
    text.kind = GraphKind::Text;
    GraphNode n;
    n.node_id = 0;
    n.label = "lamp";
    text.nodes = {n};

    {
        std::ofstream f(dir / "g" / "s1.json");
        f << serialize_graph(scene);
        std::ofstream g(dir / "g" / "t1.json");
        g << serialize_graph(text);
        std::ofstream m(dir / "manifest.json");
        m << R"([{"scene_graph_path":"g/s1.json","text_graph_paths":["g/t1.json"]}])";
    }

    WordVectorTable table;
    table.dim = 4;
    auto set = load_training_set((dir / "manifest.json").string(), table, 1.5);
    REQUIRE(set.scenes.size() == 1);
    CHECK(set.scenes[0].scene_id == "s1");
    CHECK(set.scenes[0].scene.edge_list.empty());  // the 3 m edge was filtered
    CHECK(set.scenes[0].texts.size() == 1);
    CHECK(set.total_pairs() == 1);
}

}  // TEST_SUITE
