#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "t2sg/errors.hpp"
#include "t2sg/graph.hpp"
#include "t2sg/graph_json.hpp"
#include "t2sg/rng.hpp"
#include "t2sg/word_vectors.hpp"

namespace t2sg {

struct SynthVocab {
    std::vector<std::string> objects;
    std::vector<std::string> colors;
    std::vector<std::string> materials;
    std::vector<std::string> relations;

    static SynthVocab load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open vocab file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        auto j = detail::parse_json_or_throw(ss.str());
        SynthVocab v;
        auto read = [&](const char* key, std::vector<std::string>& out) {
            if (!j.contains(key) || !j[key].is_array()) {
                throw MalformedDocument(std::string("vocab file missing array '") + key + "'");
            }
            for (const auto& s : j[key]) out.push_back(normalize_token(s.get<std::string>()));
        };
        read("objects", v.objects);
        read("colors", v.colors);
        read("materials", v.materials);
        read("relations", v.relations);
        if (v.objects.empty() || v.relations.empty()) {
            throw MalformedDocument("vocab needs at least one object and one relation");
        }
        return v;
    }
};

struct SynthConfig {
    int num_scenes = 64;
    int objects_min = 4;
    int objects_max = 8;
    int descriptions_per_scene = 4;
    int subgraph_min = 2;
    int subgraph_max = 4;
    int dim = 300;  // width of the emitted word-vector file
    uint64_t seed = 1;

    void check() const {
        if (num_scenes < 10) throw InvalidArgument("num_scenes must be >= 10 (candidate pools)");
        if (objects_min < 1 || objects_max < objects_min) throw InvalidArgument("bad objects_per_scene range");
        if (subgraph_min < 1 || subgraph_max < subgraph_min) throw InvalidArgument("bad subgraph_size range");
        if (descriptions_per_scene < 1) throw InvalidArgument("descriptions_per_scene must be >= 1");
        if (dim <= 0) throw InvalidArgument("dim must be > 0");
    }
};

namespace synth_detail {

constexpr double kRoomX = 6.0, kRoomY = 6.0, kRoomZ = 3.0;
constexpr double kNextToDist = 0.5;       // "next to" threshold
constexpr double kDirectionalDist = 0.9;  // directional relations threshold
constexpr double kAboveMaxGap = 1.4;      // keeps every derived edge under the 1.5 m filter
constexpr double kTouchEps = 1e-9;

inline bool interiors_overlap(const Box& a, const Box& b) {
    for (int k = 0; k < 3; ++k) {
        if (std::max(a.min[k], b.min[k]) >= std::min(a.max[k], b.max[k])) return false;
    }
    return true;
}

inline bool footprints_overlap(const Box& a, const Box& b) {
    for (int k = 0; k < 2; ++k) {
        if (std::max(a.min[k], b.min[k]) >= std::min(a.max[k], b.max[k])) return false;
    }
    return true;
}

// Geometric relation predicates between two placed boxes; the generator and
// its test oracle both go through box geometry only.
struct PairRelations {
    bool a_on_b = false, b_on_a = false;
    bool a_above_b = false, b_above_a = false;
    bool next_to = false;
    // directional relation from a's point of view, empty if none
    std::string a_to_b_directional;
};

inline PairRelations derive_pair_relations(const Box& a, const Box& b) {
    PairRelations out;
    const double dist = bbox_distance(a, b);
    const bool xy = footprints_overlap(a, b);

    if (xy && std::abs(a.min[2] - b.max[2]) < kTouchEps) out.a_on_b = true;
    if (xy && std::abs(b.min[2] - a.max[2]) < kTouchEps) out.b_on_a = true;

    if (xy && !out.a_on_b && !out.b_on_a) {
        if (a.min[2] > b.max[2] && a.min[2] - b.max[2] <= kAboveMaxGap) out.a_above_b = true;
        if (b.min[2] > a.max[2] && b.min[2] - a.max[2] <= kAboveMaxGap) out.b_above_a = true;
    }

    if (!out.a_on_b && !out.b_on_a && !out.a_above_b && !out.b_above_a) {
        if (dist <= kNextToDist) {
            out.next_to = true;
        } else if (dist <= kDirectionalDist && !xy) {
            const double gx = std::max(b.min[0] - a.max[0], a.min[0] - b.max[0]);
            const double gy = std::max(b.min[1] - a.max[1], a.min[1] - b.max[1]);
            if (gx >= gy) {
                out.a_to_b_directional = a.max[0] <= b.min[0] ? "to the left of" : "to the right of";
            } else {
                out.a_to_b_directional = a.max[1] <= b.min[1] ? "in front of" : "behind";
            }
        }
    }
    return out;
}

inline bool relation_in_vocab(const SynthVocab& vocab, const std::string& rel) {
    return std::find(vocab.relations.begin(), vocab.relations.end(), rel) != vocab.relations.end();
}

inline std::string article_for(const std::string& word) {
    static const std::string vowels = "aeiou";
    return !word.empty() && vowels.find(word[0]) != std::string::npos ? "an" : "a";
}

inline std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = char(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

}  // namespace synth_detail

// Places labeled, attributed boxes in a 6 x 6 x 3 m room (floor, stacked,
// or wall-mounted) and derives spatial relations geometrically so that
// filter_edges at 1.5 m keeps every generated edge. Labels within one scene
// are distinct so descriptions resolve unambiguously.
inline SemanticGraph generate_scene(const SynthConfig& cfg, const SynthVocab& vocab, Rng& rng,
                                    const std::string& graph_id) {
    using namespace synth_detail;
    cfg.check();
    const int want = rng.range(cfg.objects_min, cfg.objects_max);
    if (want > int(vocab.objects.size())) {
        throw InvalidArgument("objects_per_scene exceeds vocabulary size");
    }

    SemanticGraph g;
    g.graph_id = graph_id;
    g.kind = GraphKind::Scene;

    auto label_picks = rng.sample_without_replacement(vocab.objects.size(), size_t(want));

    std::vector<Box> boxes;
    for (int i = 0; i < want; ++i) {
        GraphNode node;
        node.node_id = i;
        node.label = vocab.objects[label_picks[size_t(i)]];
        if (!vocab.colors.empty() && rng.uniform() < 0.7) {
            node.attributes.push_back(vocab.colors[rng.index(vocab.colors.size())]);
        }
        if (!vocab.materials.empty() && rng.uniform() < 0.4) {
            node.attributes.push_back(vocab.materials[rng.index(vocab.materials.size())]);
        }

        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            Box b;
            const double mode = rng.uniform();
            if (mode < 0.3 && !boxes.empty()) {
                // stacked on an existing object
                const size_t s = rng.index(boxes.size());
                const Box& sup = boxes[s];
                if (sup.max[2] > 2.0) continue;
                const double sw = sup.max[0] - sup.min[0];
                const double sl = sup.max[1] - sup.min[1];
                const double w = sw * rng.uniform(0.3, 0.8);
                const double l = sl * rng.uniform(0.3, 0.8);
                const double h = rng.uniform(0.15, 0.5);
                b.min[0] = sup.min[0] + rng.uniform(0.0, sw - w);
                b.min[1] = sup.min[1] + rng.uniform(0.0, sl - l);
                b.min[2] = sup.max[2];
                b.max[0] = b.min[0] + w;
                b.max[1] = b.min[1] + l;
                b.max[2] = b.min[2] + h;
            } else if (mode < 0.42) {
                // wall-mounted (floating against a wall)
                const double w = rng.uniform(0.3, 1.0);
                const double l = rng.uniform(0.1, 0.4);
                const double h = rng.uniform(0.3, 0.8);
                b.min[0] = rng.uniform(0.0, kRoomX - w);
                b.min[1] = rng.uniform(0.0, 0.2);  // against one wall
                b.min[2] = rng.uniform(1.2, 1.8);
                b.max[0] = b.min[0] + w;
                b.max[1] = b.min[1] + l;
                b.max[2] = std::min(b.min[2] + h, kRoomZ);
            } else {
                const double w = rng.uniform(0.3, 1.2);
                const double l = rng.uniform(0.3, 1.2);
                const double h = rng.uniform(0.2, 1.0);
                b.min[0] = rng.uniform(0.0, kRoomX - w);
                b.min[1] = rng.uniform(0.0, kRoomY - l);
                b.min[2] = 0.0;
                b.max[0] = b.min[0] + w;
                b.max[1] = b.min[1] + l;
                b.max[2] = h;
            }

            bool clash = false;
            for (const auto& other : boxes) {
                if (interiors_overlap(b, other)) {
                    clash = true;
                    break;
                }
            }
            if (!clash) {
                node.bbox = b;
                boxes.push_back(b);
                placed = true;
            }
        }
        if (!placed) throw PlacementFailure("could not place object " + std::to_string(i));
        g.nodes.push_back(std::move(node));
    }

    // relations from geometry; one edge per derived statement
    for (int i = 0; i < want; ++i) {
        for (int j = i + 1; j < want; ++j) {
            auto rel = derive_pair_relations(boxes[size_t(i)], boxes[size_t(j)]);
            auto add = [&](int s, int t, const std::string& r) {
                if (relation_in_vocab(vocab, r)) g.edges.push_back({s, t, r});
            };
            if (rel.a_on_b) add(i, j, "on");
            if (rel.b_on_a) add(j, i, "on");
            if (rel.a_above_b) {
                add(i, j, "above");
                add(j, i, "under");
            }
            if (rel.b_above_a) {
                add(j, i, "above");
                add(i, j, "under");
            }
            if (rel.next_to) add(i, j, "next to");
            if (!rel.a_to_b_directional.empty()) add(i, j, rel.a_to_b_directional);
        }
    }

    validate_graph(g);
    return g;
}

// Samples a connected subgraph when the scene allows it, then renders one
// sentence per induced edge plus an existence sentence for each untouched
// node. Every sentence round-trips through the rule extractor. Returns the
// description and the ground-truth text-graph.
inline std::pair<std::string, SemanticGraph> describe(const SemanticGraph& scene, int subgraph_size,
                                                      Rng& rng) {
    using namespace synth_detail;
    const int n = int(scene.nodes.size());
    if (subgraph_size < 1 || subgraph_size > n) {
        throw InvalidArgument("subgraph_size must be in [1, node count]");
    }

    // grow a connected node set; fall back to a fresh component when stuck
    std::vector<std::vector<int>> adj(static_cast<size_t>(n));
    std::unordered_map<int, int> pos_of_id;
    for (int i = 0; i < n; ++i) pos_of_id[scene.nodes[size_t(i)].node_id] = i;
    for (const auto& e : scene.edges) {
        adj[size_t(pos_of_id[e.source])].push_back(pos_of_id[e.target]);
        adj[size_t(pos_of_id[e.target])].push_back(pos_of_id[e.source]);
    }

    std::vector<char> selected(size_t(n), 0);
    std::vector<int> chosen;
    while (int(chosen.size()) < subgraph_size) {
        std::vector<int> frontier;
        for (int c : chosen) {
            for (int nb : adj[size_t(c)]) {
                if (!selected[size_t(nb)]) frontier.push_back(nb);
            }
        }
        std::sort(frontier.begin(), frontier.end());
        frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
        int pick;
        if (frontier.empty()) {
            std::vector<int> rest;
            for (int i = 0; i < n; ++i) {
                if (!selected[size_t(i)]) rest.push_back(i);
            }
            pick = rest[rng.index(rest.size())];
        } else {
            pick = frontier[rng.index(frontier.size())];
        }
        selected[size_t(pick)] = 1;
        chosen.push_back(pick);
    }

    // induced edges, shuffled for sentence order
    std::vector<const GraphEdge*> induced;
    for (const auto& e : scene.edges) {
        if (selected[size_t(pos_of_id[e.source])] && selected[size_t(pos_of_id[e.target])]) {
            induced.push_back(&e);
        }
    }
    rng.shuffle(induced);

    SemanticGraph truth;
    truth.graph_id = scene.graph_id + "-sub";
    truth.kind = GraphKind::Text;
    std::unordered_map<int, int> truth_id_of_scene_id;  // scene node id -> truth node id

    auto mention = [&](const GraphNode& node, std::string& sentence, bool* first_out) {
        auto it = truth_id_of_scene_id.find(node.node_id);
        const bool first = it == truth_id_of_scene_id.end();
        if (first) {
            GraphNode tn;
            tn.node_id = int(truth.nodes.size());
            tn.label = node.label;
            tn.attributes = node.attributes;
            truth_id_of_scene_id[node.node_id] = tn.node_id;
            truth.nodes.push_back(std::move(tn));
            std::string np;
            for (const auto& a : node.attributes) np += a + " ";
            np += node.label;
            sentence += article_for(node.attributes.empty() ? node.label : node.attributes.front()) +
                        " " + np;
        } else {
            sentence += "the " + node.label;
        }
        if (first_out) *first_out = first;
    };

    std::vector<std::string> sentences;
    for (const auto* e : induced) {
        const GraphNode& src = scene.nodes[size_t(pos_of_id[e->source])];
        const GraphNode& dst = scene.nodes[size_t(pos_of_id[e->target])];
        std::string s;
        mention(src, s, nullptr);
        s += " " + e->relation + " ";
        mention(dst, s, nullptr);
        sentences.push_back(capitalize(s) + ".");
        truth.edges.push_back({truth_id_of_scene_id[e->source], truth_id_of_scene_id[e->target],
                               e->relation});
    }
    for (int c : chosen) {
        const GraphNode& node = scene.nodes[size_t(c)];
        if (truth_id_of_scene_id.count(node.node_id)) continue;
        std::string s = "there is ";
        mention(node, s, nullptr);
        sentences.push_back(capitalize(s) + ".");
    }

    std::string description;
    for (size_t i = 0; i < sentences.size(); ++i) {
        if (i) description += " ";
        description += sentences[i];
    }

    validate_graph(truth);
    return {description, truth};
}

struct DatasetPaths {
    std::string root;
    std::string manifest;      // manifest.json
    std::string word_vectors;  // vectors.txt
};

// Writes scenes/, texts/, descriptions/, a word-vector file covering the
// vocabulary, and the training manifest. Fully determined by cfg.seed:
// per-scene generators are derived as hash(seed, scene index) streams, so
// scenes could be produced in parallel without changing the bytes.
inline DatasetPaths generate_dataset(const SynthConfig& cfg, const SynthVocab& vocab,
                                     const std::string& out_dir) {
    namespace fs = std::filesystem;
    cfg.check();
    Rng master(cfg.seed);

    fs::create_directories(fs::path(out_dir) / "scenes");
    fs::create_directories(fs::path(out_dir) / "texts");
    fs::create_directories(fs::path(out_dir) / "descriptions");

    auto write_file = [](const fs::path& p, const std::string& content) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw IoError("cannot write " + p.string());
        out << content;
    };

    // scenes, regenerating on label-multiset collisions so every scene is
    // distinguishable
    std::vector<SemanticGraph> scenes;
    std::set<std::string> label_keys;
    for (int i = 0; i < cfg.num_scenes; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "scene_%04d", i);
        SemanticGraph g;
        bool unique_labels = false;
        for (uint64_t attempt = 0; attempt < 100 && !unique_labels; ++attempt) {
            Rng stream = master.derive(mix64(uint64_t(i), attempt));
            g = generate_scene(cfg, vocab, stream, id);
            std::vector<std::string> labels;
            for (const auto& node : g.nodes) labels.push_back(node.label);
            std::sort(labels.begin(), labels.end());
            std::string key;
            for (const auto& l : labels) key += l + "|";
            if (label_keys.insert(key).second) unique_labels = true;
        }
        if (!unique_labels) throw PlacementFailure("could not generate a distinguishable scene");
        scenes.push_back(std::move(g));
    }

    nlohmann::json manifest = nlohmann::json::array();
    for (int i = 0; i < cfg.num_scenes; ++i) {
        const auto& g = scenes[size_t(i)];
        const std::string scene_rel = "scenes/" + g.graph_id + ".json";
        write_file(fs::path(out_dir) / scene_rel, serialize_graph(g));

        nlohmann::json entry;
        entry["scene_id"] = g.graph_id;
        entry["scene_graph_path"] = scene_rel;
        entry["text_graph_paths"] = nlohmann::json::array();
        entry["description_paths"] = nlohmann::json::array();

        Rng stream = master.derive(mix64(0x7e87ULL, uint64_t(i)));
        for (int d = 0; d < cfg.descriptions_per_scene; ++d) {
            const int size = std::min(int(g.nodes.size()), stream.range(cfg.subgraph_min, cfg.subgraph_max));
            auto [description, truth] = describe(g, size, stream);
            truth.graph_id = g.graph_id + "_text_" + std::to_string(d);
            const std::string text_rel = "texts/" + truth.graph_id + ".json";
            const std::string desc_rel = "descriptions/" + truth.graph_id + ".txt";
            write_file(fs::path(out_dir) / text_rel, serialize_graph(truth));
            write_file(fs::path(out_dir) / desc_rel, description + "\n");
            entry["text_graph_paths"].push_back(text_rel);
            entry["description_paths"].push_back(desc_rel);
        }
        manifest.push_back(std::move(entry));
    }

    // word vectors: one deterministic unit vector per vocabulary word
    std::set<std::string> words;
    auto add_words = [&](const std::string& phrase) {
        std::istringstream iss(phrase);
        std::string w;
        while (iss >> w) words.insert(w);
    };
    for (const auto& s : vocab.objects) add_words(s);
    for (const auto& s : vocab.colors) add_words(s);
    for (const auto& s : vocab.materials) add_words(s);
    for (const auto& s : vocab.relations) add_words(s);

    WordVectorTable table;
    table.dim = cfg.dim;
    table.fallback_seed = mix64(cfg.seed, 0xcafeULL);
    std::vector<std::string> order(words.begin(), words.end());
    for (const auto& w : order) table.entries[w] = oov_vector(table, w);

    DatasetPaths paths;
    paths.root = out_dir;
    paths.word_vectors = (fs::path(out_dir) / "vectors.txt").string();
    paths.manifest = (fs::path(out_dir) / "manifest.json").string();
    save_word_vectors(table, paths.word_vectors, order);
    write_file(paths.manifest, manifest.dump(2) + "\n");
    return paths;
}

}  // namespace t2sg
