#pragma once

#include <set>
#include <string>
#include <tuple>

#include <json.hpp>

#include "t2sg/errors.hpp"
#include "t2sg/graph.hpp"

namespace t2sg {

namespace detail {

inline nlohmann::json parse_json_or_throw(const std::string& bytes) {
    try {
        return nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedDocument(std::string("invalid JSON: ") + e.what());
    }
}

inline SemanticGraph graph_from_json(const nlohmann::json& j, GraphKind kind) {
    if (!j.is_object()) throw MalformedDocument("top-level value must be an object");
    if (!j.contains("id") || !j["id"].is_string()) {
        throw MalformedDocument("missing string field 'id'");
    }
    if (!j.contains("objects") || !j["objects"].is_array()) {
        throw MalformedDocument("missing array field 'objects'");
    }

    SemanticGraph g;
    g.graph_id = j["id"].get<std::string>();
    g.kind = kind;

    for (const auto& jo : j["objects"]) {
        if (!jo.is_object()) throw MalformedDocument("object entry must be an object");
        if (!jo.contains("id") || !jo["id"].is_number_integer()) {
            throw MalformedDocument("object missing integer field 'id'");
        }
        if (!jo.contains("label") || !jo["label"].is_string()) {
            throw MalformedDocument("object missing string field 'label'");
        }
        GraphNode n;
        n.node_id = jo["id"].get<int>();
        n.label = normalize_token(jo["label"].get<std::string>());
        if (jo.contains("attributes")) {
            if (!jo["attributes"].is_array()) throw MalformedDocument("'attributes' must be an array");
            for (const auto& ja : jo["attributes"]) {
                if (!ja.is_string()) throw MalformedDocument("attribute must be a string");
                std::string a = normalize_token(ja.get<std::string>());
                if (!a.empty()) n.attributes.push_back(a);
            }
        }
        if (jo.contains("bbox")) {
            if (kind == GraphKind::Text) {
                throw MalformedDocument("text graph object carries a 'bbox'");
            }
            const auto& jb = jo["bbox"];
            if (!jb.is_object() || !jb.contains("min") || !jb.contains("max") ||
                !jb["min"].is_array() || !jb["max"].is_array() || jb["min"].size() != 3 ||
                jb["max"].size() != 3) {
                throw MalformedDocument("'bbox' must hold 3-element 'min' and 'max' arrays");
            }
            Box b;
            for (int k = 0; k < 3; ++k) {
                if (!jb["min"][k].is_number() || !jb["max"][k].is_number()) {
                    throw MalformedDocument("bbox corners must be numbers");
                }
                b.min[k] = jb["min"][k].get<double>();
                b.max[k] = jb["max"][k].get<double>();
            }
            n.bbox = b;
        }
        g.nodes.push_back(std::move(n));
    }

    if (j.contains("relations")) {
        if (!j["relations"].is_array()) throw MalformedDocument("'relations' must be an array");
        std::set<std::tuple<int, int, std::string>> seen;
        for (const auto& jr : j["relations"]) {
            if (!jr.is_array() || jr.size() != 3 || !jr[0].is_number_integer() ||
                !jr[1].is_string() || !jr[2].is_number_integer()) {
                throw MalformedDocument("relation must be [source_id, relation, target_id]");
            }
            GraphEdge e;
            e.source = jr[0].get<int>();
            e.relation = normalize_token(jr[1].get<std::string>());
            e.target = jr[2].get<int>();
            if (seen.insert({e.source, e.target, e.relation}).second) {
                g.edges.push_back(std::move(e));
            }
        }
    }

    validate_graph(g);
    return g;
}

}  // namespace detail

inline SemanticGraph parse_scene_graph(const std::string& json_document) {
    return detail::graph_from_json(detail::parse_json_or_throw(json_document), GraphKind::Scene);
}

inline SemanticGraph parse_text_graph(const std::string& json_document) {
    return detail::graph_from_json(detail::parse_json_or_throw(json_document), GraphKind::Text);
}

inline nlohmann::json graph_to_json(const SemanticGraph& g) {
    nlohmann::json j;
    j["id"] = g.graph_id;
    j["objects"] = nlohmann::json::array();
    for (const auto& n : g.nodes) {
        nlohmann::json jo;
        jo["id"] = n.node_id;
        jo["label"] = n.label;
        jo["attributes"] = n.attributes;
        if (n.bbox) {
            jo["bbox"] = {{"min", {n.bbox->min[0], n.bbox->min[1], n.bbox->min[2]}},
                          {"max", {n.bbox->max[0], n.bbox->max[1], n.bbox->max[2]}}};
        }
        j["objects"].push_back(std::move(jo));
    }
    j["relations"] = nlohmann::json::array();
    for (const auto& e : g.edges) {
        j["relations"].push_back(nlohmann::json::array({e.source, e.relation, e.target}));
    }
    return j;
}

// Canonical serialization: sorted keys, two-space indent, trailing newline.
// parse -> serialize -> parse is the identity; serializing a parsed canonical
// document reproduces it byte for byte.
inline std::string serialize_graph(const SemanticGraph& g) {
    return graph_to_json(g).dump(2) + "\n";
}

}  // namespace t2sg
