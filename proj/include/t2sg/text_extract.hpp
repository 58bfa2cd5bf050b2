#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "t2sg/errors.hpp"
#include "t2sg/graph.hpp"
#include "t2sg/graph_json.hpp"
#include "t2sg/rng.hpp"

namespace t2sg {

enum class ExtractionSource { LLM, Rules };

struct ExtractionResult {
    SemanticGraph graph;  // kind = Text
    ExtractionSource source = ExtractionSource::Rules;
    std::string raw_json;
};

// Relation and attribute word lists live in data files so the vocabulary can
// grow without code changes.
struct Lexicon {
    std::vector<std::vector<std::string>> relations;  // tokenized phrases
    std::unordered_set<std::string> attributes;

    static std::vector<std::string> read_lines(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open lexicon file: " + path);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::string t = normalize_token(line);
            if (!t.empty() && t[0] != '#') lines.push_back(t);
        }
        return lines;
    }

    static Lexicon load(const std::string& relations_path, const std::string& attributes_path) {
        Lexicon lex;
        for (const auto& phrase : read_lines(relations_path)) {
            std::vector<std::string> toks;
            std::istringstream iss(phrase);
            std::string w;
            while (iss >> w) toks.push_back(w);
            if (!toks.empty()) lex.relations.push_back(std::move(toks));
        }
        // longest phrase first so "in front of" wins over any shorter overlap
        std::stable_sort(lex.relations.begin(), lex.relations.end(),
                         [](const auto& a, const auto& b) { return a.size() > b.size(); });
        for (const auto& word : read_lines(attributes_path)) lex.attributes.insert(word);
        return lex;
    }

    static Lexicon load_dir(const std::string& data_dir) {
        return load(data_dir + "/relations.txt", data_dir + "/attributes.txt");
    }
};

namespace detail {

inline std::vector<std::string> tokenize_sentence(const std::string& sentence) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : sentence) {
        if (std::isalnum(c) || c == '-' || c == '\'') {
            cur.push_back(char(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

inline const std::unordered_set<std::string>& np_stopwords() {
    static const std::unordered_set<std::string> words = {"a",  "an",  "the", "there",
                                                          "is", "are", "and"};
    return words;
}

struct NounPhrase {
    std::string label;
    std::vector<std::string> attributes;
};

inline NounPhrase parse_noun_phrase(const std::vector<std::string>& tokens, size_t begin,
                                    size_t end, const Lexicon& lex) {
    NounPhrase np;
    std::vector<std::string> label_words;
    for (size_t i = begin; i < end; ++i) {
        const std::string& w = tokens[i];
        if (np_stopwords().count(w)) continue;
        if (lex.attributes.count(w)) {
            if (std::find(np.attributes.begin(), np.attributes.end(), w) == np.attributes.end()) {
                np.attributes.push_back(w);
            }
            continue;
        }
        label_words.push_back(w);
    }
    for (size_t i = 0; i < label_words.size(); ++i) {
        if (i) np.label.push_back(' ');
        np.label += label_words[i];
    }
    return np;
}

// Leftmost relation phrase; the longest one when several start at the same
// token. Returns (start, phrase_index) or (npos, npos).
inline std::pair<size_t, size_t> find_relation(const std::vector<std::string>& tokens,
                                               const Lexicon& lex) {
    for (size_t start = 0; start < tokens.size(); ++start) {
        for (size_t r = 0; r < lex.relations.size(); ++r) {
            const auto& rel = lex.relations[r];
            if (start + rel.size() > tokens.size()) continue;
            bool match = true;
            for (size_t k = 0; k < rel.size(); ++k) {
                if (tokens[start + k] != rel[k]) {
                    match = false;
                    break;
                }
            }
            if (match) return {start, r};
        }
    }
    return {std::string::npos, std::string::npos};
}

}  // namespace detail

// Deterministic fallback extractor: one relation per sentence, noun phrases
// on both sides become nodes, lexicon adjectives become attributes.
// "There is/are <np>." sentences add an isolated node. Repeated mentions of
// a label merge into one node (attributes are unioned).
inline ExtractionResult extract_rules(const std::string& description, const Lexicon& lex) {
    if (normalize_token(description).empty()) {
        throw InvalidArgument("extract_rules: empty description");
    }

    SemanticGraph g;
    g.kind = GraphKind::Text;

    std::unordered_map<std::string, int> node_of_label;
    auto upsert_node = [&](const detail::NounPhrase& np) -> int {
        auto it = node_of_label.find(np.label);
        if (it == node_of_label.end()) {
            GraphNode n;
            n.node_id = int(g.nodes.size());
            n.label = np.label;
            n.attributes = np.attributes;
            g.nodes.push_back(std::move(n));
            node_of_label[np.label] = int(g.nodes.size()) - 1;
            return int(g.nodes.size()) - 1;
        }
        auto& attrs = g.nodes[size_t(it->second)].attributes;
        for (const auto& a : np.attributes) {
            if (std::find(attrs.begin(), attrs.end(), a) == attrs.end()) attrs.push_back(a);
        }
        return it->second;
    };

    std::set<std::tuple<int, int, std::string>> edge_seen;

    std::vector<std::string> sentences;
    {
        std::string cur;
        for (char c : description) {
            if (c == '.' || c == ';') {
                sentences.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) sentences.push_back(cur);
    }

    for (const auto& sentence : sentences) {
        auto tokens = detail::tokenize_sentence(sentence);
        if (tokens.empty()) continue;

        auto [start, rel_idx] = detail::find_relation(tokens, lex);
        if (start != std::string::npos) {
            const auto& rel = lex.relations[rel_idx];
            auto subject = detail::parse_noun_phrase(tokens, 0, start, lex);
            auto object = detail::parse_noun_phrase(tokens, start + rel.size(), tokens.size(), lex);
            if (subject.label.empty() || object.label.empty() || subject.label == object.label) {
                continue;
            }
            int s = upsert_node(subject);
            int t = upsert_node(object);
            std::string rel_str;
            for (size_t k = 0; k < rel.size(); ++k) {
                if (k) rel_str.push_back(' ');
                rel_str += rel[k];
            }
            if (edge_seen.insert({g.nodes[size_t(s)].node_id, g.nodes[size_t(t)].node_id, rel_str})
                    .second) {
                g.edges.push_back(
                    {g.nodes[size_t(s)].node_id, g.nodes[size_t(t)].node_id, rel_str});
            }
            continue;
        }

        if (tokens.size() >= 3 && tokens[0] == "there" && (tokens[1] == "is" || tokens[1] == "are")) {
            auto np = detail::parse_noun_phrase(tokens, 2, tokens.size(), lex);
            if (!np.label.empty()) upsert_node(np);
        }
    }

    if (g.nodes.empty()) throw EmptyGraph("no objects extracted from description");

    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "query-%016llx",
                  static_cast<unsigned long long>(fnv1a64(description)));
    g.graph_id = idbuf;

    ExtractionResult res;
    res.graph = std::move(g);
    res.source = ExtractionSource::Rules;
    res.raw_json = serialize_graph(res.graph);
    return res;
}

}  // namespace t2sg
