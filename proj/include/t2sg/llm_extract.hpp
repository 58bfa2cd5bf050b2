#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "t2sg/errors.hpp"
#include "t2sg/graph_json.hpp"
#include "t2sg/text_extract.hpp"

namespace t2sg {

// Narrow completion interface so tests can substitute canned responses for
// the HTTP client.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    // Returns the assistant message text; throws EndpointUnavailable on
    // transport failure.
    virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt) = 0;
};

// Template file with "[SYSTEM]" and "[USER]" section markers; the user
// section contains a "{description}" placeholder.
struct PromptTemplate {
    std::string system;
    std::string user;

    static PromptTemplate load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open prompt template: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    static PromptTemplate parse(const std::string& text) {
        const std::string sys_marker = "[SYSTEM]";
        const std::string user_marker = "[USER]";
        auto sys_at = text.find(sys_marker);
        auto user_at = text.find(user_marker);
        if (sys_at == std::string::npos || user_at == std::string::npos || user_at < sys_at) {
            throw MalformedDocument("prompt template needs [SYSTEM] then [USER] sections");
        }
        PromptTemplate t;
        t.system = trim(text.substr(sys_at + sys_marker.size(), user_at - sys_at - sys_marker.size()));
        t.user = trim(text.substr(user_at + user_marker.size()));
        return t;
    }

    std::string render_user(const std::string& description) const {
        const std::string placeholder = "{description}";
        std::string out = user;
        auto at = out.find(placeholder);
        if (at == std::string::npos) return out + "\n" + description;
        out.replace(at, placeholder.size(), description);
        return out;
    }

private:
    static std::string trim(std::string s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        return s;
    }
};

namespace detail {

// Models often wrap JSON in prose or code fences; keep the outermost object.
inline std::string isolate_json_object(const std::string& text) {
    auto open = text.find('{');
    auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) return text;
    return text.substr(open, close - open + 1);
}

}  // namespace detail

// Sends the prompt template plus description, parses the JSON reply as a
// text-graph. Retries once with a repair prompt when the reply does not
// parse.
inline ExtractionResult extract_llm(const std::string& description, LlmClient& client,
                                    const PromptTemplate& tmpl) {
    if (normalize_token(description).empty()) {
        throw InvalidArgument("extract_llm: empty description");
    }

    auto try_parse = [&](const std::string& reply) -> SemanticGraph {
        std::string body = detail::isolate_json_object(reply);
        auto j = detail::parse_json_or_throw(body);
        if (j.contains("objects") && j["objects"].is_array() && j["objects"].empty()) {
            throw EmptyGraph("extractor returned no objects");
        }
        return detail::graph_from_json(j, GraphKind::Text);
    };

    std::string reply = client.complete(tmpl.system, tmpl.render_user(description));
    std::string parse_error;
    try {
        ExtractionResult res;
        res.graph = try_parse(reply);
        res.source = ExtractionSource::LLM;
        res.raw_json = reply;
        return res;
    } catch (const EmptyGraph&) {
        throw;
    } catch (const Error& e) {
        parse_error = e.what();
    }

    std::string repair = "The previous output could not be parsed (" + parse_error +
                         "). Reply with ONLY the JSON object in the required schema, no prose.\n"
                         "Previous output:\n" + reply + "\n\nDescription:\n" + description;
    reply = client.complete(tmpl.system, repair);
    try {
        ExtractionResult res;
        res.graph = try_parse(reply);
        res.source = ExtractionSource::LLM;
        res.raw_json = reply;
        return res;
    } catch (const EmptyGraph&) {
        throw;
    } catch (const Error& e) {
        throw UnparsableResponse(std::string("reply unparsable after repair retry: ") + e.what());
    }
}

}  // namespace t2sg
