#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "t2sg/errors.hpp"
#include "t2sg/llm_extract.hpp"

namespace t2sg {

struct LlmEndpointConfig {
    std::string base_url;  // e.g. http://localhost:11434
    std::string model;
    std::string api_key_env = "SG_LLM_API_KEY";
    int timeout_seconds = 60;
};

// Chat-completions style client. The API key is read from the environment so
// it never appears in configs or argv.
class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(LlmEndpointConfig config) : config_(std::move(config)) {}

    std::string complete(const std::string& system_prompt, const std::string& user_prompt) override {
        httplib::Client cli(config_.base_url);
        cli.set_connection_timeout(config_.timeout_seconds, 0);
        cli.set_read_timeout(config_.timeout_seconds, 0);

        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        nlohmann::json body = {
            {"model", config_.model},
            {"temperature", 0},
            {"messages",
             {{{"role", "system"}, {"content", system_prompt}},
              {{"role", "user"}, {"content", user_prompt}}}},
        };

        auto res = cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res) {
            throw EndpointUnavailable("cannot reach LLM endpoint " + config_.base_url + ": " +
                                      httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw EndpointUnavailable("LLM endpoint returned HTTP " + std::to_string(res->status) +
                                      ": " + res->body.substr(0, 200));
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw UnparsableResponse(std::string("unexpected completion payload: ") + e.what());
        }
    }

private:
    LlmEndpointConfig config_;
};

}  // namespace t2sg
