#pragma once

#include "radalign/llm_client.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <string>

namespace radalign {

// Generic client for OpenAI-style chat-completion endpoints. Configured
// explicitly or from RADALIGN_LLM_ENDPOINT / RADALIGN_LLM_API_KEY /
// RADALIGN_LLM_MODEL.
class HttpLLMClient : public LLMClient {
public:
    struct Config {
        std::string endpoint;  // e.g. "http://localhost:8080/v1/chat/completions"
        std::string api_key;
        std::string model = "gpt-4o";
        int timeout_seconds = 60;
    };

    explicit HttpLLMClient(Config cfg) : cfg_(std::move(cfg)) {
        if (cfg_.endpoint.empty())
            throw PreconditionError("HttpLLMClient: endpoint is empty");
        split_endpoint(cfg_.endpoint, base_, path_);
    }

    static HttpLLMClient from_env() {
        Config cfg;
        if (const char* e = std::getenv("RADALIGN_LLM_ENDPOINT")) cfg.endpoint = e;
        if (const char* k = std::getenv("RADALIGN_LLM_API_KEY")) cfg.api_key = k;
        if (const char* m = std::getenv("RADALIGN_LLM_MODEL")) cfg.model = m;
        if (cfg.endpoint.empty())
            throw PreconditionError("RADALIGN_LLM_ENDPOINT is not set");
        return HttpLLMClient(std::move(cfg));
    }

    std::string generate(const std::string& prompt, const GenerationParams& params) override {
        nlohmann::json body;
        body["model"] = cfg_.model;
        body["temperature"] = params.temperature;
        body["max_tokens"] = params.max_tokens;
        body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

        httplib::Client cli(base_);
        cli.set_connection_timeout(cfg_.timeout_seconds);
        cli.set_read_timeout(cfg_.timeout_seconds);
        httplib::Headers headers;
        if (!cfg_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + cfg_.api_key);

        auto res = cli.Post(path_, headers, body.dump(), "application/json");
        if (!res)
            throw TransportError("LLM endpoint unreachable: " + base_ + " (" +
                                 httplib::to_string(res.error()) + ")");
        if (res->status < 200 || res->status >= 300)
            throw TransportError("LLM endpoint returned HTTP " + std::to_string(res->status) +
                                 ": " + res->body);
        try {
            auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("cannot parse chat completion response: " + std::string(e.what()),
                             res->body);
        }
    }

    std::string name() const override { return "http:" + cfg_.model; }

private:
    static void split_endpoint(const std::string& endpoint, std::string& base,
                               std::string& path) {
        auto scheme_end = endpoint.find("://");
        size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto slash = endpoint.find('/', host_start);
        if (slash == std::string::npos) {
            base = endpoint;
            path = "/v1/chat/completions";
        } else {
            base = endpoint.substr(0, slash);
            path = endpoint.substr(slash);
        }
    }

    Config cfg_;
    std::string base_;
    std::string path_;
};

}  // namespace radalign
