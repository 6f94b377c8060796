#pragma once

#include "radalign/common.hpp"

#include <deque>
#include <functional>
#include <string>
#include <utility>

namespace radalign {

struct GenerationParams {
    double temperature = 0.0;
    int max_tokens = 1024;
};

// Abstract chat-completion client. Implementations must be stateless per
// call; one prompt in, one completion out.
class LLMClient {
public:
    virtual ~LLMClient() = default;
    virtual std::string generate(const std::string& prompt, const GenerationParams& params) = 0;
    virtual std::string name() const = 0;

    std::string generate(const std::string& prompt) { return generate(prompt, GenerationParams{}); }
};

// Deterministic mock that replays a fixed queue of replies, optionally
// failing the first `fail_first` calls with a transport error.
class ScriptedLLMClient : public LLMClient {
public:
    explicit ScriptedLLMClient(std::deque<std::string> replies, int fail_first = 0)
        : replies_(std::move(replies)), fail_remaining_(fail_first) {}

    std::string generate(const std::string& prompt, const GenerationParams&) override {
        prompts_.push_back(prompt);
        ++calls_;
        if (fail_remaining_ > 0) {
            --fail_remaining_;
            throw TransportError("scripted transport failure");
        }
        if (replies_.empty()) throw TransportError("scripted client ran out of replies");
        std::string r = replies_.front();
        replies_.pop_front();
        return r;
    }

    std::string name() const override { return "scripted-mock"; }

    int calls() const { return calls_; }
    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::deque<std::string> replies_;
    std::vector<std::string> prompts_;
    int fail_remaining_ = 0;
    int calls_ = 0;
};

// Returns the prompt verbatim. Useful as the fully deterministic baseline:
// any finding rendered into the prompt is trivially present in the output.
class EchoLLMClient : public LLMClient {
public:
    std::string generate(const std::string& prompt, const GenerationParams&) override {
        return prompt;
    }
    std::string name() const override { return "echo-mock"; }
};

// Mock driven by an arbitrary function, for tests that need to inspect or
// transform the prompt.
class FunctionLLMClient : public LLMClient {
public:
    using Fn = std::function<std::string(const std::string&)>;
    explicit FunctionLLMClient(Fn fn, std::string name = "fn-mock")
        : fn_(std::move(fn)), name_(std::move(name)) {}

    std::string generate(const std::string& prompt, const GenerationParams&) override {
        return fn_(prompt);
    }
    std::string name() const override { return name_; }

private:
    Fn fn_;
    std::string name_;
};

}  // namespace radalign
