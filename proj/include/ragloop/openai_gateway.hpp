#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"
#include "ragloop/http_common.hpp"
#include "ragloop/llm_gateway.hpp"

namespace ragloop {

struct OpenAiGatewayOptions {
    std::string base_url;  // e.g. "http://127.0.0.1:8000"
    std::string path = "/v1/chat/completions";
    std::string api_key;
    std::string default_model = "default";
    int connect_timeout_ms = 5000;
    int read_timeout_ms = 120000;
    RetryPolicy retry;
    int max_inflight = 8;          // concurrent requests allowed through
    std::uint64_t max_calls = 0;   // total call budget, 0 = unlimited
    TraceFn trace;
};

// Chat-completions client for any OpenAI-compatible server. Single user
// message per request; stop sequences are forwarded and, because most servers
// strip the matched stop from the returned text, re-appended so downstream
// tag parsing always sees the closing tag.
class OpenAiGateway final : public LlmGateway {
public:
    explicit OpenAiGateway(OpenAiGatewayOptions opt) : opt_(std::move(opt)) {
        if (opt_.max_inflight < 1) opt_.max_inflight = 1;
    }

    GenerationResult generate(const GenerationRequest& req) override {
        acquire_slot();
        SlotGuard guard{this};
        std::int64_t t0 = steady_now_ms();

        json body;
        body["model"] = req.model.empty() ? opt_.default_model : req.model;
        body["messages"] = json::array({json{{"role", "user"}, {"content", req.prompt}}});
        body["temperature"] = req.temperature;
        body["max_tokens"] = req.max_tokens;
        if (!req.stop_sequences.empty()) body["stop"] = req.stop_sequences;
        if (req.seed) body["seed"] = *req.seed;

        detail::PostSpec spec;
        spec.base_url = opt_.base_url;
        spec.path = opt_.path;
        spec.body = body.dump();
        spec.bearer_token = opt_.api_key;
        spec.connect_timeout_ms = opt_.connect_timeout_ms;
        spec.read_timeout_ms = opt_.read_timeout_ms;
        spec.retry = opt_.retry;
        spec.trace = opt_.trace;

        std::string response_body = detail::post_json_with_retry(spec);
        GenerationResult out = parse_response(response_body, req);
        out.latency_ms = steady_now_ms() - t0;
        return out;
    }

    std::uint64_t calls_made() const {
        std::lock_guard<std::mutex> lock(mu_);
        return calls_;
    }

private:
    struct SlotGuard {
        OpenAiGateway* g;
        ~SlotGuard() {
            std::lock_guard<std::mutex> lock(g->mu_);
            --g->inflight_;
            g->cv_.notify_one();
        }
    };

    void acquire_slot() {
        std::unique_lock<std::mutex> lock(mu_);
        if (opt_.max_calls != 0 && calls_ >= opt_.max_calls)
            throw BudgetExceeded("llm call budget of " + std::to_string(opt_.max_calls) +
                                 " exhausted");
        ++calls_;
        cv_.wait(lock, [this] { return inflight_ < opt_.max_inflight; });
        ++inflight_;
    }

    static GenerationResult parse_response(const std::string& body, const GenerationRequest& req) {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::exception& e) {
            throw ProviderError(200, std::string("unparseable response body: ") + e.what());
        }
        std::string content;
        std::string finish = "stop";
        try {
            const json& choices = j.at("choices");
            if (!choices.is_array() || choices.empty())
                throw Error("response has no choices");
            const json& c0 = choices.at(0);
            if (c0.contains("message"))
                content = c0.at("message").at("content").get<std::string>();
            else
                content = c0.at("text").get<std::string>();  // completions-style servers
            finish = c0.value("finish_reason", std::string("stop"));
        } catch (const json::exception& e) {
            throw ProviderError(200, std::string("unexpected response shape: ") + e.what());
        } catch (const Error& e) {
            throw ProviderError(200, e.what());
        }

        // Defensive cut: regardless of what the server claims, the text never
        // extends past the first stop occurrence.
        GenerationResult out = finalize_generation(std::move(content), req);
        if (out.stop_reason == StopReason::StopSequence) return out;

        if (finish == "length") {
            out.stop_reason = StopReason::Length;
            return out;
        }
        if (finish == "stop") {
            // Server consumed the stop string. Figure out which one: the stop
            // "</x>" whose opener "<x>" is still unclosed at the end of text.
            std::size_t best_open = std::string::npos;
            const std::string* best_stop = nullptr;
            for (const std::string& stop : req.stop_sequences) {
                if (stop.size() < 4 || stop.rfind("</", 0) != 0 || stop.back() != '>') continue;
                std::string opener = "<" + stop.substr(2);
                std::size_t open_at = out.text.rfind(opener);
                if (open_at == std::string::npos) continue;
                if (out.text.find(stop, open_at) != std::string::npos) continue;  // already closed
                if (best_open == std::string::npos || open_at > best_open) {
                    best_open = open_at;
                    best_stop = &stop;
                }
            }
            if (best_stop) {
                out.text += *best_stop;
                out.stop_reason = StopReason::StopSequence;
                out.matched_stop = *best_stop;
                return out;
            }
        }
        out.stop_reason = StopReason::EndOfSequence;
        return out;
    }

    OpenAiGatewayOptions opt_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    int inflight_ = 0;
    std::uint64_t calls_ = 0;
};

}  // namespace ragloop
