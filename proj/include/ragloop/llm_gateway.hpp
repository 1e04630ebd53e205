#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"

namespace ragloop {

struct GenerationRequest {
    std::string prompt;
    std::vector<std::string> stop_sequences;
    int max_tokens = 512;
    double temperature = 1.0;
    std::string model;
    std::optional<std::uint64_t> seed;  // forwarded to backends that sample
};

enum class StopReason { StopSequence, Length, EndOfSequence };

struct GenerationResult {
    std::string text;              // includes the matched stop sequence, if any
    StopReason stop_reason = StopReason::EndOfSequence;
    std::string matched_stop;      // which stop fired, empty otherwise
    std::int64_t latency_ms = 0;
};

class LlmGateway {
public:
    virtual ~LlmGateway() = default;
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
};

// Applies stop-sequence and token-limit semantics to a raw completion. Cut at
// the earliest stop occurrence, keeping the stop itself so tagged output stays
// parseable; otherwise clip to max_tokens.
inline GenerationResult finalize_generation(std::string text, const GenerationRequest& req) {
    GenerationResult out;
    std::size_t best_pos = std::string::npos;
    const std::string* best_stop = nullptr;
    for (const std::string& stop : req.stop_sequences) {
        if (stop.empty()) continue;
        std::size_t at = text.find(stop);
        if (at < best_pos) {
            best_pos = at;
            best_stop = &stop;
        }
    }
    if (best_stop) {
        out.text = text.substr(0, best_pos + best_stop->size());
        out.stop_reason = StopReason::StopSequence;
        out.matched_stop = *best_stop;
        return out;
    }
    if (req.max_tokens > 0 && count_words(text) > req.max_tokens) {
        out.text = truncate_words(text, req.max_tokens);
        out.stop_reason = StopReason::Length;
        return out;
    }
    out.text = std::move(text);
    return out;
}

// Canned backend for tests and offline runs. Two modes that can be mixed:
// a plain ordered queue, and keyed queues selected by the first key found as a
// substring of the prompt (keys win over the plain queue). Keyed mode keeps
// multi-threaded batches deterministic: each worker only consumes entries
// scripted for its own question. Thread-safe; records every prompt it sees.
class ScriptedGateway final : public LlmGateway {
public:
    ScriptedGateway() = default;
    explicit ScriptedGateway(std::vector<std::string> script) {
        for (auto& s : script) queue_.push_back(std::move(s));
    }

    void enqueue(std::string text) {
        std::lock_guard<std::mutex> lock(mu_);
        queue_.push_back(std::move(text));
    }

    void enqueue_for(const std::string& key, std::string text) {
        std::lock_guard<std::mutex> lock(mu_);
        for (auto& [k, q] : keyed_) {
            if (k == key) {
                q.push_back(std::move(text));
                return;
            }
        }
        keyed_.emplace_back(key, std::deque<std::string>{std::move(text)});
    }

    // Next generate() whose prompt contains `needle` throws instead.
    void fail_when_prompt_contains(std::string needle, std::string message) {
        std::lock_guard<std::mutex> lock(mu_);
        failures_.emplace_back(std::move(needle), std::move(message));
    }

    GenerationResult generate(const GenerationRequest& req) override {
        std::string text;
        {
            std::lock_guard<std::mutex> lock(mu_);
            prompts_.push_back(req.prompt);
            for (const auto& [needle, message] : failures_) {
                if (req.prompt.find(needle) != std::string::npos)
                    throw ProviderError(0, message);
            }
            std::deque<std::string>* q = nullptr;
            for (auto& [key, kq] : keyed_) {
                if (!kq.empty() && req.prompt.find(key) != std::string::npos) {
                    q = &kq;
                    break;
                }
            }
            if (!q) q = &queue_;
            if (q->empty()) throw ProviderError(0, "script exhausted");
            text = std::move(q->front());
            q->pop_front();
        }
        return finalize_generation(std::move(text), req);
    }

    std::vector<std::string> prompts() const {
        std::lock_guard<std::mutex> lock(mu_);
        return prompts_;
    }

    std::size_t calls() const {
        std::lock_guard<std::mutex> lock(mu_);
        return prompts_.size();
    }

private:
    mutable std::mutex mu_;
    std::deque<std::string> queue_;
    std::vector<std::pair<std::string, std::deque<std::string>>> keyed_;
    std::vector<std::pair<std::string, std::string>> failures_;
    std::vector<std::string> prompts_;
};

// Backend computed by a callback; same stop/length post-processing as every
// other gateway. Handy for rule-based oracle policies.
class FunctionGateway final : public LlmGateway {
public:
    using Fn = std::function<std::string(const GenerationRequest&)>;
    explicit FunctionGateway(Fn fn) : fn_(std::move(fn)) {}

    GenerationResult generate(const GenerationRequest& req) override {
        return finalize_generation(fn_(req), req);
    }

private:
    Fn fn_;
};

}  // namespace ragloop
