#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>

#include "ragloop/errors.hpp"

namespace ragloop {

struct RetryPolicy {
    int max_attempts = 3;
    int initial_backoff_ms = 200;
    double backoff_multiplier = 2.0;
};

using TraceFn = std::function<void(const std::string&)>;

namespace detail {

// Transient: the request may succeed if repeated. Anything else fails fast.
inline bool retryable_status(int status) {
    return status == 408 || status == 429 || (status >= 500 && status < 600);
}

struct PostSpec {
    std::string base_url;
    std::string path;
    std::string body;
    std::string bearer_token;  // empty = unauthenticated
    int connect_timeout_ms = 5000;
    int read_timeout_ms = 120000;
    RetryPolicy retry;
    TraceFn trace;
};

// POST with bounded retries on transport failures and retryable statuses.
// Returns the 2xx body. Trace lines never carry the bearer token.
inline std::string post_json_with_retry(const PostSpec& spec) {
    auto trace = [&](std::string line) {
        if (!spec.trace) return;
        if (!spec.bearer_token.empty()) {
            for (std::size_t at = line.find(spec.bearer_token); at != std::string::npos;
                 at = line.find(spec.bearer_token, at)) {
                line.replace(at, spec.bearer_token.size(), "***");
            }
        }
        spec.trace(line);
    };

    int max_attempts = spec.retry.max_attempts < 1 ? 1 : spec.retry.max_attempts;
    double backoff_ms = spec.retry.initial_backoff_ms;
    std::string transport_reason;
    int last_status = 0;
    std::string last_body;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        // One client per attempt; httplib clients are not safe to share
        // across the concurrent callers this gets used from.
        httplib::Client cli(spec.base_url);
        cli.set_connection_timeout(std::chrono::milliseconds(spec.connect_timeout_ms));
        cli.set_read_timeout(std::chrono::milliseconds(spec.read_timeout_ms));
        httplib::Headers headers;
        if (!spec.bearer_token.empty())
            headers.emplace("Authorization", "Bearer " + spec.bearer_token);

        trace("POST " + spec.base_url + spec.path + " attempt " + std::to_string(attempt) + "/" +
              std::to_string(max_attempts) + " body " + spec.body);
        auto res = cli.Post(spec.path, headers, spec.body, "application/json");

        if (!res) {
            transport_reason = httplib::to_string(res.error());
            trace("transport error: " + transport_reason);
        } else if (res->status >= 200 && res->status < 300) {
            trace("HTTP " + std::to_string(res->status) + " body " + res->body);
            return res->body;
        } else {
            last_status = res->status;
            last_body = res->body;
            trace("HTTP " + std::to_string(res->status) + " body " + res->body);
            if (!retryable_status(res->status)) throw ProviderError(res->status, res->body);
        }

        if (attempt < max_attempts) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<std::int64_t>(backoff_ms)));
            backoff_ms *= spec.retry.backoff_multiplier;
        }
    }

    if (last_status != 0) throw ProviderError(last_status, last_body);
    throw TransportError("request failed after " + std::to_string(max_attempts) +
                         " attempts: " + transport_reason);
}

}  // namespace detail
}  // namespace ragloop
