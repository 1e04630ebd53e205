#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"
#include "ragloop/http_common.hpp"
#include "ragloop/retrieval.hpp"

namespace ragloop {

struct RemoteRetrieverOptions {
    std::string base_url;  // e.g. "http://127.0.0.1:8001"
    std::string path = "/retrieve";
    int connect_timeout_ms = 5000;
    int read_timeout_ms = 60000;
    RetryPolicy retry;
    TraceFn trace;
};

// Drop-in Retriever backed by an HTTP retrieval service.
// Request  body: {"query": "...", "topk": k}
// Response body: {"results": [{"doc_id","title","text","score"}, ...]}
// ranked best-first. Ranks are assigned from response order; a response whose
// scores increase somewhere is rejected as a ProviderError since downstream
// code relies on rank order agreeing with scores.
class RemoteRetriever final : public Retriever {
public:
    explicit RemoteRetriever(RemoteRetrieverOptions opt) : opt_(std::move(opt)) {}

    ChunkSet retrieve(const std::string& query, int k) const override {
        detail::PostSpec spec;
        spec.base_url = opt_.base_url;
        spec.path = opt_.path;
        spec.body = json{{"query", query}, {"topk", k}}.dump();
        spec.connect_timeout_ms = opt_.connect_timeout_ms;
        spec.read_timeout_ms = opt_.read_timeout_ms;
        spec.retry = opt_.retry;
        spec.trace = opt_.trace;

        std::string body = detail::post_json_with_retry(spec);
        ChunkSet out;
        out.query = query;
        try {
            json j = json::parse(body);
            const json& results = detail::require_field(j, "results");
            if (!results.is_array()) throw Error("'results' must be an array");
            for (const json& r : results) {
                if (out.chunks.size() >= static_cast<std::size_t>(k > 0 ? k : 0)) break;
                Chunk c = r.get<Chunk>();
                c.rank = static_cast<int>(out.chunks.size()) + 1;
                if (!out.chunks.empty() && c.score > out.chunks.back().score)
                    throw Error("results are not sorted by score");
                out.chunks.push_back(std::move(c));
            }
        } catch (const json::exception& e) {
            throw ProviderError(200, std::string("unparseable retrieval response: ") + e.what());
        } catch (const Error& e) {
            throw ProviderError(200, e.what());
        }
        return out;
    }

private:
    RemoteRetrieverOptions opt_;
};

}  // namespace ragloop
