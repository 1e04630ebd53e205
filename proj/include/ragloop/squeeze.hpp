#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"
#include "ragloop/llm_gateway.hpp"

namespace ragloop {

struct SqueezeInput {
    std::vector<std::string> queries;    // the bundle that produced the chunks
    std::vector<ChunkSet> chunk_sets;    // one per query, same order
    int input_token_limit = 8192;        // budget for the assembled Contexts section
};

struct SqueezeOptions {
    int injection_token_limit = 500;  // cap on the summary that gets injected
    int max_tokens = 1024;            // squeezer completion budget
    double temperature = 0.0;
    std::string model;
    TokenCounter counter;  // empty = whitespace words
};

// {queries} becomes the numbered query list, {contexts} the assembled chunks.
inline constexpr std::string_view kSqueezePromptTemplate =
    "You are a helpful assistant.\n"
    "You are given a series of queries and contexts.\n"
    "Return the answer to queries based on the Contexts and nothing else.\n"
    "\n"
    "Queries: {queries}\n"
    "Contexts: {contexts}\n"
    "Answer:";

inline std::string render_chunk_line(const Chunk& c, int ordinal) {
    return "Doc " + std::to_string(ordinal) + " (" + c.title + ") " + c.text;
}

// Flattens the chunk sets into the list the squeezer will actually see:
// first-occurrence order across sets (set order, then rank order), duplicates
// by doc_id dropped, then whole chunks dropped from the tail once the running
// token count would pass the budget. A chunk is either fully present or
// absent; partial evidence is worse than missing evidence.
inline std::vector<Chunk> assemble_chunks(const SqueezeInput& input,
                                           const TokenCounter& counter = {}) {
    std::vector<Chunk> kept;
    std::unordered_set<std::string> seen;
    int used = 0;
    int ordinal = 1;
    for (const ChunkSet& cs : input.chunk_sets) {
        for (const Chunk& c : cs.chunks) {
            if (!seen.insert(c.doc_id).second) continue;
            int cost = count_tokens(counter, render_chunk_line(c, ordinal));
            if (used + cost > input.input_token_limit) return kept;
            kept.push_back(c);
            used += cost;
            ++ordinal;
        }
    }
    return kept;
}

inline std::string build_squeeze_prompt(const SqueezeInput& input,
                                        const TokenCounter& counter = {}) {
    if (input.queries.empty()) throw EmptyInput("squeeze called with no queries");
    if (input.chunk_sets.size() != input.queries.size())
        throw Error("squeeze input has " + std::to_string(input.queries.size()) + " queries but " +
                    std::to_string(input.chunk_sets.size()) + " chunk sets");

    std::string queries;
    for (std::size_t i = 0; i < input.queries.size(); ++i) {
        if (i > 0) queries += '\n';
        queries += std::to_string(i + 1) + ". " + input.queries[i];
    }

    std::string contexts;
    std::vector<Chunk> kept = assemble_chunks(input, counter);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (i > 0) contexts += '\n';
        contexts += render_chunk_line(kept[i], static_cast<int>(i) + 1);
    }

    std::string out(kSqueezePromptTemplate);
    detail::replace_first(out, "{queries}", queries);
    detail::replace_first(out, "{contexts}", contexts);
    return out;
}

// One squeezer call: assemble, prompt, generate, trim, cap at the injection
// limit. The returned Summary records which doc ids actually reached the
// squeezer so trajectories stay attributable.
inline Summary squeeze(const SqueezeInput& input, LlmGateway& gateway,
                       const SqueezeOptions& options = {}) {
    std::string prompt = build_squeeze_prompt(input, options.counter);

    GenerationRequest req;
    req.prompt = std::move(prompt);
    req.max_tokens = options.max_tokens;
    req.temperature = options.temperature;
    req.model = options.model;
    GenerationResult res = gateway.generate(req);

    std::string text(trim(res.text));
    if (text.empty()) throw SummaryEmpty();
    text = truncate_to_token_limit(text, options.injection_token_limit, options.counter);

    Summary s;
    s.text = std::move(text);
    s.source_queries = input.queries;
    for (const Chunk& c : assemble_chunks(input, options.counter))
        s.source_doc_ids.push_back(c.doc_id);
    s.squeezer_model = options.model;
    return s;
}

}  // namespace ragloop
