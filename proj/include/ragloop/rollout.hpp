#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"
#include "ragloop/llm_gateway.hpp"
#include "ragloop/retrieval.hpp"
#include "ragloop/squeeze.hpp"
#include "ragloop/tag_protocol.hpp"

namespace ragloop {

enum class RolloutEventKind {
    TurnStarted,
    GenerationReceived,
    BundleTruncated,
    SearchDispatched,
    SummaryInjected,
    TrailingDiscarded,
    RethinkInjected,
    Answered,
    Exhausted,
    ErrorAborted,
};

inline const char* to_string(RolloutEventKind k) {
    switch (k) {
        case RolloutEventKind::TurnStarted: return "turn_started";
        case RolloutEventKind::GenerationReceived: return "generation_received";
        case RolloutEventKind::BundleTruncated: return "bundle_truncated";
        case RolloutEventKind::SearchDispatched: return "search_dispatched";
        case RolloutEventKind::SummaryInjected: return "summary_injected";
        case RolloutEventKind::TrailingDiscarded: return "trailing_discarded";
        case RolloutEventKind::RethinkInjected: return "rethink_injected";
        case RolloutEventKind::Answered: return "answered";
        case RolloutEventKind::Exhausted: return "exhausted";
        case RolloutEventKind::ErrorAborted: return "error_aborted";
    }
    return "unknown";
}

struct RolloutEvent {
    RolloutEventKind kind;
    std::string question_id;
    int turn = 0;
    std::string detail;
};

// Called from whichever thread runs the rollout; must be thread-safe when
// batches run with parallelism > 1.
using EventSink = std::function<void(const RolloutEvent&)>;

struct RolloutContext {
    LlmGateway* policy = nullptr;
    const Retriever* retriever = nullptr;
    LlmGateway* squeezer = nullptr;
    std::string policy_model;
    std::string squeezer_model;
    double policy_temperature = 1.0;
    double squeezer_temperature = 0.0;
    int squeezer_max_tokens = 1024;
    std::optional<std::uint64_t> sampling_seed;
    ExecutionMode retrieval_mode = ExecutionMode::Parallel;
    EventSink events;
    TokenCounter counter;
};

// One expand-then-squeeze episode.
//
// Each turn sends prompt+context to the policy, stopping at </search> or
// </answer>. A search fans its query variants out to retrieval, squeezes the
// chunks into one summary and appends it inside <information> tags; an answer
// ends the episode; anything unparseable appends the rethink notice and costs
// the turn. The context grows strictly by appending, so prompts are replayable
// from the trajectory alone. Backend failures end the episode as Failed with
// the failing turn recorded; this function itself does not throw on them.
inline Trajectory run_rollout(const Question& question, const RolloutConfig& cfg,
                              RolloutContext& ctx) {
    validate_config(cfg);
    if (!ctx.policy || !ctx.retriever || !ctx.squeezer)
        throw Error("rollout context needs policy, retriever and squeezer");

    std::int64_t t0 = steady_now_ms();
    Trajectory traj;
    traj.question = question;
    traj.status = TrajectoryStatus::Running;

    auto emit = [&](RolloutEventKind kind, int turn, std::string detail = {}) {
        if (ctx.events) ctx.events(RolloutEvent{kind, question.id, turn, std::move(detail)});
    };
    auto fail = [&](int turn, const std::string& reason) {
        traj.status = TrajectoryStatus::Failed;
        traj.turn_count = turn;
        traj.failed_turn = turn;
        traj.failure_reason = reason;
        traj.elapsed_ms = steady_now_ms() - t0;
        emit(RolloutEventKind::ErrorAborted, turn, reason);
        return traj;
    };

    const std::string base_prompt = render_prompt(question, cfg);
    std::string context;

    for (int turn = 0; turn < cfg.max_turns; ++turn) {
        emit(RolloutEventKind::TurnStarted, turn);

        GenerationRequest req;
        req.prompt = base_prompt + context;
        req.stop_sequences = policy_stop_sequences();
        req.max_tokens = cfg.response_token_limit;
        req.temperature = ctx.policy_temperature;
        req.model = ctx.policy_model;
        req.seed = ctx.sampling_seed;

        GenerationResult gen;
        try {
            gen = ctx.policy->generate(req);
        } catch (const std::exception& e) {
            return fail(turn, std::string("policy generation failed: ") + e.what());
        }
        emit(RolloutEventKind::GenerationReceived, turn, gen.text);

        ScanResult scan = scan_generation(gen.text);

        if (is_answer(scan.action)) {
            for (std::size_t i = 0; i <= scan.terminal_index; ++i) {
                Segment s = scan.segments[i];
                s.turn = turn;
                traj.segments.push_back(std::move(s));
            }
            if (scan.trailing_after_terminal)
                emit(RolloutEventKind::TrailingDiscarded, turn,
                     gen.text.substr(scan.terminal_end_offset));
            context += gen.text.substr(0, scan.terminal_end_offset);
            traj.final_answer = std::get<AnswerAction>(scan.action).answer;
            traj.status = TrajectoryStatus::Answered;
            traj.turn_count = turn + 1;
            traj.elapsed_ms = steady_now_ms() - t0;
            emit(RolloutEventKind::Answered, turn, *traj.final_answer);
            return traj;
        }

        if (is_search(scan.action)) {
            for (std::size_t i = 0; i <= scan.terminal_index; ++i) {
                Segment s = scan.segments[i];
                s.turn = turn;
                traj.segments.push_back(std::move(s));
            }
            if (scan.trailing_after_terminal)
                emit(RolloutEventKind::TrailingDiscarded, turn,
                     gen.text.substr(scan.terminal_end_offset));
            context += gen.text.substr(0, scan.terminal_end_offset);

            QueryBundle bundle = std::get<SearchAction>(scan.action).bundle;
            bundle.source_turn = turn;
            if (bundle.queries.size() > static_cast<std::size_t>(cfg.max_bundle_size)) {
                emit(RolloutEventKind::BundleTruncated, turn,
                     std::to_string(bundle.queries.size()) + " -> " +
                         std::to_string(cfg.max_bundle_size));
                bundle.queries.resize(static_cast<std::size_t>(cfg.max_bundle_size));
            }
            emit(RolloutEventKind::SearchDispatched, turn,
                 std::to_string(bundle.queries.size()) + " queries");

            std::vector<ChunkSet> chunk_sets;
            try {
                chunk_sets =
                    retrieve_bundle(*ctx.retriever, bundle, cfg.top_k, ctx.retrieval_mode);
            } catch (const std::exception& e) {
                return fail(turn, std::string("retrieval failed: ") + e.what());
            }

            SqueezeInput sin;
            sin.queries = bundle.queries;
            sin.chunk_sets = std::move(chunk_sets);
            sin.input_token_limit = cfg.squeezer_input_token_limit;
            SqueezeOptions sopt;
            sopt.injection_token_limit = cfg.retrieved_token_limit;
            sopt.max_tokens = ctx.squeezer_max_tokens;
            sopt.temperature = ctx.squeezer_temperature;
            sopt.model = ctx.squeezer_model;
            sopt.counter = ctx.counter;

            Summary summary;
            try {
                summary = squeeze(sin, *ctx.squeezer, sopt);
            } catch (const std::exception& e) {
                return fail(turn, std::string("squeeze failed: ") + e.what());
            }

            context += render_information(summary);
            traj.segments.push_back(Segment{SegmentKind::Information, summary.text, turn});
            emit(RolloutEventKind::SummaryInjected, turn, summary.text);
            continue;
        }

        // Malformed: keep everything the policy said, charge the turn, ask it
        // to try again by appending the notice to the growing context.
        const std::string& reason = std::get<MalformedAction>(scan.action).reason;
        for (const Segment& s : scan.segments) {
            Segment copy = s;
            copy.turn = turn;
            traj.segments.push_back(std::move(copy));
        }
        context += gen.text;
        context += kRethinkNotice;
        traj.segments.push_back(
            Segment{SegmentKind::RethinkNotice, std::string(kRethinkNotice), turn});
        emit(RolloutEventKind::RethinkInjected, turn, reason);
    }

    traj.status = TrajectoryStatus::Exhausted;
    traj.turn_count = cfg.max_turns;
    traj.elapsed_ms = steady_now_ms() - t0;
    emit(RolloutEventKind::Exhausted, cfg.max_turns - 1);
    return traj;
}

// ---------------------------------------------------------------------------
// batches
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string config_hash;
    std::string corpus_id;
    std::string policy_model;
    std::string squeezer_model;
    int parallelism = 1;
    std::uint64_t seed = 0;
    std::size_t question_count = 0;
    std::size_t answered = 0;
    std::size_t exhausted = 0;
    std::size_t failed = 0;
    std::int64_t wall_ms = 0;
};

inline json manifest_json(const RunManifest& m, bool reproducible = false) {
    return json{{"config_hash", m.config_hash},
                {"corpus_id", m.corpus_id},
                {"policy_model", m.policy_model},
                {"squeezer_model", m.squeezer_model},
                {"parallelism", m.parallelism},
                {"seed", m.seed},
                {"question_count", m.question_count},
                {"answered", m.answered},
                {"exhausted", m.exhausted},
                {"failed", m.failed},
                {"wall_ms", reproducible ? 0 : m.wall_ms}};
}

struct BatchOptions {
    int parallelism = 1;
    std::string corpus_id;
    std::uint64_t seed = 0;
};

struct BatchResult {
    std::vector<Trajectory> trajectories;  // one per question, input order
    RunManifest manifest;
};

// Runs every question, isolating faults: one question failing (even with an
// unexpected exception) becomes a Failed trajectory, never a lost batch.
inline BatchResult run_batch(const std::vector<Question>& questions, const RolloutConfig& cfg,
                             RolloutContext& ctx, const BatchOptions& opts = {}) {
    validate_config(cfg);
    std::int64_t t0 = steady_now_ms();

    BatchResult result;
    result.trajectories.resize(questions.size());

    auto run_one = [&](std::size_t i) {
        try {
            result.trajectories[i] = run_rollout(questions[i], cfg, ctx);
        } catch (const std::exception& e) {
            Trajectory t;
            t.question = questions[i];
            t.status = TrajectoryStatus::Failed;
            t.failed_turn = 0;
            t.failure_reason = e.what();
            result.trajectories[i] = std::move(t);
        }
    };

    int parallelism = opts.parallelism < 1 ? 1 : opts.parallelism;
    if (parallelism == 1 || questions.size() <= 1) {
        for (std::size_t i = 0; i < questions.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next.fetch_add(1); i < questions.size(); i = next.fetch_add(1))
                run_one(i);
        };
        std::vector<std::thread> pool;
        std::size_t n_threads =
            std::min<std::size_t>(static_cast<std::size_t>(parallelism), questions.size());
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    RunManifest& m = result.manifest;
    m.config_hash = stable_hash_hex(json(cfg).dump());
    m.corpus_id = opts.corpus_id;
    m.policy_model = ctx.policy_model;
    m.squeezer_model = ctx.squeezer_model;
    m.parallelism = parallelism;
    m.seed = opts.seed;
    m.question_count = questions.size();
    for (const Trajectory& t : result.trajectories) {
        switch (t.status) {
            case TrajectoryStatus::Answered: ++m.answered; break;
            case TrajectoryStatus::Exhausted: ++m.exhausted; break;
            case TrajectoryStatus::Failed: ++m.failed; break;
            case TrajectoryStatus::Running: break;
        }
    }
    m.wall_ms = steady_now_ms() - t0;
    return result;
}

}  // namespace ragloop
