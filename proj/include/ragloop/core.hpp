#pragma once

#include <cctype>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragloop/errors.hpp"

namespace ragloop {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// small text utilities
// ---------------------------------------------------------------------------

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

// Token = maximal run of non-whitespace. This is the unit every token limit
// in this library is measured in; swap in a different TokenCounter to bill
// against a real tokenizer.
inline int count_words(std::string_view text) {
    int n = 0;
    bool in_word = false;
    for (char c : text) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

// Keeps the first max_words words, byte-exact, with no trailing whitespace.
// Inputs at or under the limit come back unchanged.
inline std::string truncate_words(std::string_view text, int max_words) {
    if (max_words <= 0) return {};
    int n = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (is_space(text[i])) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            if (++n > max_words) {
                std::string_view kept = text.substr(0, i);
                while (!kept.empty() && is_space(kept.back())) kept.remove_suffix(1);
                return std::string(kept);
            }
        }
    }
    return std::string(text);
}

using TokenCounter = std::function<int(std::string_view)>;

inline int count_tokens(const TokenCounter& counter, std::string_view text) {
    return counter ? counter(text) : count_words(text);
}

// Longest whole-word prefix whose token count fits the limit. With the
// default counter this is exactly truncate_words; a custom counter is probed
// by binary search over word boundaries (counters are assumed monotone in
// prefix length).
inline std::string truncate_to_token_limit(std::string_view text, int limit,
                                           const TokenCounter& counter = {}) {
    if (!counter) {
        if (count_words(text) <= limit) return std::string(text);
        return truncate_words(text, limit);
    }
    if (counter(text) <= limit) return std::string(text);
    int lo = 0, hi = count_words(text);  // counter(first lo words) <= limit < counter(first hi)
    while (hi - lo > 1) {
        int mid = lo + (hi - lo) / 2;
        if (counter(truncate_words(text, mid)) <= limit)
            lo = mid;
        else
            hi = mid;
    }
    return truncate_words(text, lo);
}

// FNV-1a, rendered as hex. Used to fingerprint configs in run manifests.
inline std::string stable_hash_hex(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline std::int64_t steady_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------------------
// model types
// ---------------------------------------------------------------------------

struct Question {
    std::string id;
    std::string text;
    std::vector<std::string> golden_answers;
    std::string dataset = "default";
};

struct RolloutConfig {
    int max_turns = 4;                    // action budget B
    int n_expansions = 3;                 // query variants requested per search
    int top_k = 10;                       // passages per query
    int response_token_limit = 500;       // policy generation cap
    int retrieved_token_limit = 500;      // injected summary cap
    double lambda_format = 0.2;           // weight of the format term
    int max_bundle_size = 8;              // hard cap on queries per search block
    int squeezer_input_token_limit = 8192;  // context budget for the squeezer prompt
};

inline void validate_config(const RolloutConfig& cfg) {
    auto positive = [](const char* field, int v) {
        if (v < 1) throw ConfigError(field, "must be >= 1, got " + std::to_string(v));
    };
    positive("max_turns", cfg.max_turns);
    positive("n_expansions", cfg.n_expansions);
    positive("top_k", cfg.top_k);
    positive("response_token_limit", cfg.response_token_limit);
    positive("retrieved_token_limit", cfg.retrieved_token_limit);
    positive("max_bundle_size", cfg.max_bundle_size);
    positive("squeezer_input_token_limit", cfg.squeezer_input_token_limit);
    if (!(cfg.lambda_format >= 0.0))
        throw ConfigError("lambda_format", "must be >= 0");
}

enum class SegmentKind { Think, Search, Answer, Information, RethinkNotice, Raw };

struct Segment {
    SegmentKind kind = SegmentKind::Raw;
    std::string content;  // inner text, without the surrounding tags
    int turn = 0;         // 0-based index of the policy generation it came from

    bool operator==(const Segment&) const = default;
};

enum class TrajectoryStatus { Running, Answered, Exhausted, Failed };

struct RewardBreakdown {
    double em = 0.0;
    double format = 0.0;
    double lambda = 0.0;
    double total = 0.0;

    bool operator==(const RewardBreakdown&) const = default;
};

struct Trajectory {
    Question question;
    std::vector<Segment> segments;
    std::optional<std::string> final_answer;
    TrajectoryStatus status = TrajectoryStatus::Running;
    std::optional<RewardBreakdown> reward;
    int turn_count = 0;          // policy generations consumed
    std::int64_t elapsed_ms = 0;
    std::optional<int> failed_turn;
    std::string failure_reason;
};

struct QueryBundle {
    std::vector<std::string> queries;  // trimmed, non-empty, original order
    int source_turn = 0;
};

struct Chunk {
    std::string doc_id;
    std::string title;
    std::string text;
    double score = 0.0;
    int rank = 0;  // 1-based within its ChunkSet
};

struct ChunkSet {
    std::string query;
    std::vector<Chunk> chunks;  // rank ascending, score non-increasing
};

struct Summary {
    std::string text;
    std::vector<std::string> source_queries;
    std::vector<std::string> source_doc_ids;  // doc ids the squeezer actually saw
    std::string squeezer_model;
};

// ---------------------------------------------------------------------------
// enum <-> string
// ---------------------------------------------------------------------------

inline const char* to_string(SegmentKind k) {
    switch (k) {
        case SegmentKind::Think: return "think";
        case SegmentKind::Search: return "search";
        case SegmentKind::Answer: return "answer";
        case SegmentKind::Information: return "information";
        case SegmentKind::RethinkNotice: return "rethink";
        case SegmentKind::Raw: return "raw";
    }
    return "raw";
}

inline SegmentKind segment_kind_from_string(const std::string& s) {
    if (s == "think") return SegmentKind::Think;
    if (s == "search") return SegmentKind::Search;
    if (s == "answer") return SegmentKind::Answer;
    if (s == "information") return SegmentKind::Information;
    if (s == "rethink") return SegmentKind::RethinkNotice;
    if (s == "raw") return SegmentKind::Raw;
    throw Error("unknown segment kind '" + s + "'");
}

inline const char* to_string(TrajectoryStatus s) {
    switch (s) {
        case TrajectoryStatus::Running: return "running";
        case TrajectoryStatus::Answered: return "answered";
        case TrajectoryStatus::Exhausted: return "exhausted";
        case TrajectoryStatus::Failed: return "failed";
    }
    return "running";
}

inline TrajectoryStatus trajectory_status_from_string(const std::string& s) {
    if (s == "running") return TrajectoryStatus::Running;
    if (s == "answered") return TrajectoryStatus::Answered;
    if (s == "exhausted") return TrajectoryStatus::Exhausted;
    if (s == "failed") return TrajectoryStatus::Failed;
    throw Error("unknown trajectory status '" + s + "'");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

inline void replace_first(std::string& s, std::string_view needle, std::string_view value) {
    std::size_t at = s.find(needle);
    if (at != std::string::npos) s.replace(at, needle.size(), value);
}

inline const json& require_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(std::string("missing field '") + key + "'");
    return *it;
}

inline std::string require_string(const json& j, const char* key) {
    const json& v = require_field(j, key);
    if (!v.is_string()) throw Error(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

inline std::vector<std::string> require_string_array(const json& j, const char* key) {
    const json& v = require_field(j, key);
    if (!v.is_array()) throw Error(std::string("field '") + key + "' must be an array");
    std::vector<std::string> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_string()) throw Error(std::string("field '") + key + "' must contain only strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

}  // namespace detail

inline void to_json(json& j, const RolloutConfig& c) {
    j = json{{"max_turns", c.max_turns},
             {"n_expansions", c.n_expansions},
             {"top_k", c.top_k},
             {"response_token_limit", c.response_token_limit},
             {"retrieved_token_limit", c.retrieved_token_limit},
             {"lambda_format", c.lambda_format},
             {"max_bundle_size", c.max_bundle_size},
             {"squeezer_input_token_limit", c.squeezer_input_token_limit}};
}

inline void from_json(const json& j, RolloutConfig& c) {
    RolloutConfig def;
    c.max_turns = j.value("max_turns", def.max_turns);
    c.n_expansions = j.value("n_expansions", def.n_expansions);
    c.top_k = j.value("top_k", def.top_k);
    c.response_token_limit = j.value("response_token_limit", def.response_token_limit);
    c.retrieved_token_limit = j.value("retrieved_token_limit", def.retrieved_token_limit);
    c.lambda_format = j.value("lambda_format", def.lambda_format);
    c.max_bundle_size = j.value("max_bundle_size", def.max_bundle_size);
    c.squeezer_input_token_limit =
        j.value("squeezer_input_token_limit", def.squeezer_input_token_limit);
}

inline void to_json(json& j, const Segment& s) {
    j = json{{"kind", to_string(s.kind)}, {"content", s.content}, {"turn", s.turn}};
}

inline void from_json(const json& j, Segment& s) {
    s.kind = segment_kind_from_string(detail::require_string(j, "kind"));
    s.content = detail::require_string(j, "content");
    s.turn = detail::require_field(j, "turn").get<int>();
}

inline void to_json(json& j, const RewardBreakdown& r) {
    j = json{{"em", r.em}, {"format", r.format}, {"lambda", r.lambda}, {"total", r.total}};
}

inline void from_json(const json& j, RewardBreakdown& r) {
    r.em = detail::require_field(j, "em").get<double>();
    r.format = detail::require_field(j, "format").get<double>();
    r.lambda = detail::require_field(j, "lambda").get<double>();
    r.total = detail::require_field(j, "total").get<double>();
}

inline void to_json(json& j, const Chunk& c) {
    j = json{{"doc_id", c.doc_id},
             {"title", c.title},
             {"text", c.text},
             {"score", c.score},
             {"rank", c.rank}};
}

inline void from_json(const json& j, Chunk& c) {
    c.doc_id = detail::require_string(j, "doc_id");
    c.title = detail::require_string(j, "title");
    c.text = detail::require_string(j, "text");
    c.score = detail::require_field(j, "score").get<double>();
    c.rank = j.value("rank", 0);
}

// ---------------------------------------------------------------------------
// trajectory persistence (one JSON object per line)
// ---------------------------------------------------------------------------

struct SerializeOptions {
    // Zeroes timings_ms so two runs over identical inputs produce
    // byte-identical files.
    bool reproducible = false;
};

// A trajectory as read back from disk, paired with the config that produced it.
struct StoredTrajectory {
    Trajectory trajectory;
    RolloutConfig config;
};

inline json trajectory_record(const Trajectory& t, const RolloutConfig& cfg,
                              const SerializeOptions& opts = {}) {
    json rec;
    rec["question_id"] = t.question.id;
    rec["question"] = t.question.text;
    rec["golden_answers"] = t.question.golden_answers;
    rec["dataset"] = t.question.dataset;
    rec["status"] = to_string(t.status);
    rec["segments"] = t.segments;
    rec["final_answer"] = t.final_answer ? json(*t.final_answer) : json(nullptr);
    rec["reward"] = t.reward ? json(*t.reward) : json(nullptr);
    rec["config"] = cfg;
    rec["turn_count"] = t.turn_count;
    rec["timings_ms"] = opts.reproducible ? 0 : t.elapsed_ms;
    if (t.status == TrajectoryStatus::Failed) {
        rec["failed_turn"] = t.failed_turn ? json(*t.failed_turn) : json(nullptr);
        rec["failure_reason"] = t.failure_reason;
    }
    return rec;
}

inline StoredTrajectory trajectory_from_record(const json& rec) {
    StoredTrajectory out;
    Trajectory& t = out.trajectory;
    t.question.id = detail::require_string(rec, "question_id");
    t.question.text = rec.value("question", std::string());
    if (rec.contains("golden_answers"))
        t.question.golden_answers = detail::require_string_array(rec, "golden_answers");
    t.question.dataset = rec.value("dataset", std::string("default"));
    t.status = trajectory_status_from_string(detail::require_string(rec, "status"));
    t.segments = detail::require_field(rec, "segments").get<std::vector<Segment>>();
    const json& fa = detail::require_field(rec, "final_answer");
    if (!fa.is_null()) t.final_answer = fa.get<std::string>();
    const json& rw = detail::require_field(rec, "reward");
    if (!rw.is_null()) t.reward = rw.get<RewardBreakdown>();
    t.turn_count = rec.value("turn_count", 0);
    t.elapsed_ms = rec.value("timings_ms", std::int64_t(0));
    if (rec.contains("failed_turn") && !rec["failed_turn"].is_null())
        t.failed_turn = rec["failed_turn"].get<int>();
    t.failure_reason = rec.value("failure_reason", std::string());
    out.config = rec.value("config", RolloutConfig{});
    return out;
}

inline void write_trajectory_jsonl(std::ostream& os, const std::vector<Trajectory>& trajectories,
                                   const RolloutConfig& cfg, const SerializeOptions& opts = {}) {
    for (const Trajectory& t : trajectories)
        os << trajectory_record(t, cfg, opts).dump() << '\n';
}

inline std::vector<StoredTrajectory> read_trajectory_jsonl(std::istream& is) {
    std::vector<StoredTrajectory> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(trajectory_from_record(json::parse(line)));
        } catch (const json::exception& e) {
            throw SchemaError(line_no, e.what());
        } catch (const Error& e) {
            throw SchemaError(line_no, e.what());
        }
    }
    return out;
}

}  // namespace ragloop
