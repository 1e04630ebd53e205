#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"
#include "ragloop/tag_protocol.hpp"

namespace ragloop {

namespace detail {

// ASCII punctuation, the four ranges around the alphanumerics.
inline bool is_ascii_punct(char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

}  // namespace detail

// Canonical open-domain QA answer normalization: ASCII-lowercase, delete
// punctuation characters, drop the article tokens a/an/the, collapse runs of
// whitespace to single spaces (no leading/trailing space). Deleting
// punctuation before dropping articles matters: "a.b" becomes "ab", one token
// that is no article.
inline std::string normalize_answer(std::string_view raw) {
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (char c : raw) {
        if (detail::is_ascii_punct(c)) continue;
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        cleaned.push_back(c);
    }
    std::string out;
    out.reserve(cleaned.size());
    std::size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && is_space(cleaned[i])) ++i;
        std::size_t start = i;
        while (i < cleaned.size() && !is_space(cleaned[i])) ++i;
        std::string_view tok(cleaned.data() + start, i - start);
        if (tok.empty() || tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out.append(tok);
    }
    return out;
}

enum class EmMode { Normalized, Raw };

// 1 iff the prediction matches any gold answer; matching is string equality
// after normalization (or byte equality in Raw mode).
inline int em_reward(std::string_view prediction, const std::vector<std::string>& golden_answers,
                     EmMode mode = EmMode::Normalized) {
    if (golden_answers.empty()) throw EmptyGoldSet();
    if (mode == EmMode::Raw) {
        for (const std::string& g : golden_answers)
            if (prediction == g) return 1;
        return 0;
    }
    std::string pred = normalize_answer(prediction);
    for (const std::string& g : golden_answers)
        if (pred == normalize_answer(g)) return 1;
    return 0;
}

// 1 iff the trajectory followed the protocol end to end: it answered, no
// generation ever failed to parse (the engine marks those with a rethink
// notice), and every search was preceded by a think in its own turn.
inline int format_reward(const Trajectory& t) {
    if (t.status != TrajectoryStatus::Answered || !t.final_answer) return 0;
    for (std::size_t i = 0; i < t.segments.size(); ++i) {
        const Segment& s = t.segments[i];
        if (s.kind == SegmentKind::RethinkNotice) return 0;
        if (s.kind == SegmentKind::Search) {
            bool think_before = false;
            for (std::size_t j = 0; j < i; ++j) {
                if (t.segments[j].turn == s.turn && t.segments[j].kind == SegmentKind::Think) {
                    think_before = true;
                    break;
                }
            }
            if (!think_before) return 0;
        }
    }
    return 1;
}

// r = r_em + lambda * r_format. A Failed trajectory scores em 0 through its
// missing final answer rather than being special-cased.
inline RewardBreakdown total_reward(const Trajectory& t, const RolloutConfig& cfg,
                                    EmMode mode = EmMode::Normalized) {
    RewardBreakdown r;
    std::string_view pred = t.final_answer ? std::string_view(*t.final_answer) : std::string_view();
    r.em = static_cast<double>(em_reward(pred, t.question.golden_answers, mode));
    r.format = static_cast<double>(format_reward(t));
    r.lambda = cfg.lambda_format;
    r.total = r.em + r.lambda * r.format;
    return r;
}

// ---------------------------------------------------------------------------
// aggregation
// ---------------------------------------------------------------------------

struct DatasetStats {
    std::size_t count = 0;
    std::size_t failed = 0;  // status Failed; these still count into the means as 0
    std::optional<double> em_mean;
    std::optional<double> format_mean;
    std::optional<double> total_mean;
};

struct EvalReport {
    DatasetStats overall;
    std::map<std::string, DatasetStats> per_dataset;
};

// Means over already-scored trajectories. Unscored input is a caller bug.
inline EvalReport aggregate(const std::vector<Trajectory>& trajectories) {
    struct Acc {
        std::size_t count = 0, failed = 0;
        double em = 0, format = 0, total = 0;
    };
    Acc overall;
    std::map<std::string, Acc> per;
    for (const Trajectory& t : trajectories) {
        if (!t.reward)
            throw Error("trajectory '" + t.question.id + "' has no reward; score it first");
        for (Acc* a : {&overall, &per[t.question.dataset]}) {
            a->count += 1;
            a->failed += t.status == TrajectoryStatus::Failed ? 1 : 0;
            a->em += t.reward->em;
            a->format += t.reward->format;
            a->total += t.reward->total;
        }
    }
    auto to_stats = [](const Acc& a) {
        DatasetStats s;
        s.count = a.count;
        s.failed = a.failed;
        if (a.count > 0) {
            s.em_mean = a.em / static_cast<double>(a.count);
            s.format_mean = a.format / static_cast<double>(a.count);
            s.total_mean = a.total / static_cast<double>(a.count);
        }
        return s;
    };
    EvalReport report;
    report.overall = to_stats(overall);
    for (const auto& [name, acc] : per) report.per_dataset[name] = to_stats(acc);
    return report;
}

inline void to_json(json& j, const DatasetStats& s) {
    j = json{{"count", s.count},
             {"failed", s.failed},
             {"em_mean", s.em_mean ? json(*s.em_mean) : json(nullptr)},
             {"format_mean", s.format_mean ? json(*s.format_mean) : json(nullptr)},
             {"total_mean", s.total_mean ? json(*s.total_mean) : json(nullptr)}};
}

inline void to_json(json& j, const EvalReport& r) {
    j = json{{"overall", r.overall}, {"datasets", r.per_dataset}};
}

// Total queries this trajectory actually sent to retrieval.
inline int queries_used(const Trajectory& t) {
    int n = 0;
    for (const Segment& s : t.segments) {
        if (s.kind != SegmentKind::Search) continue;
        if (auto b = split_queries(s.content)) n += static_cast<int>(b->queries.size());
    }
    return n;
}

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline void write_per_question_csv(std::ostream& os, const std::vector<Trajectory>& trajectories) {
    os << "id,dataset,em,format,total,turns,n_queries_used\n";
    for (const Trajectory& t : trajectories) {
        double em = t.reward ? t.reward->em : 0.0;
        double fm = t.reward ? t.reward->format : 0.0;
        double total = t.reward ? t.reward->total : 0.0;
        os << csv_escape(t.question.id) << ',' << csv_escape(t.question.dataset) << ',' << em << ','
           << fm << ',' << total << ',' << t.turn_count << ',' << queries_used(t) << '\n';
    }
}

}  // namespace ragloop
