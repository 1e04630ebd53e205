#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ragloop/core.hpp"

namespace ragloop {

// ---------------------------------------------------------------------------
// protocol constants
// ---------------------------------------------------------------------------

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kSearchOpen = "<search>";
inline constexpr std::string_view kSearchClose = "</search>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";
inline constexpr std::string_view kInformationOpen = "<information>";
inline constexpr std::string_view kInformationClose = "</information>";

// Literal separator between query variants inside a <search> block.
inline constexpr std::string_view kQuerySeparator = "##";

// Injected verbatim (no tags) when a generation fails to parse, so the next
// turn regenerates instead of the loop dying.
inline constexpr std::string_view kRethinkNotice =
    "My action is not correct. Let me rethink.";

// Generation is cut at whichever of these the policy reaches first; the
// matched stop stays part of the returned text so the parser sees a closed tag.
inline std::vector<std::string> policy_stop_sequences() {
    return {std::string(kSearchClose), std::string(kAnswerClose)};
}

// Instruction prefix for the policy. {n} is the requested number of query
// variants, {question} the question text; each placeholder appears exactly once.
inline constexpr std::string_view kRolloutPromptTemplate =
    "Answer the given question. You must conduct reasoning inside <think> and </think> "
    "first every time you get new information. After reasoning, if you find you lack "
    "some knowledge, you can call a search engine by <search> query </search>, and it "
    "will return the searched results between <information> and </information>. Within "
    "<search></search>, generate {n} diverse query variants — such as paraphrases, "
    "decomposed sub-questions, keyword expansions to facilitate retrieval for more "
    "relevant knowledge. Separate multiple queries with ## so they can be run in "
    "parallel.\n"
    "Example format: <search>query_1 ## query_2 ## ... ## query_n</search>\n"
    "You can search as many times as you want. If you find no further external "
    "knowledge needed, you can directly provide the answer inside <answer> and "
    "</answer> without detailed illustrations. For example, <answer>abc</answer>. "
    "Question: {question}.";

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

struct SearchAction {
    QueryBundle bundle;
};

struct AnswerAction {
    std::string answer;  // whitespace-trimmed
};

struct MalformedAction {
    std::string reason;
};

using ParsedAction = std::variant<MalformedAction, SearchAction, AnswerAction>;

inline bool is_malformed(const ParsedAction& a) {
    return std::holds_alternative<MalformedAction>(a);
}
inline bool is_search(const ParsedAction& a) { return std::holds_alternative<SearchAction>(a); }
inline bool is_answer(const ParsedAction& a) { return std::holds_alternative<AnswerAction>(a); }

struct ScanResult {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::vector<Segment> segments;  // every parsed segment, in emission order
    ParsedAction action = MalformedAction{"no terminal action tag"};
    // Index into segments of the segment that decided the action, and the byte
    // offset just past its closing tag. Only set when action is Search/Answer.
    std::size_t terminal_index = npos;
    std::size_t terminal_end_offset = npos;
    // Non-whitespace content appeared after the terminal tag (it is parsed into
    // segments but callers normally discard it).
    bool trailing_after_terminal = false;
};

// Splits a <search> body on the literal "##", trims each piece and drops empty
// ones. nullopt when nothing survives: the separator is reserved, so a block
// of separators and whitespace carries no query.
inline std::optional<QueryBundle> split_queries(std::string_view body) {
    QueryBundle bundle;
    std::size_t pos = 0;
    while (true) {
        std::size_t sep = body.find(kQuerySeparator, pos);
        std::string_view piece =
            sep == std::string_view::npos ? body.substr(pos) : body.substr(pos, sep - pos);
        std::string_view q = trim(piece);
        if (!q.empty()) bundle.queries.emplace_back(q);
        if (sep == std::string_view::npos) break;
        pos = sep + kQuerySeparator.size();
    }
    if (bundle.queries.empty()) return std::nullopt;
    return bundle;
}

namespace detail {

struct TagToken {
    std::string_view text;
    SegmentKind kind;
    bool closer;
};

inline constexpr std::array<TagToken, 8> kTagTokens{{
    {kThinkOpen, SegmentKind::Think, false},
    {kThinkClose, SegmentKind::Think, true},
    {kSearchOpen, SegmentKind::Search, false},
    {kSearchClose, SegmentKind::Search, true},
    {kAnswerOpen, SegmentKind::Answer, false},
    {kAnswerClose, SegmentKind::Answer, true},
    {kInformationOpen, SegmentKind::Information, false},
    {kInformationClose, SegmentKind::Information, true},
}};

// Next recognized tag token at or after `from`. A bare '<' that does not spell
// one of the eight tokens is ordinary text.
inline std::optional<std::pair<std::size_t, const TagToken*>> find_next_tag(std::string_view raw,
                                                                            std::size_t from) {
    for (std::size_t pos = raw.find('<', from); pos != std::string_view::npos;
         pos = raw.find('<', pos + 1)) {
        for (const TagToken& tok : kTagTokens) {
            if (raw.compare(pos, tok.text.size(), tok.text) == 0) return {{pos, &tok}};
        }
    }
    return std::nullopt;
}

inline std::string_view closer_for(SegmentKind k) {
    switch (k) {
        case SegmentKind::Think: return kThinkClose;
        case SegmentKind::Search: return kSearchClose;
        case SegmentKind::Answer: return kAnswerClose;
        case SegmentKind::Information: return kInformationClose;
        default: return {};
    }
}

}  // namespace detail

// Total scan of one policy generation. Never throws on text content; any
// input maps to some ScanResult and scanning the same bytes twice gives the
// same result.
//
// Grammar is flat: an opener must be followed by its own closer before any
// other tag token. The action is decided by the first closed <search> or
// <answer>; later content is still parsed (callers that persist whole
// trajectories need it) but flagged as trailing. On a grammar violation the
// unconsumed tail is kept verbatim as a Raw segment so nothing the policy
// emitted is lost.
inline ScanResult scan_generation(std::string_view raw) {
    ScanResult r;
    std::size_t pos = 0;
    bool terminal_seen = false;  // first <search>/<answer> already decided the action
    std::optional<std::string> malformed_reason;

    auto emit_untagged = [&](std::string_view chunk) {
        if (trim(chunk).empty()) return;  // pure whitespace between tags is not a segment
        SegmentKind kind =
            trim(chunk) == kRethinkNotice ? SegmentKind::RethinkNotice : SegmentKind::Raw;
        r.segments.push_back(Segment{kind, std::string(chunk), 0});
    };

    // Parse stops here: keep the tail verbatim, remember the reason unless the
    // action was already decided (then the tail is just trailing junk).
    auto abort_scan = [&](std::size_t from, std::string reason) {
        emit_untagged(raw.substr(from));
        if (!terminal_seen && !malformed_reason) malformed_reason = std::move(reason);
        pos = raw.size();
    };

    while (pos < raw.size()) {
        auto tag = detail::find_next_tag(raw, pos);
        if (!tag) {
            emit_untagged(raw.substr(pos));
            break;
        }
        auto [tag_pos, tok] = *tag;
        if (tag_pos > pos) emit_untagged(raw.substr(pos, tag_pos - pos));

        if (tok->closer) {
            abort_scan(tag_pos, "unexpected " + std::string(tok->text));
            break;
        }

        std::size_t body_from = tag_pos + tok->text.size();
        auto next = detail::find_next_tag(raw, body_from);
        if (!next) {
            // Opener never closed; with no action decided this is the
            // canonical "ran out of tokens mid-tag" malformation.
            abort_scan(tag_pos, "no terminal action tag");
            break;
        }
        auto [close_pos, close_tok] = *next;
        if (close_tok->text != detail::closer_for(tok->kind)) {
            abort_scan(tag_pos, "nested or interleaved tags");
            break;
        }

        std::string_view inner = raw.substr(body_from, close_pos - body_from);
        r.segments.push_back(Segment{tok->kind, std::string(inner), 0});
        std::size_t seg_end = close_pos + close_tok->text.size();

        if (!terminal_seen &&
            (tok->kind == SegmentKind::Search || tok->kind == SegmentKind::Answer)) {
            terminal_seen = true;
            if (tok->kind == SegmentKind::Search) {
                if (auto bundle = split_queries(inner)) {
                    r.action = SearchAction{std::move(*bundle)};
                    r.terminal_index = r.segments.size() - 1;
                    r.terminal_end_offset = seg_end;
                } else {
                    malformed_reason = "empty query bundle";
                }
            } else {
                r.action = AnswerAction{std::string(trim(inner))};
                r.terminal_index = r.segments.size() - 1;
                r.terminal_end_offset = seg_end;
            }
        }
        pos = seg_end;
    }

    if (!is_search(r.action) && !is_answer(r.action)) {
        r.action = MalformedAction{malformed_reason.value_or("no terminal action tag")};
        r.terminal_index = ScanResult::npos;
        r.terminal_end_offset = ScanResult::npos;
    } else if (r.terminal_end_offset < raw.size()) {
        r.trailing_after_terminal = !trim(raw.substr(r.terminal_end_offset)).empty();
    }
    return r;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

inline std::string render_segment(const Segment& s) {
    switch (s.kind) {
        case SegmentKind::Think:
            return std::string(kThinkOpen) + s.content + std::string(kThinkClose);
        case SegmentKind::Search:
            return std::string(kSearchOpen) + s.content + std::string(kSearchClose);
        case SegmentKind::Answer:
            return std::string(kAnswerOpen) + s.content + std::string(kAnswerClose);
        case SegmentKind::Information:
            return std::string(kInformationOpen) + s.content + std::string(kInformationClose);
        case SegmentKind::RethinkNotice:
        case SegmentKind::Raw:
            return s.content;
    }
    return s.content;
}

inline std::string render_segments(const std::vector<Segment>& segments) {
    std::string out;
    for (const Segment& s : segments) out += render_segment(s);
    return out;
}

inline std::string render_information(std::string_view text) {
    return std::string(kInformationOpen) + std::string(text) + std::string(kInformationClose);
}

inline std::string render_information(const Summary& s) { return render_information(s.text); }

inline std::string render_prompt(const Question& q, const RolloutConfig& cfg) {
    std::string out(kRolloutPromptTemplate);
    detail::replace_first(out, "{n}", std::to_string(cfg.n_expansions));
    detail::replace_first(out, "{question}", q.text);
    return out;
}

}  // namespace ragloop
