#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"
#include "ragloop/llm_gateway.hpp"
#include "ragloop/reward.hpp"
#include "ragloop/rollout.hpp"

namespace ragloop {

// ---------------------------------------------------------------------------
// dataset loading
// ---------------------------------------------------------------------------

// One JSON object per line: {id, question, golden_answers, dataset?}.
// golden_answers must be a non-empty string array; a missing dataset field
// falls back to "default". Duplicate ids are kept but reported to `warnings`.
inline std::vector<Question> load_dataset(const std::string& path,
                                          std::ostream* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::vector<Question> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            Question q;
            q.id = detail::require_string(j, "id");
            q.text = detail::require_string(j, "question");
            q.golden_answers = detail::require_string_array(j, "golden_answers");
            if (q.id.empty()) throw Error("id must be non-empty");
            if (q.text.empty()) throw Error("question must be non-empty");
            if (q.golden_answers.empty()) throw Error("golden_answers must be non-empty");
            q.dataset = j.value("dataset", std::string("default"));
            if (!seen.insert(q.id).second && warnings)
                *warnings << "warning: duplicate question id '" << q.id << "' at line " << line_no
                          << "\n";
            out.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw SchemaError(line_no, e.what());
        } catch (const Error& e) {
            throw SchemaError(line_no, e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// scoring batches
// ---------------------------------------------------------------------------

// Attaches rewards in place. A trajectory that cannot be scored (e.g. its
// question carries no golds) becomes reward zero with the reason appended to
// failure_reason rather than sinking the batch.
inline void score_trajectories(std::vector<Trajectory>& trajectories, const RolloutConfig& cfg,
                               EmMode mode = EmMode::Normalized) {
    for (Trajectory& t : trajectories) {
        try {
            t.reward = total_reward(t, cfg, mode);
        } catch (const Error& e) {
            RewardBreakdown zero;
            zero.lambda = cfg.lambda_format;
            t.reward = zero;
            if (!t.failure_reason.empty()) t.failure_reason += "; ";
            t.failure_reason += std::string("scoring failed: ") + e.what();
        }
    }
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

struct SweepSpec {
    enum class Axis { NExpansions, TopK };
    Axis axis = Axis::NExpansions;
    std::vector<int> values;  // strictly increasing
    RolloutConfig base;
    EmMode em_mode = EmMode::Normalized;
};

inline const char* to_string(SweepSpec::Axis a) {
    return a == SweepSpec::Axis::NExpansions ? "n_expansions" : "top_k";
}

inline void validate_sweep(const SweepSpec& spec) {
    if (spec.values.empty()) throw ConfigError("values", "sweep needs at least one value");
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        if (spec.values[i] < 1)
            throw ConfigError("values", "sweep values must be >= 1, got " +
                                            std::to_string(spec.values[i]));
        if (i > 0 && spec.values[i] <= spec.values[i - 1])
            throw ConfigError("values", "sweep values must be strictly increasing");
    }
    validate_config(spec.base);
}

struct SweepCell {
    int axis_value = 0;
    EvalReport report;
    RunManifest manifest;
    std::vector<Trajectory> trajectories;
    RolloutConfig config;
    std::string error;  // non-empty = the whole cell failed and report is empty
};

struct SweepResult {
    SweepSpec::Axis axis = SweepSpec::Axis::NExpansions;
    std::vector<SweepCell> cells;
};

// One batch per axis value. A cell failing (backend down, script exhausted at
// the batch level, ...) is recorded on that cell and the sweep moves on.
inline SweepResult run_sweep(const SweepSpec& spec, const std::vector<Question>& questions,
                             RolloutContext& ctx, const BatchOptions& opts = {}) {
    validate_sweep(spec);
    SweepResult result;
    result.axis = spec.axis;
    for (int value : spec.values) {
        SweepCell cell;
        cell.axis_value = value;
        RolloutConfig cfg = spec.base;
        if (spec.axis == SweepSpec::Axis::NExpansions)
            cfg.n_expansions = value;
        else
            cfg.top_k = value;
        cell.config = cfg;
        try {
            BatchResult batch = run_batch(questions, cfg, ctx, opts);
            score_trajectories(batch.trajectories, cfg, spec.em_mode);
            cell.report = aggregate(batch.trajectories);
            cell.manifest = batch.manifest;
            cell.trajectories = std::move(batch.trajectories);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        result.cells.push_back(std::move(cell));
    }
    return result;
}

inline std::string format_mean(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return buf;
}

// axis_value,overall,<one column per dataset seen anywhere in the sweep>
inline std::string sweep_csv(const SweepResult& result) {
    std::set<std::string> datasets;
    for (const SweepCell& c : result.cells)
        for (const auto& [name, stats] : c.report.per_dataset) datasets.insert(name);

    std::ostringstream os;
    os << "axis_value,overall_em";
    for (const std::string& d : datasets) os << ',' << csv_escape(d + "_em");
    os << '\n';
    for (const SweepCell& c : result.cells) {
        os << c.axis_value << ',' << format_mean(c.report.overall.em_mean);
        for (const std::string& d : datasets) {
            auto it = c.report.per_dataset.find(d);
            os << ','
               << (it == c.report.per_dataset.end() ? "" : format_mean(it->second.em_mean));
        }
        os << '\n';
    }
    return os.str();
}

inline json sweep_report_json(const SweepResult& result) {
    json cells = json::array();
    for (const SweepCell& c : result.cells) {
        json jc;
        jc["axis_value"] = c.axis_value;
        jc["config"] = c.config;
        jc["error"] = c.error.empty() ? json(nullptr) : json(c.error);
        jc["report"] = c.report;
        jc["manifest"] = manifest_json(c.manifest);
        cells.push_back(std::move(jc));
    }
    return json{{"axis", to_string(result.axis)}, {"cells", cells}};
}

// ---------------------------------------------------------------------------
// expansion classification
// ---------------------------------------------------------------------------

// {base} and {expanded} are the query pair under classification.
inline constexpr std::string_view kExpansionClassifierTemplate =
    "Classify the following query expansion type.\n"
    "\n"
    "Base Query: {base}\n"
    "Expanded Query: {expanded}\n"
    "\n"
    "Query expansion types:\n"
    "- Syntax Expansion: Reformulating the query structure while keeping the same meaning "
    "(e.g., \"Alexander's father\" → \"father of Alexander\", \"where did he die\" → \"death "
    "place of\")\n"
    "- Semantic Expansion: Expanding the meaning to related concepts (e.g., \"Alexander's "
    "father\" → \"Alexander's family\", \"death place\" → \"burial location\")\n"
    "\n"
    "Respond with ONLY one word: 'syntax' or 'semantic'";

inline std::string build_expansion_prompt(std::string_view base, std::string_view expanded) {
    std::string out(kExpansionClassifierTemplate);
    detail::replace_first(out, "{base}", base);
    detail::replace_first(out, "{expanded}", expanded);
    return out;
}

enum class ExpansionType { Syntax, Semantic };

inline const char* to_string(ExpansionType t) {
    return t == ExpansionType::Syntax ? "syntax" : "semantic";
}

struct ExpansionPair {
    std::string question_id;
    int turn = 0;
    std::string base;      // first query of the search block
    std::string expanded;  // one of the remaining queries
};

struct ExpansionLabel {
    ExpansionPair pair;
    std::optional<ExpansionType> label;  // nullopt = classifier output unusable
    std::string raw_response;
};

struct ExpansionSummary {
    std::size_t syntax = 0;
    std::size_t semantic = 0;
    std::size_t unparseable = 0;
    // Shares of the parseable labels; they sum to exactly 100 when any exist.
    double syntax_pct = 0.0;
    double semantic_pct = 0.0;
};

struct ClassificationResult {
    std::vector<ExpansionLabel> labels;
    ExpansionSummary summary;
    std::string classifier_model;
};

// (base, expansion) pairs from every multi-query search block, in trajectory
// then turn order. Single-query searches have no expansions to classify.
inline std::vector<ExpansionPair> extract_expansion_pairs(
    const std::vector<Trajectory>& trajectories) {
    std::vector<ExpansionPair> out;
    for (const Trajectory& t : trajectories) {
        for (const Segment& s : t.segments) {
            if (s.kind != SegmentKind::Search) continue;
            auto b = split_queries(s.content);
            if (!b || b->queries.size() < 2) continue;
            for (std::size_t i = 1; i < b->queries.size(); ++i)
                out.push_back(ExpansionPair{t.question.id, s.turn, b->queries[0], b->queries[i]});
        }
    }
    return out;
}

// Label text contract: the response, trimmed and ASCII-lowercased, must be
// exactly "syntax" or "semantic"; anything else counts as unparseable and is
// excluded from the ratio.
inline std::optional<ExpansionType> parse_expansion_label(std::string_view response) {
    std::string s(trim(response));
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (s == "syntax") return ExpansionType::Syntax;
    if (s == "semantic") return ExpansionType::Semantic;
    return std::nullopt;
}

inline ClassificationResult classify_expansions(const std::vector<ExpansionPair>& pairs,
                                                LlmGateway& classifier,
                                                const std::string& model = {}) {
    ClassificationResult result;
    result.classifier_model = model;
    for (const ExpansionPair& p : pairs) {
        GenerationRequest req;
        req.prompt = build_expansion_prompt(p.base, p.expanded);
        req.max_tokens = 8;
        req.temperature = 0.0;
        req.model = model;
        GenerationResult res = classifier.generate(req);

        ExpansionLabel label;
        label.pair = p;
        label.raw_response = res.text;
        label.label = parse_expansion_label(res.text);
        if (!label.label)
            ++result.summary.unparseable;
        else if (*label.label == ExpansionType::Syntax)
            ++result.summary.syntax;
        else
            ++result.summary.semantic;
        result.labels.push_back(std::move(label));
    }
    std::size_t parseable = result.summary.syntax + result.summary.semantic;
    if (parseable > 0) {
        result.summary.syntax_pct =
            100.0 * static_cast<double>(result.summary.syntax) / static_cast<double>(parseable);
        result.summary.semantic_pct = 100.0 - result.summary.syntax_pct;
    }
    return result;
}

inline json classification_json(const ClassificationResult& r) {
    json labels = json::array();
    for (const ExpansionLabel& l : r.labels) {
        labels.push_back(json{{"question_id", l.pair.question_id},
                              {"turn", l.pair.turn},
                              {"base", l.pair.base},
                              {"expanded", l.pair.expanded},
                              {"label", l.label ? json(to_string(*l.label)) : json(nullptr)},
                              {"raw_response", l.raw_response}});
    }
    return json{{"classifier_model", r.classifier_model},
                {"labels", labels},
                {"summary",
                 json{{"syntax", r.summary.syntax},
                      {"semantic", r.summary.semantic},
                      {"unparseable", r.summary.unparseable},
                      {"syntax_pct", r.summary.syntax_pct},
                      {"semantic_pct", r.summary.semantic_pct}}}};
}

// Drops expansions whose label matches `drop`; the base query and anything
// unlabeled (or unparseable) survive. Labels are matched to queries by their
// expanded text, first match wins.
inline QueryBundle ablate_expansions(const QueryBundle& bundle,
                                     const std::vector<ExpansionLabel>& labels,
                                     ExpansionType drop) {
    QueryBundle out;
    out.source_turn = bundle.source_turn;
    for (std::size_t i = 0; i < bundle.queries.size(); ++i) {
        if (i == 0) {
            out.queries.push_back(bundle.queries[i]);
            continue;
        }
        bool dropped = false;
        for (const ExpansionLabel& l : labels) {
            if (l.pair.expanded != bundle.queries[i]) continue;
            dropped = l.label && *l.label == drop;
            break;
        }
        if (!dropped) out.queries.push_back(bundle.queries[i]);
    }
    return out;
}

}  // namespace ragloop
