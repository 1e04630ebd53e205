// ragloop command line: index building, rollout runs, evaluation, sweeps,
// expansion classification and trajectory replay.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ragloop/ragloop.hpp"

namespace {

using namespace ragloop;

// Everything the config file may set. Flags win over the file, the file wins
// over built-in defaults.
struct Settings {
    RolloutConfig cfg;
    std::string policy_endpoint;
    std::string squeezer_endpoint;
    std::string classifier_endpoint;
    std::string retrieval_endpoint;
    std::string policy_model;
    std::string squeezer_model;
    std::string classifier_model;
    std::string api_key;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int parallelism = 1;
};

struct Overrides {
    std::optional<int> max_turns, n_expansions, top_k, response_token_limit,
        retrieved_token_limit, max_bundle_size, squeezer_input_token_limit, parallelism;
    std::optional<double> lambda_format;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> config_path, policy_endpoint, squeezer_endpoint,
        classifier_endpoint, retrieval_endpoint, policy_model, squeezer_model, classifier_model,
        api_key;
};

void apply_config_file(Settings& s, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config", std::string(path) + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config", path + ": must be a JSON object");

    static const std::set<std::string> known = {
        "max_turns",        "n_expansions",      "top_k",
        "response_token_limit", "retrieved_token_limit", "lambda_format",
        "max_bundle_size",  "squeezer_input_token_limit",
        "policy_endpoint",  "squeezer_endpoint", "classifier_endpoint",
        "retrieval_endpoint", "policy_model",    "squeezer_model",
        "classifier_model", "api_key",           "seed",
        "parallelism"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key)) throw ConfigError(key, "unknown config key in " + path);
    }

    try {
        s.cfg.max_turns = j.value("max_turns", s.cfg.max_turns);
        s.cfg.n_expansions = j.value("n_expansions", s.cfg.n_expansions);
        s.cfg.top_k = j.value("top_k", s.cfg.top_k);
        s.cfg.response_token_limit = j.value("response_token_limit", s.cfg.response_token_limit);
        s.cfg.retrieved_token_limit = j.value("retrieved_token_limit", s.cfg.retrieved_token_limit);
        s.cfg.lambda_format = j.value("lambda_format", s.cfg.lambda_format);
        s.cfg.max_bundle_size = j.value("max_bundle_size", s.cfg.max_bundle_size);
        s.cfg.squeezer_input_token_limit =
            j.value("squeezer_input_token_limit", s.cfg.squeezer_input_token_limit);
        s.policy_endpoint = j.value("policy_endpoint", s.policy_endpoint);
        s.squeezer_endpoint = j.value("squeezer_endpoint", s.squeezer_endpoint);
        s.classifier_endpoint = j.value("classifier_endpoint", s.classifier_endpoint);
        s.retrieval_endpoint = j.value("retrieval_endpoint", s.retrieval_endpoint);
        s.policy_model = j.value("policy_model", s.policy_model);
        s.squeezer_model = j.value("squeezer_model", s.squeezer_model);
        s.classifier_model = j.value("classifier_model", s.classifier_model);
        s.api_key = j.value("api_key", s.api_key);
        if (j.contains("seed")) {
            s.seed = j.at("seed").get<std::uint64_t>();
            s.seed_set = true;
        }
        s.parallelism = j.value("parallelism", s.parallelism);
    } catch (const json::exception& e) {
        throw ConfigError("config", std::string(path) + ": " + e.what());
    }
}

Settings resolve_settings(const Overrides& o) {
    Settings s;
    if (o.config_path) apply_config_file(s, *o.config_path);
    if (o.max_turns) s.cfg.max_turns = *o.max_turns;
    if (o.n_expansions) s.cfg.n_expansions = *o.n_expansions;
    if (o.top_k) s.cfg.top_k = *o.top_k;
    if (o.response_token_limit) s.cfg.response_token_limit = *o.response_token_limit;
    if (o.retrieved_token_limit) s.cfg.retrieved_token_limit = *o.retrieved_token_limit;
    if (o.lambda_format) s.cfg.lambda_format = *o.lambda_format;
    if (o.max_bundle_size) s.cfg.max_bundle_size = *o.max_bundle_size;
    if (o.squeezer_input_token_limit)
        s.cfg.squeezer_input_token_limit = *o.squeezer_input_token_limit;
    if (o.policy_endpoint) s.policy_endpoint = *o.policy_endpoint;
    if (o.squeezer_endpoint) s.squeezer_endpoint = *o.squeezer_endpoint;
    if (o.classifier_endpoint) s.classifier_endpoint = *o.classifier_endpoint;
    if (o.retrieval_endpoint) s.retrieval_endpoint = *o.retrieval_endpoint;
    if (o.policy_model) s.policy_model = *o.policy_model;
    if (o.squeezer_model) s.squeezer_model = *o.squeezer_model;
    if (o.classifier_model) s.classifier_model = *o.classifier_model;
    if (o.api_key) s.api_key = *o.api_key;
    if (o.seed) {
        s.seed = *o.seed;
        s.seed_set = true;
    }
    if (o.parallelism) s.parallelism = *o.parallelism;
    if (s.parallelism < 1)
        throw ConfigError("parallelism", "must be >= 1, got " + std::to_string(s.parallelism));
    return s;
}

// Script file: a JSON array of strings replays in order; a JSON object maps
// prompt-substring keys to per-key arrays, which keeps parallel runs
// deterministic (each worker consumes only its own question's entries).
std::unique_ptr<ScriptedGateway> load_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open script file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("script", path + ": " + e.what());
    }
    auto gw = std::make_unique<ScriptedGateway>();
    if (j.is_array()) {
        for (const json& e : j) {
            if (!e.is_string())
                throw ConfigError("script", path + ": array entries must be strings");
            gw->enqueue(e.get<std::string>());
        }
    } else if (j.is_object()) {
        for (const auto& [key, entries] : j.items()) {
            if (!entries.is_array())
                throw ConfigError("script", path + ": '" + key + "' must map to an array");
            for (const json& e : entries) {
                if (!e.is_string())
                    throw ConfigError("script", path + ": entries under '" + key +
                                                    "' must be strings");
                gw->enqueue_for(key, e.get<std::string>());
            }
        }
    } else {
        throw ConfigError("script", path + ": must be a JSON array or object");
    }
    return gw;
}

std::unique_ptr<LlmGateway> make_gateway(const std::string& script_path,
                                         const std::string& endpoint, const std::string& model,
                                         const Settings& s, const char* role) {
    if (!script_path.empty()) return load_script(script_path);
    if (!endpoint.empty()) {
        OpenAiGatewayOptions opt;
        opt.base_url = endpoint;
        opt.api_key = s.api_key;
        if (!model.empty()) opt.default_model = model;
        opt.max_inflight = s.parallelism;
        return std::make_unique<OpenAiGateway>(opt);
    }
    throw ConfigError(role, std::string("no ") + role +
                                " backend: pass --" + role + "-script or --" + role +
                                "-endpoint (or set it in the config file)");
}

struct RetrieverHolder {
    std::unique_ptr<Bm25Index> local;
    std::unique_ptr<RemoteRetriever> remote;
    const Retriever* get() const { return local ? (const Retriever*)local.get() : remote.get(); }
    std::string id;
};

RetrieverHolder make_retriever(const std::string& index_path, const Settings& s) {
    RetrieverHolder h;
    if (!index_path.empty()) {
        h.local = std::make_unique<Bm25Index>(Bm25Index::load(index_path));
        h.id = index_path;
    } else if (!s.retrieval_endpoint.empty()) {
        RemoteRetrieverOptions opt;
        opt.base_url = s.retrieval_endpoint;
        h.remote = std::make_unique<RemoteRetriever>(opt);
        h.id = s.retrieval_endpoint;
    } else {
        throw ConfigError("index",
                          "no retriever: pass --index or --retrieval-endpoint (or set "
                          "retrieval_endpoint in the config file)");
    }
    return h;
}

EmMode parse_em_mode(const std::string& s) {
    if (s == "normalized") return EmMode::Normalized;
    if (s == "raw") return EmMode::Raw;
    throw ConfigError("em-mode", "must be 'normalized' or 'raw', got '" + s + "'");
}

void write_text(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file: " + path);
    out << content;
    if (!out) throw IoError("short write to " + path);
}

std::vector<StoredTrajectory> read_stored(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trajectory file: " + path);
    return read_trajectory_jsonl(in);
}

RolloutContext make_context(LlmGateway& policy, const Retriever& retriever, LlmGateway& squeezer,
                            const Settings& s) {
    RolloutContext ctx;
    ctx.policy = &policy;
    ctx.retriever = &retriever;
    ctx.squeezer = &squeezer;
    ctx.policy_model = s.policy_model;
    ctx.squeezer_model = s.squeezer_model;
    if (s.seed_set) ctx.sampling_seed = s.seed;
    return ctx;
}

BatchOptions make_batch_options(const Settings& s, const std::string& corpus_id) {
    BatchOptions opts;
    opts.parallelism = s.parallelism;
    opts.corpus_id = corpus_id;
    opts.seed = s.seed;
    return opts;
}

// Re-score one stored trajectory with its own config; scoring problems become
// a zero reward plus a note, mirroring score_trajectories.
void rescore(StoredTrajectory& st, EmMode mode) {
    try {
        st.trajectory.reward = total_reward(st.trajectory, st.config, mode);
    } catch (const Error& e) {
        RewardBreakdown zero;
        zero.lambda = st.config.lambda_format;
        st.trajectory.reward = zero;
        if (!st.trajectory.failure_reason.empty()) st.trajectory.failure_reason += "; ";
        st.trajectory.failure_reason += std::string("scoring failed: ") + e.what();
    }
}

// ---------------------------------------------------------------------------
// subcommands; each returns the process exit code
// ---------------------------------------------------------------------------

int cmd_index_build(const std::string& corpus, const std::string& out, bool skip_malformed) {
    Bm25Index::Options opt;
    opt.skip_malformed = skip_malformed;
    Bm25Index idx(opt);
    IndexStats st = idx.ingest_jsonl(corpus);
    idx.save(out);
    json report = {{"doc_count", st.doc_count},
                   {"term_count", st.term_count},
                   {"avg_doc_len", st.avg_doc_len},
                   {"rejected_count", st.rejected_count},
                   {"build_time_ms", st.build_time_ms},
                   {"index_path", out}};
    std::cout << report.dump(2) << "\n";
    return st.rejected_count > 0 ? 1 : 0;
}

int cmd_run(const Overrides& o, const std::string& dataset, const std::string& index_path,
            const std::string& out, const std::string& manifest_path,
            const std::string& policy_script, const std::string& squeezer_script,
            bool reproducible, const std::string& em_mode) {
    Settings s = resolve_settings(o);
    validate_config(s.cfg);
    EmMode mode = parse_em_mode(em_mode);

    std::vector<Question> questions = load_dataset(dataset, &std::cerr);
    RetrieverHolder retriever = make_retriever(index_path, s);
    auto policy = make_gateway(policy_script, s.policy_endpoint, s.policy_model, s, "policy");
    auto squeezer =
        make_gateway(squeezer_script, s.squeezer_endpoint, s.squeezer_model, s, "squeezer");

    RolloutContext ctx = make_context(*policy, *retriever.get(), *squeezer, s);
    BatchResult batch = run_batch(questions, s.cfg, ctx, make_batch_options(s, retriever.id));
    score_trajectories(batch.trajectories, s.cfg, mode);

    SerializeOptions sopts;
    sopts.reproducible = reproducible;
    std::ostringstream body;
    write_trajectory_jsonl(body, batch.trajectories, s.cfg, sopts);
    write_text(out, body.str());
    if (!manifest_path.empty())
        write_text(manifest_path, manifest_json(batch.manifest, reproducible).dump(2) + "\n");

    std::cerr << "run: " << batch.manifest.answered << " answered, " << batch.manifest.exhausted
              << " exhausted, " << batch.manifest.failed << " failed of "
              << batch.manifest.question_count << "\n";
    return batch.manifest.failed > 0 ? 1 : 0;
}

int cmd_eval(const std::string& trajectories, const std::string& report_path,
             const std::string& csv_path, const std::string& em_mode) {
    EmMode mode = parse_em_mode(em_mode);
    std::vector<StoredTrajectory> stored = read_stored(trajectories);
    std::vector<Trajectory> ts;
    ts.reserve(stored.size());
    for (StoredTrajectory& st : stored) {
        if (!st.trajectory.reward) rescore(st, mode);
        ts.push_back(st.trajectory);
    }
    EvalReport report = aggregate(ts);
    write_text(report_path, json(report).dump(2) + "\n");
    if (!csv_path.empty()) {
        std::ostringstream os;
        write_per_question_csv(os, ts);
        write_text(csv_path, os.str());
    }
    return 0;
}

int cmd_sweep(const Overrides& o, const std::string& dataset, const std::string& index_path,
              const std::string& axis, const std::vector<int>& values,
              const std::string& csv_path, const std::string& report_path,
              const std::string& policy_script, const std::string& squeezer_script,
              const std::string& em_mode) {
    Settings s = resolve_settings(o);
    SweepSpec spec;
    if (axis == "n_expansions") {
        spec.axis = SweepSpec::Axis::NExpansions;
    } else if (axis == "top_k") {
        spec.axis = SweepSpec::Axis::TopK;
    } else {
        throw ConfigError("axis", "must be 'n_expansions' or 'top_k', got '" + axis + "'");
    }
    spec.values = values;
    spec.base = s.cfg;
    spec.em_mode = parse_em_mode(em_mode);
    validate_sweep(spec);

    std::vector<Question> questions = load_dataset(dataset, &std::cerr);
    RetrieverHolder retriever = make_retriever(index_path, s);
    auto policy = make_gateway(policy_script, s.policy_endpoint, s.policy_model, s, "policy");
    auto squeezer =
        make_gateway(squeezer_script, s.squeezer_endpoint, s.squeezer_model, s, "squeezer");
    RolloutContext ctx = make_context(*policy, *retriever.get(), *squeezer, s);

    SweepResult result = run_sweep(spec, questions, ctx, make_batch_options(s, retriever.id));
    if (!csv_path.empty()) write_text(csv_path, sweep_csv(result));
    write_text(report_path, sweep_report_json(result).dump(2) + "\n");

    bool partial = false;
    for (const SweepCell& c : result.cells)
        if (!c.error.empty() || c.manifest.failed > 0) partial = true;
    return partial ? 1 : 0;
}

int cmd_classify(const Overrides& o, const std::string& trajectories, const std::string& out,
                 const std::string& classifier_script) {
    Settings s = resolve_settings(o);
    std::vector<StoredTrajectory> stored = read_stored(trajectories);
    std::vector<Trajectory> ts;
    ts.reserve(stored.size());
    for (StoredTrajectory& st : stored) ts.push_back(std::move(st.trajectory));
    std::vector<ExpansionPair> pairs = extract_expansion_pairs(ts);

    auto classifier = make_gateway(classifier_script, s.classifier_endpoint, s.classifier_model,
                                   s, "classifier");
    ClassificationResult result = classify_expansions(pairs, *classifier, s.classifier_model);
    write_text(out, classification_json(result).dump(2) + "\n");
    return result.summary.unparseable > 0 ? 1 : 0;
}

int cmd_replay(const std::string& trajectories, const std::string& out,
               const std::string& report_path, bool reproducible, const std::string& em_mode) {
    EmMode mode = parse_em_mode(em_mode);
    std::vector<StoredTrajectory> stored = read_stored(trajectories);

    std::size_t mismatches = 0;
    std::vector<Trajectory> ts;
    ts.reserve(stored.size());
    json mismatch_ids = json::array();
    for (StoredTrajectory& st : stored) {
        std::optional<RewardBreakdown> before = st.trajectory.reward;
        rescore(st, mode);
        if (before && !(*before == *st.trajectory.reward)) {
            ++mismatches;
            mismatch_ids.push_back(st.trajectory.question.id);
        }
        ts.push_back(st.trajectory);
    }

    if (!out.empty()) {
        SerializeOptions sopts;
        sopts.reproducible = reproducible;
        std::ostringstream os;
        for (const StoredTrajectory& st : stored)
            os << trajectory_record(st.trajectory, st.config, sopts).dump() << "\n";
        write_text(out, os.str());
    }

    json report = {{"count", stored.size()},
                   {"mismatches", mismatches},
                   {"mismatch_ids", mismatch_ids},
                   {"aggregate", aggregate(ts)}};
    write_text(report_path, report.dump(2) + "\n");
    return mismatches > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"search rollout runtime and benchmark harness"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config_path, "JSON config file");
    app.add_option("--max-turns", o.max_turns, "action budget per question");
    app.add_option("--n-expansions", o.n_expansions, "query variants per search");
    app.add_option("--top-k", o.top_k, "passages per query");
    app.add_option("--response-token-limit", o.response_token_limit, "policy generation cap");
    app.add_option("--retrieved-token-limit", o.retrieved_token_limit, "injected summary cap");
    app.add_option("--lambda-format", o.lambda_format, "format reward weight");
    app.add_option("--max-bundle-size", o.max_bundle_size, "hard cap on queries per search");
    app.add_option("--squeezer-input-token-limit", o.squeezer_input_token_limit,
                   "context budget for the squeezer prompt");
    app.add_option("--policy-endpoint", o.policy_endpoint, "OpenAI-compatible policy server");
    app.add_option("--squeezer-endpoint", o.squeezer_endpoint,
                   "OpenAI-compatible squeezer server");
    app.add_option("--classifier-endpoint", o.classifier_endpoint,
                   "OpenAI-compatible classifier server");
    app.add_option("--retrieval-endpoint", o.retrieval_endpoint, "HTTP retrieval service");
    app.add_option("--policy-model", o.policy_model, "policy model name");
    app.add_option("--squeezer-model", o.squeezer_model, "squeezer model name");
    app.add_option("--classifier-model", o.classifier_model, "classifier model name");
    app.add_option("--api-key", o.api_key, "bearer token for the endpoints");
    app.add_option("--seed", o.seed, "sampling seed forwarded to backends");
    app.add_option("--parallelism", o.parallelism, "concurrent rollouts");

    // index build
    auto* index_cmd = app.add_subcommand("index", "corpus index maintenance");
    index_cmd->require_subcommand(1);
    auto* build_cmd = index_cmd->add_subcommand("build", "build a BM25 index from JSONL");
    std::string corpus_path, index_out;
    bool skip_malformed = false;
    build_cmd->add_option("--corpus", corpus_path, "corpus JSONL with doc_id/title/text")
        ->required();
    build_cmd->add_option("--out", index_out, "index file to write")->required();
    build_cmd->add_flag("--skip-malformed", skip_malformed,
                        "skip malformed corpus lines instead of failing");

    // run
    auto* run_cmd = app.add_subcommand("run", "roll out a dataset and write trajectories");
    std::string run_dataset, run_index, run_out, run_manifest, run_policy_script,
        run_squeezer_script;
    std::string run_em_mode = "normalized";
    bool run_reproducible = false;
    run_cmd->add_option("--dataset", run_dataset, "questions JSONL")->required();
    run_cmd->add_option("--index", run_index, "BM25 index file");
    run_cmd->add_option("--out", run_out, "trajectory JSONL (default stdout)");
    run_cmd->add_option("--manifest", run_manifest, "run manifest JSON");
    run_cmd->add_option("--policy-script", run_policy_script, "scripted policy JSON");
    run_cmd->add_option("--squeezer-script", run_squeezer_script, "scripted squeezer JSON");
    run_cmd->add_flag("--reproducible", run_reproducible, "zero timings for byte-stable output");
    run_cmd->add_option("--em-mode", run_em_mode, "answer match mode: normalized|raw");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "aggregate stored trajectories into a report");
    std::string eval_trajectories, eval_report, eval_csv;
    std::string eval_em_mode = "normalized";
    eval_cmd->add_option("--trajectories", eval_trajectories, "trajectory JSONL")->required();
    eval_cmd->add_option("--report", eval_report, "report JSON (default stdout)");
    eval_cmd->add_option("--csv", eval_csv, "per-question CSV");
    eval_cmd->add_option("--em-mode", eval_em_mode,
                         "match mode for unscored records: normalized|raw");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "run one evaluation per axis value");
    std::string sweep_dataset, sweep_index, sweep_axis = "n_expansions", sweep_csv_path,
                               sweep_report, sweep_policy_script, sweep_squeezer_script;
    std::string sweep_em_mode = "normalized";
    std::vector<int> sweep_values;
    sweep_cmd->add_option("--dataset", sweep_dataset, "questions JSONL")->required();
    sweep_cmd->add_option("--index", sweep_index, "BM25 index file");
    sweep_cmd->add_option("--axis", sweep_axis, "n_expansions|top_k");
    sweep_cmd->add_option("--values", sweep_values, "axis values, strictly increasing")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--out-csv", sweep_csv_path, "plot-data CSV");
    sweep_cmd->add_option("--report", sweep_report, "sweep report JSON (default stdout)");
    sweep_cmd->add_option("--policy-script", sweep_policy_script, "scripted policy JSON");
    sweep_cmd->add_option("--squeezer-script", sweep_squeezer_script, "scripted squeezer JSON");
    sweep_cmd->add_option("--em-mode", sweep_em_mode, "answer match mode: normalized|raw");

    // classify-expansions
    auto* cls_cmd =
        app.add_subcommand("classify-expansions", "label query expansions as syntax or semantic");
    std::string cls_trajectories, cls_out, cls_script;
    cls_cmd->add_option("--trajectories", cls_trajectories, "trajectory JSONL")->required();
    cls_cmd->add_option("--out", cls_out, "labels JSON (default stdout)");
    cls_cmd->add_option("--classifier-script", cls_script, "scripted classifier JSON");

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "re-score stored trajectories");
    std::string replay_trajectories, replay_out, replay_report;
    std::string replay_em_mode = "normalized";
    bool replay_reproducible = false;
    replay_cmd->add_option("--trajectories", replay_trajectories, "trajectory JSONL")->required();
    replay_cmd->add_option("--out", replay_out, "rescored trajectory JSONL");
    replay_cmd->add_option("--report", replay_report, "replay report JSON (default stdout)");
    replay_cmd->add_flag("--reproducible", replay_reproducible,
                         "zero timings for byte-stable output");
    replay_cmd->add_option("--em-mode", replay_em_mode, "answer match mode: normalized|raw");

    int exit_code = 0;
    build_cmd->callback(
        [&] { exit_code = cmd_index_build(corpus_path, index_out, skip_malformed); });
    run_cmd->callback([&] {
        exit_code = cmd_run(o, run_dataset, run_index, run_out, run_manifest, run_policy_script,
                            run_squeezer_script, run_reproducible, run_em_mode);
    });
    eval_cmd->callback(
        [&] { exit_code = cmd_eval(eval_trajectories, eval_report, eval_csv, eval_em_mode); });
    sweep_cmd->callback([&] {
        exit_code = cmd_sweep(o, sweep_dataset, sweep_index, sweep_axis, sweep_values,
                              sweep_csv_path, sweep_report, sweep_policy_script,
                              sweep_squeezer_script, sweep_em_mode);
    });
    cls_cmd->callback(
        [&] { exit_code = cmd_classify(o, cls_trajectories, cls_out, cls_script); });
    replay_cmd->callback([&] {
        exit_code = cmd_replay(replay_trajectories, replay_out, replay_report,
                               replay_reproducible, replay_em_mode);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // help/version exit clean, parse errors are config errors
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
