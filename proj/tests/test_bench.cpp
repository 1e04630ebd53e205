#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ragloop/bench.hpp"
#include "test_support.hpp"

using namespace ragloop;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("datasets load from jsonl with schema checks", "[bench]") {
    auto path = temp_file("ragloop_dataset.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"q1","question":"who?","golden_answers":["x","y"],"dataset":"hotpotqa"})"
            << "\n";
        out << "\n";
        out << R"({"id":"q2","question":"when?","golden_answers":["1516"]})" << "\n";
    }
    std::vector<Question> qs = load_dataset(path.string());
    REQUIRE(qs.size() == 2);
    CHECK(qs[0].id == "q1");
    CHECK(qs[0].text == "who?");
    CHECK(qs[0].golden_answers == std::vector<std::string>{"x", "y"});
    CHECK(qs[0].dataset == "hotpotqa");
    CHECK(qs[1].dataset == "default");  // missing field falls back

    // duplicate ids load but warn
    {
        std::ofstream out(path);
        out << R"({"id":"q1","question":"a?","golden_answers":["1"]})" << "\n";
        out << R"({"id":"q1","question":"b?","golden_answers":["2"]})" << "\n";
    }
    std::ostringstream warnings;
    qs = load_dataset(path.string(), &warnings);
    CHECK(qs.size() == 2);
    CHECK(warnings.str().find("duplicate question id 'q1' at line 2") != std::string::npos);

    auto expect_schema_error = [&](const std::string& line, std::size_t want_line_no) {
        std::ofstream out(path);
        out << R"({"id":"ok","question":"q","golden_answers":["a"]})" << "\n";
        if (want_line_no == 2) out << line << "\n";
        out.close();
        try {
            load_dataset(path.string());
            FAIL("expected SchemaError for: " << line);
        } catch (const SchemaError& e) {
            CHECK(e.line_no() == want_line_no);
        }
    };
    expect_schema_error("{broken", 2);
    expect_schema_error(R"({"question":"q","golden_answers":["a"]})", 2);          // no id
    expect_schema_error(R"({"id":"x","golden_answers":["a"]})", 2);                // no question
    expect_schema_error(R"({"id":"x","question":"q"})", 2);                        // no golds
    expect_schema_error(R"({"id":"x","question":"q","golden_answers":[]})", 2);    // empty golds
    expect_schema_error(R"({"id":"x","question":"q","golden_answers":[1]})", 2);   // non-string
    expect_schema_error(R"({"id":"","question":"q","golden_answers":["a"]})", 2);  // blank id

    CHECK_THROWS_AS(load_dataset("/nonexistent/data.jsonl"), IoError);
}

TEST_CASE("score_trajectories attaches rewards and survives bad inputs", "[bench]") {
    RolloutConfig cfg;
    Trajectory good;
    good.question = Question{"g", "?", {"42"}, "unit"};
    good.segments = {Segment{SegmentKind::Think, "t", 0}, Segment{SegmentKind::Answer, "42", 0}};
    good.final_answer = "42";
    good.status = TrajectoryStatus::Answered;
    good.turn_count = 1;

    Trajectory goldless;
    goldless.question = Question{"b", "?", {}, "unit"};
    goldless.status = TrajectoryStatus::Failed;
    goldless.failure_reason = "backend died";

    std::vector<Trajectory> ts = {good, goldless};
    score_trajectories(ts, cfg);

    REQUIRE(ts[0].reward.has_value());
    CHECK(ts[0].reward->total == 1.2);
    REQUIRE(ts[1].reward.has_value());
    CHECK(ts[1].reward->em == 0.0);
    CHECK(ts[1].reward->total == 0.0);
    CHECK(ts[1].reward->lambda == cfg.lambda_format);
    CHECK(ts[1].failure_reason == "backend died; scoring failed: gold set is empty");

    // scored batches aggregate without complaint
    EvalReport rep = aggregate(ts);
    CHECK(rep.overall.count == 2);
}

TEST_CASE("sweep specs are validated", "[bench]") {
    SweepSpec spec;
    spec.values = {};
    CHECK_THROWS_AS(validate_sweep(spec), ConfigError);
    spec.values = {2, 2};
    CHECK_THROWS_AS(validate_sweep(spec), ConfigError);
    spec.values = {3, 1};
    CHECK_THROWS_AS(validate_sweep(spec), ConfigError);
    spec.values = {0, 1};
    CHECK_THROWS_AS(validate_sweep(spec), ConfigError);
    spec.values = {1, 2, 3};
    spec.base.max_turns = 0;
    CHECK_THROWS_AS(validate_sweep(spec), ConfigError);
    spec.base = RolloutConfig{};
    CHECK_NOTHROW(validate_sweep(spec));
}

namespace {

struct SweepFixture {
    support::SweepWorld world = support::make_sweep_world(6);
    Bm25Index index;
    FunctionGateway policy{support::sweep_oracle_policy()};
    FunctionGateway squeezer{support::echo_context_squeezer()};
    RolloutContext ctx;

    SweepFixture() {
        index.build(world.corpus);
        ctx.policy = &policy;
        ctx.retriever = &index;
        ctx.squeezer = &squeezer;
        ctx.policy_model = "rule-policy";
        ctx.squeezer_model = "echo-squeezer";
    }
};

}  // namespace

TEST_CASE("more query expansions surface the missing facet", "[bench]") {
    SweepFixture fx;
    SweepSpec spec;
    spec.axis = SweepSpec::Axis::NExpansions;
    spec.values = {1, 3};
    spec.base.top_k = 1;  // one passage per query: coverage must come from variants

    SweepResult result = run_sweep(spec, fx.world.questions, fx.ctx);
    REQUIRE(result.cells.size() == 2);
    const SweepCell& n1 = result.cells[0];
    const SweepCell& n3 = result.cells[1];
    CHECK(n1.error.empty());
    CHECK(n3.error.empty());
    CHECK(n1.config.n_expansions == 1);
    CHECK(n3.config.n_expansions == 3);

    // with one variant only the alpha facet is retrieved, so answers are
    // incomplete; with three the beta facet arrives and answers are exact
    REQUIRE(n1.report.overall.em_mean.has_value());
    REQUIRE(n3.report.overall.em_mean.has_value());
    CHECK(*n1.report.overall.em_mean == 0.0);
    CHECK(*n3.report.overall.em_mean == 1.0);
    CHECK(*n3.report.overall.em_mean > *n1.report.overall.em_mean);
    CHECK(n1.report.overall.count == 6);
    CHECK(n1.trajectories.size() == 6);
    for (const Trajectory& t : n1.trajectories)
        CHECK(t.status == TrajectoryStatus::Answered);  // answered, just wrong

    std::string csv = sweep_csv(result);
    CHECK(csv ==
          "axis_value,overall_em,facets-even_em,facets-odd_em\n"
          "1,0,0,0\n"
          "3,1,1,1\n");

    json j = sweep_report_json(result);
    CHECK(j.at("axis") == "n_expansions");
    REQUIRE(j.at("cells").size() == 2);
    CHECK(j.at("cells")[0].at("error").is_null());
    CHECK(j.at("cells")[0].at("config").at("n_expansions") == 1);
    CHECK(j.at("cells")[1].at("report").at("overall").at("em_mean") == 1.0);
}

TEST_CASE("sweep cells are independent of each other", "[bench]") {
    SweepFixture fx;
    // break only the n=1 cell: its prompts ask for exactly one variant
    FunctionGateway flaky([](const GenerationRequest& req) -> std::string {
        if (req.prompt.find("generate 1 ") != std::string::npos)
            throw TransportError("outage during the first cell");
        return support::sweep_oracle_policy()(req);
    });
    fx.ctx.policy = &flaky;

    SweepSpec spec;
    spec.values = {1, 3};
    spec.base.top_k = 1;
    SweepResult result = run_sweep(spec, fx.world.questions, fx.ctx);
    REQUIRE(result.cells.size() == 2);
    CHECK(result.cells[0].manifest.failed == 6);
    CHECK(*result.cells[0].report.overall.em_mean == 0.0);
    CHECK(result.cells[1].manifest.failed == 0);
    CHECK(*result.cells[1].report.overall.em_mean == 1.0);
}

TEST_CASE("top_k axis plugs into the same sweep machinery", "[bench]") {
    SweepFixture fx;
    SweepSpec spec;
    spec.axis = SweepSpec::Axis::TopK;
    spec.values = {1, 2};
    spec.base.n_expansions = 2;

    SweepResult result = run_sweep(spec, fx.world.questions, fx.ctx);
    REQUIRE(result.cells.size() == 2);
    CHECK(result.cells[0].config.top_k == 1);
    CHECK(result.cells[0].config.n_expansions == 2);
    CHECK(result.cells[1].config.top_k == 2);
    // two variants already cover both facets at any depth
    CHECK(*result.cells[0].report.overall.em_mean == 1.0);
    CHECK(*result.cells[1].report.overall.em_mean == 1.0);
    CHECK(sweep_report_json(result).at("axis") == "top_k");
}

TEST_CASE("format_mean renders compactly and empty for absent values", "[bench]") {
    CHECK(format_mean(std::nullopt) == "");
    CHECK(format_mean(0.5) == "0.5");
    CHECK(format_mean(1.0) == "1");
    CHECK(format_mean(2.0 / 3.0) == "0.666667");
}

TEST_CASE("expansion pairs come from multi-query search blocks", "[bench]") {
    Trajectory t1;
    t1.question.id = "t1";
    t1.segments = {
        Segment{SegmentKind::Think, "r", 0},
        Segment{SegmentKind::Search, "a ## b ## c", 0},
        Segment{SegmentKind::Information, "i", 0},
        Segment{SegmentKind::Search, "solo", 1},  // nothing to classify here
        Segment{SegmentKind::Answer, "x", 2},
    };
    Trajectory t2;
    t2.question.id = "t2";
    t2.segments = {Segment{SegmentKind::Search, "x ## y", 0}};

    std::vector<ExpansionPair> pairs = extract_expansion_pairs({t1, t2});
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].question_id == "t1");
    CHECK(pairs[0].base == "a");
    CHECK(pairs[0].expanded == "b");
    CHECK(pairs[1].expanded == "c");
    CHECK(pairs[1].turn == 0);
    CHECK(pairs[2].question_id == "t2");
    CHECK(pairs[2].base == "x");
    CHECK(pairs[2].expanded == "y");

    CHECK(extract_expansion_pairs({}).empty());
}

TEST_CASE("classifier prompt embeds the pair and the label contract holds", "[bench]") {
    std::string p = build_expansion_prompt("Alexander's father", "father of Alexander");
    CHECK(p.find("Base Query: Alexander's father\n") != std::string::npos);
    CHECK(p.find("Expanded Query: father of Alexander\n") != std::string::npos);
    CHECK(p.find("Respond with ONLY one word: 'syntax' or 'semantic'") != std::string::npos);
    CHECK(p.find("Syntax Expansion") != std::string::npos);
    CHECK(p.find("Semantic Expansion") != std::string::npos);

    CHECK(parse_expansion_label("syntax") == ExpansionType::Syntax);
    CHECK(parse_expansion_label("  Syntax \n") == ExpansionType::Syntax);
    CHECK(parse_expansion_label("SEMANTIC") == ExpansionType::Semantic);
    CHECK(!parse_expansion_label("semantics").has_value());
    CHECK(!parse_expansion_label("syntax.").has_value());
    CHECK(!parse_expansion_label("it is a syntax expansion").has_value());
    CHECK(!parse_expansion_label("").has_value());
}

TEST_CASE("classification tallies labels and ratios sum to one hundred", "[bench]") {
    std::vector<ExpansionPair> pairs = {
        {"q1", 0, "base", "first"},
        {"q1", 0, "base", "second"},
        {"q2", 1, "other", "third"},
    };
    ScriptedGateway gw({"syntax", "semantic", "gibberish"});
    ClassificationResult r = classify_expansions(pairs, gw, "classifier-model");

    REQUIRE(r.labels.size() == 3);
    CHECK(r.labels[0].label == ExpansionType::Syntax);
    CHECK(r.labels[1].label == ExpansionType::Semantic);
    CHECK(!r.labels[2].label.has_value());
    CHECK(r.labels[2].raw_response == "gibberish");
    CHECK(r.summary.syntax == 1);
    CHECK(r.summary.semantic == 1);
    CHECK(r.summary.unparseable == 1);
    CHECK(r.summary.syntax_pct == 50.0);
    CHECK(r.summary.semantic_pct == 50.0);
    CHECK(r.summary.syntax_pct + r.summary.semantic_pct == 100.0);
    CHECK(r.classifier_model == "classifier-model");

    // each pair got its own rendered prompt, in order
    std::vector<std::string> prompts = gw.prompts();
    REQUIRE(prompts.size() == 3);
    CHECK(prompts[0] == build_expansion_prompt("base", "first"));
    CHECK(prompts[2] == build_expansion_prompt("other", "third"));

    json j = classification_json(r);
    CHECK(j.at("labels").size() == 3);
    CHECK(j.at("labels")[0].at("label") == "syntax");
    CHECK(j.at("labels")[2].at("label").is_null());
    CHECK(j.at("summary").at("syntax_pct") == 50.0);

    // all-unparseable input leaves the ratios at zero rather than dividing by zero
    ScriptedGateway bad({"??", "??"});
    ClassificationResult r2 =
        classify_expansions({{"q", 0, "b", "e1"}, {"q", 0, "b", "e2"}}, bad);
    CHECK(r2.summary.unparseable == 2);
    CHECK(r2.summary.syntax_pct == 0.0);
    CHECK(r2.summary.semantic_pct == 0.0);

    // classifier requests are deterministic and tiny
    GenerationRequest seen;
    FunctionGateway probe([&](const GenerationRequest& req) {
        seen = req;
        return "syntax";
    });
    classify_expansions({{"q", 0, "b", "e"}}, probe);
    CHECK(seen.temperature == 0.0);
    CHECK(seen.max_tokens == 8);
}

TEST_CASE("the rule classifier separates rewordings from meaning shifts", "[bench]") {
    FunctionGateway rules(support::rule_expansion_classifier());
    std::vector<ExpansionPair> pairs = {
        {"q", 0, "Alexander's father", "father of Alexander"},   // reordering only
        {"q", 0, "Alexander's father", "Alexander's family"},    // meaning moved
        {"q", 0, "where did he die", "did he die where"},        // reordering only
        {"q", 0, "death place", "burial location"},              // meaning moved
    };
    ClassificationResult r = classify_expansions(pairs, rules);
    REQUIRE(r.labels.size() == 4);
    CHECK(r.labels[0].label == ExpansionType::Syntax);
    CHECK(r.labels[1].label == ExpansionType::Semantic);
    CHECK(r.labels[2].label == ExpansionType::Syntax);
    CHECK(r.labels[3].label == ExpansionType::Semantic);
    CHECK(r.summary.syntax_pct + r.summary.semantic_pct == 100.0);
}

TEST_CASE("ablation drops only the targeted expansion type", "[bench]") {
    QueryBundle bundle;
    bundle.queries = {"base q", "syntactic variant", "semantic variant", "unlabeled variant"};
    bundle.source_turn = 2;

    std::vector<ExpansionLabel> labels(3);
    labels[0].pair = {"q", 2, "base q", "syntactic variant"};
    labels[0].label = ExpansionType::Syntax;
    labels[1].pair = {"q", 2, "base q", "semantic variant"};
    labels[1].label = ExpansionType::Semantic;
    labels[2].pair = {"q", 2, "base q", "unlabeled variant"};
    labels[2].label = std::nullopt;

    QueryBundle no_syntax = ablate_expansions(bundle, labels, ExpansionType::Syntax);
    CHECK(no_syntax.queries ==
          std::vector<std::string>{"base q", "semantic variant", "unlabeled variant"});
    CHECK(no_syntax.source_turn == 2);

    QueryBundle no_semantic = ablate_expansions(bundle, labels, ExpansionType::Semantic);
    CHECK(no_semantic.queries ==
          std::vector<std::string>{"base q", "syntactic variant", "unlabeled variant"});

    // the base query survives even when a label matches its text
    QueryBundle base_only;
    base_only.queries = {"shared text", "shared text"};
    std::vector<ExpansionLabel> shared(1);
    shared[0].pair = {"q", 0, "shared text", "shared text"};
    shared[0].label = ExpansionType::Syntax;
    QueryBundle kept = ablate_expansions(base_only, shared, ExpansionType::Syntax);
    CHECK(kept.queries == std::vector<std::string>{"shared text"});
}
