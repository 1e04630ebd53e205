#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "ragloop/reward.hpp"

using namespace ragloop;

namespace {

Trajectory make_traj(TrajectoryStatus status, std::vector<Segment> segments,
                     std::optional<std::string> answer,
                     std::vector<std::string> golds = {"2014"}) {
    Trajectory t;
    t.question = Question{"q1", "when?", std::move(golds), "hotpot"};
    t.segments = std::move(segments);
    t.final_answer = std::move(answer);
    t.status = status;
    int max_turn = 0;
    for (const Segment& s : t.segments) max_turn = std::max(max_turn, s.turn);
    t.turn_count = max_turn;
    return t;
}

}  // namespace

TEST_CASE("answer normalization fixture", "[reward]") {
    // raw -> normalized; covers case folding, punctuation deletion, article
    // removal and whitespace collapsing, and pins their relative order.
    const std::pair<const char*, const char*> cases[] = {
        {"The Beatles", "beatles"},
        {"a  dog", "dog"},
        {"An Apple", "apple"},
        {"  hello   world  ", "hello world"},
        {"Hello, World!", "hello world"},
        {"U.S.A.", "usa"},
        {"a.b", "ab"},            // punctuation deleted before article check
        {"the-end", "theend"},    // ditto: "theend" is not an article
        {"a) first", "first"},    // ditto: ")" deleted, then "a" dropped
        {"THE THE", ""},
        {"a an the", ""},
        {"A aN The", ""},
        {"", ""},
        {"...!!!", ""},
        {"42", "42"},
        {"1,000", "1000"},
        {"O'Brien", "obrien"},
        {"don't", "dont"},
        {"JOHN\tSMITH", "john smith"},
        {"line1\nline2", "line1 line2"},
        {"theater", "theater"},   // article match is per token, not prefix
        {"another an", "another"},
        {"Winner (band)", "winner band"},
        {"2014 S/S", "2014 ss"},
        {"YG Entertainment", "yg entertainment"},
        {"12 June 1516", "12 june 1516"},
    };
    for (const auto& [raw, want] : cases) {
        INFO("raw: [" << raw << "]");
        CHECK(normalize_answer(raw) == want);
    }
    // non-ASCII bytes pass through untouched
    CHECK(normalize_answer("Caf\xc3\xa9") == "caf\xc3\xa9");
    // idempotent
    for (const auto& [raw, want] : cases) CHECK(normalize_answer(want) == want);
}

TEST_CASE("exact match scores 1 against any gold answer", "[reward]") {
    std::vector<std::string> golds = {"completely wrong", "YG Entertainment!"};
    CHECK(em_reward("yg entertainment", golds) == 1);
    CHECK(em_reward("  YG   ENTERTAINMENT  ", golds) == 1);
    CHECK(em_reward("YG", golds) == 0);
    CHECK(em_reward("", golds) == 0);

    // raw mode is byte equality
    CHECK(em_reward("YG Entertainment!", golds, EmMode::Raw) == 1);
    CHECK(em_reward("yg entertainment", golds, EmMode::Raw) == 0);

    CHECK_THROWS_AS(em_reward("x", {}), EmptyGoldSet);

    // degenerate but well-defined: both sides normalize to empty
    CHECK(em_reward("The", {"a"}) == 1);
}

TEST_CASE("format reward demands answer, clean parses and think-before-search", "[reward]") {
    auto th = [](int turn) { return Segment{SegmentKind::Think, "reasoning", turn}; };
    auto se = [](int turn) { return Segment{SegmentKind::Search, "q1 ## q2", turn}; };
    auto in = [](int turn) { return Segment{SegmentKind::Information, "facts", turn}; };
    auto an = [](int turn) { return Segment{SegmentKind::Answer, "2014", turn}; };

    // the clean two-turn flow
    CHECK(format_reward(make_traj(TrajectoryStatus::Answered,
                                  {th(1), se(1), in(1), th(2), an(2)}, "2014")) == 1);
    // no search at all is still fine
    CHECK(format_reward(make_traj(TrajectoryStatus::Answered, {th(1), an(1)}, "2014")) == 1);
    // search with no think in its turn
    CHECK(format_reward(make_traj(TrajectoryStatus::Answered,
                                  {se(1), in(1), th(2), an(2)}, "2014")) == 0);
    // think exists but only in an earlier turn
    CHECK(format_reward(make_traj(TrajectoryStatus::Answered,
                                  {th(1), se(1), in(1), se(2), in(2), th(3), an(3)},
                                  "2014")) == 0);
    // think after the search within the same turn does not count
    CHECK(format_reward(make_traj(TrajectoryStatus::Answered,
                                  {se(1), th(1), in(1), th(2), an(2)}, "2014")) == 0);
    // a rethink notice anywhere voids the format reward
    CHECK(format_reward(make_traj(
              TrajectoryStatus::Answered,
              {th(1), Segment{SegmentKind::RethinkNotice, std::string(kRethinkNotice), 1}, th(2),
               an(2)},
              "2014")) == 0);
    // non-answered trajectories never earn it
    CHECK(format_reward(make_traj(TrajectoryStatus::Exhausted, {th(1), se(1), in(1)},
                                  std::nullopt)) == 0);
    CHECK(format_reward(make_traj(TrajectoryStatus::Failed, {th(1)}, std::nullopt)) == 0);
}

TEST_CASE("total reward is em plus lambda times format", "[reward]") {
    RolloutConfig cfg;  // lambda_format = 0.2
    auto th = [](int turn) { return Segment{SegmentKind::Think, "r", turn}; };
    auto an = [](int turn) { return Segment{SegmentKind::Answer, "2014", turn}; };

    Trajectory good = make_traj(TrajectoryStatus::Answered, {th(1), an(1)}, "2014");
    RewardBreakdown r = total_reward(good, cfg);
    CHECK(r.em == 1.0);
    CHECK(r.format == 1.0);
    CHECK(r.lambda == 0.2);
    CHECK(r.total == 1.2);  // 1.0 + 0.2 rounds to the double literal 1.2

    Trajectory wrong = make_traj(TrajectoryStatus::Answered, {th(1), an(1)}, "1999");
    r = total_reward(wrong, cfg);
    CHECK(r.em == 0.0);
    CHECK(r.total == 0.2);

    Trajectory sloppy = make_traj(TrajectoryStatus::Answered,
                                  {Segment{SegmentKind::Search, "q", 1}, th(1), an(1)}, "2014");
    r = total_reward(sloppy, cfg);
    CHECK(r.em == 1.0);
    CHECK(r.format == 0.0);
    CHECK(r.total == 1.0);

    Trajectory failed = make_traj(TrajectoryStatus::Failed, {th(1)}, std::nullopt);
    r = total_reward(failed, cfg);
    CHECK(r.em == 0.0);
    CHECK(r.format == 0.0);
    CHECK(r.total == 0.0);

    // the identity holds bitwise for arbitrary lambda
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ld(0.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        RolloutConfig c2;
        c2.lambda_format = ld(rng);
        Trajectory t = (i % 2) ? good : sloppy;
        RewardBreakdown rb = total_reward(t, c2);
        CHECK(rb.total == rb.em + c2.lambda_format * rb.format);
    }
}

TEST_CASE("aggregate reports overall and per-dataset means", "[reward]") {
    auto th = [](int turn) { return Segment{SegmentKind::Think, "r", turn}; };
    auto an = [](int turn) { return Segment{SegmentKind::Answer, "x", turn}; };
    RolloutConfig cfg;

    auto scored = [&](const std::string& id, const std::string& dataset, const char* pred,
                      TrajectoryStatus status) {
        Trajectory t = make_traj(status, {th(1), an(1)},
                                 pred ? std::optional<std::string>(pred) : std::nullopt);
        t.question.id = id;
        t.question.dataset = dataset;
        t.reward = total_reward(t, cfg);
        return t;
    };

    std::vector<Trajectory> ts = {
        scored("a1", "hotpot", "2014", TrajectoryStatus::Answered),   // 1 / 1 / 1.2
        scored("a2", "hotpot", "1999", TrajectoryStatus::Answered),   // 0 / 1 / 0.2
        scored("b1", "musique", "2014", TrajectoryStatus::Answered),  // 1 / 1 / 1.2
        scored("b2", "musique", nullptr, TrajectoryStatus::Failed),   // 0 / 0 / 0
    };

    EvalReport rep = aggregate(ts);
    CHECK(rep.overall.count == 4);
    CHECK(rep.overall.failed == 1);
    CHECK(*rep.overall.em_mean == (1.0 + 0.0 + 1.0 + 0.0) / 4.0);
    CHECK(*rep.overall.format_mean == (1.0 + 1.0 + 1.0 + 0.0) / 4.0);
    CHECK(*rep.overall.total_mean == (1.2 + 0.2 + 1.2 + 0.0) / 4.0);
    REQUIRE(rep.per_dataset.count("hotpot") == 1);
    REQUIRE(rep.per_dataset.count("musique") == 1);
    CHECK(rep.per_dataset["hotpot"].count == 2);
    CHECK(*rep.per_dataset["hotpot"].em_mean == 0.5);
    CHECK(rep.per_dataset["musique"].failed == 1);
    CHECK(*rep.per_dataset["musique"].total_mean == (1.2 + 0.0) / 2.0);

    // empty input: zero counts, absent means
    EvalReport empty = aggregate({});
    CHECK(empty.overall.count == 0);
    CHECK(!empty.overall.em_mean.has_value());
    CHECK(empty.per_dataset.empty());

    // unscored trajectories are rejected loudly
    Trajectory raw = make_traj(TrajectoryStatus::Answered, {th(1), an(1)}, "2014");
    CHECK_THROWS_AS(aggregate({raw}), Error);

    json j = rep;
    CHECK(j.at("overall").at("count") == 4);
    CHECK(j.at("datasets").at("hotpot").at("em_mean").get<double>() == 0.5);
    json je = aggregate({});
    CHECK(je.at("overall").at("em_mean").is_null());
}

TEST_CASE("queries_used counts queries across all search segments", "[reward]") {
    Trajectory t = make_traj(
        TrajectoryStatus::Answered,
        {Segment{SegmentKind::Think, "r", 1}, Segment{SegmentKind::Search, "a ## b ## c", 1},
         Segment{SegmentKind::Information, "i", 1}, Segment{SegmentKind::Think, "r", 2},
         Segment{SegmentKind::Search, "d", 2}, Segment{SegmentKind::Information, "i", 2},
         Segment{SegmentKind::Think, "r", 3}, Segment{SegmentKind::Answer, "x", 3}},
        "x");
    CHECK(queries_used(t) == 4);
    Trajectory none = make_traj(TrajectoryStatus::Answered,
                                {Segment{SegmentKind::Think, "r", 1},
                                 Segment{SegmentKind::Answer, "x", 1}},
                                "x");
    CHECK(queries_used(none) == 0);
    // a search segment whose content is only separators yields no queries
    Trajectory degenerate = make_traj(TrajectoryStatus::Answered,
                                      {Segment{SegmentKind::Search, " ## ", 1},
                                       Segment{SegmentKind::Answer, "x", 1}},
                                      "x");
    CHECK(queries_used(degenerate) == 0);
}

TEST_CASE("per-question csv rows are escaped and ordered", "[reward]") {
    RolloutConfig cfg;
    Trajectory t = make_traj(TrajectoryStatus::Answered,
                             {Segment{SegmentKind::Think, "r", 1},
                              Segment{SegmentKind::Search, "a ## b", 1},
                              Segment{SegmentKind::Information, "i", 1},
                              Segment{SegmentKind::Think, "r", 2},
                              Segment{SegmentKind::Answer, "2014", 2}},
                             "2014");
    t.reward = total_reward(t, cfg);

    Trajectory tricky = make_traj(TrajectoryStatus::Answered,
                                  {Segment{SegmentKind::Think, "r", 1},
                                   Segment{SegmentKind::Answer, "x", 1}},
                                  "x", {"x"});
    tricky.question.id = "he said \"hi\", ok";
    tricky.question.dataset = "two,wiki";
    tricky.reward = total_reward(tricky, cfg);

    std::ostringstream os;
    write_per_question_csv(os, {t, tricky});
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "id,dataset,em,format,total,turns,n_queries_used");
    std::getline(is, line);
    CHECK(line == "q1,hotpot,1,1,1.2,2,2");
    std::getline(is, line);
    CHECK(line == "\"he said \"\"hi\"\", ok\",\"two,wiki\",1,1,1.2,1,0");
    CHECK(!std::getline(is, line));

    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("with,comma") == "\"with,comma\"");
    CHECK(csv_escape("with\nnewline") == "\"with\nnewline\"");
}
