#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixguide/harness.hpp"

using namespace mixguide;
namespace fs = std::filesystem;

namespace {

Scenario open_room() {
    return scenario_from_json(Json::parse(R"({
        "name": "room", "variant": "PointMaze2D",
        "basis": {"m": 5, "n": 2, "h": 0.2}, "phases": 10,
        "start": [1, 5], "targets": [[9, 5]],
        "workspace": {"lower": [0, 0], "upper": [10, 10]},
        "completion_radius": 0.5,
        "geometry": {"bounds": {"lower": [0, 0], "upper": [10, 10]},
                     "walls": [{"lower": [4.5, 8.5], "upper": [5.5, 10]}]}
    })"));
}

GuideMixture one_lane(const Scenario& s) {
    GuideMixture mix;
    mix.basis = s.basis;
    // Narrower lanes form phase wells the scripted operator cannot leave.
    mix.components = {ProMP{s.basis, straight_line_weights(s, s.start, s.targets[0]), Vector::Constant(10, 0.3)}};
    mix.log_weights = Vector::Zero(1);
    return attach_freelance(mix, scenario_freelance(s), 0.1);
}

EpisodeOptions options(double timeout = 40.0) {
    EpisodeOptions o;
    o.timeout_s = timeout;
    o.session = preset("maze2d");
    return o;
}

}  // namespace

TEST(Quartiles, OddCount) {
    const Quartiles q = quartiles({5, 3, 1, 4, 2});
    EXPECT_DOUBLE_EQ(q.min, 1);
    EXPECT_DOUBLE_EQ(q.q1, 2);
    EXPECT_DOUBLE_EQ(q.median, 3);
    EXPECT_DOUBLE_EQ(q.q3, 4);
    EXPECT_DOUBLE_EQ(q.max, 5);
}

TEST(Quartiles, EvenCountInterpolates) {
    const Quartiles q = quartiles({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(q.q1, 1.75);
    EXPECT_DOUBLE_EQ(q.median, 2.5);
    EXPECT_DOUBLE_EQ(q.q3, 3.25);
}

TEST(Quartiles, SingleValueAndEmpty) {
    const Quartiles q = quartiles({7});
    EXPECT_DOUBLE_EQ(q.min, 7);
    EXPECT_DOUBLE_EQ(q.max, 7);
    EXPECT_DOUBLE_EQ(median({7}), 7);
    EXPECT_THROW(quartiles({}), std::invalid_argument);
}

TEST(Quartiles, InfinityCountsAsLargest) {
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_DOUBLE_EQ(median({1, 2, inf}), 2);
    EXPECT_EQ(median({1, inf, inf}), inf);
}

TEST(Modes, NamesRoundTrip) {
    for (Mode m : {Mode::Guided, Mode::GuidedNoReplan, Mode::Unguided}) EXPECT_EQ(mode_from_string(to_string(m)), m);
    EXPECT_THROW(mode_from_string("autopilot"), std::invalid_argument);
    EXPECT_EQ(operator_kind_from_string("wanderer"), OperatorScript::Kind::Wanderer);
}

TEST(BatchCsv, RoundTrip) {
    const std::vector<BatchRow> rows{{1, Mode::Guided, 0, 12.345, 1},
                                     {1, Mode::Unguided, 2, std::numeric_limits<double>::infinity(), 0}};
    std::stringstream buf;
    write_batch_csv(rows, buf);
    EXPECT_EQ(buf.str(), "seed,mode,collisions,time,replans\n1,guided,0,12.35,1\n1,unguided,2,inf,0\n");
    const auto back = read_batch_csv(buf);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].collisions, 2);
    EXPECT_EQ(back[1].completion_time, std::numeric_limits<double>::infinity());
    EXPECT_DOUBLE_EQ(back[0].completion_time, 12.35);
}

TEST(Episode, GuidedFollowerFinishesCleanly) {
    const Scenario s = open_room();
    const EpisodeMetrics m = run_episode(s, one_lane(s), OperatorScript{}, Mode::Guided, 3, options());
    EXPECT_TRUE(m.completed());
    EXPECT_EQ(m.collisions, 0);
    EXPECT_LT(m.completion_time, 40.0);
}

TEST(Episode, SameSeedSameEpisode) {
    const Scenario s = open_room();
    EpisodeOptions o = options();
    o.record_path = true;
    const auto a = run_episode(s, one_lane(s), OperatorScript{}, Mode::Unguided, 5, o);
    const auto b = run_episode(s, one_lane(s), OperatorScript{}, Mode::Unguided, 5, o);
    const auto c = run_episode(s, one_lane(s), OperatorScript{}, Mode::Unguided, 6, o);
    ASSERT_EQ(a.path.size(), b.path.size());
    for (size_t i = 0; i < a.path.size(); i += 97) EXPECT_EQ(a.path[i], b.path[i]);
    EXPECT_EQ(a.completion_time, b.completion_time);
    EXPECT_NE(a.path[200], c.path[200]);
}

TEST(Episode, UnguidedPassiveMassStaysPut) {
    const Scenario s = open_room();
    OperatorScript op;
    op.kind = OperatorScript::Kind::PassiveMass;
    EpisodeOptions o = options(2.0);
    o.record_path = true;
    const EpisodeMetrics m = run_episode(s, one_lane(s), op, Mode::Unguided, 1, o);
    EXPECT_FALSE(m.completed());
    EXPECT_EQ(m.path.back(), s.start);
}

TEST(Episode, GuidedPassiveMassIsCarried) {
    const Scenario s = open_room();
    OperatorScript op;
    op.kind = OperatorScript::Kind::PassiveMass;
    op.initial_pose = (Vector(2) << 1.0, 6.0).finished();
    EpisodeOptions o = options(3.0);
    o.record_path = true;
    const EpisodeMetrics m = run_episode(s, one_lane(s), op, Mode::Guided, 1, o);
    // The field pulls the mass back onto the lane.
    EXPECT_LT(std::abs(m.path.back()[1] - 5.0), 0.5);
}

TEST(Episode, WandererIsBoundedByTimeout) {
    const Scenario s = open_room();
    OperatorScript op;
    op.kind = OperatorScript::Kind::Wanderer;
    EpisodeOptions o = options(5.0);
    o.record_path = true;
    const EpisodeMetrics m = run_episode(s, one_lane(s), op, Mode::Unguided, 2, o);
    EXPECT_LE(m.path.size(), 501u);
    EXPECT_NE(m.path.back(), s.start);
}

TEST(Episode, ScriptValidation) {
    OperatorScript op;
    op.speed = -1.0;
    EXPECT_THROW(op.validate(), std::invalid_argument);
}

TEST(Batch, RowsAndSummary) {
    const Scenario s = open_room();
    const auto rows =
        batch_compare(s, one_lane(s), OperatorScript{}, {Mode::Guided, Mode::Unguided}, 3, options(30.0));
    ASSERT_EQ(rows.size(), 6u);
    EXPECT_EQ(rows[0].seed, 1u);
    EXPECT_EQ(rows[2].seed, 3u);
    EXPECT_EQ(rows[3].mode, Mode::Unguided);
    const auto summary = summarize(rows);
    ASSERT_EQ(summary.size(), 2u);
    EXPECT_EQ(summary[0].count, 3);

    const fs::path dir = fs::temp_directory_path() / "mixguide_test_plots";
    fs::remove_all(dir);
    const auto written = emit_plots(rows, dir.string());
    EXPECT_EQ(written.size(), 2u);
    std::ifstream csv(dir / "summary.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "mode,metric,count,min,q1,median,q3,max");
    std::ifstream svg(dir / "boxplot.svg");
    std::string first;
    std::getline(svg, first);
    EXPECT_NE(first.find("<svg"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Replay, EllipsesFromFrameLog) {
    const Scenario s = open_room();
    std::stringstream log;
    EpisodeOptions o = options(1.0);
    o.frame_log = &log;
    run_episode(s, one_lane(s), OperatorScript{}, Mode::Guided, 1, o);
    const auto frames = read_frame_log(log);
    EXPECT_EQ(frames.size(), 100u);
    std::stringstream out;
    // Guides go out once, with the first frame: one chain of ten phases.
    EXPECT_EQ(export_ellipses(frames, out), 10);
    std::string header;
    std::getline(out, header);
    EXPECT_EQ(header, "tick,version,plan_id,phase,weight,center,axes");
}
