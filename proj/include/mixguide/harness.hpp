#pragma once

// Scripted operators driving a unit point mass in pose space, with or
// without guidance, plus batch statistics and plot/CSV emission.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "mixguide/session.hpp"

namespace mixguide {

enum class Mode { Guided, GuidedNoReplan, Unguided };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct OperatorScript {
    enum class Kind { PlanFollower, Defector, PassiveMass, Wanderer };
    Kind kind = Kind::PlanFollower;

    int plan = -1;          // followed plan; -1 picks the heaviest
    double noise = 0.3;     // aim drift, units per sqrt(second)
    double drift_time = 20.0;  // drift relaxation time in seconds; 0 is a pure random walk
    double speed = 0.05;    // phase per second along the plan
    double defect_phase = 0.5;
    Vector alternate_target;
    double mass = 1.0;
    Vector initial_pose;    // empty: scenario start
    double walk_sigma = 0.1;
    double stiffness = 2.0;  // operator pull toward its aim point
    double damping = 2.0;

    void validate() const;
};

std::string to_string(OperatorScript::Kind k);
OperatorScript::Kind operator_kind_from_string(const std::string& s);

struct EpisodeOptions {
    double timeout_s = 60.0;
    SessionConfig session;
    std::ostream* frame_log = nullptr;
    bool record_path = false;
};

struct EpisodeMetrics {
    std::uint64_t seed = 0;
    Mode mode = Mode::Guided;
    int collisions = 0;
    double completion_time = std::numeric_limits<double>::infinity();
    int replans = 0;
    std::vector<Vector> path;

    [[nodiscard]] bool completed() const { return completion_time < std::numeric_limits<double>::infinity(); }
};

EpisodeMetrics run_episode(const Scenario& scenario, const GuideMixture& mixture, const OperatorScript& script,
                           Mode mode, std::uint64_t seed, const EpisodeOptions& opts);

struct BatchRow {
    std::uint64_t seed = 0;
    Mode mode = Mode::Guided;
    int collisions = 0;
    double completion_time = 0.0;
    int replans = 0;
};

/// Seeds run 1..n_seeds for every mode.
std::vector<BatchRow> batch_compare(const Scenario& scenario, const GuideMixture& mixture,
                                    const OperatorScript& script, const std::vector<Mode>& modes, int n_seeds,
                                    const EpisodeOptions& opts);

void write_batch_csv(const std::vector<BatchRow>& rows, std::ostream& out);
std::vector<BatchRow> read_batch_csv(std::istream& in);

struct Quartiles {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Linear-interpolation quartiles; throws on empty input.
Quartiles quartiles(std::vector<double> values);
double median(std::vector<double> values);

struct ModeSummary {
    Mode mode = Mode::Guided;
    int count = 0;
    Quartiles collisions;
    Quartiles completion_time;
};

std::vector<ModeSummary> summarize(const std::vector<BatchRow>& rows);

/// Writes summary.csv and boxplot.svg into `dir`; returns written paths.
std::vector<std::string> emit_plots(const std::vector<BatchRow>& rows, const std::string& dir);

/// Guide ellipses found in a frame log, one CSV row per ellipse.
int export_ellipses(const std::vector<Json>& frames, std::ostream& out);

}  // namespace mixguide
