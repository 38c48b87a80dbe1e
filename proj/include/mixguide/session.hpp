#pragma once

// Control-rate session: filter, field and wrench per tick, plus replanning
// on defection or environment edits. Replans run on an executor; results
// are integrated only at the start of a tick.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mixguide/guidance_field.hpp"
#include "mixguide/intent_filter.hpp"
#include "mixguide/planning.hpp"
#include "mixguide/scenario.hpp"

namespace mixguide {

enum class ReplanTrigger { None, Defect, Env };
enum class ReplanStatus { Idle, Pending };

std::string to_string(ReplanTrigger t);
std::string to_string(ReplanStatus s);

inline constexpr double kReplanThreshold = 0.5;
inline constexpr double kNewPlanWeight = 1e-3;

struct SessionEvent {
    std::int64_t tick = 0;
    std::string kind;  // replan_triggered, replan_integrated, replan_failed, env_edit, phase_reset, plan_reset, observation_error
    Json detail = Json::object();
};

struct ReplanResult {
    std::vector<ProMP> plans;
    std::string error;  // non-empty on failure
};

/// Runs replanning jobs. Implementations decide where the work happens.
class ReplanExecutor {
public:
    virtual ~ReplanExecutor() = default;
    virtual std::shared_future<ReplanResult> submit(std::function<ReplanResult()> job) = 0;
};

/// Runs each job at submission; pairs with a tick latency for
/// deterministic simulation.
class InlineExecutor : public ReplanExecutor {
public:
    std::shared_future<ReplanResult> submit(std::function<ReplanResult()> job) override;
};

/// Fixed-size thread pool shared by sessions.
class WorkerPool : public ReplanExecutor {
public:
    explicit WorkerPool(int threads = 1);
    ~WorkerPool() override;
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    std::shared_future<ReplanResult> submit(std::function<ReplanResult()> job) override;

private:
    void run();

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::packaged_task<ReplanResult()>> queue_;
    std::vector<std::thread> threads_;
    bool stop_ = false;
};

struct SessionConfig {
    FilterParams filter;
    GuidanceParams guidance;
    double new_plan_weight = kNewPlanWeight;
    bool replan_on_defect = true;
    bool replan_on_env = true;
    /// Ticks between submission and integration when the executor finishes
    /// immediately (simulated planning time).
    int replan_latency_ticks = 0;
    /// Ticks after an integration during which defection is not re-checked.
    int cooldown_ticks = 100;
    /// Learner iterations for online replans; 0 keeps the scenario value.
    int replan_iterations = 0;
    std::uint64_t seed = 1;
    int top_k = 5;
};

/// Named parameter sets: pickplace3d, pole6d, maze2d.
SessionConfig preset(const std::string& name);
SessionConfig preset_for(Variant v);

struct Responsibility {
    int plan = 0;  // index into the current plan list
    int phase = 0;
    double value = 0.0;
};

struct GuidanceFrame {
    std::int64_t tick = 0;
    Vector pose;
    Vector wrench;
    double energy = 0.0;
    Vector plan_belief;
    std::vector<Vector> phase_beliefs;
    std::vector<int> plan_ids;  // stable id per plan; freelance is -1
    std::vector<Responsibility> top;
    int guide_version = 0;
    std::optional<Json> guides;  // ellipse chains, present when the guides changed
    std::vector<SessionEvent> events;
    bool error = false;
};

Json event_to_json(const SessionEvent& e);
Json frame_to_json(const GuidanceFrame& f);

using Replanner = std::function<ReplanResult(const Scenario& scenario, const Vector& anchor, std::uint64_t seed)>;

/// Default replanner: the scenario's learner started from `anchor`.
Replanner learner_replanner(int iterations_override = 0);

class SessionEngine {
public:
    SessionEngine(Scenario scenario, GuideMixture mixture, SessionConfig cfg,
                  std::shared_ptr<ReplanExecutor> executor = nullptr, Replanner replanner = nullptr);

    GuidanceFrame step(const Vector& pose, const Vector& velocity);

    [[nodiscard]] ReplanTrigger check_replan() const;
    /// Appends (Defect) or replaces (Env) plans with weight epsilon each.
    void integrate_new_plans(const std::vector<ProMP>& plans, ReplanTrigger kind, double epsilon);
    /// Edits the scenario and raises the environment flag.
    void apply_env_edit(const EnvEdit& edit);

    /// Field at the current cue beliefs, for probing without advancing.
    [[nodiscard]] Vector probe_wrench(const Vector& pose, const Vector& velocity) const;

    [[nodiscard]] const GuideMixture& mixture() const { return mixture_; }
    [[nodiscard]] const BeliefState& beliefs() const { return beliefs_; }
    [[nodiscard]] const Scenario& scenario() const { return scenario_; }
    [[nodiscard]] const SessionConfig& config() const { return cfg_; }
    [[nodiscard]] const MixturePoses& poses() const { return poses_; }
    [[nodiscard]] std::int64_t tick() const { return tick_; }
    [[nodiscard]] ReplanStatus status() const { return pending_ ? ReplanStatus::Pending : ReplanStatus::Idle; }
    [[nodiscard]] const std::vector<SessionEvent>& events() const { return log_; }
    [[nodiscard]] const std::vector<int>& plan_ids() const { return plan_ids_; }
    [[nodiscard]] int guide_version() const { return guide_version_; }
    [[nodiscard]] Json guide_json() const;
    [[nodiscard]] bool env_flag() const { return env_flag_; }
    void set_replan_on_defect(bool on) { cfg_.replan_on_defect = on; }
    /// Block until a pending replan finishes and integrate it (tests, CLI).
    void wait_for_replan();

private:
    struct Pending {
        std::shared_future<ReplanResult> result;
        ReplanTrigger kind = ReplanTrigger::None;
        std::int64_t ready_tick = 0;
        Scenario scenario;
    };

    void refresh_poses();
    void record(SessionEvent e);
    void poll_replan();
    void finish_replan(Pending& p);
    void start_replan(ReplanTrigger kind, const Vector& anchor);
    [[nodiscard]] std::vector<int> visible_plan_ids() const;

    Scenario scenario_;
    GuideMixture mixture_;
    SessionConfig cfg_;
    std::shared_ptr<ReplanExecutor> executor_;
    Replanner replanner_;
    PhaseGrid grid_;
    MixturePoses poses_;
    BeliefState beliefs_;
    std::vector<int> plan_ids_;
    int next_plan_id_ = 0;
    int guide_version_ = 0;
    int sent_guide_version_ = -1;
    std::int64_t tick_ = 0;
    std::int64_t cooldown_until_ = 0;
    bool env_flag_ = false;
    int replan_count_ = 0;
    std::optional<Pending> pending_;
    std::vector<SessionEvent> log_;
    std::vector<SessionEvent> tick_events_;
};

/// Newline-delimited frame log.
class FrameLog {
public:
    explicit FrameLog(std::ostream& out) : out_(out) {}
    void write(const GuidanceFrame& f);

private:
    std::ostream& out_;
};

std::vector<Json> read_frame_log(std::istream& in);

}  // namespace mixguide
