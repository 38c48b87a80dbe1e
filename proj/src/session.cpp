#include "mixguide/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mixguide {

std::string to_string(ReplanTrigger t) {
    switch (t) {
        case ReplanTrigger::None: return "none";
        case ReplanTrigger::Defect: return "defect";
        case ReplanTrigger::Env: return "env";
    }
    return "none";
}

std::string to_string(ReplanStatus s) { return s == ReplanStatus::Idle ? "idle" : "pending"; }

// ---- executors ----

std::shared_future<ReplanResult> InlineExecutor::submit(std::function<ReplanResult()> job) {
    std::promise<ReplanResult> done;
    done.set_value(job());
    return done.get_future().share();
}

WorkerPool::WorkerPool(int threads) {
    for (int i = 0; i < std::max(threads, 1); ++i) threads_.emplace_back([this] { run(); });
}

WorkerPool::~WorkerPool() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
}

std::shared_future<ReplanResult> WorkerPool::submit(std::function<ReplanResult()> job) {
    std::packaged_task<ReplanResult()> task(std::move(job));
    auto fut = task.get_future().share();
    {
        std::lock_guard lock(mu_);
        queue_.push_back(std::move(task));
    }
    cv_.notify_one();
    return fut;
}

void WorkerPool::run() {
    for (;;) {
        std::packaged_task<ReplanResult()> task;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
            if (stop_ && queue_.empty()) return;
            task = std::move(queue_.front());
            queue_.pop_front();
        }
        task();
    }
}

// ---- presets ----

SessionConfig preset(const std::string& name) {
    SessionConfig cfg;
    cfg.filter.p_progress = 0.8;
    cfg.filter.p_switch = 1e-20;
    cfg.filter.emission_scale = 25.0;
    cfg.guidance.k_damp = 2.0;
    cfg.guidance.control_rate = 100.0;
    if (name == "pickplace3d") {
        cfg.filter.delta_nu = 0.0;
        cfg.guidance.tau_max = 20.0;
    } else if (name == "pole6d") {
        cfg.filter.delta_nu = 0.5;
        cfg.guidance.tau_max = 20.0;
    } else if (name == "maze2d") {
        cfg.filter.delta_nu = 0.5;
        cfg.guidance.tau_max = 20.0;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return cfg;
}

SessionConfig preset_for(Variant v) {
    switch (v) {
        case Variant::PointMaze2D: return preset("maze2d");
        case Variant::PickPlace3D: return preset("pickplace3d");
        case Variant::PoleWindows6D: return preset("pole6d");
    }
    throw std::logic_error("unreachable");
}

// ---- documents ----

namespace {

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json event_to_json(const SessionEvent& e) { return Json{{"tick", e.tick}, {"kind", e.kind}, {"detail", e.detail}}; }

Json frame_to_json(const GuidanceFrame& f) {
    Json j;
    j["tick"] = f.tick;
    j["pose"] = vector_to_json(f.pose);
    j["wrench"] = vector_to_json(f.wrench);
    j["energy"] = finite_or_null(f.energy);
    j["plan_belief"] = vector_to_json(f.plan_belief);
    j["phase_beliefs"] = Json::array();
    for (const auto& p : f.phase_beliefs) j["phase_beliefs"].push_back(vector_to_json(p));
    j["plan_ids"] = f.plan_ids;
    j["responsibilities"] = Json::array();
    for (const auto& r : f.top) {
        j["responsibilities"].push_back(Json{{"plan", r.plan}, {"phase", r.phase}, {"value", r.value}});
    }
    j["guide_version"] = f.guide_version;
    if (f.guides) j["guides"] = *f.guides;
    j["events"] = Json::array();
    for (const auto& e : f.events) j["events"].push_back(event_to_json(e));
    j["error"] = f.error;
    return j;
}

Replanner learner_replanner(int iterations_override) {
    return [iterations_override](const Scenario& s, const Vector& anchor, std::uint64_t seed) {
        try {
            const Scenario anchored = s.with_start(anchor);
            LearnerConfig cfg = learner_config(anchored);
            cfg.seed = seed;
            if (iterations_override > 0) cfg.max_iterations = iterations_override;
            GuideMixture learned = learn_plans(anchored, cfg);
            return ReplanResult{std::move(learned.components), {}};
        } catch (const std::exception& e) {
            return ReplanResult{{}, e.what()};
        }
    };
}

// ---- session ----

SessionEngine::SessionEngine(Scenario scenario, GuideMixture mixture, SessionConfig cfg,
                             std::shared_ptr<ReplanExecutor> executor, Replanner replanner)
    : scenario_(std::move(scenario)),
      mixture_(std::move(mixture)),
      cfg_(std::move(cfg)),
      executor_(executor ? std::move(executor) : std::make_shared<InlineExecutor>()),
      grid_(scenario_.phases) {
    scenario_.validate();
    mixture_.validate();
    cfg_.filter.validate();
    cfg_.guidance.validate();
    if (mixture_.basis.n != scenario_.dof()) throw std::invalid_argument("session: mixture and scenario disagree on n");
    if (cfg_.replan_iterations == 0) cfg_.replan_iterations = scenario_.planning.value("replan_iterations", 0);
    replanner_ = replanner ? std::move(replanner) : learner_replanner(cfg_.replan_iterations);
    for (size_t o = 0; o < mixture_.components.size(); ++o) plan_ids_.push_back(next_plan_id_++);
    beliefs_ = BeliefState::initial(mixture_, grid_.size());
    refresh_poses();
}

void SessionEngine::refresh_poses() {
    poses_ = mixture_poses(mixture_, grid_);
    ++guide_version_;
}

void SessionEngine::record(SessionEvent e) {
    e.tick = tick_;
    tick_events_.push_back(e);
    log_.push_back(std::move(e));
}

std::vector<int> SessionEngine::visible_plan_ids() const {
    std::vector<int> ids = plan_ids_;
    if (mixture_.freelance) ids.push_back(-1);
    return ids;
}

Json SessionEngine::guide_json() const {
    return Json{{"version", guide_version_},
                {"plan_ids", plan_ids_},
                {"chains", chains_to_json(guide_chains(mixture_, grid_, position_dims(scenario_.variant)))}};
}

ReplanTrigger SessionEngine::check_replan() const {
    if (env_flag_ && cfg_.replan_on_env) return ReplanTrigger::Env;
    const int f = mixture_.freelance_index();
    if (cfg_.replan_on_defect && f >= 0 && tick_ >= cooldown_until_ && beliefs_.plan[f] > kReplanThreshold) {
        return ReplanTrigger::Defect;
    }
    return ReplanTrigger::None;
}

void SessionEngine::apply_env_edit(const EnvEdit& edit) {
    mixguide::apply_edit(scenario_, edit);
    env_flag_ = true;
    record(SessionEvent{0, "env_edit", edit_to_json(edit)});
}

void SessionEngine::integrate_new_plans(const std::vector<ProMP>& plans, ReplanTrigger kind, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("new plan weight must be in (0, 1)");
    for (const auto& p : plans) {
        if (!(p.basis == mixture_.basis)) throw std::invalid_argument("new plan has a different basis");
        p.validate();
    }
    std::vector<int> added;
    if (plans.empty()) {
        record(SessionEvent{0, "replan_integrated", Json{{"trigger", to_string(kind)}, {"plan_ids", added}}});
        return;
    }
    const bool has_free = mixture_.freelance.has_value();
    const int T = grid_.size();

    // Old entries, split into plans and freelance.
    std::vector<double> old_w, old_b;
    std::vector<Vector> old_phase;
    std::vector<ProMP> comps;
    std::vector<int> ids;
    const Vector w = mixture_.weights();
    if (kind != ReplanTrigger::Env) {
        for (size_t o = 0; o < mixture_.components.size(); ++o) {
            comps.push_back(mixture_.components[o]);
            ids.push_back(plan_ids_[o]);
            old_w.push_back(w[static_cast<Eigen::Index>(o)]);
            old_b.push_back(beliefs_.plan[static_cast<Eigen::Index>(o)]);
            old_phase.push_back(beliefs_.phase[o]);
        }
    }
    const int K_old = static_cast<int>(comps.size());
    const int K_new = static_cast<int>(plans.size());
    const int K = K_old + K_new + (has_free ? 1 : 0);

    Vector nw(K), nb(K);
    std::vector<Vector> nphase;
    for (int o = 0; o < K_old; ++o) {
        nw[o] = old_w[static_cast<size_t>(o)];
        nb[o] = old_b[static_cast<size_t>(o)];
        nphase.push_back(old_phase[static_cast<size_t>(o)]);
    }
    for (int o = 0; o < K_new; ++o) {
        comps.push_back(plans[static_cast<size_t>(o)]);
        ids.push_back(next_plan_id_);
        added.push_back(next_plan_id_++);
        nphase.push_back(Vector::Constant(T, 1.0 / T));
    }
    if (has_free) {
        const int f = mixture_.freelance_index();
        nw[K - 1] = w[f];
        nb[K - 1] = beliefs_.plan[f];
        nphase.push_back(Vector::Ones(1));
    }
    // Existing mass is renormalized to one, then each new plan gets epsilon.
    auto blend = [&](Vector& v) {
        const double kept = v.head(K_old).sum() + (has_free ? v[K - 1] : 0.0);
        if (kept > 0.0) {
            v.head(K_old) /= kept;
            if (has_free) v[K - 1] /= kept;
            v.segment(K_old, K_new).setConstant(epsilon);
        } else {
            v.segment(K_old, K_new).setConstant(1.0);
        }
        v /= v.sum();
    };
    if (kind == ReplanTrigger::Env) {
        // The removed plans' mass goes to their replacements; there is no
        // old field left to keep continuous with.
        const double free_w = has_free ? w[mixture_.freelance_index()] : 0.0;
        nw.head(K_new).setConstant((1.0 - free_w) / K_new);
        if (has_free) nw[K - 1] = free_w;
        nb = nw;
    } else {
        blend(nw);
        blend(nb);
    }

    mixture_.components = std::move(comps);
    mixture_.log_weights = nw.array().log().matrix();
    plan_ids_ = std::move(ids);
    beliefs_.plan = nb;
    beliefs_.phase = std::move(nphase);
    refresh_poses();
    record(SessionEvent{0, "replan_integrated", Json{{"trigger", to_string(kind)}, {"plan_ids", added}}});
}

void SessionEngine::start_replan(ReplanTrigger kind, const Vector& anchor) {
    const std::uint64_t seed = cfg_.seed * 1000003ULL + static_cast<std::uint64_t>(replan_count_++);
    Scenario snapshot = scenario_;
    Replanner fn = replanner_;
    Vector a = anchor;
    Pending p;
    p.kind = kind;
    p.ready_tick = tick_ + cfg_.replan_latency_ticks;
    p.scenario = snapshot;
    p.result = executor_->submit([fn, snapshot, a, seed] { return fn(snapshot, a, seed); });
    pending_ = std::move(p);
    if (kind == ReplanTrigger::Env) env_flag_ = false;
    record(SessionEvent{0, "replan_triggered", Json{{"trigger", to_string(kind)}, {"anchor", vector_to_json(anchor)}}});
}

void SessionEngine::finish_replan(Pending& p) {
    const ReplanResult res = p.result.get();
    const ReplanTrigger kind = p.kind;
    pending_.reset();
    if (!res.error.empty()) {
        record(SessionEvent{0, "replan_failed", Json{{"trigger", to_string(kind)}, {"error", res.error}}});
        return;
    }
    integrate_new_plans(res.plans, kind, cfg_.new_plan_weight);
    cooldown_until_ = tick_ + cfg_.cooldown_ticks;
}

void SessionEngine::poll_replan() {
    if (!pending_ || tick_ < pending_->ready_tick) return;
    if (pending_->result.wait_for(std::chrono::seconds(0)) != std::future_status::ready) return;
    finish_replan(*pending_);
}

void SessionEngine::wait_for_replan() {
    if (!pending_) return;
    pending_->result.wait();
    finish_replan(*pending_);
}

Vector SessionEngine::probe_wrench(const Vector& pose, const Vector& velocity) const {
    const PoseFieldGMM field = build_pose_field(poses_, beliefs_.plan, cue_belief(beliefs_, cfg_.filter));
    return total_wrench(field, pose, velocity, cfg_.guidance);
}

GuidanceFrame SessionEngine::step(const Vector& pose, const Vector& velocity) {
    tick_events_.clear();
    poll_replan();

    GuidanceFrame f;
    f.tick = tick_;
    f.pose = pose;
    const int n = scenario_.dof();
    if (pose.size() != n || velocity.size() != n || !pose.allFinite() || !velocity.allFinite()) {
        record(SessionEvent{0, "observation_error", Json{{"message", "pose and velocity must be finite with n entries"}}});
        f.error = true;
        f.wrench = Vector::Zero(n);
        f.energy = std::numeric_limits<double>::quiet_NaN();
    } else {
        const FilterEvents fe = filter_update(beliefs_, poses_, pose, cfg_.filter, mixture_.weights());
        for (int o : fe.phase_resets) record(SessionEvent{0, "phase_reset", Json{{"plan", o}}});
        if (fe.plan_reset) record(SessionEvent{0, "plan_reset", Json::object()});

        const PoseFieldGMM field = build_pose_field(poses_, beliefs_.plan, cue_belief(beliefs_, cfg_.filter));
        const DensityGrad dg = log_density_and_grad(field, pose);
        f.wrench = clip_magnitude(dg.grad - cfg_.guidance.k_damp * velocity, cfg_.guidance.tau_max);
        f.energy = -dg.log_p;

        const Vector resp = responsibilities(field, pose);
        std::vector<int> order(static_cast<size_t>(resp.size()));
        for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
        const auto k = std::min<size_t>(static_cast<size_t>(std::max(cfg_.top_k, 0)), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](int a, int b) { return resp[a] > resp[b]; });
        for (size_t r = 0; r < k; ++r) {
            const auto& c = field.components[static_cast<size_t>(order[r])];
            f.top.push_back(Responsibility{c.plan, c.phase, resp[order[r]]});
        }

        const ReplanTrigger trig = check_replan();
        if (trig != ReplanTrigger::None && !pending_) start_replan(trig, pose);
    }

    f.plan_belief = beliefs_.plan;
    f.phase_beliefs = beliefs_.phase;
    f.plan_ids = visible_plan_ids();
    f.guide_version = guide_version_;
    if (guide_version_ != sent_guide_version_) {
        f.guides = guide_json();
        sent_guide_version_ = guide_version_;
    }
    f.events = tick_events_;
    ++tick_;
    return f;
}

// ---- frame log ----

void FrameLog::write(const GuidanceFrame& f) { out_ << frame_to_json(f).dump() << '\n'; }

std::vector<Json> read_frame_log(std::istream& in) {
    std::vector<Json> frames;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        frames.push_back(Json::parse(line));
    }
    return frames;
}

}  // namespace mixguide
