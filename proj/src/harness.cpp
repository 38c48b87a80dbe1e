#include "mixguide/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace mixguide {

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Guided: return "guided";
        case Mode::GuidedNoReplan: return "guided-no-replan";
        case Mode::Unguided: return "unguided";
    }
    return "guided";
}

Mode mode_from_string(const std::string& s) {
    if (s == "guided") return Mode::Guided;
    if (s == "guided-no-replan") return Mode::GuidedNoReplan;
    if (s == "unguided") return Mode::Unguided;
    throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(OperatorScript::Kind k) {
    switch (k) {
        case OperatorScript::Kind::PlanFollower: return "plan-follower";
        case OperatorScript::Kind::Defector: return "defector";
        case OperatorScript::Kind::PassiveMass: return "passive";
        case OperatorScript::Kind::Wanderer: return "wanderer";
    }
    return "plan-follower";
}

OperatorScript::Kind operator_kind_from_string(const std::string& s) {
    if (s == "plan-follower") return OperatorScript::Kind::PlanFollower;
    if (s == "defector") return OperatorScript::Kind::Defector;
    if (s == "passive") return OperatorScript::Kind::PassiveMass;
    if (s == "wanderer") return OperatorScript::Kind::Wanderer;
    throw std::invalid_argument("unknown operator: " + s);
}

void OperatorScript::validate() const {
    if (!(noise >= 0.0)) throw std::invalid_argument("operator noise must be >= 0");
    if (kind == Kind::Defector && !(defect_phase > 0.0 && defect_phase < 1.0)) {
        throw std::invalid_argument("defect phase must be in (0, 1)");
    }
    if (!(drift_time >= 0.0)) throw std::invalid_argument("drift time must be >= 0");
    if (!(mass > 0.0)) throw std::invalid_argument("mass must be > 0");
    if (!(speed > 0.0)) throw std::invalid_argument("speed must be > 0");
    if (!(walk_sigma >= 0.0)) throw std::invalid_argument("walk sigma must be >= 0");
}

namespace {

int heaviest_plan(const GuideMixture& mix) {
    if (mix.components.empty()) return -1;
    const Vector w = mix.weights();
    int best = 0;
    for (int o = 1; o < static_cast<int>(mix.components.size()); ++o) {
        if (w[o] > w[best]) best = o;
    }
    return best;
}

/// Where the scripted operator wants the handle to be, and how fast that
/// point moves.
class Intent {
public:
    Intent(const Scenario& s, const GuideMixture& mix, const OperatorScript& script)
        : script_(script), n_(s.dof()) {
        const int plan = script.plan >= 0 ? script.plan : heaviest_plan(mix);
        if (plan >= static_cast<int>(mix.components.size())) throw std::invalid_argument("operator plan index out of range");
        if (plan >= 0) mean_w_ = mix.components[static_cast<size_t>(plan)].mean_w;
        basis_ = mix.basis;
        start_ = s.start;
        target_ = s.targets.front();
        if (script.kind == OperatorScript::Kind::Defector) {
            alt_ = script.alternate_target.size() == n_ ? script.alternate_target : target_;
        }
        if (mean_w_.size() == 0 && (script.kind == OperatorScript::Kind::PlanFollower ||
                                    script.kind == OperatorScript::Kind::Defector)) {
            throw std::invalid_argument("plan-following operators need a plan");
        }
    }

    /// Nominal aim and its velocity at time t.
    void nominal(double t, Vector& aim, Vector& aim_vel) const {
        switch (script_.kind) {
            case OperatorScript::Kind::PlanFollower: along_plan(std::min(1.0, script_.speed * t), aim, aim_vel, t);
                return;
            case OperatorScript::Kind::Defector: {
                const double nu = script_.speed * t;
                if (nu <= script_.defect_phase) {
                    along_plan(nu, aim, aim_vel, t);
                    return;
                }
                Vector from, unused;
                along_plan(script_.defect_phase, from, unused, 0.0);
                const double rest = 1.0 - script_.defect_phase;
                const double u = std::min(1.0, (nu - script_.defect_phase) / rest);
                aim = from + u * (alt_ - from);
                aim_vel = u < 1.0 ? Vector((alt_ - from) * (script_.speed / rest)) : Vector(Vector::Zero(n_));
                return;
            }
            case OperatorScript::Kind::Wanderer:
                aim = start_;
                aim_vel = Vector::Zero(n_);
                return;
            case OperatorScript::Kind::PassiveMass:
                aim = start_;
                aim_vel = Vector::Zero(n_);
                return;
        }
    }

private:
    void along_plan(double nu, Vector& aim, Vector& aim_vel, double t) const {
        aim = block_basis(nu, basis_) * mean_w_;
        const bool moving = script_.speed * t < 1.0;
        if (!moving) {
            aim_vel = Vector::Zero(n_);
            return;
        }
        const double h = 1e-4;
        const double lo = std::max(0.0, nu - h);
        const double hi = std::min(1.0, nu + h);
        aim_vel = (block_basis(hi, basis_) * mean_w_ - block_basis(lo, basis_) * mean_w_) * (script_.speed / (hi - lo));
    }

    OperatorScript script_;
    int n_;
    Vector mean_w_;
    BasisConfig basis_;
    Vector start_, target_, alt_;
};

bool reached(const Scenario& s, const Vector& x) {
    for (const auto& t : s.targets) {
        if (position_distance(s, x, t) <= s.completion_radius) return true;
    }
    return false;
}

}  // namespace

EpisodeMetrics run_episode(const Scenario& scenario, const GuideMixture& mixture, const OperatorScript& script,
                           Mode mode, std::uint64_t seed, const EpisodeOptions& opts) {
    script.validate();
    const int n = scenario.dof();
    const double dt = 1.0 / opts.session.guidance.control_rate;
    const auto max_ticks = static_cast<std::int64_t>(std::llround(opts.timeout_s / dt));

    EpisodeMetrics m;
    m.seed = seed;
    m.mode = mode;

    std::unique_ptr<SessionEngine> session;
    if (mode != Mode::Unguided) {
        SessionConfig cfg = opts.session;
        cfg.seed = seed;
        cfg.replan_on_defect = mode == Mode::Guided;
        session = std::make_unique<SessionEngine>(scenario, mixture, cfg);
    }
    std::unique_ptr<FrameLog> log;
    if (opts.frame_log && session) log = std::make_unique<FrameLog>(*opts.frame_log);

    const Intent intent(scenario, mixture, script);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Vector x = script.initial_pose.size() == n ? script.initial_pose : scenario.start;
    Vector v = Vector::Zero(n);
    Vector drift = Vector::Zero(n);
    const double drift_sigma = script.kind == OperatorScript::Kind::Wanderer ? script.walk_sigma : script.noise;
    const bool passive = script.kind == OperatorScript::Kind::PassiveMass;

    bool in_collision = signed_distance(scenario, x).obstacle < 0.0;
    Vector aim, aim_vel;
    for (std::int64_t k = 0; k < max_ticks; ++k) {
        const double t = static_cast<double>(k) * dt;
        if (opts.record_path) m.path.push_back(x);

        Vector force = Vector::Zero(n);
        if (!passive) {
            // Ornstein-Uhlenbeck drift: the operator slowly notices and corrects its own error.
            const double keep = script.drift_time > 0.0 && script.kind != OperatorScript::Kind::Wanderer ? std::exp(-dt / script.drift_time) : 1.0;
            for (int j = 0; j < n; ++j) drift[j] = keep * drift[j] + drift_sigma * std::sqrt(dt) * normal(rng);
            intent.nominal(t, aim, aim_vel);
            force = script.stiffness * (aim + drift - x) + script.damping * (aim_vel - v);
        }
        Vector guide;
        if (session) {
            GuidanceFrame f = session->step(x, v);
            for (const auto& e : f.events) m.replans += e.kind == "replan_integrated" ? 1 : 0;
            if (log) log->write(f);
            guide = std::move(f.wrench);
        } else {
            guide = -opts.session.guidance.k_damp * v;
        }
        v += dt * (force + guide) / script.mass;
        x += dt * v;

        const bool hit = signed_distance(scenario, x).obstacle < 0.0;
        if (hit && !in_collision) ++m.collisions;
        in_collision = hit;
        if (reached(scenario, x)) {
            m.completion_time = static_cast<double>(k + 1) * dt;
            break;
        }
    }
    if (opts.record_path) m.path.push_back(x);
    return m;
}

std::vector<BatchRow> batch_compare(const Scenario& scenario, const GuideMixture& mixture,
                                    const OperatorScript& script, const std::vector<Mode>& modes, int n_seeds,
                                    const EpisodeOptions& opts) {
    if (n_seeds < 1) throw std::invalid_argument("batch_compare: n_seeds must be >= 1");
    std::vector<BatchRow> rows;
    for (Mode mode : modes) {
        for (int s = 1; s <= n_seeds; ++s) {
            const EpisodeMetrics m = run_episode(scenario, mixture, script, mode, static_cast<std::uint64_t>(s), opts);
            rows.push_back(BatchRow{m.seed, mode, m.collisions, m.completion_time, m.replans});
        }
    }
    return rows;
}

namespace {

std::string format_time(double t) {
    if (!std::isfinite(t)) return "inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << t;
    return os.str();
}

double parse_time(const std::string& s) {
    return s == "inf" ? std::numeric_limits<double>::infinity() : std::stod(s);
}

}  // namespace

void write_batch_csv(const std::vector<BatchRow>& rows, std::ostream& out) {
    out << "seed,mode,collisions,time,replans\n";
    for (const auto& r : rows) {
        out << r.seed << ',' << to_string(r.mode) << ',' << r.collisions << ',' << format_time(r.completion_time)
            << ',' << r.replans << '\n';
    }
}

std::vector<BatchRow> read_batch_csv(std::istream& in) {
    std::vector<BatchRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string seed, mode, coll, time, replans;
        std::getline(ss, seed, ',');
        std::getline(ss, mode, ',');
        std::getline(ss, coll, ',');
        std::getline(ss, time, ',');
        std::getline(ss, replans, ',');
        rows.push_back(BatchRow{std::stoull(seed), mode_from_string(mode), std::stoi(coll), parse_time(time),
                                replans.empty() ? 0 : std::stoi(replans)});
    }
    return rows;
}

Quartiles quartiles(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("quartiles of an empty set");
    std::sort(values.begin(), values.end());
    const auto at = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<size_t>(std::floor(pos));
        const auto hi = static_cast<size_t>(std::ceil(pos));
        if (lo == hi || values[lo] == values[hi]) return values[lo];
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return Quartiles{values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

double median(std::vector<double> values) { return quartiles(std::move(values)).median; }

std::vector<ModeSummary> summarize(const std::vector<BatchRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("summarize: empty table");
    std::map<Mode, std::pair<std::vector<double>, std::vector<double>>> by_mode;
    for (const auto& r : rows) {
        by_mode[r.mode].first.push_back(r.collisions);
        by_mode[r.mode].second.push_back(r.completion_time);
    }
    std::vector<ModeSummary> out;
    for (auto& [mode, vals] : by_mode) {
        out.push_back(ModeSummary{mode, static_cast<int>(vals.first.size()), quartiles(vals.first),
                                  quartiles(vals.second)});
    }
    return out;
}

namespace {

void write_box(std::ostream& svg, const Quartiles& q, double x, double width, double y0, double scale, double top) {
    auto y = [&](double v) { return y0 - std::min(v, top) * scale; };
    svg << "<line x1='" << x + width / 2 << "' y1='" << y(q.min) << "' x2='" << x + width / 2 << "' y2='"
        << y(q.max) << "' stroke='black'/>\n";
    svg << "<rect x='" << x << "' y='" << y(q.q3) << "' width='" << width << "' height='"
        << std::max(y(q.q1) - y(q.q3), 1.0) << "' fill='#9ecae1' stroke='black'/>\n";
    svg << "<line x1='" << x << "' y1='" << y(q.median) << "' x2='" << x + width << "' y2='" << y(q.median)
        << "' stroke='#d62728' stroke-width='2'/>\n";
}

}  // namespace

std::vector<std::string> emit_plots(const std::vector<BatchRow>& rows, const std::string& dir) {
    const auto summary = summarize(rows);
    std::filesystem::create_directories(dir);
    const std::string csv_path = (std::filesystem::path(dir) / "summary.csv").string();
    const std::string svg_path = (std::filesystem::path(dir) / "boxplot.svg").string();

    std::ofstream csv(csv_path);
    csv << "mode,metric,count,min,q1,median,q3,max\n";
    for (const auto& s : summary) {
        for (const auto& [name, q] : {std::pair{"collisions", s.collisions}, std::pair{"time", s.completion_time}}) {
            csv << to_string(s.mode) << ',' << name << ',' << s.count << ',' << format_time(q.min) << ','
                << format_time(q.q1) << ',' << format_time(q.median) << ',' << format_time(q.q3) << ','
                << format_time(q.max) << '\n';
        }
    }

    // Two panels: collisions and completion time, one box per mode.
    double max_c = 1.0, max_t = 1.0;
    for (const auto& s : summary) {
        max_c = std::max(max_c, s.collisions.max);
        if (std::isfinite(s.completion_time.max)) max_t = std::max(max_t, s.completion_time.max);
    }
    const double panel_h = 200.0, base = 240.0;
    std::ofstream svg(svg_path);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << 120 + 2 * 60 * summary.size() + 120
        << "' height='280' font-family='sans-serif' font-size='11'>\n";
    double x = 40.0;
    for (const auto& [title, top] : {std::pair{"collisions", max_c}, std::pair{"time [s]", max_t}}) {
        svg << "<text x='" << x << "' y='20'>" << title << "</text>\n";
        for (const auto& s : summary) {
            const Quartiles& q = std::string(title) == "collisions" ? s.collisions : s.completion_time;
            write_box(svg, q, x, 30.0, base, panel_h / top, top);
            svg << "<text x='" << x << "' y='" << base + 16 << "'>" << to_string(s.mode) << "</text>\n";
            x += 60.0;
        }
        x += 60.0;
    }
    svg << "</svg>\n";
    return {csv_path, svg_path};
}

int export_ellipses(const std::vector<Json>& frames, std::ostream& out) {
    out << "tick,version,plan_id,phase,weight,center,axes\n";
    int count = 0;
    for (const auto& f : frames) {
        if (!f.contains("guides")) continue;
        const Json& g = f.at("guides");
        const auto& ids = g.at("plan_ids");
        const auto& chains = g.at("chains");
        for (size_t c = 0; c < chains.size(); ++c) {
            for (const auto& e : chains[c]) {
                out << f.at("tick").get<std::int64_t>() << ',' << g.at("version").get<int>() << ','
                    << ids.at(c).get<int>() << ',' << e.at("phase").get<int>() << ',' << e.at("weight").get<double>()
                    << ",\"" << e.at("center").dump() << "\",\"" << e.at("axes").dump() << "\"\n";
                ++count;
            }
        }
    }
    return count;
}

}  // namespace mixguide
