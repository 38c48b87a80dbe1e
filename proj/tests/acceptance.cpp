// Acceptance suite: one PASS/FAIL line per headline property. Each check
// builds its own inputs and compares against an independent computation or
// a fixed threshold. Usage: acceptance <path to the mixguide CLI>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "mixguide/harness.hpp"

using namespace mixguide;
namespace fs = std::filesystem;

namespace {

std::string scenario_path(const std::string& name) {
    return std::string(MIXGUIDE_SOURCE_DIR) + "/scenarios/" + name + ".json";
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

// ---- gradient ----

Outcome gradient_check() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);
    double worst = 0.0;
    const int fields = 100;
    for (int f = 0; f < fields; ++f) {
        const int n = std::array<int, 3>{2, 3, 6}[f % 3];
        const int k = 1 + f * 59 / (fields - 1);
        std::vector<CachedGaussian> gs;
        gs.reserve(static_cast<size_t>(k));
        Vector lw(k);
        for (int c = 0; c < k; ++c) {
            const Matrix a = Matrix::NullaryExpr(n, n, [&] { return u(rng); });
            gs.emplace_back(PoseGaussian{Vector::NullaryExpr(n, [&] { return 3.0 * u(rng); }),
                                         a * a.transpose() + 0.1 * Matrix::Identity(n, n)});
            lw[c] = 2.0 * u(rng);
        }
        lw = normalize_log_weights(lw);
        PoseFieldGMM field;
        field.dim = n;
        for (int c = 0; c < k; ++c) field.components.push_back(FieldComponent{lw[c], &gs[static_cast<size_t>(c)], 0, c});

        // Probe near a random component so the gradient is not vanishing.
        const auto& g = gs[static_cast<size_t>(std::uniform_int_distribution<int>(0, k - 1)(rng))].g;
        const Vector x = g.mean + g.cov.llt().matrixL() * Vector::NullaryExpr(n, [&] { return z(rng); });
        const Vector grad = log_density_and_grad(field, x).grad;
        // Five-point central differences.
        const double h = 1e-3;
        Vector fd(n);
        auto lp = [&](const Vector& p) { return log_density_and_grad(field, p).log_p; };
        for (int j = 0; j < n; ++j) {
            const Vector e = Vector::Unit(n, j) * h;
            fd[j] = (-lp(x + 2 * e) + 8 * lp(x + e) - 8 * lp(x - e) + lp(x - 2 * e)) / (12 * h);
        }
        worst = std::max(worst, (grad - fd).norm() / fd.norm());
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-5 && secs < 10.0,
            "worst relative error " + fmt(worst) + " over " + std::to_string(fields) + " fields, " + fmt(secs) + " s"};
}

// ---- shift ----

Vector atom_shift(const Vector& p, double delta) {
    constexpr int kAtoms = 1000;
    const auto T = p.size();
    const int lo = static_cast<int>(std::floor(delta));
    const int far = static_cast<int>(std::lround((delta - lo) * kAtoms));
    Vector out = Vector::Zero(T);
    for (Eigen::Index j = 0; j < T; ++j) {
        for (int a = 0; a < kAtoms; ++a) out[std::min<Eigen::Index>(T - 1, j + lo + (a < far ? 1 : 0))] += p[j] / kAtoms;
    }
    return out;
}

Outcome shift_check() {
    const Vector one_hot = (Vector(3) << 1, 0, 0).finished();
    const bool ex1 = shift(one_hot, 1.5) == (Vector(3) << 0, 0.5, 0.5).finished();
    const bool ex2 = shift(one_hot, 2.0) == (Vector(3) << 0, 0, 1).finished();
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int combos = 0, matched = 0;
    double mass_err = 0.0;
    for (int T = 1; T <= 6; ++T) {
        for (double d : {0.0, 0.5, 1.0, 1.5, 2.0, 3.2}) {
            for (int rep = 0; rep < 5; ++rep) {
                Vector p = Vector::NullaryExpr(T, [&] { return u(rng); });
                p /= p.sum();
                const Vector s = shift(p, d);
                ++combos;
                matched += s.isApprox(atom_shift(p, d), 1e-12) ? 1 : 0;
                mass_err = std::max(mass_err, std::abs(s.sum() - p.sum()));
            }
        }
    }
    return {ex1 && ex2 && matched == combos && mass_err <= 1e-15,
            std::string("worked examples ") + (ex1 && ex2 ? "exact" : "WRONG") + ", oracle " + std::to_string(matched) +
                "/" + std::to_string(combos) + ", mass error " + fmt(mass_err)};
}

// ---- learner ----

Outcome learner_check() {
    const auto t0 = Clock::now();
    int good = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 31);
        std::normal_distribution<double> z(0.0, 2.0);
        const Vector target = Vector::NullaryExpr(4, [&] { return z(rng); });
        LearnerConfig cfg;
        cfg.n_components = 1;
        cfg.seed = seed;
        cfg.init_mean_std = 2.0;
        const auto mix =
            learn_mixture([&](const Vector& w) { return -0.5 * (w - target).squaredNorm(); }, cfg, BasisConfig{4, 1, 0.5})
                .first;
        const ProMP& q = mix.components[0];
        const double kl = kl_diag_gaussian(q.mean_w, q.var_w, target, Vector::Ones(4));
        worst = std::max(worst, kl);
        good += kl <= 0.05 ? 1 : 0;
    }
    const double secs = seconds_since(t0);
    return {good >= 9 && secs < 60.0,
            std::to_string(good) + "/10 seeds with KL <= 0.05 (worst " + fmt(worst) + "), " + fmt(secs) + " s"};
}

// ---- maze multimodality ----

Outcome multimodality_check() {
    const auto t0 = Clock::now();
    const Scenario s = load_scenario(scenario_path("maze2d"));
    const RewardModel rm(s);
    // Gap openings from the geometry: the free intervals along the wall line.
    const auto& walls = std::get<PointMaze2DGeometry>(s.geometry).walls;
    const double lower_gap_lo = walls[0].upper[1], lower_gap_hi = walls[1].lower[1];
    const double upper_gap_lo = walls[1].upper[1], upper_gap_hi = walls[2].lower[1];
    const double wall_x = walls[1].center()[0];
    int good = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        LearnerConfig cfg = learner_config(s);
        cfg.seed = seed;
        const GuideMixture mix = learn_plans(s, cfg);
        bool lower = false, upper = false;
        for (const auto& c : mix.components) {
            const Matrix tr = rm.trajectory(c.mean_w);
            double dmin = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < tr.cols(); ++i) dmin = std::min(dmin, signed_distance(s, tr.col(i)).min());
            if (dmin < 0.0) continue;
            // Where the dense mean trajectory crosses the wall line.
            const PhaseGrid dense(400);
            const Matrix fine = trajectory_from_weights(c.mean_w, dense, s.basis);
            for (Eigen::Index i = 1; i < fine.cols(); ++i) {
                const double a = fine(0, i - 1) - wall_x, b = fine(0, i) - wall_x;
                if (a * b > 0.0) continue;
                const double y = fine(1, i - 1) + (fine(1, i) - fine(1, i - 1)) * (a / (a - b + 1e-300));
                lower = lower || (y > lower_gap_lo && y < lower_gap_hi);
                upper = upper || (y > upper_gap_lo && y < upper_gap_hi);
            }
        }
        good += lower && upper ? 1 : 0;
    }
    const double secs = seconds_since(t0);
    return {good >= 8 && secs < 300.0,
            std::to_string(good) + "/10 seeds with collision-free means through both gaps, " + fmt(secs) + " s"};
}

// ---- filter ----

// Three hand-made lanes in the maze: through each gap and one to the top left.
GuideMixture maze_lanes(const Scenario& s) {
    const PhaseGrid grid(s.phases);
    auto lane = [&](std::vector<Eigen::Vector2d> way) {
        Matrix traj(2, grid.size());
        const double legs = static_cast<double>(way.size() - 1);
        for (int i = 0; i < grid.size(); ++i) {
            const double pos = grid[i] * legs;
            const int leg = std::min(static_cast<int>(pos), static_cast<int>(legs) - 1);
            traj.col(i) = way[static_cast<size_t>(leg)] + (pos - leg) * (way[static_cast<size_t>(leg) + 1] - way[static_cast<size_t>(leg)]);
        }
        return ProMP{s.basis, fit_weights(traj, grid, s.basis), Vector::Constant(s.basis.weight_dim(), 0.1)};
    };
    GuideMixture mix;
    mix.basis = s.basis;
    mix.components = {lane({{1, 5}, {5, 2.75}, {9, 5}}), lane({{1, 5}, {5, 7.25}, {9, 5}}), lane({{1, 5}, {1.5, 9.5}})};
    mix.log_weights = normalize_log_weights(Vector::Zero(3));
    return attach_freelance(mix, scenario_freelance(s), freelance_weight(s));
}

bool triggered_defect(const GuidanceFrame& f) {
    for (const auto& e : f.events) {
        if (e.kind == "replan_triggered" && e.detail.value("trigger", "") == "defect") return true;
    }
    return false;
}

Outcome filter_check() {
    const Scenario s = load_scenario(scenario_path("maze2d"));
    const GuideMixture mix = maze_lanes(s);
    const int K = static_cast<int>(mix.components.size());
    SessionConfig cfg = preset("maze2d");
    // Replans return nothing, so a trigger only shows up as an event.
    const Replanner none = [](const Scenario&, const Vector&, std::uint64_t) { return ReplanResult{}; };

    // Largest one-sigma radius of any plan pose Gaussian.
    const PhaseGrid grid(s.phases);
    double sigma = 0.0;
    Vector lo = Vector::Constant(2, 1e300);
    for (const auto& c : mix.components) {
        for (int i = 0; i < grid.size(); ++i) {
            const PoseGaussian g = pose_at_phase(c, grid[i]);
            sigma = std::max(sigma, std::sqrt(Eigen::SelfAdjointEigenSolver<Matrix>(g.cov).eigenvalues().maxCoeff()));
            lo = lo.cwiseMin(g.mean);
        }
    }

    int follow_ok = 0, defect_ok = 0, slowest_follow = 0, slowest_defect = 0;
    double nearest = std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        std::normal_distribution<double> z(0.0, 1.0);
        const int k = static_cast<int>(seed % static_cast<std::uint64_t>(K));

        // Poses drawn from plan k's own distribution while its phase advances.
        SessionEngine follow(s, mix, cfg, nullptr, none);
        int hit = -1;
        bool spurious = false;
        for (int t = 0; t < 200 && hit < 0; ++t) {
            const PoseGaussian g = pose_at_phase(mix.components[static_cast<size_t>(k)], std::min(1.0, t / 150.0));
            const Vector x = g.mean + g.cov.llt().matrixL() * Vector::NullaryExpr(2, [&] { return z(rng); });
            spurious = spurious || triggered_defect(follow.step(x, Vector::Zero(2)));
            if (follow.beliefs().plan[k] > 0.9) hit = t;
        }
        if (hit >= 0 && !spurious) ++follow_ok;
        slowest_follow = std::max(slowest_follow, hit < 0 ? 200 : hit + 1);

        // A line below every plan, more than ten sigma from all of them.
        SessionEngine away(s, mix, cfg, nullptr, none);
        hit = -1;
        for (int t = 0; t < 200 && hit < 0; ++t) {
            Vector x(2);
            x << 1.0 + 8.0 * t / 199.0 + 0.05 * z(rng), lo[1] - 10.0 * sigma - 0.5 + 0.05 * z(rng);
            for (const auto& c : mix.components) {
                for (int i = 0; i < grid.size(); ++i) nearest = std::min(nearest, (x - pose_at_phase(c, grid[i]).mean).norm());
            }
            if (triggered_defect(away.step(x, Vector::Zero(2)))) hit = t;
        }
        if (hit >= 0) ++defect_ok;
        slowest_defect = std::max(slowest_defect, hit < 0 ? 200 : hit + 1);
    }
    const bool far_enough = nearest > 10.0 * sigma;
    return {follow_ok == 20 && defect_ok == 20 && far_enough,
            "follow " + std::to_string(follow_ok) + "/20 (slowest " + std::to_string(slowest_follow) +
                " ticks), defect " + std::to_string(defect_ok) + "/20 (slowest " + std::to_string(slowest_defect) +
                " ticks, " + fmt(nearest / sigma) + " sigma away)"};
}

// ---- energy ----

Outcome energy_check() {
    const Scenario s = load_scenario(scenario_path("maze2d"));
    const GuideMixture mix = maze_lanes(s);
    const PhaseGrid grid(s.phases);
    const MixturePoses poses = mixture_poses(mix, grid);
    const BeliefState beliefs = BeliefState::initial(mix, grid.size());
    const PoseFieldGMM field = build_pose_field(poses, beliefs.plan, beliefs.phase);
    GuidanceParams params;
    params.k_damp = 2.0;
    // No cap: a clipped force is not the gradient of the energy.
    params.tau_max = 1e12;
    const double dt = 1e-3;
    Rng rng(99);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::normal_distribution<double> z(0.0, 1.0);
    double worst = -std::numeric_limits<double>::infinity();
    int monotone = 0;
    for (int run = 0; run < 20; ++run) {
        Vector x(2), v(2);
        x << u(rng), u(rng);
        v << z(rng), z(rng);
        double H = energy(field, x) + 0.5 * v.squaredNorm();
        double run_worst = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < 10000; ++k) {
            v += dt * total_wrench(field, x, v, params);
            x += dt * v;
            const double next = energy(field, x) + 0.5 * v.squaredNorm();
            run_worst = std::max(run_worst, next - H);
            H = next;
        }
        worst = std::max(worst, run_worst);
        monotone += run_worst <= 1e-6 ? 1 : 0;
    }
    return {monotone == 20, std::to_string(monotone) + "/20 runs non-increasing, largest step increase " + fmt(worst)};
}

// ---- efficacy ----

Outcome efficacy_check() {
    const auto t0 = Clock::now();
    const Scenario s = load_scenario(scenario_path("pole6d"));
    const GuideMixture mix = plan_scenario(s);
    OperatorScript op;
    op.noise = 0.3;
    EpisodeOptions opts;
    opts.session = preset_for(s.variant);
    const auto rows = batch_compare(s, mix, op, {Mode::Guided, Mode::GuidedNoReplan, Mode::Unguided}, 100, opts);
    const auto summary = summarize(rows);
    auto find = [&](Mode m) {
        for (const auto& x : summary) {
            if (x.mode == m) return x;
        }
        throw std::logic_error("missing mode");
    };
    const ModeSummary g = find(Mode::Guided), nr = find(Mode::GuidedNoReplan), ug = find(Mode::Unguided);
    int replans = 0;
    for (const auto& r : rows) replans += r.mode == Mode::Guided ? r.replans : 0;
    const double ratio = g.completion_time.median / nr.completion_time.median;
    const double secs = seconds_since(t0);
    const bool pass = g.collisions.median < ug.collisions.median && ratio <= 1.1 && secs < 600.0;
    return {pass, "median collisions guided " + fmt(g.collisions.median) + " vs unguided " + fmt(ug.collisions.median) +
                      ", median time ratio " + fmt(ratio, 4) + " (" + fmt(g.completion_time.median, 4) + " / " +
                      fmt(nr.completion_time.median, 4) + " s), " + std::to_string(replans) + " replans, " + fmt(secs) +
                      " s"};
}

// ---- replan continuity ----

Outcome continuity_check() {
    std::string detail;
    bool pass = true;
    for (const std::string name : {"maze2d", "pickplace3d", "pole6d"}) {
        const Scenario s = load_scenario(scenario_path(name));
        const GuideMixture mix = plan_scenario(s);
        SessionConfig cfg = preset_for(s.variant);
        cfg.replan_on_defect = false;
        SessionEngine e(s, mix, cfg);
        // Walk a third of the way along the heaviest plan, then probe there.
        Eigen::Index best = 0;
        mix.weights().head(static_cast<Eigen::Index>(mix.components.size())).maxCoeff(&best);
        Vector pose;
        for (int t = 0; t <= 60; ++t) {
            pose = pose_at_phase(mix.components[static_cast<size_t>(best)], t / 180.0).mean;
            e.step(pose, Vector::Zero(s.dof()));
        }
        const Vector before = e.probe_wrench(pose, Vector::Zero(s.dof()));
        const ReplanResult r = learner_replanner(e.config().replan_iterations)(s, pose, 17);
        if (!r.error.empty() || r.plans.empty()) {
            pass = false;
            detail += name + ": replan failed; ";
            continue;
        }
        e.integrate_new_plans(r.plans, ReplanTrigger::Defect, kNewPlanWeight);
        const double jump = (e.probe_wrench(pose, Vector::Zero(s.dof())) - before).norm() / cfg.guidance.tau_max;
        pass = pass && jump <= 0.01;
        detail += name + " " + fmt(100.0 * jump) + "%; ";
    }
    return {pass, "wrench change / tau_max: " + detail.substr(0, detail.size() - 2)};
}

// ---- determinism ----

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome determinism_check(const std::string& cli) {
    const fs::path root = fs::temp_directory_path() / ("mixguide_determinism_" + std::to_string(::getpid()));
    fs::remove_all(root);
    std::string csv[2];
    for (int run = 0; run < 2; ++run) {
        const fs::path out = root / std::to_string(run);
        const std::string cmd = "\"" + cli + "\" simulate --scenario \"" + scenario_path("maze2d") +
                                "\" --mode all --seeds 4 --out \"" + out.string() + "\" > /dev/null 2>&1";
        if (std::system(cmd.c_str()) != 0) {
            fs::remove_all(root);
            return {false, "simulate exited with an error"};
        }
        csv[run] = slurp(out / "episodes.csv") + slurp(out / "summary.csv");
    }
    fs::remove_all(root);
    const bool same = !csv[0].empty() && csv[0] == csv[1];
    return {same, std::string("two simulate runs ") + (same ? "byte-identical" : "DIFFER") + " (" +
                      std::to_string(csv[0].size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <mixguide cli>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"gradient", gradient_check},
        {"shift-fidelity", shift_check},
        {"learner-analytic", learner_check},
        {"maze-multimodality", multimodality_check},
        {"filter-convergence-defection", filter_check},
        {"energy-dissipation", energy_check},
        {"guidance-efficacy", efficacy_check},
        {"replan-continuity", continuity_check},
        {"determinism", [&] { return determinism_check(cli); }},
    };
    int failed = 0;
    for (const auto& [name, fn] : checks) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (checks.size() - static_cast<size_t>(failed)) << "/" << checks.size() << " acceptance criteria met"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
