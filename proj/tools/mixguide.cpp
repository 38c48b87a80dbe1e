// mixguide: plan, simulate, serve and replay from the command line.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "mixguide/harness.hpp"
#include "mixguide/mixture_io.hpp"
#include "mixguide/service.hpp"

using namespace mixguide;
namespace fs = std::filesystem;

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

GuideMixture load_or_learn(const Scenario& s, const std::string& mixture_path) {
    if (!mixture_path.empty()) return load_mixture(mixture_path);
    std::cerr << "no --mixture given; learning one for " << s.name << "\n";
    return plan_scenario(s);
}

SessionConfig session_config(const Scenario& s, const std::string& preset_name, double tau_max) {
    SessionConfig cfg = preset_name.empty() ? preset_for(s.variant) : preset(preset_name);
    if (tau_max > 0.0) cfg.guidance.tau_max = tau_max;
    return cfg;
}

std::vector<Mode> parse_modes(const std::string& m) {
    if (m == "all") return {Mode::Guided, Mode::GuidedNoReplan, Mode::Unguided};
    if (m == "compare") return {Mode::Guided, Mode::Unguided};
    return {mode_from_string(m)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture-of-plans haptic guidance"};
    app.require_subcommand(1);

    std::string scenario_path, mixture_path, out, preset_name, mode = "guided", operator_kind = "plan-follower",
                                                              frames_path, host = "127.0.0.1";
    int seeds = 1, port = -1, seed = 1, plan_index = -1;
    double noise = 0.3, speed = 0.05, tau_max = 0.0, timeout = 60.0;
    bool frame_log = false;

    auto* plan = app.add_subcommand("plan", "learn a mixture for a scenario");
    plan->add_option("--scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
    plan->add_option("--out", out, "mixture file to write")->required();
    plan->add_option("--seed", seed, "learner seed");
    std::string report_path;
    plan->add_option("--report", report_path, "per-iteration learner CSV");

    auto* sim = app.add_subcommand("simulate", "run scripted-operator episodes");
    sim->add_option("--scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
    sim->add_option("--mixture", mixture_path, "mixture file (learned when omitted)")->check(CLI::ExistingFile);
    sim->add_option("--mode", mode, "guided, guided-no-replan, unguided, compare or all");
    sim->add_option("--seeds", seeds, "episodes per mode (seeds 1..N)")->check(CLI::PositiveNumber);
    sim->add_option("--out", out, "output directory")->required();
    sim->add_option("--preset", preset_name, "parameter preset")
        ->check(CLI::IsMember({"pickplace3d", "pole6d", "maze2d"}));
    sim->add_option("--operator", operator_kind, "plan-follower, defector, passive or wanderer");
    sim->add_option("--plan", plan_index, "plan the operator follows (default: heaviest)");
    sim->add_option("--noise", noise, "operator aim drift per sqrt(second)");
    sim->add_option("--speed", speed, "operator phase rate per second");
    sim->add_option("--tau-max", tau_max, "override the wrench cap");
    sim->add_option("--timeout", timeout, "simulated seconds per episode");
    sim->add_flag("--frame-log", frame_log, "write frames of the first guided episode");

    auto* serve = app.add_subcommand("serve", "run the guidance service");
    serve->add_option("--scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
    serve->add_option("--mixture", mixture_path, "mixture file (learned when omitted)")->check(CLI::ExistingFile);
    serve->add_option("--preset", preset_name, "parameter preset")
        ->check(CLI::IsMember({"pickplace3d", "pole6d", "maze2d"}));
    serve->add_option("--port", port, std::string("listen port (default $") + kPortEnv + " or " +
                                          std::to_string(kDefaultPort) + ")");
    serve->add_option("--host", host, "listen address");
    serve->add_option("--tau-max", tau_max, "override the wrench cap");

    auto* replay = app.add_subcommand("replay", "export guides and beliefs from a frame log");
    replay->add_option("--frames", frames_path, "frame log (NDJSON)")->required()->check(CLI::ExistingFile);
    replay->add_option("--out", out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plan) {
            const Scenario s = load_scenario(scenario_path);
            LearnerConfig cfg = learner_config(s);
            cfg.seed = static_cast<std::uint64_t>(seed);
            LearnerReport report;
            const GuideMixture mix = plan_scenario(s, cfg, &report);
            save_mixture(mix, out);
            if (!report_path.empty()) {
                std::ofstream r(report_path);
                report.write_csv(r);
            }
            std::cout << "wrote " << out << " (" << mix.components.size() << " plans)\n";
        } else if (*sim) {
            const Scenario s = load_scenario(scenario_path);
            const GuideMixture mix = load_or_learn(s, mixture_path);
            OperatorScript op;
            op.kind = operator_kind_from_string(operator_kind);
            op.plan = plan_index;
            op.noise = noise;
            op.speed = speed;
            EpisodeOptions opts;
            opts.timeout_s = timeout;
            opts.session = session_config(s, preset_name, tau_max);
            fs::create_directories(out);

            const auto modes = parse_modes(mode);
            if (frame_log) {
                const Mode first = modes.front() == Mode::Unguided ? Mode::Guided : modes.front();
                std::ofstream frames(fs::path(out) / "frames.ndjson");
                EpisodeOptions logged = opts;
                logged.frame_log = &frames;
                run_episode(s, mix, op, first, 1, logged);
            }
            const auto rows = batch_compare(s, mix, op, modes, seeds, opts);
            std::ofstream csv(fs::path(out) / "episodes.csv");
            write_batch_csv(rows, csv);
            csv.close();
            emit_plots(rows, out);
            for (const auto& m : summarize(rows)) {
                std::cout << to_string(m.mode) << ": median collisions " << m.collisions.median
                          << ", median time " << m.completion_time.median << " s over " << m.count << " episodes\n";
            }
        } else if (*serve) {
            const Scenario s = load_scenario(scenario_path);
            const GuideMixture mix = load_or_learn(s, mixture_path);
            ServerOptions so;
            so.host = host;
            so.port = port >= 0 ? port : port_from_env();
            TeleopServer server(s, mix, session_config(s, preset_name, tau_max), so);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            const int bound = server.start();
            std::cout << "listening on " << host << ":" << bound << std::endl;
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
        } else if (*replay) {
            std::ifstream in(frames_path);
            const auto frames = read_frame_log(in);
            fs::create_directories(out);
            std::ofstream ell(fs::path(out) / "ellipses.csv");
            const int n = export_ellipses(frames, ell);
            std::ofstream bel(fs::path(out) / "beliefs.csv");
            bel << "tick,plan_id,belief\n";
            for (const auto& f : frames) {
                const auto& ids = f.at("plan_ids");
                const auto& b = f.at("plan_belief");
                for (size_t i = 0; i < ids.size(); ++i) bel << f.at("tick") << ',' << ids[i] << ',' << b[i] << '\n';
            }
            std::cout << frames.size() << " frames, " << n << " ellipses\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
