#include "mixguide/planning.hpp"

namespace mixguide {

void apply_learner_overrides(LearnerConfig& cfg, const Json& j) {
    cfg.n_components = j.value("n_components", cfg.n_components);
    cfg.samples_per_component = j.value("samples_per_component", cfg.samples_per_component);
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.kl_bound = j.value("kl_bound", cfg.kl_bound);
    cfg.ridge = j.value("ridge", cfg.ridge);
    cfg.var_floor = j.value("var_floor", cfg.var_floor);
    cfg.var_cap = j.value("var_cap", cfg.var_cap);
    cfg.weight_temperature = j.value("weight_temperature", cfg.weight_temperature);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.init_mean_std = j.value("init_mean_std", cfg.init_mean_std);
    cfg.init_var_fraction = j.value("init_var_fraction", cfg.init_var_fraction);
    cfg.init_antithetic = j.value("init_antithetic", cfg.init_antithetic);
    cfg.max_redraws = j.value("max_redraws", cfg.max_redraws);
}

Json learner_config_to_json(const LearnerConfig& cfg) {
    return Json{{"n_components", cfg.n_components},
                {"samples_per_component", cfg.samples_per_component},
                {"max_iterations", cfg.max_iterations},
                {"kl_bound", cfg.kl_bound},
                {"ridge", cfg.ridge},
                {"var_floor", cfg.var_floor},
                {"var_cap", cfg.var_cap},
                {"weight_temperature", cfg.weight_temperature},
                {"seed", cfg.seed},
                {"init_mean_std", cfg.init_mean_std},
                {"init_var_fraction", cfg.init_var_fraction},
                {"init_antithetic", cfg.init_antithetic},
                {"max_redraws", cfg.max_redraws}};
}

LearnerConfig learner_config(const Scenario& s) {
    LearnerConfig cfg;
    cfg.var_cap = s.workspace_diameter_sq();
    cfg.init_mean_std = 1.0;
    apply_learner_overrides(cfg, s.planning.value("learner", Json::object()));
    cfg.init_means.clear();
    for (const auto& t : s.targets) cfg.init_means.push_back(straight_line_weights(s, s.start, t));
    return cfg;
}

double freelance_weight(const Scenario& s) { return s.planning.value("freelance_weight", kDefaultFreelanceWeight); }

PoseGaussian scenario_freelance(const Scenario& s) { return make_freelance(s.workspace.lower, s.workspace.upper); }

GuideMixture learn_plans(const Scenario& s, const LearnerConfig& cfg, LearnerReport* report) {
    const RewardModel reward(s);
    auto [mix, rep] = learn_mixture([&reward](const Vector& w) { return reward(w); }, cfg, s.basis);
    if (report) *report = std::move(rep);
    return mix;
}

GuideMixture plan_scenario(const Scenario& s, const LearnerConfig& cfg, LearnerReport* report) {
    return attach_freelance(learn_plans(s, cfg, report), scenario_freelance(s), freelance_weight(s));
}

GuideMixture plan_scenario(const Scenario& s, LearnerReport* report) {
    return plan_scenario(s, learner_config(s), report);
}

}  // namespace mixguide
