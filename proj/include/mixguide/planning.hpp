#pragma once

// Scenario-level planning: learner settings from the scenario's "planning"
// section, straight-line seeds toward every target, and the freelance plan.

#include "mixguide/learner.hpp"
#include "mixguide/scenario.hpp"

namespace mixguide {

inline constexpr double kDefaultFreelanceWeight = 0.1;

/// Learner settings for `s`: defaults, then the scenario's overrides.
/// Seeds are straight lines from the scenario start to each target.
LearnerConfig learner_config(const Scenario& s);

double freelance_weight(const Scenario& s);
PoseGaussian scenario_freelance(const Scenario& s);

/// Learn the plan components only (no freelance).
GuideMixture learn_plans(const Scenario& s, const LearnerConfig& cfg, LearnerReport* report = nullptr);

/// Learned plans plus the freelance component.
GuideMixture plan_scenario(const Scenario& s, const LearnerConfig& cfg, LearnerReport* report = nullptr);
GuideMixture plan_scenario(const Scenario& s, LearnerReport* report = nullptr);

Json learner_config_to_json(const LearnerConfig& cfg);
void apply_learner_overrides(LearnerConfig& cfg, const Json& j);

}  // namespace mixguide
