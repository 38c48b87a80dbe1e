#pragma once

// HMM over (plan, phase). The operator either progresses along the phase
// grid or resets, and switches plans with a tiny probability. Emission
// covariances are inflated so the belief does not lock in too fast.

#include <vector>

#include "mixguide/guidance_field.hpp"
#include "mixguide/trajectory_model.hpp"

namespace mixguide {

struct FilterParams {
    double p_progress = 0.8;
    double delta_nu = 0.0;  // phase-index units
    double p_switch = 1e-20;
    double emission_scale = 25.0;

    void validate() const;
};

/// Probability floor applied to every belief entry before renormalizing.
inline constexpr double kBeliefFloor = 1e-12;

struct BeliefState {
    Vector plan;                // over plans, freelance last when present
    std::vector<Vector> phase;  // per plan; freelance has length 1

    void validate() const;
    /// Plan belief from mixture weights, uniform phases.
    static BeliefState initial(const GuideMixture& mix, int phases);
};

/// Move mass forward by delta_nu phase steps, splitting fractional shifts
/// between neighbours and piling overflow onto the last phase.
Vector shift(const Vector& p, double delta_nu);

Vector phase_prior(const Vector& post_prev, const FilterParams& params);

struct Posterior {
    Vector belief;
    bool reset = false;  // all-zero product; belief fell back to a default
};

/// prior .* likelihood, renormalized. Likelihoods are linear.
Posterior phase_posterior(const Vector& prior, const Vector& emissions);
/// Same, with log-likelihoods.
Posterior phase_posterior_log(const Vector& prior, const Vector& log_emissions);

double emission_likelihood(const Vector& x, const CachedGaussian& component, double kappa);
double log_emission(const Vector& x, const CachedGaussian& component, double kappa);

Vector plan_transition(const Vector& p, double p_switch);

/// Falls back to `reset_to` when every evidence term is zero.
Posterior plan_posterior(const Vector& prior_plans, const Vector& evidence, const Vector& reset_to);
Posterior plan_posterior_log(const Vector& prior_plans, const Vector& log_evidence, const Vector& reset_to);

/// One-step-ahead phase prior of each plan; used for haptic cues.
std::vector<Vector> cue_belief(const BeliefState& state, const FilterParams& params);

/// Floor at kBeliefFloor and renormalize.
Vector floor_simplex(const Vector& p);

struct FilterEvents {
    std::vector<int> phase_resets;  // plans whose phase belief was reset
    bool plan_reset = false;
};

/// Full tick of the filter: plan transition, phase priors, emissions at x,
/// posteriors. `learned_weights` is the plan-belief reset target.
FilterEvents filter_update(BeliefState& state, const MixturePoses& poses, const Vector& x,
                           const FilterParams& params, const Vector& learned_weights);

}  // namespace mixguide
