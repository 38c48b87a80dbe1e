#pragma once

// Entropy-regularized episodic policy search over a mixture of ProMPs,
// posed as reverse-KL variational inference against exp(r(w)).
//
// Each iteration draws samples from every component, fits a diagonal
// quadratic surrogate of r(w) + log q(o|w) per component, and moves the
// component to the Gaussian maximizing surrogate + entropy inside a KL
// trust region. Mixture weights follow a softmax over per-component
// evidence.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mixguide/trajectory_model.hpp"

namespace mixguide {

using RewardFn = std::function<double(const Vector&)>;

class LearnerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LearnerConfig {
    int n_components = 3;
    int samples_per_component = 0;  // 0 picks 4 d + 1
    int max_iterations = 200;
    double kl_bound = 0.2;
    double ridge = 1e-6;
    double var_floor = 1e-6;
    double var_cap = 100.0;
    double weight_temperature = 1.0;
    std::uint64_t seed = 1;

    // Initialization: component c starts around init_means[c % size]
    // (zero when empty) perturbed with std init_mean_std, in antithetic pairs
    // when init_antithetic is set; variances at init_var_fraction * var_cap.
    std::vector<Vector> init_means;
    double init_mean_std = 0.0;
    double init_var_fraction = 0.1;
    bool init_antithetic = true;

    int max_redraws = 16;

    [[nodiscard]] int samples_for(int weight_dim) const;
    void validate(int weight_dim) const;
};

struct IterationRecord {
    int iteration = 0;
    Vector expected_reward;  // per component, sample mean
    Vector weights;
    Vector kl;  // realized KL(new || old) per component
    std::vector<bool> fallback;
    double entropy = 0.0;
    double objective = 0.0;  // sum_o p(o) E_o[r] + H
};

struct LearnerReport {
    std::vector<IterationRecord> iterations;
    /// iteration,component,expected_reward,entropy,weight,kl
    void write_csv(std::ostream& out) const;
};

struct ComponentUpdate {
    ProMP component;
    double kl = 0.0;
    bool fallback = false;
};

struct VarianceBounds {
    double floor = 1e-6;
    double cap = 100.0;
};

/// One trust-region step of a single component. `samples` holds one weight
/// vector per column, `rewards` the episodic rewards and
/// `log_responsibilities` the log q(o|w) terms of the local objective.
ComponentUpdate component_update(const ProMP& component, const Matrix& samples,
                                 const Vector& rewards, const Vector& log_responsibilities,
                                 double epsilon, const VarianceBounds& bounds, double ridge = 1e-6);

/// Normalized log weights proportional to temperature * evidence.
Vector weight_update(const GuideMixture& mixture, const Vector& evidence, double temperature);

/// Monte-Carlo estimate of the weight-space entropy of the plan components.
double entropy_estimate(const GuideMixture& mixture, int n_samples, Rng& rng);

double diag_gaussian_log_density(const Vector& w, const Vector& mean, const Vector& var);
double diag_gaussian_entropy(const Vector& var);
/// KL(N(m1, diag v1) || N(m0, diag v0)).
double kl_diag_gaussian(const Vector& m1, const Vector& v1, const Vector& m0, const Vector& v0);

/// Log density of the weight-space plan mixture (freelance excluded).
double mixture_log_density(const GuideMixture& mixture, const Vector& w);
/// Plan weights renormalized without the freelance entry.
Vector plan_log_weights(const GuideMixture& mixture);

GuideMixture initial_mixture(const LearnerConfig& cfg, const BasisConfig& basis);

std::pair<GuideMixture, LearnerReport> learn_mixture(const RewardFn& reward, const LearnerConfig& cfg,
                                                     const BasisConfig& basis);
std::pair<GuideMixture, LearnerReport> learn_mixture(const RewardFn& reward, const LearnerConfig& cfg,
                                                     GuideMixture initial);

/// Append the freelance plan with weight `freelance_weight`, scaling the
/// plan weights by (1 - freelance_weight).
GuideMixture attach_freelance(GuideMixture mix, const PoseGaussian& freelance, double freelance_weight);

}  // namespace mixguide
