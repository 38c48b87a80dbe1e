#include "mixguide/intent_filter.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mixguide {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_simplex(const Vector& p, const char* what) {
    if (p.size() == 0 || (p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-10) {
        throw std::domain_error(std::string(what) + " is not a simplex");
    }
}

}  // namespace

void FilterParams::validate() const {
    if (!(p_progress >= 0.0 && p_progress <= 1.0)) throw std::invalid_argument("p_progress must be in [0, 1]");
    if (!(delta_nu >= 0.0)) throw std::invalid_argument("delta_nu must be >= 0");
    if (!(p_switch >= 0.0 && p_switch <= 1.0)) throw std::invalid_argument("p_switch must be in [0, 1]");
    if (!(emission_scale >= 1.0)) throw std::invalid_argument("emission_scale must be >= 1");
}

void BeliefState::validate() const {
    check_simplex(plan, "plan belief");
    if (static_cast<Eigen::Index>(phase.size()) != plan.size()) {
        throw std::domain_error("one phase belief per plan is required");
    }
    for (const auto& p : phase) check_simplex(p, "phase belief");
}

BeliefState BeliefState::initial(const GuideMixture& mix, int phases) {
    BeliefState s;
    s.plan = floor_simplex(mix.weights());
    for (size_t o = 0; o < mix.components.size(); ++o) {
        s.phase.push_back(Vector::Constant(phases, 1.0 / phases));
    }
    if (mix.freelance) s.phase.push_back(Vector::Ones(1));
    return s;
}

Vector floor_simplex(const Vector& p) {
    Vector q = p.cwiseMax(kBeliefFloor);
    return q / q.sum();
}

Vector shift(const Vector& p, double delta_nu) {
    if (!(delta_nu >= 0.0)) throw std::domain_error("shift: delta_nu must be >= 0");
    const auto T = p.size();
    const double whole = std::floor(delta_nu);
    const double frac = delta_nu - whole;
    Vector out = Vector::Zero(T);
    for (Eigen::Index j = 0; j < T; ++j) {
        // Indices past the end saturate; compare in double so huge shifts
        // cannot overflow.
        const auto land = [&](double offset) {
            const double target = static_cast<double>(j) + offset;
            return target >= static_cast<double>(T - 1) ? T - 1 : static_cast<Eigen::Index>(target);
        };
        out[land(whole)] += (1.0 - frac) * p[j];
        if (frac > 0.0) out[land(whole + 1.0)] += frac * p[j];
    }
    return out;
}

Vector phase_prior(const Vector& post_prev, const FilterParams& params) {
    const auto T = post_prev.size();
    return params.p_progress * shift(post_prev, params.delta_nu) +
           Vector::Constant(T, (1.0 - params.p_progress) / static_cast<double>(T));
}

Posterior phase_posterior_log(const Vector& prior, const Vector& log_emissions) {
    if (prior.size() != log_emissions.size()) throw std::domain_error("phase_posterior: length mismatch");
    Vector logs(prior.size());
    for (Eigen::Index i = 0; i < prior.size(); ++i) {
        logs[i] = prior[i] > 0.0 ? std::log(prior[i]) + log_emissions[i] : kNegInf;
    }
    const double z = log_sum_exp(logs);
    if (!std::isfinite(z)) {
        return Posterior{Vector::Constant(prior.size(), 1.0 / static_cast<double>(prior.size())), true};
    }
    return Posterior{(logs.array() - z).exp().matrix(), false};
}

Posterior phase_posterior(const Vector& prior, const Vector& emissions) {
    if ((emissions.array() < 0.0).any()) throw std::domain_error("phase_posterior: negative likelihood");
    return phase_posterior_log(prior, emissions.array().log().matrix());
}

double log_emission(const Vector& x, const CachedGaussian& component, double kappa) {
    return component.log_density(x, kappa);
}

double emission_likelihood(const Vector& x, const CachedGaussian& component, double kappa) {
    return std::exp(log_emission(x, component, kappa));
}

Vector plan_transition(const Vector& p, double p_switch) {
    const auto N = p.size();
    if (p_switch == 0.0) return p;
    if (N < 2) throw std::domain_error("plan_transition: switching needs at least two plans");
    // T p = (1 - p_switch) p + p_switch / (N - 1) (1 - p), entrywise.
    const double total = p.sum();
    const double off = p_switch / static_cast<double>(N - 1);
    return ((1.0 - p_switch) * p.array() + off * (total - p.array())).matrix();
}

Posterior plan_posterior_log(const Vector& prior_plans, const Vector& log_evidence, const Vector& reset_to) {
    if (prior_plans.size() != log_evidence.size()) throw std::domain_error("plan_posterior: length mismatch");
    Vector logs(prior_plans.size());
    for (Eigen::Index o = 0; o < logs.size(); ++o) {
        logs[o] = prior_plans[o] > 0.0 ? std::log(prior_plans[o]) + log_evidence[o] : kNegInf;
    }
    const double z = log_sum_exp(logs);
    if (!std::isfinite(z)) return Posterior{reset_to / reset_to.sum(), true};
    return Posterior{(logs.array() - z).exp().matrix(), false};
}

Posterior plan_posterior(const Vector& prior_plans, const Vector& evidence, const Vector& reset_to) {
    if ((evidence.array() < 0.0).any()) throw std::domain_error("plan_posterior: negative evidence");
    return plan_posterior_log(prior_plans, evidence.array().log().matrix(), reset_to);
}

std::vector<Vector> cue_belief(const BeliefState& state, const FilterParams& params) {
    std::vector<Vector> out;
    out.reserve(state.phase.size());
    for (const auto& p : state.phase) out.push_back(p.size() == 1 ? Vector::Ones(1) : phase_prior(p, params));
    return out;
}

FilterEvents filter_update(BeliefState& state, const MixturePoses& poses, const Vector& x,
                           const FilterParams& params, const Vector& learned_weights) {
    const int K = poses.plan_count();
    if (state.plan.size() != K) throw std::domain_error("filter_update: belief does not match the mixture");
    FilterEvents ev;
    const Vector plan_prior = state.plan.size() > 1 ? plan_transition(state.plan, params.p_switch) : state.plan;
    Vector log_evidence(K);
    for (int o = 0; o < K; ++o) {
        const Vector& post = state.phase[static_cast<size_t>(o)];
        const Vector prior = post.size() == 1 ? post : phase_prior(post, params);
        Vector log_e(prior.size());
        for (int i = 0; i < prior.size(); ++i) log_e[i] = log_emission(x, poses.at(o, i), params.emission_scale);
        Vector joint(prior.size());
        for (int i = 0; i < prior.size(); ++i) joint[i] = prior[i] > 0.0 ? std::log(prior[i]) + log_e[i] : kNegInf;
        log_evidence[o] = log_sum_exp(joint);
        Posterior pp = phase_posterior_log(prior, log_e);
        if (pp.reset) ev.phase_resets.push_back(o);
        state.phase[static_cast<size_t>(o)] = floor_simplex(pp.belief);
    }
    Posterior plan = plan_posterior_log(plan_prior, log_evidence, learned_weights);
    ev.plan_reset = plan.reset;
    state.plan = floor_simplex(plan.belief);
    return ev;
}

}  // namespace mixguide
