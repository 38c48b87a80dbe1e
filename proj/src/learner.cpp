#include "mixguide/learner.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace mixguide {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

Vector clamp_var(const Vector& v, const VarianceBounds& b) { return v.cwiseMax(b.floor).cwiseMin(b.cap); }

struct Candidate {
    Vector mean;
    Vector var;
    double kl;
};

/// Smallest step (in the sense of the dual variable) whose clamped result
/// satisfies KL <= epsilon. `at(t)` must approach the old component as t
/// grows and yield the unconstrained optimum at t = t_min.
template <class Fn>
Candidate solve_trust_region(Fn at, double log_lo, double log_hi, double epsilon) {
    Candidate best = at(std::exp(log_hi));
    if (best.kl > epsilon) return best;  // caller falls back to the old component
    Candidate lo = at(std::exp(log_lo));
    if (lo.kl <= epsilon) return lo;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (log_lo + log_hi);
        Candidate c = at(std::exp(mid));
        if (c.kl <= epsilon) {
            log_hi = mid;
            best = std::move(c);
        } else {
            log_lo = mid;
        }
        if (log_hi - log_lo < 1e-9) break;
    }
    return best;
}

}  // namespace

int LearnerConfig::samples_for(int weight_dim) const {
    return samples_per_component > 0 ? samples_per_component : 4 * weight_dim + 1;
}

void LearnerConfig::validate(int weight_dim) const {
    if (n_components < 1) throw std::invalid_argument("learner: n_components must be >= 1");
    if (!(kl_bound > 0.0)) throw std::invalid_argument("learner: kl_bound must be > 0");
    if (!(var_floor > 0.0)) throw std::invalid_argument("learner: var_floor must be > 0");
    if (!(var_cap > var_floor)) throw std::invalid_argument("learner: var_cap must exceed var_floor");
    if (samples_for(weight_dim) < 2 * weight_dim + 1) {
        throw std::invalid_argument("learner: samples_per_component must be >= 2 d + 1");
    }
    if (max_iterations < 0) throw std::invalid_argument("learner: max_iterations must be >= 0");
}

void LearnerReport::write_csv(std::ostream& out) const {
    out << "iteration,component,expected_reward,entropy,weight,kl\n";
    const auto old = out.precision(17);
    for (const auto& rec : iterations) {
        for (Eigen::Index o = 0; o < rec.weights.size(); ++o) {
            out << rec.iteration << ',' << o << ',' << rec.expected_reward[o] << ',' << rec.entropy << ','
                << rec.weights[o] << ',' << rec.kl[o] << '\n';
        }
    }
    out.precision(old);
}

double diag_gaussian_log_density(const Vector& w, const Vector& mean, const Vector& var) {
    const double maha = ((w - mean).array().square() / var.array()).sum();
    return -0.5 * (maha + var.array().log().sum() + static_cast<double>(w.size()) * kLog2Pi);
}

double diag_gaussian_entropy(const Vector& var) {
    return 0.5 * (var.array().log().sum() + static_cast<double>(var.size()) * (kLog2Pi + 1.0));
}

double kl_diag_gaussian(const Vector& m1, const Vector& v1, const Vector& m0, const Vector& v0) {
    const auto ratio = v1.array() / v0.array();
    const double maha = ((m1 - m0).array().square() / v0.array()).sum();
    return 0.5 * ((ratio - 1.0 - ratio.log()).sum() + maha);
}

Vector plan_log_weights(const GuideMixture& mixture) {
    const auto k = static_cast<Eigen::Index>(mixture.components.size());
    return normalize_log_weights(mixture.log_weights.head(k));
}

double mixture_log_density(const GuideMixture& mixture, const Vector& w) {
    const Vector lw = plan_log_weights(mixture);
    Vector terms(lw.size());
    for (Eigen::Index o = 0; o < lw.size(); ++o) {
        const auto& c = mixture.components[static_cast<size_t>(o)];
        terms[o] = lw[o] + diag_gaussian_log_density(w, c.mean_w, c.var_w);
    }
    return log_sum_exp(terms);
}

ComponentUpdate component_update(const ProMP& component, const Matrix& samples, const Vector& rewards,
                                 const Vector& log_responsibilities, double epsilon,
                                 const VarianceBounds& bounds, double ridge) {
    const auto d = component.mean_w.size();
    const auto S = samples.cols();
    if (samples.rows() != d || rewards.size() != S || log_responsibilities.size() != S) {
        throw std::domain_error("component_update: sample shapes do not match");
    }
    if (S < 2 * d + 1) throw std::domain_error("component_update: need at least 2 d + 1 samples");
    if (!(epsilon > 0.0)) return ComponentUpdate{component, 0.0, false};

    const Vector& mu = component.mean_w;
    const Vector& var = component.var_w;
    const Vector sd = var.array().sqrt().matrix();
    const Vector target = rewards + log_responsibilities;

    const double t_mean = target.mean();
    const double t_sd = std::sqrt((target.array() - t_mean).square().mean());

    // Surrogate in standardized coordinates z = (w - mu) / sd:
    //   R ~ c + sum_j g_j z_j + h_j z_j^2
    Vector A = Vector::Zero(d);  // curvature: R ~ -1/2 A (w - mu)^2 + B (w - mu)
    Vector B = Vector::Zero(d);
    if (t_sd > 0.0 && std::isfinite(t_sd)) {
        Matrix X(S, 1 + 2 * d);
        for (Eigen::Index k = 0; k < S; ++k) {
            X(k, 0) = 1.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                const double z = (samples(j, k) - mu[j]) / sd[j];
                X(k, 1 + j) = z;
                X(k, 1 + d + j) = z * z;
            }
        }
        const Vector y = (target.array() - t_mean) / t_sd;
        Matrix gram = X.transpose() * X;
        gram.diagonal().tail(2 * d).array() += ridge * static_cast<double>(S);
        const Vector beta = gram.ldlt().solve(X.transpose() * y);
        for (Eigen::Index j = 0; j < d; ++j) {
            B[j] = t_sd * beta[1 + j] / sd[j];
            A[j] = -2.0 * t_sd * beta[1 + d + j] / var[j];
        }
    }

    const Vector prec = var.cwiseInverse();
    if ((A.array() >= 0.0).all() && A.allFinite() && B.allFinite()) {
        auto at = [&](double eta) {
            const Vector new_prec = eta * prec + A;
            Candidate c;
            c.var = clamp_var(((1.0 + eta) * new_prec.cwiseInverse()), bounds);
            c.mean = mu + (B.array() / new_prec.array()).matrix();
            for (Eigen::Index j = 0; j < d; ++j) {
                if (!std::isfinite(c.mean[j])) c.mean[j] = mu[j];
            }
            c.kl = kl_diag_gaussian(c.mean, c.var, mu, var);
            return c;
        };
        const bool strictly_concave = (A.array() > 0.0).all();
        const double log_lo = strictly_concave ? std::log(1e-14) : std::log(1e-12);
        Candidate c = solve_trust_region(at, log_lo, std::log(1e12), epsilon);
        if (c.kl <= epsilon) return ComponentUpdate{ProMP{component.basis, c.mean, c.var}, c.kl, false};
        return ComponentUpdate{component, 0.0, false};
    }

    // Non-concave surrogate: exponentiated-target weighted moments, pulled
    // back toward the old component until the trust region holds.
    const double temp = t_sd > 0.0 ? t_sd : 1.0;
    Vector u = ((target.array() - target.maxCoeff()) / temp).exp().matrix();
    u /= u.sum();
    const Vector w_mean = samples * u;
    Vector w_var = Vector::Zero(d);
    for (Eigen::Index k = 0; k < S; ++k) w_var += u[k] * (samples.col(k) - w_mean).array().square().matrix();
    w_var = clamp_var(w_var, bounds);
    const Vector prec_f = w_var.cwiseInverse();
    const Vector lin = prec.cwiseProduct(mu);
    const Vector lin_f = prec_f.cwiseProduct(w_mean);
    // t in (0, 1]: t = 1 is the weighted fit, t -> 0 the old component.
    auto at = [&](double s) {
        const double t = 1.0 / (1.0 + s);
        const Vector p = (1.0 - t) * prec + t * prec_f;
        const Vector l = (1.0 - t) * lin + t * lin_f;
        Candidate c;
        c.var = clamp_var(p.cwiseInverse(), bounds);
        c.mean = l.cwiseQuotient(p);
        c.kl = kl_diag_gaussian(c.mean, c.var, mu, var);
        return c;
    };
    Candidate c = solve_trust_region(at, std::log(1e-12), std::log(1e12), epsilon);
    if (c.kl <= epsilon) return ComponentUpdate{ProMP{component.basis, c.mean, c.var}, c.kl, true};
    return ComponentUpdate{component, 0.0, true};
}

Vector weight_update(const GuideMixture& mixture, const Vector& evidence, double temperature) {
    if (evidence.size() != static_cast<Eigen::Index>(mixture.components.size())) {
        throw std::domain_error("weight_update: evidence length must equal the component count");
    }
    if (!evidence.allFinite()) throw std::domain_error("weight_update: evidence must be finite");
    return normalize_log_weights(temperature * evidence);
}

double entropy_estimate(const GuideMixture& mixture, int n_samples, Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("entropy_estimate: n_samples must be >= 1");
    const Vector w = plan_log_weights(mixture).array().exp().matrix();
    std::discrete_distribution<int> pick(w.data(), w.data() + w.size());
    double sum = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        const auto& c = mixture.components[static_cast<size_t>(pick(rng))];
        sum -= mixture_log_density(mixture, sample_weights(c, rng));
    }
    return sum / static_cast<double>(n_samples);
}

GuideMixture initial_mixture(const LearnerConfig& cfg, const BasisConfig& basis) {
    const int d = basis.weight_dim();
    cfg.validate(d);
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    GuideMixture mix;
    mix.basis = basis;
    const double var0 = std::clamp(cfg.init_var_fraction * cfg.var_cap, cfg.var_floor, cfg.var_cap);
    // Antithetic pairs: component 2k+1 mirrors the perturbation of 2k, so
    // paired seeds start on opposite sides of the reference path.
    Vector last_noise;
    for (int o = 0; o < cfg.n_components; ++o) {
        Vector mean = cfg.init_means.empty() ? Vector::Zero(d)
                                             : cfg.init_means[static_cast<size_t>(o) % cfg.init_means.size()];
        if (mean.size() != d) throw std::invalid_argument("learner: init mean has wrong dimension");
        Vector noise(d);
        if (cfg.init_antithetic && o % 2 == 1) {
            noise = -last_noise;
        } else {
            for (Eigen::Index j = 0; j < d; ++j) noise[j] = cfg.init_mean_std * normal(rng);
        }
        last_noise = noise;
        mix.components.push_back(ProMP{basis, mean + noise, Vector::Constant(d, var0)});
    }
    mix.log_weights = Vector::Constant(cfg.n_components, -std::log(static_cast<double>(cfg.n_components)));
    return mix;
}

std::pair<GuideMixture, LearnerReport> learn_mixture(const RewardFn& reward, const LearnerConfig& cfg,
                                                     const BasisConfig& basis) {
    return learn_mixture(reward, cfg, initial_mixture(cfg, basis));
}

std::pair<GuideMixture, LearnerReport> learn_mixture(const RewardFn& reward, const LearnerConfig& cfg,
                                                     GuideMixture mix) {
    const int d = mix.basis.weight_dim();
    cfg.validate(d);
    if (mix.freelance) throw std::invalid_argument("learn_mixture: strip the freelance plan first");
    mix.validate();
    const int K = static_cast<int>(mix.components.size());
    const int S = cfg.samples_for(d);
    const VarianceBounds bounds{cfg.var_floor, cfg.var_cap};
    Rng rng(cfg.seed);
    LearnerReport report;

    std::vector<Matrix> samples(static_cast<size_t>(K));
    std::vector<Vector> rewards(static_cast<size_t>(K));

    for (int it = 0; it < cfg.max_iterations; ++it) {
        // Sampling with rejection of non-finite rewards.
        for (int o = 0; o < K; ++o) {
            const auto& comp = mix.components[static_cast<size_t>(o)];
            Matrix ws(d, S);
            Vector rs(S);
            int kept = 0;
            for (int k = 0; k < S; ++k) {
                for (int attempt = 0; attempt <= cfg.max_redraws; ++attempt) {
                    Vector w = sample_weights(comp, rng);
                    const double r = reward(w);
                    if (std::isfinite(r)) {
                        ws.col(kept) = w;
                        rs[kept] = r;
                        ++kept;
                        break;
                    }
                }
            }
            if (kept == 0) throw LearnerError("learner: every sampled reward was non-finite");
            samples[static_cast<size_t>(o)] = ws.leftCols(kept);
            rewards[static_cast<size_t>(o)] = rs.head(kept);
        }

        const Vector log_w = mix.log_weights;
        IterationRecord rec;
        rec.iteration = it;
        rec.expected_reward = Vector::Zero(K);
        rec.kl = Vector::Zero(K);
        rec.fallback.assign(static_cast<size_t>(K), false);
        Vector evidence(K);
        double entropy = 0.0;
        double expected = 0.0;

        std::vector<ComponentUpdate> updates;
        updates.reserve(static_cast<size_t>(K));
        for (int o = 0; o < K; ++o) {
            const Matrix& ws = samples[static_cast<size_t>(o)];
            const Vector& rs = rewards[static_cast<size_t>(o)];
            const auto& comp = mix.components[static_cast<size_t>(o)];
            Vector log_resp(ws.cols());
            double neg_log_q = 0.0;
            for (Eigen::Index k = 0; k < ws.cols(); ++k) {
                const double log_q = mixture_log_density(mix, ws.col(k));
                log_resp[k] = log_w[o] + diag_gaussian_log_density(ws.col(k), comp.mean_w, comp.var_w) - log_q;
                neg_log_q -= log_q;
            }
            const double p_o = std::exp(log_w[o]);
            const double mean_r = rs.mean();
            rec.expected_reward[o] = mean_r;
            expected += p_o * mean_r;
            entropy += p_o * neg_log_q / static_cast<double>(ws.cols());
            evidence[o] = (rs + log_resp).mean() + diag_gaussian_entropy(comp.var_w);

            if (ws.cols() >= 2 * d + 1) {
                updates.push_back(component_update(comp, ws, rs, log_resp, cfg.kl_bound, bounds, cfg.ridge));
            } else {
                updates.push_back(ComponentUpdate{comp, 0.0, false});
            }
            rec.kl[o] = updates.back().kl;
            rec.fallback[static_cast<size_t>(o)] = updates.back().fallback;
        }
        for (int o = 0; o < K; ++o) mix.components[static_cast<size_t>(o)] = std::move(updates[static_cast<size_t>(o)].component);
        mix.log_weights = weight_update(mix, evidence, cfg.weight_temperature);

        rec.weights = log_w.array().exp().matrix();
        rec.entropy = entropy;
        rec.objective = expected + entropy;
        report.iterations.push_back(std::move(rec));
    }
    return {std::move(mix), std::move(report)};
}

GuideMixture attach_freelance(GuideMixture mix, const PoseGaussian& freelance, double freelance_weight) {
    if (!(freelance_weight > 0.0 && freelance_weight < 1.0)) {
        throw std::invalid_argument("freelance weight must be in (0, 1)");
    }
    const Vector plans = plan_log_weights(mix);
    mix.log_weights.resize(plans.size() + 1);
    mix.log_weights.head(plans.size()) = plans.array() + std::log1p(-freelance_weight);
    mix.log_weights[plans.size()] = std::log(freelance_weight);
    mix.log_weights = normalize_log_weights(mix.log_weights);
    mix.freelance = freelance;
    return mix;
}

}  // namespace mixguide
