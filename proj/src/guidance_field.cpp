#include "mixguide/guidance_field.hpp"

#include <cmath>
#include <stdexcept>

namespace mixguide {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

}  // namespace

CachedGaussian::CachedGaussian(PoseGaussian pg) : g(std::move(pg)) {
    const Eigen::LLT<Matrix> llt(g.cov);
    if (llt.info() != Eigen::Success) throw std::domain_error("pose covariance is not positive definite");
    precision = llt.solve(Matrix::Identity(g.dim(), g.dim()));
    precision = 0.5 * (precision + precision.transpose());
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norm = -0.5 * (static_cast<double>(g.dim()) * kLog2Pi + log_det);
}

double CachedGaussian::log_density(const Vector& x, double cov_scale) const {
    const Vector d = x - g.mean;
    const double maha = d.dot(precision * d);
    return log_norm - 0.5 * static_cast<double>(g.dim()) * std::log(cov_scale) - 0.5 * maha / cov_scale;
}

int MixturePoses::phases(int o) const {
    if (o < static_cast<int>(plans.size())) return static_cast<int>(plans[static_cast<size_t>(o)].size());
    return 1;
}

const CachedGaussian& MixturePoses::at(int o, int i) const {
    if (o < static_cast<int>(plans.size())) return plans[static_cast<size_t>(o)][static_cast<size_t>(i)];
    return freelance.at(0);
}

MixturePoses mixture_poses(const GuideMixture& mix, const PhaseGrid& grid) {
    MixturePoses out;
    out.plans.reserve(mix.components.size());
    for (const auto& c : mix.components) {
        std::vector<CachedGaussian> chain;
        chain.reserve(static_cast<size_t>(grid.size()));
        for (double nu : grid.values()) chain.emplace_back(pose_at_phase(c, nu));
        out.plans.push_back(std::move(chain));
    }
    if (mix.freelance) out.freelance.emplace_back(*mix.freelance);
    return out;
}

void GuidanceParams::validate() const {
    if (!(k_damp >= 0.0)) throw std::invalid_argument("k_damp must be >= 0");
    if (!(tau_max > 0.0)) throw std::invalid_argument("tau_max must be > 0");
    if (!(control_rate > 0.0)) throw std::invalid_argument("control_rate must be > 0");
}

PoseFieldGMM build_pose_field(const MixturePoses& poses, const Vector& plan_belief,
                              const std::vector<Vector>& phase_beliefs) {
    const int K = poses.plan_count();
    if (plan_belief.size() != K || static_cast<int>(phase_beliefs.size()) != K) {
        throw std::domain_error("build_pose_field: belief length does not match the plan count");
    }
    PoseFieldGMM field;
    for (int o = 0; o < K; ++o) {
        const Vector& pb = phase_beliefs[static_cast<size_t>(o)];
        if (pb.size() != poses.phases(o)) throw std::domain_error("build_pose_field: phase belief length mismatch");
        if (plan_belief[o] <= 0.0) continue;
        const double lo = std::log(plan_belief[o]);
        for (int i = 0; i < pb.size(); ++i) {
            if (pb[i] <= 0.0) continue;
            const CachedGaussian& g = poses.at(o, i);
            field.components.push_back(FieldComponent{lo + std::log(pb[i]), &g, o, i});
            field.dim = g.g.dim();
        }
    }
    if (field.components.empty()) throw std::domain_error("build_pose_field: beliefs carry no mass");
    return field;
}

namespace {

Vector component_logs(const PoseFieldGMM& field, const Vector& x) {
    if (x.size() != field.dim) throw std::domain_error("pose dimension does not match the field");
    Vector logs(static_cast<Eigen::Index>(field.components.size()));
    for (size_t c = 0; c < field.components.size(); ++c) {
        const auto& fc = field.components[c];
        logs[static_cast<Eigen::Index>(c)] = fc.log_weight + fc.gaussian->log_density(x);
    }
    return logs;
}

}  // namespace

DensityGrad log_density_and_grad(const PoseFieldGMM& field, const Vector& x) {
    const Vector logs = component_logs(field, x);
    DensityGrad out;
    out.log_p = log_sum_exp(logs);
    out.grad = Vector::Zero(field.dim);
    for (size_t c = 0; c < field.components.size(); ++c) {
        const double r = std::exp(logs[static_cast<Eigen::Index>(c)] - out.log_p);
        if (r == 0.0) continue;
        const auto& g = *field.components[c].gaussian;
        out.grad.noalias() += r * (g.precision * (g.g.mean - x));
    }
    return out;
}

double energy(const PoseFieldGMM& field, const Vector& x) { return -log_sum_exp(component_logs(field, x)); }

Vector responsibilities(const PoseFieldGMM& field, const Vector& x) {
    const Vector logs = component_logs(field, x);
    return (logs.array() - log_sum_exp(logs)).exp().matrix();
}

Vector clip_magnitude(const Vector& v, double cap) {
    const double norm = v.norm();
    if (norm <= cap || norm == 0.0) return v;
    return v * (cap / norm);
}

Vector total_wrench(const PoseFieldGMM& field, const Vector& x, const Vector& xdot, const GuidanceParams& params) {
    if (xdot.size() != x.size()) throw std::domain_error("velocity dimension does not match the pose");
    const DensityGrad dg = log_density_and_grad(field, x);
    return clip_magnitude(dg.grad - params.k_damp * xdot, params.tau_max);
}

namespace {

Ellipse make_ellipse(const PoseGaussian& g, int dims, double weight, int plan, int phase) {
    const int k = std::min(dims, g.dim());
    Ellipse e;
    e.center = g.mean.head(k);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(g.cov.topLeftCorner(k, k));
    e.axes = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    e.weight = weight;
    e.plan = plan;
    e.phase = phase;
    return e;
}

}  // namespace

std::vector<Ellipse> field_ellipses(const PoseFieldGMM& field, int dims) {
    std::vector<Ellipse> out;
    out.reserve(field.components.size());
    for (const auto& c : field.components) {
        out.push_back(make_ellipse(c.gaussian->g, dims, std::exp(c.log_weight), c.plan, c.phase));
    }
    return out;
}

std::vector<std::vector<Ellipse>> guide_chains(const GuideMixture& mix, const PhaseGrid& grid, int dims) {
    std::vector<std::vector<Ellipse>> out;
    const Vector w = mix.weights();
    for (size_t o = 0; o < mix.components.size(); ++o) {
        std::vector<Ellipse> chain;
        for (int i = 0; i < grid.size(); ++i) {
            chain.push_back(make_ellipse(pose_at_phase(mix.components[o], grid[i]), dims,
                                         w[static_cast<Eigen::Index>(o)] / grid.size(), static_cast<int>(o), i));
        }
        out.push_back(std::move(chain));
    }
    return out;
}

Json ellipse_to_json(const Ellipse& e) {
    return Json{{"center", vector_to_json(e.center)},
                {"axes", matrix_to_json(e.axes)},
                {"weight", e.weight},
                {"plan", e.plan},
                {"phase", e.phase}};
}

Json chains_to_json(const std::vector<std::vector<Ellipse>>& chains) {
    Json out = Json::array();
    for (const auto& chain : chains) {
        Json c = Json::array();
        for (const auto& e : chain) c.push_back(ellipse_to_json(e));
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace mixguide
