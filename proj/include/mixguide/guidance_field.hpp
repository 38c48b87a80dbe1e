#pragma once

// Pose-space potential field: the marginal GMM over (plan, phase), its log
// density, score and responsibilities, and the damped guidance wrench.

#include <vector>

#include "mixguide/mixture_io.hpp"
#include "mixguide/trajectory_model.hpp"

namespace mixguide {

/// A pose Gaussian with its precision and normalizer precomputed.
struct CachedGaussian {
    PoseGaussian g;
    Matrix precision;
    double log_norm = 0.0;  // -1/2 (n log 2pi + log det cov)

    explicit CachedGaussian(PoseGaussian pg);
    CachedGaussian() = default;

    [[nodiscard]] double log_density(const Vector& x, double cov_scale = 1.0) const;
};

/// Pose Gaussians of every (plan, phase) pair plus the freelance
/// component. Depends only on the mixture and grid, so it is rebuilt on
/// mixture changes rather than every tick.
struct MixturePoses {
    std::vector<std::vector<CachedGaussian>> plans;  // [o][i]
    std::vector<CachedGaussian> freelance;           // zero or one entry

    [[nodiscard]] int plan_count() const { return static_cast<int>(plans.size() + freelance.size()); }
    /// Phase count of plan o (1 for freelance).
    [[nodiscard]] int phases(int o) const;
    [[nodiscard]] const CachedGaussian& at(int o, int i) const;
};

MixturePoses mixture_poses(const GuideMixture& mix, const PhaseGrid& grid);

struct FieldComponent {
    double log_weight = 0.0;
    const CachedGaussian* gaussian = nullptr;
    int plan = 0;
    int phase = 0;
};

/// Marginal GMM snapshot. Holds pointers into a MixturePoses, which must
/// outlive it.
struct PoseFieldGMM {
    std::vector<FieldComponent> components;
    int dim = 0;
};

struct GuidanceParams {
    double k_damp = 2.0;
    double tau_max = 10.0;
    double control_rate = 100.0;

    void validate() const;
};

struct DensityGrad {
    double log_p = 0.0;
    Vector grad;
};

PoseFieldGMM build_pose_field(const MixturePoses& poses, const Vector& plan_belief,
                              const std::vector<Vector>& phase_beliefs);

DensityGrad log_density_and_grad(const PoseFieldGMM& field, const Vector& x);
/// Energy E(x) = -log p(x).
double energy(const PoseFieldGMM& field, const Vector& x);
/// p(o, nu_i | x), aligned with field.components.
Vector responsibilities(const PoseFieldGMM& field, const Vector& x);

Vector clip_magnitude(const Vector& v, double cap);
/// grad log p(x) - k_damp xdot, clipped to tau_max.
Vector total_wrench(const PoseFieldGMM& field, const Vector& x, const Vector& xdot, const GuidanceParams& params);

/// One-sigma ellipse of a pose Gaussian restricted to its first `dims`
/// coordinates: center, principal semi-axes (columns) and weight.
struct Ellipse {
    Vector center;
    Matrix axes;
    double weight = 0.0;
    int plan = 0;
    int phase = 0;
};

std::vector<Ellipse> field_ellipses(const PoseFieldGMM& field, int dims);
/// Ellipse chains of every plan (uniform phase weights), freelance excluded.
std::vector<std::vector<Ellipse>> guide_chains(const GuideMixture& mix, const PhaseGrid& grid, int dims);

Json ellipse_to_json(const Ellipse& e);
Json chains_to_json(const std::vector<std::vector<Ellipse>>& chains);

}  // namespace mixguide
