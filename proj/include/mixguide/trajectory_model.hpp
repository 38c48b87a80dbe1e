#pragma once

// Phase-indexed basis-function trajectories (ProMPs) and the Gaussian
// machinery mapping weight-space distributions to pose-space ones.

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <vector>

namespace mixguide {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Normalized Gaussian radial basis over the phase interval [0, 1].
/// `h` is the basis width in phase units; h = 1 reproduces the
/// classic unit-width formulation.
struct BasisConfig {
    int m = 7;
    int n = 1;
    double h = 1.0;

    [[nodiscard]] int weight_dim() const { return m * n; }
    void validate() const;
    bool operator==(const BasisConfig&) const = default;
};

/// Evenly spaced phases on [0, 1], both endpoints included.
class PhaseGrid {
public:
    explicit PhaseGrid(int count = 20);

    [[nodiscard]] int size() const { return static_cast<int>(values_.size()); }
    [[nodiscard]] double operator[](int i) const { return values_[static_cast<size_t>(i)]; }
    [[nodiscard]] const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> values_;
};

struct PoseGaussian {
    Vector mean;
    Matrix cov;

    [[nodiscard]] int dim() const { return static_cast<int>(mean.size()); }
};

/// Gaussian over stacked basis weights with diagonal covariance.
/// Weights are laid out DoF-major: [w_dof0 (m), w_dof1 (m), ...].
struct ProMP {
    BasisConfig basis;
    Vector mean_w;
    Vector var_w;

    void validate() const;
};

/// A weighted set of plans plus an optional single-phase freelance
/// component. `log_weights` has one entry per component followed by the
/// freelance entry when present.
struct GuideMixture {
    BasisConfig basis;
    std::vector<ProMP> components;
    Vector log_weights;
    std::optional<PoseGaussian> freelance;

    [[nodiscard]] int plan_count() const {
        return static_cast<int>(components.size()) + (freelance ? 1 : 0);
    }
    [[nodiscard]] int freelance_index() const {
        return freelance ? static_cast<int>(components.size()) : -1;
    }
    [[nodiscard]] Vector weights() const { return log_weights.array().exp().matrix(); }
    void validate() const;
};

Vector basis_vector(double phase, const BasisConfig& cfg);

/// n x (m n) block-diagonal basis matrix.
Matrix block_basis(double phase, const BasisConfig& cfg);

PoseGaussian pose_at_phase(const ProMP& p, double phase);

Vector sample_weights(const ProMP& p, Rng& rng);

/// Poses along the grid, one column per phase (n x T).
Matrix trajectory_from_weights(const Vector& w, const PhaseGrid& grid, const BasisConfig& cfg);

/// Basis vectors precomputed at every grid phase. Evaluating many weight
/// vectors on the same grid is the learner's inner loop.
class BasisTable {
public:
    BasisTable(const BasisConfig& cfg, const PhaseGrid& grid);

    [[nodiscard]] Matrix trajectory(const Vector& w) const;
    [[nodiscard]] const Matrix& table() const { return table_; }  // T x m
    [[nodiscard]] const BasisConfig& config() const { return cfg_; }

private:
    BasisConfig cfg_;
    Matrix table_;
};

/// Least-squares weights whose trajectory best fits `poses` (n x T) on `grid`.
Vector fit_weights(const Matrix& poses, const PhaseGrid& grid, const BasisConfig& cfg,
                   double ridge = 1e-9);

/// Freelance component centered in the workspace, variance per axis at
/// least the squared workspace diameter.
PoseGaussian make_freelance(const Vector& lower, const Vector& upper, double scale = 1.0);

/// Renormalize log weights so that their exponentials sum to one.
Vector normalize_log_weights(const Vector& log_w);

double log_sum_exp(const Vector& v);

}  // namespace mixguide
