#include "mixguide/trajectory_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mixguide {

void BasisConfig::validate() const {
    if (m < 1) throw std::invalid_argument("basis: m must be >= 1");
    if (n < 1) throw std::invalid_argument("basis: n must be >= 1");
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("basis: h must be > 0");
}

PhaseGrid::PhaseGrid(int count) {
    if (count < 1) throw std::invalid_argument("phase grid needs at least one phase");
    values_.resize(static_cast<size_t>(count));
    if (count == 1) {
        values_[0] = 1.0;  // a lone phase is the end of the movement
        return;
    }
    for (int i = 0; i < count; ++i) {
        values_[static_cast<size_t>(i)] = static_cast<double>(i) / static_cast<double>(count - 1);
    }
    values_.back() = 1.0;
}

void ProMP::validate() const {
    basis.validate();
    const auto d = static_cast<Eigen::Index>(basis.weight_dim());
    if (mean_w.size() != d || var_w.size() != d) {
        throw std::invalid_argument("ProMP: weight vectors must have length m*n");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        if (!(var_w[i] > 0.0) || !std::isfinite(var_w[i]) || !std::isfinite(mean_w[i])) {
            throw std::invalid_argument("ProMP: variances must be positive and finite");
        }
    }
}

void GuideMixture::validate() const {
    basis.validate();
    for (const auto& c : components) {
        c.validate();
        if (!(c.basis == basis)) throw std::invalid_argument("mixture: component basis mismatch");
    }
    if (log_weights.size() != plan_count()) {
        throw std::invalid_argument("mixture: log_weights length must equal plan count");
    }
    if (plan_count() > 0) {
        const double total = log_weights.array().exp().sum();
        if (std::abs(total - 1.0) > 1e-10) {
            throw std::invalid_argument("mixture: weights must sum to one");
        }
    }
    if (freelance && freelance->dim() != basis.n) {
        throw std::invalid_argument("mixture: freelance dimension mismatch");
    }
}

Vector basis_vector(double phase, const BasisConfig& cfg) {
    cfg.validate();
    if (!(phase >= 0.0 && phase <= 1.0)) {
        throw std::domain_error("basis_vector: phase outside [0, 1]");
    }
    if (cfg.m == 1) return Vector::Ones(1);

    Vector phi(cfg.m);
    // Shift exponents by their maximum so that narrow bases never underflow
    // to an all-zero vector.
    double max_exponent = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cfg.m; ++c) {
        const double center = static_cast<double>(c) / static_cast<double>(cfg.m - 1);
        const double z = (phase - center) / cfg.h;
        phi[c] = -0.5 * z * z;
        max_exponent = std::max(max_exponent, phi[c]);
    }
    phi = (phi.array() - max_exponent).exp().matrix();
    return phi / phi.sum();
}

Matrix block_basis(double phase, const BasisConfig& cfg) {
    const Vector phi = basis_vector(phase, cfg);
    Matrix out = Matrix::Zero(cfg.n, cfg.weight_dim());
    for (int d = 0; d < cfg.n; ++d) out.block(d, d * cfg.m, 1, cfg.m) = phi.transpose();
    return out;
}

PoseGaussian pose_at_phase(const ProMP& p, double phase) {
    const Vector phi = basis_vector(phase, p.basis);
    const int m = p.basis.m;
    PoseGaussian g{Vector(p.basis.n), Matrix::Zero(p.basis.n, p.basis.n)};
    const Vector phi_sq = phi.array().square().matrix();
    for (int d = 0; d < p.basis.n; ++d) {
        g.mean[d] = phi.dot(p.mean_w.segment(d * m, m));
        g.cov(d, d) = phi_sq.dot(p.var_w.segment(d * m, m));
    }
    return g;
}

Vector sample_weights(const ProMP& p, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector w(p.mean_w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w[i] = p.mean_w[i] + std::sqrt(p.var_w[i]) * normal(rng);
    }
    return w;
}

Matrix trajectory_from_weights(const Vector& w, const PhaseGrid& grid, const BasisConfig& cfg) {
    return BasisTable(cfg, grid).trajectory(w);
}

BasisTable::BasisTable(const BasisConfig& cfg, const PhaseGrid& grid) : cfg_(cfg) {
    cfg.validate();
    table_.resize(grid.size(), cfg.m);
    for (int i = 0; i < grid.size(); ++i) table_.row(i) = basis_vector(grid[i], cfg).transpose();
}

Matrix BasisTable::trajectory(const Vector& w) const {
    if (w.size() != cfg_.weight_dim()) {
        throw std::domain_error("trajectory: weight vector length " + std::to_string(w.size()) +
                                " != m*n = " + std::to_string(cfg_.weight_dim()));
    }
    // Column-major map: column d holds the m weights of DoF d.
    const Eigen::Map<const Matrix> per_dof(w.data(), cfg_.m, cfg_.n);
    return (table_ * per_dof).transpose();
}

Vector fit_weights(const Matrix& poses, const PhaseGrid& grid, const BasisConfig& cfg,
                   double ridge) {
    const BasisTable table(cfg, grid);
    const Matrix& B = table.table();
    if (poses.cols() != grid.size() || poses.rows() != cfg.n) {
        throw std::domain_error("fit_weights: poses must be n x T");
    }
    Matrix gram = B.transpose() * B;
    gram.diagonal().array() += ridge;
    const Eigen::LDLT<Matrix> solver(gram);
    Vector w(cfg.weight_dim());
    for (int d = 0; d < cfg.n; ++d) {
        w.segment(d * cfg.m, cfg.m) = solver.solve(B.transpose() * poses.row(d).transpose());
    }
    return w;
}

PoseGaussian make_freelance(const Vector& lower, const Vector& upper, double scale) {
    const Vector extent = upper - lower;
    const double diameter_sq = extent.squaredNorm();
    PoseGaussian g;
    g.mean = 0.5 * (lower + upper);
    g.cov = Matrix::Identity(lower.size(), lower.size()) * (diameter_sq * std::max(scale, 1.0));
    return g;
}

double log_sum_exp(const Vector& v) {
    if (v.size() == 0) return -std::numeric_limits<double>::infinity();
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((v.array() - mx).exp().sum());
}

Vector normalize_log_weights(const Vector& log_w) {
    return (log_w.array() - log_sum_exp(log_w)).matrix();
}

}  // namespace mixguide
