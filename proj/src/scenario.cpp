#include "mixguide/scenario.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace mixguide {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_dim(const Scenario& s, const Vector& pose) {
    if (pose.size() != s.dof()) {
        throw std::domain_error("pose dimension " + std::to_string(pose.size()) +
                                " does not match scenario dof " + std::to_string(s.dof()));
    }
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::PointMaze2D: return "PointMaze2D";
        case Variant::PickPlace3D: return "PickPlace3D";
        case Variant::PoleWindows6D: return "PoleWindows6D";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& s) {
    if (s == "PointMaze2D") return Variant::PointMaze2D;
    if (s == "PickPlace3D") return Variant::PickPlace3D;
    if (s == "PoleWindows6D") return Variant::PoleWindows6D;
    throw std::invalid_argument("unknown scenario variant: " + s);
}

// ---- primitives ----

bool Box::contains(PointRef p) const {
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p[k] < lower[k] || p[k] > upper[k]) return false;
    }
    return true;
}

double Box::outside_distance(PointRef p) const {
    double sq = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double e = std::max({lower[k] - p[k], p[k] - upper[k], 0.0});
        sq += e * e;
    }
    return std::sqrt(sq);
}

double Box::inside_depth(PointRef p) const {
    double depth = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < p.size(); ++k) depth = std::min({depth, p[k] - lower[k], upper[k] - p[k]});
    return depth;
}

double Box::signed_inside(PointRef p) const {
    return contains(p) ? inside_depth(p) : -outside_distance(p);
}

double Cylinder::signed_distance(const Vector& p) const {
    const double radial = std::hypot(p[0] - cx, p[1] - cy) - radius;
    if (p.size() < 3) return radial;
    const double axial = std::max(z_min - p[2], p[2] - z_max);
    const double out = std::hypot(std::max(radial, 0.0), std::max(axial, 0.0));
    return out + std::min(std::max(radial, axial), 0.0);
}

Eigen::Matrix3d euler_zyx(double alpha, double beta, double gamma) {
    return (Eigen::AngleAxisd(alpha, Eigen::Vector3d::UnitZ()) *
            Eigen::AngleAxisd(beta, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(gamma, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

// ---- pole and wall ----

Box PoleWindows6DGeometry::wall_box() const {
    return Box{wall_center - 0.5 * wall_size, wall_center + 0.5 * wall_size};
}

Box PoleWindows6DGeometry::window_prism(const Window& w) const {
    const Box wall = wall_box();
    Vector lo(3), hi(3);
    lo << w.cx - 0.5 * w.size_x, wall.lower[1], w.cz - 0.5 * w.size_z;
    hi << w.cx + 0.5 * w.size_x, wall.upper[1], w.cz + 0.5 * w.size_z;
    return Box{lo, hi};
}

void PoleWindows6DGeometry::rebuild() {
    cells_.clear();
    prisms_.clear();
    const Box wall = wall_box();
    wall_ = wall;
    for (const auto& w : windows) prisms_.push_back(window_prism(w));
    std::set<double> xs{wall.lower[0], wall.upper[0]};
    std::set<double> zs{wall.lower[2], wall.upper[2]};
    for (const auto& w : windows) {
        const Box prism = window_prism(w);
        if (prism.lower[0] < wall.lower[0] || prism.upper[0] > wall.upper[0] ||
            prism.lower[2] < wall.lower[2] || prism.upper[2] > wall.upper[2]) {
            throw std::invalid_argument("window extends beyond the wall");
        }
        xs.insert(prism.lower[0]);
        xs.insert(prism.upper[0]);
        zs.insert(prism.lower[2]);
        zs.insert(prism.upper[2]);
    }
    const std::vector<double> xv(xs.begin(), xs.end());
    const std::vector<double> zv(zs.begin(), zs.end());
    for (size_t i = 0; i + 1 < xv.size(); ++i) {
        for (size_t k = 0; k + 1 < zv.size(); ++k) {
            const double mx = 0.5 * (xv[i] + xv[i + 1]);
            const double mz = 0.5 * (zv[k] + zv[k + 1]);
            bool open = false;
            for (const auto& w : windows) {
                open = open || (std::abs(mx - w.cx) < 0.5 * w.size_x &&
                                std::abs(mz - w.cz) < 0.5 * w.size_z);
            }
            if (open) continue;
            Vector lo(3), hi(3);
            lo << xv[i], wall.lower[1], zv[k];
            hi << xv[i + 1], wall.upper[1], zv[k + 1];
            cells_.push_back(Box{lo, hi});
        }
    }
}

double PoleWindows6DGeometry::point_distance(PointRef p) const {
    bool inside = wall_.contains(p);
    for (const auto& prism : prisms_) inside = inside && !prism.contains(p);
    if (inside) {
        double depth = wall_.inside_depth(p);
        for (const auto& prism : prisms_) depth = std::min(depth, prism.outside_distance(p));
        return -depth;
    }
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : cells_) d = std::min(d, c.outside_distance(p));
    return d;
}

double PoleWindows6DGeometry::pole_distance(const Vector& pose) const {
    const Matrix pts = pole_points(pose);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        // The solid lies inside the wall box, so outside it the box distance
        // bounds the solid distance from below.
        const double outside = wall_.outside_distance(pts.col(i));
        if (outside > 0.0 && outside >= best) continue;
        best = std::min(best, point_distance(pts.col(i)));
    }
    return best;
}

double PoleWindows6DGeometry::pole_distance_bound(const Vector& pose) const {
    return wall_.outside_distance(pose.head<3>()) - 0.5 * pole_length;
}

Matrix PoleWindows6DGeometry::pole_points(const Vector& pose) const {
    const Eigen::Vector3d axis =
        euler_zyx(pose[3], pose[4], pose[5]) * Eigen::Vector3d(pole_axis.head<3>()).normalized();
    const int k = std::max(pole_samples, 2);
    Matrix pts(3, k);
    for (int i = 0; i < k; ++i) {
        const double s = -0.5 + static_cast<double>(i) / static_cast<double>(k - 1);
        pts.col(i) = pose.head<3>() + s * pole_length * axis;
    }
    return pts;
}

// ---- scenario ----

void Scenario::validate() const {
    basis.validate();
    if (!(sigma_sq > 0.0)) throw std::invalid_argument("scenario: sigma_sq must be > 0");
    if (theta.size() != feature_count(variant)) {
        throw std::invalid_argument("scenario: theta length must be " +
                                    std::to_string(feature_count(variant)));
    }
    if (targets.empty()) throw std::invalid_argument("scenario: at least one target required");
    const int want_n = variant == Variant::PointMaze2D ? 2 : variant == Variant::PickPlace3D ? 3 : 6;
    if (basis.n != want_n) throw std::invalid_argument("scenario: basis n does not match variant");
    if (start.size() != want_n) throw std::invalid_argument("scenario: start dimension mismatch");
    for (const auto& t : targets) {
        if (t.size() != want_n) throw std::invalid_argument("scenario: target dimension mismatch");
    }
    if (workspace.lower.size() != want_n || workspace.upper.size() != want_n) {
        throw std::invalid_argument("scenario: workspace bounds must cover every pose dimension");
    }
    if (phases < 1) throw std::invalid_argument("scenario: phases must be >= 1");
    std::visit(Overloaded{
                   [&](const PickPlace3DGeometry& g) {
                       for (const auto& t : targets) {
                           if (!g.workspace.contains(t)) {
                               throw std::invalid_argument("scenario: target outside workspace box");
                           }
                       }
                       for (const auto& c : g.obstacles) {
                           if (!(c.radius > 0.0)) throw std::invalid_argument("cylinder radius must be > 0");
                       }
                   },
                   [&](const PoleWindows6DGeometry& g) {
                       if (!(g.pole_length > 0.0)) throw std::invalid_argument("pole length must be > 0");
                   },
                   [&](const PointMaze2DGeometry&) {},
               },
               geometry);
}

double Scenario::workspace_diameter_sq() const {
    return (workspace.upper - workspace.lower).squaredNorm();
}

int position_dims(Variant v) { return v == Variant::PointMaze2D ? 2 : 3; }

Scenario Scenario::translated(const Vector& offset) const {
    const int k = position_dims(variant);
    if (offset.size() != k) throw std::domain_error("translation offset must cover position dims");
    Scenario out = *this;
    auto shift = [&](Vector& v) { v.head(k) += offset; };
    shift(out.start);
    for (auto& t : out.targets) shift(t);
    shift(out.workspace.lower);
    shift(out.workspace.upper);
    std::visit(Overloaded{
                   [&](PointMaze2DGeometry& g) {
                       shift(g.bounds.lower);
                       shift(g.bounds.upper);
                       for (auto& w : g.walls) {
                           shift(w.lower);
                           shift(w.upper);
                       }
                   },
                   [&](PickPlace3DGeometry& g) {
                       shift(g.workspace.lower);
                       shift(g.workspace.upper);
                       for (auto& c : g.obstacles) {
                           c.cx += offset[0];
                           c.cy += offset[1];
                           c.z_min += offset[2];
                           c.z_max += offset[2];
                       }
                       if (g.basket.size() == 3) g.basket += offset;
                   },
                   [&](PoleWindows6DGeometry& g) {
                       g.wall_center += offset;
                       for (auto& w : g.windows) {
                           w.cx += offset[0];
                           w.cz += offset[2];
                       }
                       g.rebuild();
                   },
               },
               out.geometry);
    return out;
}

Scenario Scenario::with_start(const Vector& anchor) const {
    if (anchor.size() != dof()) throw std::domain_error("anchor dimension mismatch");
    Scenario out = *this;
    out.start = anchor;
    return out;
}

int feature_count(Variant v) {
    switch (v) {
        case Variant::PointMaze2D: return 6;
        case Variant::PickPlace3D: return 7;
        case Variant::PoleWindows6D: return 6;
    }
    return 0;
}

Vector default_theta(Variant v) {
    Vector theta(feature_count(v));
    switch (v) {
        case Variant::PickPlace3D: theta << -5000, -5000, 5000, 5000, -500, -50000, 50; break;
        case Variant::PoleWindows6D: theta << -2.5, -5, 1000, -5, -5, -5; break;
        case Variant::PointMaze2D: theta << -5000, -5000, 5000, 5000, -500, -50000; break;
    }
    return theta;
}

Clearance signed_distance(const Scenario& s, const Vector& pose) {
    require_dim(s, pose);
    Clearance c;
    std::visit(Overloaded{
                   [&](const PointMaze2DGeometry& g) {
                       c.workspace = g.bounds.signed_inside(pose);
                       bool inside = false;
                       double depth = 0.0;
                       double out = std::numeric_limits<double>::infinity();
                       for (const auto& w : g.walls) {
                           if (w.contains(pose)) {
                               inside = true;
                               depth = std::max(depth, w.inside_depth(pose));
                           } else {
                               out = std::min(out, w.outside_distance(pose));
                           }
                       }
                       c.obstacle = inside ? -depth : out;
                   },
                   [&](const PickPlace3DGeometry& g) {
                       c.workspace = g.workspace.signed_inside(pose);
                       for (const auto& cyl : g.obstacles) {
                           c.obstacle = std::min(c.obstacle, cyl.signed_distance(pose));
                       }
                   },
                   [&](const PoleWindows6DGeometry& g) {
                       c.obstacle = g.pole_distance(pose);
                   },
               },
               s.geometry);
    return c;
}

double collision_loglik(double d_min, double sigma_sq) {
    if (!(sigma_sq > 0.0)) throw std::domain_error("collision_loglik: sigma_sq must be > 0");
    const double base = -0.5 * std::log(2.0 * std::numbers::pi * sigma_sq);
    if (d_min >= 0.0) return base;
    return base - d_min * d_min / (2.0 * sigma_sq);
}

double pose_distance_sq(const Scenario& s, const Vector& a, const Vector& b) {
    const Vector diff = a - b;
    if (s.variant != Variant::PoleWindows6D) return diff.squaredNorm();
    const auto& g = std::get<PoleWindows6DGeometry>(s.geometry);
    return diff.head<3>().squaredNorm() + g.angle_weight * diff.tail<3>().squaredNorm();
}

double position_distance(const Scenario& s, const Vector& a, const Vector& b) {
    const int k = position_dims(s.variant);
    return (a.head(k) - b.head(k)).norm();
}

double velocity_sq_sum(const Matrix& traj) {
    const Eigen::Index T = traj.cols();
    if (T < 2) return 0.0;
    double sum = (traj.col(1) - traj.col(0)).squaredNorm();
    sum += (traj.col(T - 1) - traj.col(T - 2)).squaredNorm();
    for (Eigen::Index i = 1; i + 1 < T; ++i) {
        sum += (0.5 * (traj.col(i + 1) - traj.col(i - 1))).squaredNorm();
    }
    return sum;
}

double acceleration_sq_sum(const Matrix& traj) {
    const Eigen::Index T = traj.cols();
    if (T < 3) return 0.0;
    auto second = [&](Eigen::Index i) {
        return (traj.col(i + 1) - 2.0 * traj.col(i) + traj.col(i - 1)).squaredNorm();
    };
    // Endpoints reuse the one-sided stencil of their neighbour.
    double sum = second(1) + second(T - 2);
    for (Eigen::Index i = 1; i + 1 < T; ++i) sum += second(i);
    return sum;
}

namespace {

struct EndpointTerms {
    double start_sq;
    double end_sq;
};

EndpointTerms endpoint_terms(const Matrix& traj, const Scenario& s) {
    EndpointTerms e{pose_distance_sq(s, traj.col(0), s.start),
                    std::numeric_limits<double>::infinity()};
    for (const auto& t : s.targets) e.end_sq = std::min(e.end_sq, pose_distance_sq(s, traj.col(traj.cols() - 1), t));
    return e;
}

void require_traj(const Matrix& traj, const Scenario& s, Variant want, const char* what) {
    if (s.variant != want) throw std::domain_error(std::string(what) + ": wrong scenario variant");
    if (traj.rows() != s.dof() || traj.cols() < 1) {
        throw std::domain_error(std::string(what) + ": trajectory must be n x T");
    }
}

}  // namespace

Vector features_2d(const Matrix& traj, const Scenario& s) {
    require_traj(traj, s, Variant::PointMaze2D, "features_2d");
    const auto ends = endpoint_terms(traj, s);
    double box = std::numeric_limits<double>::infinity();
    double obstacle = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < traj.cols(); ++i) {
        const Clearance c = signed_distance(s, traj.col(i));
        box = std::min(box, c.workspace);
        obstacle = std::min(obstacle, c.obstacle);
    }
    Vector f(6);
    f << ends.start_sq, ends.end_sq, collision_loglik(box - s.collision_margin, s.sigma_sq),
        collision_loglik(obstacle - s.collision_margin, s.sigma_sq), velocity_sq_sum(traj), acceleration_sq_sum(traj);
    return f;
}

Vector features_3d(const Matrix& traj, const Scenario& s) {
    require_traj(traj, s, Variant::PickPlace3D, "features_3d");
    const auto ends = endpoint_terms(traj, s);
    double box = std::numeric_limits<double>::infinity();
    double obstacle = std::numeric_limits<double>::infinity();
    double height = 0.0;
    for (Eigen::Index i = 0; i < traj.cols(); ++i) {
        const Clearance c = signed_distance(s, traj.col(i));
        box = std::min(box, c.workspace);
        obstacle = std::min(obstacle, c.obstacle);
        height += std::min(0.5, traj(2, i));
    }
    Vector f(7);
    f << ends.start_sq, ends.end_sq, collision_loglik(box - s.collision_margin, s.sigma_sq),
        collision_loglik(obstacle - s.collision_margin, s.sigma_sq), velocity_sq_sum(traj), acceleration_sq_sum(traj),
        height;
    return f;
}

Vector features_6d(const Matrix& traj, const Scenario& s) {
    require_traj(traj, s, Variant::PoleWindows6D, "features_6d");
    const auto ends = endpoint_terms(traj, s);
    const auto& g = std::get<PoleWindows6DGeometry>(s.geometry);
    double rotation = 0.0;
    // Visit phases nearest the wall first so distant ones can be skipped.
    std::vector<std::pair<double, Eigen::Index>> order;
    for (Eigen::Index i = 0; i < traj.cols(); ++i) {
        rotation += traj.col(i).tail<3>().squaredNorm();
        order.emplace_back(g.pole_distance_bound(traj.col(i)), i);
    }
    std::sort(order.begin(), order.end());
    double wall = std::numeric_limits<double>::infinity();
    for (const auto& [bound, i] : order) {
        if (bound > 0.0 && bound >= wall) break;
        wall = std::min(wall, g.pole_distance(traj.col(i)));
    }
    Vector f(6);
    f << ends.start_sq, ends.end_sq, collision_loglik(wall - s.collision_margin, s.sigma_sq), velocity_sq_sum(traj),
        acceleration_sq_sum(traj), rotation;
    return f;
}

Vector features(const Matrix& traj, const Scenario& s) {
    switch (s.variant) {
        case Variant::PointMaze2D: return features_2d(traj, s);
        case Variant::PickPlace3D: return features_3d(traj, s);
        case Variant::PoleWindows6D: return features_6d(traj, s);
    }
    throw std::logic_error("unreachable");
}

RewardModel::RewardModel(Scenario s)
    : scenario_(std::move(s)), grid_(scenario_.phases), table_(scenario_.basis, grid_) {
    scenario_.validate();
}

Vector RewardModel::features_of(const Vector& w) const {
    return features(table_.trajectory(w), scenario_);
}

double RewardModel::operator()(const Vector& w) const { return features_of(w).dot(scenario_.theta); }

double episodic_reward(const Scenario& s, const Vector& w) { return RewardModel(s)(w); }

Vector straight_line_weights(const Scenario& s, const Vector& from, const Vector& to) {
    const PhaseGrid grid(std::max(s.phases, s.basis.m + 1));
    Matrix poses(s.dof(), grid.size());
    for (int i = 0; i < grid.size(); ++i) poses.col(i) = from + grid[i] * (to - from);
    return fit_weights(poses, grid, s.basis);
}

// ---- edits ----

void apply_edit(Scenario& s, const EnvEdit& e) {
    using A = EnvEdit::Action;
    if (e.subject == EnvEdit::Subject::Target) {
        auto& t = s.targets;
        if (e.action == A::Add) {
            if (e.position.size() != s.dof()) throw std::domain_error("target dimension mismatch");
            t.push_back(e.position);
        } else {
            if (e.index < 0 || e.index >= static_cast<int>(t.size())) throw std::out_of_range("target index");
            if (e.action == A::Remove) {
                if (t.size() == 1) throw std::invalid_argument("cannot remove the last target");
                t.erase(t.begin() + e.index);
            } else {
                if (e.position.size() != s.dof()) throw std::domain_error("target dimension mismatch");
                t[static_cast<size_t>(e.index)] = e.position;
            }
        }
        return;
    }
    auto check_index = [&](size_t count) {
        if (e.action != A::Add && (e.index < 0 || e.index >= static_cast<int>(count))) {
            throw std::out_of_range("obstacle index");
        }
    };
    std::visit(Overloaded{
                   [&](PointMaze2DGeometry& g) {
                       check_index(g.walls.size());
                       if (e.action == A::Remove) {
                           g.walls.erase(g.walls.begin() + e.index);
                           return;
                       }
                       Vector size = e.size;
                       if (size.size() != 2) {
                           if (e.action == A::Add) throw std::invalid_argument("wall needs a size");
                           size = g.walls[static_cast<size_t>(e.index)].upper -
                                  g.walls[static_cast<size_t>(e.index)].lower;
                       }
                       if (e.position.size() != 2) throw std::domain_error("wall center must be 2D");
                       const Box b{e.position - 0.5 * size, e.position + 0.5 * size};
                       if (e.action == A::Add) g.walls.push_back(b);
                       else g.walls[static_cast<size_t>(e.index)] = b;
                   },
                   [&](PickPlace3DGeometry& g) {
                       check_index(g.obstacles.size());
                       if (e.action == A::Remove) {
                           g.obstacles.erase(g.obstacles.begin() + e.index);
                           return;
                       }
                       Cylinder c = e.action == A::Add ? Cylinder{} : g.obstacles[static_cast<size_t>(e.index)];
                       if (e.position.size() < 2) throw std::domain_error("cylinder center must be x,y");
                       c.cx = e.position[0];
                       c.cy = e.position[1];
                       if (e.size.size() >= 1) c.radius = e.size[0];
                       if (e.action == A::Add) g.obstacles.push_back(c);
                       else g.obstacles[static_cast<size_t>(e.index)] = c;
                   },
                   [&](PoleWindows6DGeometry& g) {
                       check_index(g.windows.size());
                       if (e.action == A::Remove) {
                           g.windows.erase(g.windows.begin() + e.index);
                       } else {
                           Window w = e.action == A::Add ? Window{} : g.windows[static_cast<size_t>(e.index)];
                           if (e.position.size() != 2) throw std::domain_error("window center must be x,z");
                           w.cx = e.position[0];
                           w.cz = e.position[1];
                           if (e.size.size() == 2) {
                               w.size_x = e.size[0];
                               w.size_z = e.size[1];
                           }
                           if (e.action == A::Add) g.windows.push_back(w);
                           else g.windows[static_cast<size_t>(e.index)] = w;
                       }
                       g.rebuild();
                   },
               },
               s.geometry);
}

}  // namespace mixguide
