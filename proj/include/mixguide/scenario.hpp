#pragma once

// Task scenarios: geometry, signed distances, trajectory features and the
// episodic reward r(w) = psi(x_w)^T theta.

#include <algorithm>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "mixguide/mixture_io.hpp"
#include "mixguide/trajectory_model.hpp"

namespace mixguide {

enum class Variant { PointMaze2D, PickPlace3D, PoleWindows6D };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

using PointRef = const Eigen::Ref<const Vector>&;

/// Axis-aligned box of any dimension.
struct Box {
    Vector lower;
    Vector upper;

    [[nodiscard]] Vector center() const { return 0.5 * (lower + upper); }
    [[nodiscard]] bool contains(PointRef p) const;
    /// Euclidean distance from p to the box, zero inside.
    [[nodiscard]] double outside_distance(PointRef p) const;
    /// Distance from an interior point to the nearest face.
    [[nodiscard]] double inside_depth(PointRef p) const;
    /// Positive inside, negative outside.
    [[nodiscard]] double signed_inside(PointRef p) const;
};

/// Vertical capped cylinder (a can standing on the table).
struct Cylinder {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.05;
    double z_min = -1e3;
    double z_max = 1e3;

    /// Positive outside, negative inside.
    [[nodiscard]] double signed_distance(const Vector& p) const;
};

struct PointMaze2DGeometry {
    Box bounds;
    std::vector<Box> walls;
};

struct PickPlace3DGeometry {
    Box workspace;
    std::vector<Cylinder> obstacles;
    Vector basket;
};

struct Window {
    double cx = 0.0;  // x of the opening center
    double cz = 0.0;  // z of the opening center
    double size_x = 2.0;
    double size_z = 2.0;
};

struct PoleWindows6DGeometry {
    Vector wall_center;  // 3
    Vector wall_size;    // 3: x extent, y thickness, z extent
    std::vector<Window> windows;
    double pole_length = 2.0;
    Vector pole_axis;  // body-frame direction of the pole
    int pole_samples = 32;
    double angle_weight = 1.0;

    [[nodiscard]] Box wall_box() const;
    [[nodiscard]] Box window_prism(const Window& w) const;
    /// Wall minus openings as a union of disjoint boxes. Call after edits.
    void rebuild();
    [[nodiscard]] const std::vector<Box>& solid_cells() const { return cells_; }

    /// Signed distance from a point to the wall solid, negative inside.
    [[nodiscard]] double point_distance(PointRef p) const;
    /// Minimum signed distance over the pole's sample points.
    [[nodiscard]] double pole_distance(const Vector& pose) const;
    /// Lower bound on pole_distance when positive (center distance to the
    /// wall box minus half the pole).
    [[nodiscard]] double pole_distance_bound(const Vector& pose) const;
    /// Sample points along the pole for pose (x, y, z, yaw, pitch, roll).
    [[nodiscard]] Matrix pole_points(const Vector& pose) const;  // 3 x samples

private:
    std::vector<Box> cells_;
    Box wall_;
    std::vector<Box> prisms_;
};

/// Intrinsic Z-Y-X rotation: R = Rz(alpha) Ry(beta) Rx(gamma).
Eigen::Matrix3d euler_zyx(double alpha, double beta, double gamma);

using Geometry = std::variant<PointMaze2DGeometry, PickPlace3DGeometry, PoleWindows6DGeometry>;

struct Scenario {
    std::string name;
    Variant variant = Variant::PointMaze2D;
    Geometry geometry;
    Vector theta;
    Vector start;
    std::vector<Vector> targets;
    double sigma_sq = 2.0;
    BasisConfig basis;
    int phases = 20;
    Box workspace;  // pose-space bounds used for the freelance plan and variance cap
    double completion_radius = 0.5;
    // Clearance the reward asks for beyond contact (agent body radius).
    double collision_margin = 0.0;
    // Planner overrides (learner settings, freelance weight); kept as a
    // document so the scenario layer stays independent of the learner.
    Json planning = Json::object();

    [[nodiscard]] int dof() const { return basis.n; }
    void validate() const;
    [[nodiscard]] double workspace_diameter_sq() const;
    /// Copy with the position coordinates (and geometry) shifted by `offset`.
    [[nodiscard]] Scenario translated(const Vector& offset) const;
    [[nodiscard]] Scenario with_start(const Vector& anchor) const;
};

int feature_count(Variant v);
Vector default_theta(Variant v);

struct Clearance {
    double workspace = std::numeric_limits<double>::infinity();
    double obstacle = std::numeric_limits<double>::infinity();
    [[nodiscard]] double min() const { return std::min(workspace, obstacle); }
};

/// Signed clearance of a pose; workspace is positive inside the bounds,
/// obstacle is positive in free space.
Clearance signed_distance(const Scenario& s, const Vector& pose);

double collision_loglik(double d_min, double sigma_sq);

/// Squared pose distance; 6D poses weight radians against meters by the
/// scenario's angle weight.
double pose_distance_sq(const Scenario& s, const Vector& a, const Vector& b);
/// Distance between the position parts of two poses.
double position_distance(const Scenario& s, const Vector& a, const Vector& b);
int position_dims(Variant v);

Vector features_2d(const Matrix& traj, const Scenario& s);
Vector features_3d(const Matrix& traj, const Scenario& s);
Vector features_6d(const Matrix& traj, const Scenario& s);
Vector features(const Matrix& traj, const Scenario& s);

/// Sum of squared first and second differences over the phase grid
/// (unit step per phase index).
double velocity_sq_sum(const Matrix& traj);
double acceleration_sq_sum(const Matrix& traj);

/// Episodic reward with the basis table cached for repeated queries.
class RewardModel {
public:
    explicit RewardModel(Scenario s);

    [[nodiscard]] double operator()(const Vector& w) const;
    [[nodiscard]] Vector features_of(const Vector& w) const;
    [[nodiscard]] Matrix trajectory(const Vector& w) const { return table_.trajectory(w); }
    [[nodiscard]] const Scenario& scenario() const { return scenario_; }

private:
    Scenario scenario_;
    PhaseGrid grid_;
    BasisTable table_;
};

double episodic_reward(const Scenario& s, const Vector& w);

/// Straight line from `from` to `to` fitted onto the basis.
Vector straight_line_weights(const Scenario& s, const Vector& from, const Vector& to);

// Environment edits (obstacles are walls, cylinders or windows depending on
// the variant).
struct EnvEdit {
    enum class Action { Move, Add, Remove };
    enum class Subject { Obstacle, Target };
    Action action = Action::Move;
    Subject subject = Subject::Obstacle;
    int index = 0;
    Vector position;  // new center
    Vector size;      // extents (walls, windows) or radius (cylinders)
};

void apply_edit(Scenario& s, const EnvEdit& edit);
EnvEdit edit_from_json(const Json& j);
Json edit_to_json(const EnvEdit& e);

Json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);
Scenario load_scenario(const std::string& path);
/// Geometry-only document for clients (walls, obstacles, targets, start).
Json scenario_geometry_json(const Scenario& s);

}  // namespace mixguide
