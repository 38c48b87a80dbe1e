#include <stdexcept>

#include "mixguide/scenario.hpp"

namespace mixguide {

namespace {

Json box_to_json(const Box& b) {
    return Json{{"lower", vector_to_json(b.lower)}, {"upper", vector_to_json(b.upper)}};
}

Box box_from_json(const Json& j) {
    Box b{vector_from_json(j.at("lower")), vector_from_json(j.at("upper"))};
    if (b.lower.size() != b.upper.size() || ((b.upper - b.lower).array() < 0.0).any()) {
        throw std::invalid_argument("box: lower must not exceed upper");
    }
    return b;
}

Json geometry_to_json(const Scenario& s) {
    Json g;
    if (const auto* maze = std::get_if<PointMaze2DGeometry>(&s.geometry)) {
        g["bounds"] = box_to_json(maze->bounds);
        g["walls"] = Json::array();
        for (const auto& w : maze->walls) g["walls"].push_back(box_to_json(w));
    } else if (const auto* pp = std::get_if<PickPlace3DGeometry>(&s.geometry)) {
        g["workspace"] = box_to_json(pp->workspace);
        g["obstacles"] = Json::array();
        for (const auto& c : pp->obstacles) {
            g["obstacles"].push_back(Json{{"center", {c.cx, c.cy}},
                                          {"radius", c.radius},
                                          {"z_min", c.z_min},
                                          {"z_max", c.z_max}});
        }
        g["basket"] = vector_to_json(pp->basket);
    } else {
        const auto& pole = std::get<PoleWindows6DGeometry>(s.geometry);
        g["wall"] = Json{{"center", vector_to_json(pole.wall_center)}, {"size", vector_to_json(pole.wall_size)}};
        g["windows"] = Json::array();
        for (const auto& w : pole.windows) {
            g["windows"].push_back(Json{{"center", {w.cx, w.cz}}, {"size", {w.size_x, w.size_z}}});
        }
        g["pole_length"] = pole.pole_length;
        g["pole_axis"] = vector_to_json(pole.pole_axis);
        g["pole_samples"] = pole.pole_samples;
        g["angle_weight"] = pole.angle_weight;
    }
    return g;
}

Geometry geometry_from_json(Variant v, const Json& g) {
    switch (v) {
        case Variant::PointMaze2D: {
            PointMaze2DGeometry maze;
            maze.bounds = box_from_json(g.at("bounds"));
            for (const auto& w : g.value("walls", Json::array())) maze.walls.push_back(box_from_json(w));
            return maze;
        }
        case Variant::PickPlace3D: {
            PickPlace3DGeometry pp;
            pp.workspace = box_from_json(g.at("workspace"));
            for (const auto& c : g.value("obstacles", Json::array())) {
                Cylinder cyl;
                cyl.cx = c.at("center").at(0).get<double>();
                cyl.cy = c.at("center").at(1).get<double>();
                cyl.radius = c.at("radius").get<double>();
                cyl.z_min = c.value("z_min", cyl.z_min);
                cyl.z_max = c.value("z_max", cyl.z_max);
                pp.obstacles.push_back(cyl);
            }
            pp.basket = g.contains("basket") ? vector_from_json(g.at("basket")) : Vector();
            return pp;
        }
        case Variant::PoleWindows6D: {
            PoleWindows6DGeometry pole;
            const Json wall = g.value("wall", Json::object());
            pole.wall_center = wall.contains("center") ? vector_from_json(wall.at("center"))
                                                       : Vector(Eigen::Vector3d(5.0, 0.0, -4.0));
            pole.wall_size = wall.contains("size") ? vector_from_json(wall.at("size"))
                                                   : Vector(Eigen::Vector3d(100.0, 3.0, 100.0));
            if (g.contains("windows")) {
                for (const auto& w : g.at("windows")) {
                    Window win;
                    win.cx = w.at("center").at(0).get<double>();
                    win.cz = w.at("center").at(1).get<double>();
                    if (w.contains("size")) {
                        win.size_x = w.at("size").at(0).get<double>();
                        win.size_z = w.at("size").at(1).get<double>();
                    }
                    pole.windows.push_back(win);
                }
            } else {
                pole.windows = {Window{2.0, -5.0, 2.0, 2.0}, Window{8.0, -5.0, 2.0, 2.0}};
            }
            pole.pole_length = g.value("pole_length", 2.0);
            pole.pole_axis = g.contains("pole_axis") ? vector_from_json(g.at("pole_axis"))
                                                     : Vector(Eigen::Vector3d(0.0, 1.0, 0.0));
            pole.pole_samples = g.value("pole_samples", 32);
            pole.angle_weight = g.value("angle_weight", 1.0);
            pole.rebuild();
            return pole;
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace

Json scenario_to_json(const Scenario& s) {
    Json j;
    j["name"] = s.name;
    j["variant"] = to_string(s.variant);
    j["basis"] = basis_to_json(s.basis);
    j["phases"] = s.phases;
    j["sigma_sq"] = s.sigma_sq;
    j["theta"] = vector_to_json(s.theta);
    j["start"] = vector_to_json(s.start);
    j["targets"] = Json::array();
    for (const auto& t : s.targets) j["targets"].push_back(vector_to_json(t));
    j["workspace"] = box_to_json(s.workspace);
    j["completion_radius"] = s.completion_radius;
    j["collision_margin"] = s.collision_margin;
    j["planning"] = s.planning;
    j["geometry"] = geometry_to_json(s);
    return j;
}

Scenario scenario_from_json(const Json& j) {
    Scenario s;
    s.name = j.value("name", std::string("scenario"));
    s.variant = variant_from_string(j.at("variant").get<std::string>());
    s.basis = basis_from_json(j.at("basis"));
    s.phases = j.value("phases", 20);
    s.sigma_sq = j.value("sigma_sq", 2.0);
    s.theta = j.contains("theta") ? vector_from_json(j.at("theta")) : default_theta(s.variant);
    s.start = vector_from_json(j.at("start"));
    for (const auto& t : j.at("targets")) s.targets.push_back(vector_from_json(t));
    s.workspace = box_from_json(j.at("workspace"));
    s.completion_radius = j.value("completion_radius", 0.5);
    s.collision_margin = j.value("collision_margin", 0.0);
    s.planning = j.value("planning", Json::object());
    s.geometry = geometry_from_json(s.variant, j.at("geometry"));
    s.validate();
    return s;
}

Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

Json scenario_geometry_json(const Scenario& s) {
    Json j = geometry_to_json(s);
    j["variant"] = to_string(s.variant);
    j["start"] = vector_to_json(s.start);
    j["targets"] = Json::array();
    for (const auto& t : s.targets) j["targets"].push_back(vector_to_json(t));
    j["workspace"] = box_to_json(s.workspace);
    j["completion_radius"] = s.completion_radius;
    return j;
}

EnvEdit edit_from_json(const Json& j) {
    EnvEdit e;
    const std::string action = j.at("action").get<std::string>();
    if (action == "move") e.action = EnvEdit::Action::Move;
    else if (action == "add") e.action = EnvEdit::Action::Add;
    else if (action == "remove") e.action = EnvEdit::Action::Remove;
    else throw std::invalid_argument("env_edit: unknown action " + action);
    const std::string subject = j.at("subject").get<std::string>();
    if (subject == "obstacle") e.subject = EnvEdit::Subject::Obstacle;
    else if (subject == "target") e.subject = EnvEdit::Subject::Target;
    else throw std::invalid_argument("env_edit: unknown subject " + subject);
    e.index = j.value("index", 0);
    if (j.contains("position")) e.position = vector_from_json(j.at("position"));
    if (j.contains("size")) e.size = vector_from_json(j.at("size"));
    return e;
}

Json edit_to_json(const EnvEdit& e) {
    static const char* actions[] = {"move", "add", "remove"};
    Json j{{"action", actions[static_cast<int>(e.action)]},
           {"subject", e.subject == EnvEdit::Subject::Obstacle ? "obstacle" : "target"},
           {"index", e.index}};
    if (e.position.size() > 0) j["position"] = vector_to_json(e.position);
    if (e.size.size() > 0) j["size"] = vector_to_json(e.size);
    return j;
}

}  // namespace mixguide
