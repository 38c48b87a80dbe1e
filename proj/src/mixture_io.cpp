#include "mixguide/mixture_io.hpp"

#include <fstream>
#include <stdexcept>

namespace mixguide {

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Vector vector_from_json(const Json& j) {
    if (!j.is_array()) throw std::invalid_argument("expected a numeric array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

Json matrix_to_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_to_json(m.row(r).transpose()));
    return out;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array()) throw std::invalid_argument("expected nested arrays");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Vector row = vector_from_json(j[static_cast<size_t>(r)]);
        if (row.size() != cols) throw std::invalid_argument("ragged matrix");
        m.row(r) = row.transpose();
    }
    return m;
}

Json basis_to_json(const BasisConfig& cfg) {
    return Json{{"m", cfg.m}, {"n", cfg.n}, {"h", cfg.h}};
}

BasisConfig basis_from_json(const Json& j) {
    BasisConfig cfg;
    cfg.m = j.at("m").get<int>();
    cfg.n = j.at("n").get<int>();
    cfg.h = j.value("h", 1.0);
    cfg.validate();
    return cfg;
}

Json promp_to_json(const ProMP& p) {
    Json j = basis_to_json(p.basis);
    j["mean_w"] = vector_to_json(p.mean_w);
    j["var_w"] = vector_to_json(p.var_w);
    return j;
}

ProMP promp_from_json(const Json& j) {
    ProMP p{basis_from_json(j), vector_from_json(j.at("mean_w")), vector_from_json(j.at("var_w"))};
    p.validate();
    return p;
}

Json pose_gaussian_to_json(const PoseGaussian& g) {
    return Json{{"mean", vector_to_json(g.mean)}, {"cov", matrix_to_json(g.cov)}};
}

PoseGaussian pose_gaussian_from_json(const Json& j) {
    PoseGaussian g{vector_from_json(j.at("mean")), matrix_from_json(j.at("cov"))};
    if (g.cov.rows() != g.mean.size() || g.cov.cols() != g.mean.size()) {
        throw std::invalid_argument("pose gaussian: covariance shape mismatch");
    }
    return g;
}

Json mixture_to_json(const GuideMixture& mix) {
    Json j = basis_to_json(mix.basis);
    Json comps = Json::array();
    for (const auto& c : mix.components) {
        comps.push_back(Json{{"mean_w", vector_to_json(c.mean_w)}, {"var_w", vector_to_json(c.var_w)}});
    }
    j["components"] = std::move(comps);
    j["log_weights"] = vector_to_json(mix.log_weights);
    j["freelance"] = mix.freelance ? pose_gaussian_to_json(*mix.freelance) : Json(nullptr);
    return j;
}

GuideMixture mixture_from_json(const Json& j) {
    GuideMixture mix;
    mix.basis = basis_from_json(j);
    for (const auto& c : j.at("components")) {
        mix.components.push_back(
            ProMP{mix.basis, vector_from_json(c.at("mean_w")), vector_from_json(c.at("var_w"))});
    }
    mix.log_weights = vector_from_json(j.at("log_weights"));
    if (j.contains("freelance") && !j.at("freelance").is_null()) {
        mix.freelance = pose_gaussian_from_json(j.at("freelance"));
    }
    mix.validate();
    return mix;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return Json::parse(in);
}

void write_json_file(const Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

void save_mixture(const GuideMixture& mix, const std::string& path) {
    write_json_file(mixture_to_json(mix), path);
}

GuideMixture load_mixture(const std::string& path) { return mixture_from_json(read_json_file(path)); }

}  // namespace mixguide
