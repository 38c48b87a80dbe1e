#pragma once

// JSON documents for ProMPs and guide mixtures. Doubles are emitted in
// shortest round-trip form, so save/load is bit-exact.

#include "json.hpp"
#include <string>

#include "mixguide/trajectory_model.hpp"

namespace mixguide {

using Json = nlohmann::json;

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);
Json matrix_to_json(const Matrix& m);  // row-major nested arrays
Matrix matrix_from_json(const Json& j);

Json basis_to_json(const BasisConfig& cfg);
BasisConfig basis_from_json(const Json& j);

Json promp_to_json(const ProMP& p);
ProMP promp_from_json(const Json& j);

Json pose_gaussian_to_json(const PoseGaussian& g);
PoseGaussian pose_gaussian_from_json(const Json& j);

Json mixture_to_json(const GuideMixture& mix);
GuideMixture mixture_from_json(const Json& j);

void save_mixture(const GuideMixture& mix, const std::string& path);
GuideMixture load_mixture(const std::string& path);

Json read_json_file(const std::string& path);
void write_json_file(const Json& j, const std::string& path);

}  // namespace mixguide
