#include "biscat/scene_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace biscat {

namespace {

using nlohmann::json;

Vec3 parse_vec3(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3)
    throw ComputeError("scene: field '" + field + "' must be [x, y, z]");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number())
      throw ComputeError("scene: field '" + field + "' has a non-number");
    v[i] = j[i].get<double>();
  }
  return v;
}

ConvexBody parse_body(const json& j, int index) {
  const std::string where = "bodies[" + std::to_string(index) + "]";
  if (!j.is_object())
    throw ComputeError("scene: " + where + " must be an object");
  const std::string type = j.value("type", "");
  if (type == "sphere") {
    if (!j.contains("radius") || !j["radius"].is_number())
      throw ComputeError("scene: " + where + ".radius missing");
    const double r = j["radius"].get<double>();
    if (r <= 0.0)
      throw ComputeError("scene: " + where + ".radius must be positive");
    return ConvexBody::sphere(parse_vec3(j.at("center"), where + ".center"),
                              r);
  }
  if (type == "ellipsoid") {
    const Vec3 center = parse_vec3(j.at("center"), where + ".center");
    const Vec3 axes =
        parse_vec3(j.at("semi_axes"), where + ".semi_axes");
    if (axes.minCoeff() <= 0.0)
      throw ComputeError("scene: " + where + ".semi_axes must be positive");
    Mat3 R = Mat3::Identity();
    if (j.contains("orientation")) {
      const json& o = j["orientation"];
      if (!o.is_array() || o.size() != 3)
        throw ComputeError("scene: " + where +
                           ".orientation must be a 3x3 row-major array");
      for (int r = 0; r < 3; ++r)
        R.row(r) = parse_vec3(o[r], where + ".orientation row").transpose();
      if ((R * R.transpose() - Mat3::Identity()).norm() > 1e-8)
        throw ComputeError("scene: " + where +
                           ".orientation is not a rotation");
    }
    return ConvexBody::ellipsoid(center, axes, R);
  }
  throw ComputeError("scene: " + where +
                     ".type must be 'sphere' or 'ellipsoid'");
}

}  // namespace

Scene parse_scene(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ComputeError(std::string("scene: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("bodies"))
    throw ComputeError("scene: top-level object with 'bodies' required");
  const json& bodies = doc["bodies"];
  if (!bodies.is_array() || bodies.size() != 2)
    throw ComputeError("scene: 'bodies' must list exactly two bodies");
  SceneConfig cfg;
  if (doc.contains("cylinder_radius"))
    cfg.cylinder_radius = doc["cylinder_radius"].get<double>();
  if (doc.contains("delta1")) cfg.delta1 = doc["delta1"].get<double>();
  if (doc.contains("tangency_tol"))
    cfg.tangency_tol = doc["tangency_tol"].get<double>();
  if (cfg.cylinder_radius <= 0.0 || cfg.delta1 <= 0.0 ||
      cfg.tangency_tol <= 0.0)
    throw ComputeError("scene: tolerances must be positive");
  return Scene(parse_body(bodies[0], 0), parse_body(bodies[1], 1), cfg);
}

Scene load_scene(const std::string& path) {
  if (path == "standard") return Scene::standard();
  std::ifstream in(path);
  if (!in) throw ComputeError("scene: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

}  // namespace biscat
