#include <cmath>

#include "follmer/app/experiment.hpp"

namespace follmer::app {

const std::vector<std::string>& builtin_target_names() {
  static const std::vector<std::string> names{"standard_gaussian", "shifted_gaussian", "two_point", "line8",
                                              "mixture3"};
  return names;
}

Index builtin_default_dimension(const std::string& name) {
  if (name == "standard_gaussian") return 2;
  if (name == "shifted_gaussian") return 1;
  if (name == "two_point") return 2;
  if (name == "line8") return 4;
  if (name == "mixture3") return 2;
  throw ConfigError("unknown built-in target '" + name + "'");
}

TargetSpec builtin_target(const std::string& name, Index d) {
  if (d < 1) throw ConfigError("target dimension must be positive");
  const MatrixX<Real> id = MatrixX<Real>::Identity(d, d);
  if (name == "standard_gaussian") return {name, Mixture<Real>::standard_gaussian(d), std::nullopt};
  if (name == "shifted_gaussian") return {name, Mixture<Real>::gaussian(VectorX<Real>::Ones(d), id), std::nullopt};
  if (name == "two_point") {
    MatrixX<Real> pts = MatrixX<Real>::Zero(2, d);
    pts(0, 0) = -1;
    pts(1, 0) = 1;
    return {name, Mixture<Real>::point_set(pts), IntrinsicParams{}};
  }
  if (name == "line8") {
    // -1.75, -1.25, ..., 1.75 along the first axis
    MatrixX<Real> pts = MatrixX<Real>::Zero(8, d);
    for (Index i = 0; i < 8; ++i) pts(i, 0) = -1.75 + 0.5 * Real(i);
    return {name, Mixture<Real>::point_set(pts), IntrinsicParams{}};
  }
  if (name == "mixture3") {
    std::vector<Component<Real>> comps(3);
    comps[0] = {0.5, VectorX<Real>::Zero(d), 0.5 * id};
    comps[1] = {0.3, VectorX<Real>::Zero(d), 0.5 * id};
    comps[2] = {0.2, VectorX<Real>::Zero(d), 0.5 * id};
    comps[0].mean(0) = -1.5;
    comps[1].mean(0) = 1.5;
    comps[1].covariance(0, 0) = 0.3;
    if (d >= 2) {
      comps[1].mean(1) = 0.5;
      comps[2].mean(1) = -1.5;
      comps[2].covariance.topLeftCorner(2, 2) << 0.6, 0.2, 0.2, 0.4;
    } else {
      comps[2].covariance(0, 0) = 0.8;
    }
    return {name, Mixture<Real>(std::move(comps)), std::nullopt};
  }
  throw ConfigError("unknown built-in target '" + name + "'");
}

json mixture_to_json(const Mixture<Real>& mu) {
  json j;
  j["kind"] = mu.kind() == MeasureKind::FinitePointSet ? "finite_point_set" : "gaussian_mixture";
  j["dimension"] = mu.dimension();
  json comps = json::array();
  for (const auto& c : mu.components()) {
    json cj;
    cj["weight"] = c.weight;
    cj["mean"] = std::vector<Real>(c.mean.data(), c.mean.data() + c.mean.size());
    if (!c.covariance.isZero(0)) {
      json rows = json::array();
      for (Index r = 0; r < c.covariance.rows(); ++r) {
        const VectorX<Real> row = c.covariance.row(r).transpose();
        rows.push_back(std::vector<Real>(row.data(), row.data() + row.size()));
      }
      cj["covariance"] = rows;
    }
    comps.push_back(cj);
  }
  j["components"] = comps;
  return j;
}

namespace {
VectorX<Real> vector_from_json(const json& j, Index d, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  if (static_cast<Index>(j.size()) != d) throw ConfigError(what + " must have " + std::to_string(d) + " entries");
  VectorX<Real> v(d);
  for (Index i = 0; i < d; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw ConfigError(what + " entries must be numbers");
    v(i) = j[static_cast<std::size_t>(i)].get<Real>();
  }
  return v;
}
}  // namespace

Mixture<Real> mixture_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("target measure must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "kind" && key != "dimension" && key != "components")
      throw ConfigError("unknown key '" + key + "' in target measure");
  if (!j.contains("dimension") || !j["dimension"].is_number_integer())
    throw ConfigError("target measure needs an integer 'dimension'");
  const Index d = j["dimension"].get<Index>();
  if (d < 1) throw ConfigError("target dimension must be positive");
  if (!j.contains("components") || !j["components"].is_array() || j["components"].empty())
    throw ConfigError("target measure needs a nonempty 'components' array");
  std::vector<Component<Real>> comps;
  for (const auto& cj : j["components"]) {
    if (!cj.is_object() || !cj.contains("weight") || !cj.contains("mean"))
      throw ConfigError("each component needs 'weight' and 'mean'");
    for (const auto& [key, _] : cj.items())
      if (key != "weight" && key != "mean" && key != "covariance")
        throw ConfigError("unknown key '" + key + "' in component");
    if (!cj["weight"].is_number()) throw ConfigError("component weight must be a number");
    Component<Real> c;
    c.weight = cj["weight"].get<Real>();
    c.mean = vector_from_json(cj["mean"], d, "component mean");
    c.covariance = MatrixX<Real>::Zero(d, d);
    if (cj.contains("covariance")) {
      const auto& cov = cj["covariance"];
      if (!cov.is_array() || static_cast<Index>(cov.size()) != d)
        throw ConfigError("component covariance must be a d x d array");
      for (Index r = 0; r < d; ++r)
        c.covariance.row(r) = vector_from_json(cov[static_cast<std::size_t>(r)], d, "covariance row").transpose();
    }
    comps.push_back(std::move(c));
  }
  Mixture<Real> mu = [&] {
    try {
      return Mixture<Real>(std::move(comps));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid target measure: ") + e.what());
    }
  }();
  if (j.contains("kind")) {
    const std::string kind = j["kind"].is_string() ? j["kind"].get<std::string>() : "";
    if (kind != "gaussian_mixture" && kind != "finite_point_set")
      throw ConfigError("target kind must be gaussian_mixture or finite_point_set");
    if (kind == "finite_point_set" && mu.kind() != MeasureKind::FinitePointSet)
      throw ConfigError("finite_point_set components must have zero covariance");
  }
  return mu;
}

}  // namespace follmer::app
