#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "follmer/app/experiment.hpp"

namespace follmer::app {

namespace {

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

Real get_real(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + " must be a number");
  return j.get<Real>();
}

Index get_index(const json& j, const std::string& what) {
  if (!j.is_number_integer()) throw ConfigError(what + " must be an integer");
  return j.get<Index>();
}

std::uint64_t get_u64(const json& j, const std::string& what) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw ConfigError(what + " must be a nonnegative integer");
}

bool get_bool(const json& j, const std::string& what) {
  if (!j.is_boolean()) throw ConfigError(what + " must be true or false");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& what) {
  if (!j.is_string()) throw ConfigError(what + " must be a string");
  return j.get<std::string>();
}

template <typename T, typename F>
std::vector<T> get_list(const json& j, const std::string& what, F&& each) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  std::vector<T> out;
  for (const auto& e : j) out.push_back(each(e, what + " entry"));
  return out;
}

GridSpec parse_grid(const json& j) {
  if (!j.is_object()) throw ConfigError("grid must be an object");
  allow_keys(j, "grid", {"constructor", "t0", "delta", "N", "t"});
  GridSpec g;
  if (j.contains("constructor")) {
    const std::string c = get_string(j["constructor"], "grid.constructor");
    if (c == "uniform_t") g.constructor = GridConstructor::UniformT;
    else if (c == "uniform_tau") g.constructor = GridConstructor::UniformTau;
    else if (c == "explicit") g.constructor = GridConstructor::Explicit;
    else throw ConfigError("grid.constructor must be uniform_t, uniform_tau or explicit");
  }
  if (j.contains("t0")) g.t0 = get_real(j["t0"], "grid.t0");
  if (j.contains("delta")) g.delta = get_real(j["delta"], "grid.delta");
  if (j.contains("N")) g.steps = get_index(j["N"], "grid.N");
  if (j.contains("t")) g.points = get_list<Real>(j["t"], "grid.t", get_real);
  if (g.constructor == GridConstructor::Explicit && g.points.size() < 2)
    throw ConfigError("explicit grid needs a list 't' of at least two times");
  try {
    (void)g.build();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid grid: ") + e.what());
  }
  return g;
}

ScoreSpec parse_score(const json& j) {
  if (!j.is_object()) throw ConfigError("score must be an object");
  allow_keys(j, "score", {"kind", "bias", "scale", "noise", "noise_seed", "noise_modes", "data_file", "data_points"});
  ScoreSpec s;
  if (j.contains("kind")) {
    const std::string k = get_string(j["kind"], "score.kind");
    if (k == "exact") s.kind = ScoreKind::Exact;
    else if (k == "perturbed") s.kind = ScoreKind::Perturbed;
    else if (k == "empirical") s.kind = ScoreKind::EmpiricalMixture;
    else throw ConfigError("score.kind must be exact, perturbed or empirical");
  }
  if (j.contains("bias")) {
    if (j["bias"].is_number()) s.bias = {j["bias"].get<Real>()};
    else s.bias = get_list<Real>(j["bias"], "score.bias", get_real);
  }
  if (j.contains("scale")) s.scale = get_real(j["scale"], "score.scale");
  if (j.contains("noise")) s.noise = get_real(j["noise"], "score.noise");
  if (j.contains("noise_seed")) s.noise_seed = get_u64(j["noise_seed"], "score.noise_seed");
  if (j.contains("noise_modes")) s.noise_modes = get_index(j["noise_modes"], "score.noise_modes");
  if (j.contains("data_file")) s.data_file = get_string(j["data_file"], "score.data_file");
  if (j.contains("data_points")) s.data_points = get_index(j["data_points"], "score.data_points");
  if (s.noise_modes < 1) throw ConfigError("score.noise_modes must be positive");
  if (s.data_points < 1) throw ConfigError("score.data_points must be positive");
  const bool perturbs = !s.bias.empty() || s.scale != 0 || s.noise != 0;
  if (perturbs && s.kind != ScoreKind::Perturbed) throw ConfigError("bias/scale/noise need score.kind = perturbed");
  return s;
}

VerifySettings parse_verify(const json& j) {
  if (!j.is_object()) throw ConfigError("verify must be an object");
  allow_keys(j, "verify",
             {"n_paths", "checks", "v2_times", "debruijn_points", "martingale_pairs", "representation_levels",
              "representation_paths", "tweedie_time", "tweedie_bins", "score_time", "entropy_tolerance",
              "quadrature"});
  VerifySettings v;
  if (j.contains("n_paths")) v.n_paths = get_index(j["n_paths"], "verify.n_paths");
  if (j.contains("checks")) {
    v.checks = get_list<std::string>(j["checks"], "verify.checks", get_string);
    const VerifySettings defaults;
    for (const auto& c : v.checks)
      if (std::find(defaults.checks.begin(), defaults.checks.end(), c) == defaults.checks.end())
        throw ConfigError("unknown verify check '" + c + "'");
  }
  if (j.contains("v2_times")) v.v2_times = get_list<Real>(j["v2_times"], "verify.v2_times", get_real);
  if (j.contains("debruijn_points")) v.debruijn_points = get_index(j["debruijn_points"], "verify.debruijn_points");
  if (j.contains("martingale_pairs")) {
    v.martingale_pairs = get_list<std::pair<Real, Real>>(j["martingale_pairs"], "verify.martingale_pairs",
                                                         [](const json& e, const std::string& what) {
                                                           if (!e.is_array() || e.size() != 2)
                                                             throw ConfigError(what + " must be [s, t]");
                                                           return std::pair{get_real(e[0], what), get_real(e[1], what)};
                                                         });
  }
  if (j.contains("representation_levels"))
    v.representation_levels = get_list<int>(j["representation_levels"], "verify.representation_levels",
                                            [](const json& e, const std::string& w) { return int(get_index(e, w)); });
  if (j.contains("representation_paths"))
    v.representation_paths = get_index(j["representation_paths"], "verify.representation_paths");
  if (j.contains("tweedie_time")) v.tweedie_time = get_real(j["tweedie_time"], "verify.tweedie_time");
  if (j.contains("tweedie_bins")) v.tweedie_bins = get_index(j["tweedie_bins"], "verify.tweedie_bins");
  if (j.contains("score_time")) v.score_time = get_real(j["score_time"], "verify.score_time");
  if (j.contains("entropy_tolerance")) v.entropy_tolerance = get_real(j["entropy_tolerance"], "verify.entropy_tolerance");
  if (j.contains("quadrature")) {
    const auto& q = j["quadrature"];
    if (!q.is_object()) throw ConfigError("verify.quadrature must be an object");
    allow_keys(q, "verify.quadrature", {"t_min", "ratio", "end_gap"});
    if (q.contains("t_min")) v.quadrature.t_min = get_real(q["t_min"], "quadrature.t_min");
    if (q.contains("ratio")) v.quadrature.ratio = get_real(q["ratio"], "quadrature.ratio");
    if (q.contains("end_gap")) v.quadrature.end_gap = get_real(q["end_gap"], "quadrature.end_gap");
    try {
      (void)v.quadrature.nodes();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (v.n_paths < 2 || v.representation_paths < 2) throw ConfigError("verify path counts must be at least 2");
  if (v.tweedie_bins < 1 || v.tweedie_bins > v.n_paths) throw ConfigError("verify.tweedie_bins out of range");
  if (v.debruijn_points < 1) throw ConfigError("verify.debruijn_points must be positive");
  auto open_unit = [](Real t, const std::string& what) {
    if (!(t > 0 && t < 1)) throw ConfigError(what + " must lie in (0,1)");
  };
  for (Real t : v.v2_times) open_unit(t, "verify.v2_times entry");
  for (auto [s, t] : v.martingale_pairs) {
    if (!(s > 0 && s < t)) throw ConfigError("verify.martingale_pairs need 0 < s < t");
    open_unit(t, "martingale time");
  }
  for (int l : v.representation_levels)
    if (l < 1 || l > 16) throw ConfigError("verify.representation_levels entries must lie in [1,16]");
  open_unit(v.tweedie_time, "verify.tweedie_time");
  open_unit(v.score_time, "verify.score_time");
  return v;
}

SweepAxes parse_sweep(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep must be an object");
  allow_keys(j, "sweep", {"N", "d", "kappa", "eps_score", "t0", "T", "delta", "max_runs"});
  SweepAxes s;
  if (j.contains("N")) s.steps = get_list<Index>(j["N"], "sweep.N", get_index);
  if (j.contains("d")) s.dimension = get_list<Index>(j["d"], "sweep.d", get_index);
  if (j.contains("kappa")) s.kappa = get_list<Real>(j["kappa"], "sweep.kappa", get_real);
  if (j.contains("eps_score")) s.eps_score = get_list<Real>(j["eps_score"], "sweep.eps_score", get_real);
  if (j.contains("t0")) s.t0 = get_list<Real>(j["t0"], "sweep.t0", get_real);
  if (j.contains("T")) s.horizon = get_list<Real>(j["T"], "sweep.T", get_real);
  if (j.contains("delta")) s.delta = get_list<Real>(j["delta"], "sweep.delta", get_real);
  if (j.contains("max_runs")) s.max_runs = get_index(j["max_runs"], "sweep.max_runs");
  if (!s.t0.empty() && !s.horizon.empty()) throw ConfigError("sweep.t0 and sweep.T both set t0; give only one");
  if (!s.steps.empty() && !s.kappa.empty()) throw ConfigError("sweep.N and sweep.kappa both set N; give only one");
  for (Index n : s.steps)
    if (n < 1) throw ConfigError("sweep.N entries must be positive");
  for (Index d : s.dimension)
    if (d < 1) throw ConfigError("sweep.d entries must be positive");
  for (Real k : s.kappa)
    if (!(k > 0)) throw ConfigError("sweep.kappa entries must be positive");
  for (Real e : s.eps_score)
    if (!(e >= 0)) throw ConfigError("sweep.eps_score entries must be nonnegative");
  for (Real t : s.horizon)
    if (!(t > 0)) throw ConfigError("sweep.T entries must be positive");
  return s;
}

std::pair<std::string, json> parse_target_entry(const json& e) {
  if (e.is_string()) {
    const std::string name = e.get<std::string>();
    (void)builtin_default_dimension(name);
    return {name, e};
  }
  if (!e.is_object()) throw ConfigError("targets entries must be names or objects");
  if (e.contains("builtin")) {
    allow_keys(e, "target", {"builtin", "dimension"});
    const std::string name = get_string(e["builtin"], "target.builtin");
    (void)builtin_default_dimension(name);
    if (e.contains("dimension") && get_index(e["dimension"], "target.dimension") < 1)
      throw ConfigError("target.dimension must be positive");
    return {name, e};
  }
  allow_keys(e, "target", {"name", "measure", "intrinsic"});
  if (!e.contains("measure")) throw ConfigError("inline target needs 'measure' (or use 'builtin')");
  (void)mixture_from_json(e["measure"]);
  if (e.contains("intrinsic")) {
    const auto& in = e["intrinsic"];
    if (!in.is_object()) throw ConfigError("target.intrinsic must be an object");
    allow_keys(in, "target.intrinsic", {"k", "eps0"});
  }
  const std::string name = e.contains("name") ? get_string(e["name"], "target.name") : "custom";
  return {name, e};
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  allow_keys(j, "config",
             {"targets", "grid", "score", "schemes", "n_paths", "seed", "keep_trajectories", "kl_method", "verify",
              "sweep"});
  ExperimentConfig c;
  if (j.contains("targets")) {
    if (!j["targets"].is_array() || j["targets"].empty()) throw ConfigError("targets must be a nonempty array");
    for (const auto& e : j["targets"]) c.target_specs.push_back(parse_target_entry(e));
  } else {
    for (const auto& name : builtin_target_names()) c.target_specs.emplace_back(name, json(name));
  }
  if (j.contains("grid")) c.grid = parse_grid(j["grid"]);
  if (j.contains("score")) c.score = parse_score(j["score"]);
  if (j.contains("schemes")) {
    c.schemes = get_list<std::string>(j["schemes"], "schemes", get_string);
    if (c.schemes.empty()) throw ConfigError("schemes must be nonempty");
    for (const auto& s : c.schemes)
      if (!is_known_scheme(s)) throw ConfigError("unknown scheme '" + s + "'");
  }
  if (j.contains("n_paths")) c.n_paths = get_index(j["n_paths"], "n_paths");
  if (c.n_paths < 0) throw ConfigError("n_paths must be nonnegative");
  if (j.contains("seed")) c.seed = get_u64(j["seed"], "seed");
  if (j.contains("keep_trajectories")) c.keep_trajectories = get_bool(j["keep_trajectories"], "keep_trajectories");
  if (j.contains("kl_method")) {
    c.kl_method = get_string(j["kl_method"], "kl_method");
    if (c.kl_method != "auto" && c.kl_method != "gaussian" && c.kl_method != "knn")
      throw ConfigError("kl_method must be auto, gaussian or knn");
  }
  if (j.contains("verify")) c.verify = parse_verify(j["verify"]);
  if (j.contains("sweep")) c.sweep = parse_sweep(j["sweep"]);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

TargetSpec resolve_target(const std::pair<std::string, json>& spec, std::optional<Index> d) {
  const auto& [name, e] = spec;
  if (e.is_string()) return builtin_target(name, d.value_or(builtin_default_dimension(name)));
  if (e.contains("builtin")) {
    const Index dim = d ? *d : e.contains("dimension") ? e["dimension"].get<Index>() : builtin_default_dimension(name);
    return builtin_target(name, dim);
  }
  TargetSpec t{name, mixture_from_json(e["measure"]), std::nullopt};
  if (e.contains("intrinsic")) {
    IntrinsicParams p;
    const auto& in = e["intrinsic"];
    if (in.contains("k")) p.k = get_real(in["k"], "intrinsic.k");
    if (in.contains("eps0")) p.eps0 = get_real(in["eps0"], "intrinsic.eps0");
    t.intrinsic = p;
  }
  return t;
}

std::vector<TargetSpec> resolve_targets(const ExperimentConfig& c) {
  std::vector<TargetSpec> out;
  for (const auto& s : c.target_specs) out.push_back(resolve_target(s, std::nullopt));
  return out;
}

TimeGrid<Real> GridSpec::build() const { return build(t0, delta, steps); }

TimeGrid<Real> GridSpec::build(Real t0_, Real delta_, Index steps_) const {
  switch (constructor) {
    case GridConstructor::UniformT: return grid_uniform_t(t0_, delta_, steps_);
    case GridConstructor::UniformTau: return grid_uniform_tau(t0_, delta_, steps_);
    case GridConstructor::Explicit: break;
  }
  return TimeGrid<Real>(Eigen::Map<const VectorX<Real>>(points.data(), static_cast<Index>(points.size())));
}

VectorX<Real> diagonal_bias(Index d, Real norm) { return VectorX<Real>::Constant(d, norm / std::sqrt(Real(d))); }

namespace {
MatrixX<Real> read_csv_matrix(const std::string& path, Index d) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  std::vector<Real> values;
  Index rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    Index cols = 0;
    std::vector<Real> row;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        ++cols;
      } catch (const std::exception&) {
        row.clear();
        break;
      }
    }
    if (row.empty()) {
      if (rows == 0) continue;  // header
      throw ConfigError("non-numeric row in data file '" + path + "'");
    }
    if (cols != d) throw ConfigError("data file rows must have " + std::to_string(d) + " columns");
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw ConfigError("data file '" + path + "' has no rows");
  return Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, d);
}
}  // namespace

ScoreModel<Real> ScoreSpec::build(const Mixture<Real>& mu, std::uint64_t seed) const {
  const Index d = mu.dimension();
  switch (kind) {
    case ScoreKind::Exact: return ScoreModel<Real>::exact(mu);
    case ScoreKind::Perturbed: {
      Perturbation<Real> p;
      if (bias.size() == 1) p.bias = diagonal_bias(d, bias[0]);
      else if (!bias.empty()) {
        if (static_cast<Index>(bias.size()) != d) throw ConfigError("score.bias length must match the dimension");
        p.bias = Eigen::Map<const VectorX<Real>>(bias.data(), d);
      }
      p.scale = scale;
      p.noise_amplitude = noise;
      p.noise_seed = noise_seed;
      p.noise_modes = noise_modes;
      return ScoreModel<Real>::perturbed(mu, p);
    }
    case ScoreKind::EmpiricalMixture: {
      if (!data_file.empty()) return ScoreModel<Real>::empirical(read_csv_matrix(data_file, d));
      const SampleMatrix<Real> draws = mu.sample(data_points, RandomStream(seed).fork(0x64617461));
      return ScoreModel<Real>::empirical(MatrixX<Real>(draws));
    }
  }
  return ScoreModel<Real>::exact(mu);
}

}  // namespace follmer::app
