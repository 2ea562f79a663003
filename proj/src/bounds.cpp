#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "follmer/app/experiment.hpp"

namespace follmer::app {

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();
constexpr Real kNaN = std::numeric_limits<Real>::quiet_NaN();

template <typename T>
std::vector<std::optional<T>> axis(const std::vector<T>& values) {
  if (values.empty()) return {std::nullopt};
  return {values.begin(), values.end()};
}

bool ddpm_scheme(const std::string& s) { return s.rfind("ddpm", 0) == 0; }
bool ada_family(const std::string& s) { return s == "ada" || s == "ddpm_ada"; }

/// Smallest N with kappa_A1 <= kappa.
Index steps_for_kappa(const GridSpec& spec, Real t0, Real delta, Real kappa) {
  if (!(delta > 0)) throw ConfigError("sweep.kappa needs delta > 0 (kappa_A1 is infinite when t_N = 1)");
  Index lo = 1, hi = 1;
  while (spec.build(t0, delta, hi).kappa_a1() > kappa) {
    lo = hi + 1;
    hi *= 2;
    if (hi > (Index(1) << 22)) throw ConfigError("sweep.kappa entry is too small to reach");
  }
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (spec.build(t0, delta, mid).kappa_a1() <= kappa) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

/// True law of X_{t_N} and the scheme's terminal law, both Gaussian, in X coordinates.
std::optional<Real> exact_gaussian_kl(const std::string& scheme, const TimeGrid<Real>& g, const ScoreModel<Real>& s,
                                      const Mixture<Real>& mu) {
  if (!mu.is_single_gaussian() || scheme == "ddpm_expint") return std::nullopt;
  for (Index i = 0; i < g.steps(); ++i)
    if (!s.affine_at(g[i])) return std::nullopt;
  GaussianLaw<Real> law;
  if (scheme == "em") law = propagate_gaussian_law(Scheme::EM, g, s);
  else if (scheme == "ada") law = propagate_gaussian_law(Scheme::Ada, g, s);
  else {
    law = scheme == "ddpm_standard"
              ? propagate_gaussian_law_ddpm(params_standard(g), g, s, DdpmInit<Real>::standard())
              : propagate_gaussian_law_ddpm(params_ada(g), g, s, DdpmInit<Real>::ada(g.t0()));
    law.mean *= std::sqrt(g.t_final());
    law.covariance *= g.t_final();
  }
  const auto& c = mu.components().front();
  const Real tn = g.t_final();
  const Index d = mu.dimension();
  const VectorX<Real> true_mean = tn * c.mean;
  const MatrixX<Real> true_cov = tn * tn * c.covariance + tn * (1 - tn) * MatrixX<Real>::Identity(d, d);
  try {
    return kl_gaussian<Real>(true_mean, true_cov, law.mean, law.covariance);
  } catch (const std::domain_error&) {
    return kInf;  // singular true law against a Gaussian sampler law
  }
}

MatrixX<Real> support_points(const Mixture<Real>& mu) {
  MatrixX<Real> pts(static_cast<Index>(mu.size()), mu.dimension());
  for (std::size_t i = 0; i < mu.size(); ++i) pts.row(static_cast<Index>(i)) = mu.components()[i].mean.transpose();
  return pts;
}

}  // namespace

BoundsResult run_bounds(const ExperimentConfig& c) {
  const auto& sw = c.sweep;
  if (c.grid.constructor == GridConstructor::Explicit &&
      (!sw.steps.empty() || !sw.kappa.empty() || !sw.t0.empty() || !sw.horizon.empty() || !sw.delta.empty()))
    throw ConfigError("grid sweeps need a uniform_t or uniform_tau grid");
  const auto dims = axis(sw.dimension);
  const auto ns = axis(sw.steps);
  const auto kappas = axis(sw.kappa);
  const auto epss = axis(sw.eps_score);
  const auto t0s = axis(sw.t0);
  const auto hs = axis(sw.horizon);
  const auto deltas = axis(sw.delta);
  const std::size_t grid_axis = std::max(ns.size(), kappas.size());
  const std::size_t start_axis = std::max(t0s.size(), hs.size());
  const std::size_t total = c.target_specs.size() * dims.size() * c.schemes.size() * grid_axis * epss.size() *
                            start_axis * deltas.size();
  if (static_cast<Index>(total) > sw.max_runs)
    throw ConfigError("sweep has " + std::to_string(total) + " runs, above max_runs = " + std::to_string(sw.max_runs));

  BoundsResult out;
  const RandomStream root(c.seed);
  std::uint64_t cell = 0;
  for (const auto& tspec : c.target_specs)
    for (const auto& d_opt : dims) {
      const TargetSpec target = resolve_target(tspec, d_opt);
      const Mixture<Real>& mu = target.measure;
      const Index d = mu.dimension();
      for (std::size_t gi = 0; gi < grid_axis; ++gi)
        for (const auto& eps_opt : epss)
          for (std::size_t si = 0; si < start_axis; ++si)
            for (const auto& delta_opt : deltas) {
              // one stream per cell, shared by every scheme in it
              const RandomStream stream = root.fork(cell++);
              const Real t0 = !sw.horizon.empty() ? std::exp(-2 * sw.horizon[si]) : t0s[si].value_or(c.grid.t0);
              const Real delta = delta_opt.value_or(c.grid.delta);
              Index steps = c.grid.steps;
              if (!sw.steps.empty()) steps = sw.steps[gi];
              if (!sw.kappa.empty()) steps = steps_for_kappa(c.grid, t0, delta, sw.kappa[gi]);
              TimeGrid<Real> g = [&] {
                try {
                  return c.grid.constructor == GridConstructor::Explicit ? c.grid.build()
                                                                         : c.grid.build(t0, delta, steps);
                } catch (const std::invalid_argument& e) {
                  throw ConfigError(std::string("invalid sweep grid: ") + e.what());
                }
              }();
              ScoreSpec sspec = c.score;
              if (eps_opt) {
                sspec = ScoreSpec{};
                sspec.kind = ScoreKind::Perturbed;
                sspec.bias = {*eps_opt / std::sqrt(g.sum_of_steps())};
              }
              const ScoreModel<Real> model = sspec.build(mu, c.seed);
              const Real eps = std::sqrt(epsilon_score_squared(model, mu, g, c.n_paths, stream.fork(3)).value);
              if (g.t_final() >= 1 && !mu.is_smooth())
                throw ConfigError("t_N = 1 needs a smooth target; '" + target.name + "' is singular");

              SampleMatrix<Real> truth;
              for (const auto& scheme : c.schemes) {
                BoundsRow row;
                row.run_id = static_cast<Index>(out.rows.size());
                row.scheme = scheme;
                row.target = target.name;
                row.d = d;
                row.steps = g.steps();
                row.kappa = g.kappa_a1();
                row.delta = g.delta();
                row.t0 = g.t0();
                row.horizon = g.horizon();
                row.eps_score = eps;

                bool reliable = true;
                const auto exact = c.kl_method == "knn" ? std::nullopt : exact_gaussian_kl(scheme, g, model, mu);
                if (exact) {
                  row.empirical_kl = *exact;
                  row.std_error = 0;
                  row.kl_method = "gaussian";
                } else {
                  if (c.kl_method == "gaussian")
                    throw ConfigError("kl_method = gaussian needs a single-Gaussian target and an affine score");
                  if (truth.rows() == 0) truth = sample_marginal(mu, g.t_final(), c.n_paths, stream.fork(1)).value;
                  SampleMatrix<Real> q = run_scheme(scheme, g, model, c.n_paths, stream.fork(2), false).terminal;
                  if (ddpm_scheme(scheme)) q *= std::sqrt(g.t_final());
                  try {
                    const auto k = kl_knn<Real>(truth, q, 1, 200, stream.fork(4));
                    row.empirical_kl = k.value;
                    row.std_error = k.std_error;
                    reliable = k.reliable;
                    row.kl_method = k.reliable ? "knn" : "knn_unreliable";
                  } catch (const std::invalid_argument& e) {
                    throw ConfigError(std::string("kNN estimate: ") + e.what());
                  }
                }

                BoundInputs<Real> in;
                in.kappa = row.kappa;
                in.dimension = Real(d);
                in.t0 = g.t0();
                in.delta = g.delta();
                in.eps_score = eps;
                in.second_moment = mu.second_moment();
                in.max_step = g.max_step();
                in.steps = Real(g.steps());
                bool inputs_exact = true;
                if (scheme == "em" || scheme == "ddpm_standard") {
                  if (g.t_final() >= 1) {
                    const auto h = entropy_vs_gaussian(mu, c.n_paths, stream.fork(5));
                    const auto f = fisher_vs_gaussian(mu, c.n_paths, stream.fork(6));
                    in.entropy = h.infinite ? kInf : h.value;
                    in.fisher = f.infinite ? kInf : f.value;
                    inputs_exact = h.exact && f.exact;
                    row.bound = bound_fi(in);
                  } else {
                    row.bound = bound_em(in);
                  }
                } else if (ada_family(scheme)) {
                  row.bound = bound_ada(in);
                }
                if (row.bound && !inputs_exact) {
                  row.bound->certified = false;
                  row.bound->warnings.push_back("entropy or Fisher information estimated by Monte Carlo");
                }

                if (ada_family(scheme) && target.intrinsic && mu.kind() == MeasureKind::FinitePointSet &&
                    g.delta() > 0) {
                  BoundInputs<Real> im = in;
                  im.intrinsic_dim = target.intrinsic->k;
                  im.eps0 = target.intrinsic->eps0;
                  im.moment_radius = std::max(Real(3), std::pow(mu.centered_fourth_moment(), Real(0.25)));
                  im.sampling_r = check_assumptions(g).sampling_r_holds(row.kappa);
                  try {
                    row.intrinsic = bound_ada_m(im);
                    const auto a3 = check_intrinsic(support_points(mu), im.intrinsic_dim, im.eps0, g.delta(),
                                                    Index(2000), stream.fork(7));
                    row.a3_ok = a3.holds();
                    if (!row.a3_ok) {
                      row.intrinsic->hypotheses_hold = false;
                      row.intrinsic->warnings.push_back("low-dimensionality conditions fail for (k, eps0, delta)");
                    }
                  } catch (const std::invalid_argument&) {
                    row.intrinsic.reset();
                  }
                }

                row.counted = row.bound && row.bound->certified && row.bound->hypotheses_hold && reliable &&
                              std::isfinite(row.bound->value);
                row.pass = !row.bound || !std::isfinite(row.bound->value) ||
                           row.empirical_kl <= row.bound->value + 4 * row.std_error;
                out.rows.push_back(std::move(row));
              }
            }
    }
  return out;
}

bool BoundsResult::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const BoundsRow& r) { return !r.counted || r.pass; });
}

void BoundsResult::write_csv(std::ostream& out) const {
  CsvWriter w(out, {"run_id", "scheme", "target", "d", "N", "kappa", "delta", "t0", "T", "eps_score", "empirical_kl",
                    "stderr", "kl_method", "bound_kind", "bound", "certified", "hypotheses_ok", "counted", "pass",
                    "bound_intrinsic", "a3_ok"});
  for (const auto& r : rows) {
    w.row({std::to_string(r.run_id), r.scheme, r.target, std::to_string(r.d), std::to_string(r.steps),
           format_real(r.kappa), format_real(r.delta), format_real(r.t0), format_real(r.horizon),
           format_real(r.eps_score), format_real(r.empirical_kl), format_real(r.std_error), r.kl_method,
           r.bound ? to_string(r.bound->kind) : "none", format_real(r.bound ? r.bound->value : kNaN),
           r.bound && r.bound->certified ? "true" : "false", r.bound && r.bound->hypotheses_hold ? "true" : "false",
           r.counted ? "true" : "false", r.pass ? "true" : "false",
           format_real(r.intrinsic ? r.intrinsic->value : kNaN), r.a3_ok ? "true" : "false"});
  }
}

json BoundsResult::to_json() const {
  json j;
  json rs = json::array();
  for (const auto& r : rows) {
    json rj;
    rj["run_id"] = r.run_id;
    rj["scheme"] = r.scheme;
    rj["target"] = r.target;
    rj["empirical_kl"] = real_to_json(r.empirical_kl);
    rj["stderr"] = real_to_json(r.std_error);
    rj["kl_method"] = r.kl_method;
    rj["bound"] = r.bound ? app::to_json(*r.bound) : json(nullptr);
    rj["intrinsic_bound"] = r.intrinsic ? app::to_json(*r.intrinsic) : json(nullptr);
    rj["a3_ok"] = r.a3_ok;
    rj["counted"] = r.counted;
    rj["pass"] = r.pass;
    rs.push_back(rj);
  }
  j["rows"] = rs;
  j["pass"] = all_pass();
  return j;
}

}  // namespace follmer::app
