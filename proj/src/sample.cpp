#include <ostream>

#include "follmer/app/experiment.hpp"

namespace follmer::app {

bool is_known_scheme(const std::string& s) {
  return s == "em" || s == "ada" || s == "ddpm_standard" || s == "ddpm_ada" || s == "ddpm_expint";
}

SamplerRun<Real> run_scheme(const std::string& scheme, const TimeGrid<Real>& g, const ScoreModel<Real>& s, Index n,
                            const RandomStream& stream, bool keep) {
  if (scheme == "em") return run_em(g, s, n, stream, keep);
  if (scheme == "ada") return run_ada(g, s, n, stream, keep);
  const Index d = s.dimension();
  if (scheme == "ddpm_standard")
    return run_ddpm(params_standard(g), ddpm_step_scores(g, s), d, n, stream, DdpmInit<Real>::standard(), keep);
  if (scheme == "ddpm_ada")
    return run_ddpm(params_ada(g), ddpm_step_scores(g, s), d, n, stream, DdpmInit<Real>::ada(g.t0()), keep);
  if (scheme == "ddpm_expint")
    return run_ddpm(params_expint(g), ddpm_step_scores(g, s), d, n, stream, DdpmInit<Real>::standard(), keep);
  throw ConfigError("unknown scheme '" + scheme + "'");
}

SampleResult run_sample(const ExperimentConfig& c) {
  const TargetSpec target = resolve_target(c.target_specs.front(), std::nullopt);
  const TimeGrid<Real> g = c.grid.build();
  const ScoreModel<Real> s = c.score.build(target.measure, c.seed);
  const std::string& scheme = c.schemes.front();
  // one stream per seed, shared by every scheme so runs are comparable path by path
  return {run_scheme(scheme, g, s, c.n_paths, RandomStream(c.seed), c.keep_trajectories), g, scheme};
}

void SampleResult::write_csv(std::ostream& out) const {
  const Index d = run.terminal.cols();
  std::vector<std::string> header{"path_id"};
  for (Index k = 0; k < d; ++k) header.push_back("x" + std::to_string(k));
  CsvWriter w(out, header);
  std::vector<std::string> cells(static_cast<std::size_t>(d + 1));
  for (Index j = 0; j < run.terminal.rows(); ++j) {
    cells[0] = std::to_string(j);
    for (Index k = 0; k < d; ++k) cells[static_cast<std::size_t>(k + 1)] = format_real(run.terminal(j, k));
    w.row(cells);
  }
}

void SampleResult::write_trajectories_csv(std::ostream& out) const {
  CsvWriter w(out, {"path_id", "t", "coord", "value"});
  const Index d = run.terminal.cols();
  for (Index j = 0; j < run.terminal.rows(); ++j)
    for (std::size_t i = 0; i < run.trajectory.size(); ++i)
      for (Index k = 0; k < d; ++k)
        w.row({std::to_string(j), format_real(grid[static_cast<Index>(i)]), std::to_string(k),
               format_real(run.trajectory[i](j, k))});
}

json grid_info(const ExperimentConfig& c) {
  const TimeGrid<Real> g = c.grid.build();
  const auto flags = check_assumptions(g);
  json j;
  j["provenance"] = to_json(g.provenance());
  j["N"] = g.steps();
  j["t0"] = real_to_json(g.t0());
  j["t_N"] = real_to_json(g.t_final());
  j["delta"] = real_to_json(g.delta());
  j["T"] = real_to_json(g.horizon());
  j["max_step"] = real_to_json(g.max_step());
  j["kappa_a1"] = real_to_json(flags.kappa_a1);
  j["kappa_tau"] = real_to_json(flags.kappa_tau);
  j["kappa_sampling_r"] = real_to_json(flags.kappa_sampling_r);
  j["t0_at_most_half"] = flags.t0_at_most_half;
  // what the step-size lemma promises: tau spacing within kappa <= 1 gives A1 and the t-proportional bound
  if (flags.kappa_tau <= 1) {
    j["lemma_a1_holds"] = flags.a1_holds(flags.kappa_tau);
    j["lemma_sampling_r_holds"] = flags.sampling_r_holds(flags.kappa_tau);
  }
  json t = json::array(), tau = json::array();
  for (Index i = 0; i <= g.steps(); ++i) {
    t.push_back(real_to_json(g[i]));
    tau.push_back(real_to_json(g.tau(i)));
  }
  j["t"] = t;
  j["tau"] = tau;
  return j;
}

}  // namespace follmer::app
