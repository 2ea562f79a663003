#pragma once

// Config-driven experiment runner behind the `follmer` command line tool.
// Everything here works in double precision.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "follmer/follmer.hpp"

namespace follmer::app {

using Real = double;
using json = nlohmann::ordered_json;

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- targets ---------------------------------------------------------------

/// Optional low-dimensionality parameters used by the intrinsic bound.
struct IntrinsicParams {
  Real k{1};
  Real eps0{0.36787944117144233};  // e^-1
};

struct TargetSpec {
  std::string name;
  Mixture<Real> measure;
  std::optional<IntrinsicParams> intrinsic;
};

/// standard_gaussian, shifted_gaussian, two_point, line8, mixture3.
const std::vector<std::string>& builtin_target_names();
Index builtin_default_dimension(const std::string& name);
/// Throws ConfigError for unknown names.
TargetSpec builtin_target(const std::string& name, Index d);

json mixture_to_json(const Mixture<Real>& mu);
Mixture<Real> mixture_from_json(const json& j);

// --- grids and scores ------------------------------------------------------

struct GridSpec {
  GridConstructor constructor{GridConstructor::UniformTau};
  Real t0{1e-2};
  Real delta{1e-2};
  Index steps{32};
  std::vector<Real> points;  // explicit grids

  [[nodiscard]] TimeGrid<Real> build() const;
  [[nodiscard]] TimeGrid<Real> build(Real t0, Real delta, Index steps) const;
};

struct ScoreSpec {
  ScoreKind kind{ScoreKind::Exact};
  std::vector<Real> bias;  // empty: zero; one entry: that norm along (1,...,1)/sqrt(d)
  Real scale{0};
  Real noise{0};
  std::uint64_t noise_seed{0};
  Index noise_modes{8};
  std::string data_file;  // empirical: CSV, one point per row
  Index data_points{64};  // empirical without a file: this many draws from the target

  /// `seed` feeds the empirical draws when no data file is given.
  [[nodiscard]] ScoreModel<Real> build(const Mixture<Real>& mu, std::uint64_t seed) const;
  [[nodiscard]] bool is_exact() const { return kind == ScoreKind::Exact; }
};

/// Constant bias of norm b along (1,...,1)/sqrt(d).
VectorX<Real> diagonal_bias(Index d, Real norm);

// --- config ----------------------------------------------------------------

struct VerifySettings {
  Index n_paths{20000};
  std::vector<std::string> checks{"entropy", "debruijn", "v2", "martingale", "representation", "tweedie",
                                  "score_match"};
  std::vector<Real> v2_times{0.1, 0.5, 0.9};
  Index debruijn_points{10};
  std::vector<std::pair<Real, Real>> martingale_pairs{{0.3, 0.7}};
  std::vector<int> representation_levels{3, 5, 7};
  Index representation_paths{2000};
  Real tweedie_time{0.5};
  Index tweedie_bins{10};
  Real score_time{0.5};
  Real entropy_tolerance{0.02};
  EntropyQuadrature<Real> quadrature{};
};

struct SweepAxes {
  std::vector<Index> steps;
  std::vector<Index> dimension;
  std::vector<Real> kappa;  // picks the smallest N whose grid meets kappa_A1 <= kappa
  std::vector<Real> eps_score;
  std::vector<Real> t0;
  std::vector<Real> horizon;  // T; sets t0 = exp(-2T)
  std::vector<Real> delta;
  Index max_runs{512};
};

struct ExperimentConfig {
  std::vector<std::pair<std::string, json>> target_specs;  // name or inline measure, resolved per dimension
  GridSpec grid;
  ScoreSpec score;
  std::vector<std::string> schemes{"em", "ada"};
  Index n_paths{10000};
  std::uint64_t seed{0};
  bool keep_trajectories{false};
  std::string kl_method{"auto"};  // auto | gaussian | knn
  VerifySettings verify;
  SweepAxes sweep;
};

/// Strict: unknown keys and ill-typed values raise ConfigError.
ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::string& path);
/// Targets at their configured (or default) dimensions.
std::vector<TargetSpec> resolve_targets(const ExperimentConfig& c);
/// One target at dimension d (inline measures ignore d).
TargetSpec resolve_target(const std::pair<std::string, json>& spec, std::optional<Index> d);

// --- reports ---------------------------------------------------------------

/// Shortest round-trip decimal; "inf", "-inf", "nan" for non-finite values.
std::string format_real(Real x);
json real_to_json(Real x);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ostream& out_;
  std::size_t width_;
};

struct CheckRecord {
  std::string check;
  std::string target;
  Real statistic{0};
  Real threshold{0};
  bool pass{false};
  json detail = json::object();
};

json to_json(const CheckRecord& r);
json to_json(const BoundReport<Real>& r);
json to_json(const GridProvenance& p);

// --- commands --------------------------------------------------------------

struct VerifyResult {
  std::vector<CheckRecord> records;
  [[nodiscard]] bool all_pass() const;
  [[nodiscard]] json to_json() const;
};
VerifyResult run_verify(const ExperimentConfig& c);

struct BoundsRow {
  Index run_id{0};
  std::string scheme, target;
  Index d{0}, steps{0};
  Real kappa{0}, delta{0}, t0{0}, horizon{0}, eps_score{0};
  Real empirical_kl{0}, std_error{0};
  std::string kl_method;
  std::optional<BoundReport<Real>> bound;      // none for schemes without a bound
  std::optional<BoundReport<Real>> intrinsic;  // uncertified, when low-dimensionality parameters are known
  bool a3_ok{false};
  bool pass{false};
  bool counted{false};  // certified bound, hypotheses hold, reliable estimate
};

struct BoundsResult {
  std::vector<BoundsRow> rows;
  [[nodiscard]] bool all_pass() const;
  void write_csv(std::ostream& out) const;
  [[nodiscard]] json to_json() const;
};
BoundsResult run_bounds(const ExperimentConfig& c);

struct SampleResult {
  SamplerRun<Real> run;
  TimeGrid<Real> grid;
  std::string scheme;
  void write_csv(std::ostream& out) const;
  void write_trajectories_csv(std::ostream& out) const;
};
/// Uses the first target and the first scheme of the config.
SampleResult run_sample(const ExperimentConfig& c);

json grid_info(const ExperimentConfig& c);

/// em, ada, ddpm_standard, ddpm_ada, ddpm_expint
SamplerRun<Real> run_scheme(const std::string& scheme, const TimeGrid<Real>& g, const ScoreModel<Real>& s, Index n,
                            const RandomStream& stream, bool keep);
bool is_known_scheme(const std::string& scheme);

}  // namespace follmer::app
