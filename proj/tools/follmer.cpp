// follmer: verify | sample | bounds | grid-info
//
// Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "follmer/app/experiment.hpp"

namespace fs = std::filesystem;
using namespace follmer;
using namespace follmer::app;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int threads = 1;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = o.config.empty() ? parse_config(json::object()) : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

std::ofstream open_out(const Options& o, const std::string& name) {
  fs::create_directories(o.out);
  std::ofstream f(fs::path(o.out) / name, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (fs::path(o.out) / name).string());
  return f;
}

int cmd_verify(const Options& o) {
  const auto result = run_verify(load(o));
  open_out(o, "verify.json") << result.to_json().dump(2) << '\n';
  for (const auto& r : result.records)
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.check << " [" << r.target << "] statistic=" << format_real(r.statistic)
              << " threshold=" << format_real(r.threshold) << '\n';
  if (!result.all_pass()) {
    std::cerr << "failing checks:\n";
    for (const auto& r : result.records)
      if (!r.pass) std::cerr << "  " << r.check << " [" << r.target << "]\n";
    return 1;
  }
  return 0;
}

int cmd_sample(const Options& o) {
  const auto c = load(o);
  const auto result = run_sample(c);
  auto f = open_out(o, "samples.csv");
  result.write_csv(f);
  if (c.keep_trajectories) {
    auto t = open_out(o, "trajectories.csv");
    result.write_trajectories_csv(t);
  }
  std::cout << "wrote " << result.run.paths() << " " << result.scheme << " samples to "
            << (fs::path(o.out) / "samples.csv").string() << '\n';
  return 0;
}

int cmd_bounds(const Options& o) {
  const auto result = run_bounds(load(o));
  auto f = open_out(o, "bounds.csv");
  result.write_csv(f);
  open_out(o, "bounds.json") << result.to_json().dump(2) << '\n';
  for (const auto& r : result.rows)
    std::cout << r.run_id << ' ' << r.scheme << ' ' << r.target << " d=" << r.d << " N=" << r.steps
              << " kl=" << format_real(r.empirical_kl) << " bound=" << format_real(r.bound ? r.bound->value : NAN)
              << (r.counted ? (r.pass ? " ok" : " VIOLATED") : " (not counted)") << '\n';
  return result.all_pass() ? 0 : 1;
}

int cmd_grid_info(const Options& o) {
  const auto info = grid_info(load(o));
  open_out(o, "grid.json") << info.dump(2) << '\n';
  std::cout << info.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Föllmer-process samplers and identity checks"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* verify = app.add_subcommand("verify", "run the identity suite");
  auto* sample = app.add_subcommand("sample", "draw terminal samples from a scheme");
  auto* bounds = app.add_subcommand("bounds", "empirical KL against the error bounds");
  auto* grid = app.add_subcommand("grid-info", "step-size constants of the configured grid");
  for (auto* s : {verify, sample, bounds, grid}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  set_thread_count(o.threads);
  try {
    if (*verify) return cmd_verify(o);
    if (*sample) return cmd_sample(o);
    if (*bounds) return cmd_bounds(o);
    if (*grid) return cmd_grid_info(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
