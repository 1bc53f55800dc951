// gbdqn: run experiments, summarize and plot results, and verify invariants.
//
//   gbdqn run --config <path|preset> [--seeds 0,1,2] [--out <dir>] [--workers N]
//   gbdqn summarize --in <dir> [--window N]
//   gbdqn plot --in <dir> --out <file.svg> [--smooth N]
//   gbdqn verify [--fixtures <dir>] [--seed N]
//   gbdqn show-config --config <path|preset>
//
// Exit codes: 0 success, 1 config error, 2 runtime failure, 3 verification failure.

#include "gbdqn/bench.hpp"
#include "gbdqn/verify.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2, kVerifyFailed = 3 };

gbdqn::ExperimentConfig load_config(const std::string& source) {
  if (std::filesystem::exists(source)) return gbdqn::parse_config_file(source);
  for (const std::string& name : gbdqn::preset_names())
    if (name == source) return gbdqn::preset(name);
  throw gbdqn::ConfigError("'" + source + "' is neither a config file nor a preset name");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-boosted DQN experiments under environment drift"};
  app.require_subcommand(1);

  std::string config_source, out_dir, seeds_arg;
  unsigned workers = 0;
  auto* run = app.add_subcommand("run", "Run every (method, seed) pair of an experiment");
  run->add_option("--config", config_source, "Config file or preset name")->required();
  run->add_option("--seeds", seeds_arg, "Comma-separated seed list overriding the config");
  run->add_option("--out", out_dir, "Output directory overriding the config");
  run->add_option("--workers", workers, "Parallel runs (0 = hardware concurrency)");

  std::string in_dir;
  int window = -1;
  std::string summary_out;
  auto* summarize = app.add_subcommand("summarize", "Final-window statistics from run CSVs");
  summarize->add_option("--in", in_dir, "Directory of run CSVs")->required();
  summarize->add_option("--window", window, "Final-window size in episodes (default 100)");
  summarize->add_option("--out", summary_out, "Also write the summary CSV here");

  std::string plot_out;
  int smooth = 20;
  auto* plot = app.add_subcommand("plot", "SVG learning curves with drift markers");
  plot->add_option("--in", in_dir, "Directory of run CSVs")->required();
  plot->add_option("--out", plot_out, "Output SVG path")->required();
  plot->add_option("--smooth", smooth, "Moving-average window")->check(CLI::PositiveNumber);

  std::string fixtures;
  std::uint64_t verify_seed = gbdqn::VerifyOptions{}.seed;
  auto* verify = app.add_subcommand("verify", "Run the invariant suite");
  verify->add_option("--fixtures", fixtures, "Golden trajectory directory");
  verify->add_option("--seed", verify_seed, "Base seed");

  auto* show = app.add_subcommand("show-config", "Print the fully resolved config");
  show->add_option("--config", config_source, "Config file or preset name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      gbdqn::ExperimentConfig config = load_config(config_source);
      if (!seeds_arg.empty()) {
        config.seeds.clear();
        for (const auto& s : CLI::detail::split(seeds_arg, ',')) config.seeds.push_back(std::stoull(s));
      }
      if (!out_dir.empty()) config.output_dir = out_dir;
      const auto result = gbdqn::run_experiment(config, workers, &std::cerr);
      gbdqn::write_summary_csv(std::cout, result.summary);
      std::cerr << "wrote " << result.files.size() << " files to " << config.output_dir << '\n';
    } else if (*summarize) {
      const auto records = gbdqn::read_records_dir(in_dir);
      const auto rows = gbdqn::summarize(records, window > 0 ? window : 100);
      gbdqn::write_summary_csv(std::cout, rows);
      if (!summary_out.empty()) {
        std::ofstream out(summary_out);
        gbdqn::write_summary_csv(out, rows);
      }
    } else if (*plot) {
      const auto records = gbdqn::read_records_dir(in_dir);
      for (const auto& path : gbdqn::plot_records(records, plot_out, smooth)) std::cerr << "wrote " << path << '\n';
    } else if (*verify) {
      gbdqn::VerifyOptions options;
      options.seed = verify_seed;
      if (!fixtures.empty()) options.fixture_dir = fixtures;
      const auto results = gbdqn::verify(options);
      return gbdqn::print_report(std::cout, results) ? kOk : kVerifyFailed;
    } else if (*show) {
      gbdqn::write_config(std::cout, load_config(config_source));
    }
  } catch (const gbdqn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
