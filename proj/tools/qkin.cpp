#include "qkin/experiments.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numerical = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw qkin::config_error("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int do_validate(const std::string& path) {
  const auto cfg = qkin::parse_config(read_file(path));
  qkin::validate_experiment(cfg);
  std::cout << "ok\n";
  return exit_ok;
}

int do_run(const std::string& path, const std::string& output_dir, const qkin::RunOptions& opt) {
  const std::string text = read_file(path);
  auto cfg = qkin::parse_config(text);
  if (!output_dir.empty()) cfg.output.directory = output_dir;
  qkin::validate_experiment(cfg);

  const auto start = std::chrono::steady_clock::now();
  const auto result = qkin::run_experiment(cfg, opt);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const std::filesystem::path dir(cfg.output.directory);
  const auto files = result.emitter.write(dir);
  const auto manifest = qkin::make_manifest(cfg, opt, result, files, wall, text);
  std::ofstream(dir / "manifest.json", std::ios::binary | std::ios::trunc) << manifest.dump(2) << '\n';

  if (!result.failed_stage.empty()) {
    std::cerr << "numerical failure in stage '" << result.failed_stage << "': " << result.failure << '\n';
    return exit_numerical;
  }
  std::cout << qkin::describe(cfg.kind) << ": " << result.summary.dump() << '\n';
  return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-space quantum kinetics experiment runner"};
  app.require_subcommand(1);
  std::string output_dir;
  qkin::RunOptions opt;
  app.add_option("--output-dir", output_dir, "Override the output directory of the configuration");
  app.add_option("--threads", opt.threads, "Worker threads for independent legs (results do not depend on it)")
      ->check(CLI::Range(1, 1024));
  app.add_flag("--seedless", opt.seedless, "Assert that the run uses no randomness (always true; recorded)");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment");
  run->add_option("config", config_path, "Configuration file")->required();
  auto* validate = app.add_subcommand("validate", "Check a configuration without running it");
  validate->add_option("config", config_path, "Configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  try {
    return run->parsed() ? do_run(config_path, output_dir, opt) : do_validate(config_path);
  } catch (const qkin::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const qkin::precondition_error& e) {
    std::cerr << "precondition failed: " << e.what() << '\n';
    return exit_config;
  } catch (const qkin::numerical_error& e) {
    std::cerr << "numerical failure in stage '" << e.stage() << "': " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "failure in stage 'emit': " << e.what() << '\n';
    return exit_numerical;
  }
}
