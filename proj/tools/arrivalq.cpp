#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "arrivalq/cli.hpp"

namespace cli = arrivalq::cli;

int main(int argc, char** argv) {
  CLI::App app{"Equilibrium arrival strategies, social optima and price of anarchy for the ?/M/1 arrival game"};
  std::string config_path;
  std::string out_dir = ".";
  std::string format = "both";
  std::optional<std::uint64_t> seed;
  std::string sweep_path;
  app.add_option("--config", config_path, "flat JSON run configuration")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
  app.add_option("--seed", seed, "Monte Carlo seed (overrides the config)");
  app.add_option("--sweep", sweep_path, "JSON array of config overrides, one run each");
  CLI11_PARSE(app, argc, argv);

  const auto fmt = format == "json" ? cli::OutputFormat::Json
                   : format == "csv" ? cli::OutputFormat::Csv
                                     : cli::OutputFormat::Both;
  try {
    if (!sweep_path.empty()) {
      const auto base = cli::read_json_file(config_path);
      const auto overrides = cli::read_json_file(sweep_path);
      nlohmann::json summary;
      const int code = cli::run_sweep(base, overrides, out_dir, seed, fmt, &summary);
      std::cout << summary.dump(2) << '\n';
      return code;
    }
    auto cfg = cli::load_config(config_path);
    if (seed) cfg.solver.seed = *seed;
    cfg.format = fmt;
    cfg.out_dir = out_dir;
    const auto status = cli::run(cfg);
    if (status.exit_code != 0) {
      std::cerr << status.document.dump() << '\n';
      return status.exit_code;
    }
    for (const auto& path : status.written) std::cout << path.string() << '\n';
    return 0;
  } catch (const arrivalq::SolverError& e) {
    std::cerr << cli::error_object(e.code(), e.what()).dump() << '\n';
    return cli::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"schemaVersion", cli::kSchemaVersion},
                                {"error", {{"code", "INTERNAL"}, {"exitCode", 1}, {"message", e.what()}}}}
                     .dump()
              << '\n';
    return 1;
  }
}
