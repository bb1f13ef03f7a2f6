#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "indist/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Photon indistinguishability from cavity-coupled emitter ensembles"};
  std::string config_path, mode, out = "out";
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int jobs = 0;
  bool full_scale = false, resume = false;

  app.add_option("--config", config_path, "config file (key = value, [sections])");
  app.add_option("--mode", mode, "overrides 'mode' in the config")
      ->check(CLI::IsMember(indist::cli::modes()));
  auto* seed_opt = app.add_option("--seed", seed, "master RNG seed");
  app.add_option("--jobs", jobs, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "output directory");
  app.add_flag("--paper-scale", full_scale, "dataset 2000, GA 5000 x 216, 200 trials unless set");
  app.add_flag("--resume", resume, "reuse dataset.json already in the output directory");
  app.add_option("--set", sets, "override a config key, e.g. --set params.kappa=50");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : indist::cli::kExitConfig;
  }

  indist::cli::RunContext ctx;
  try {
    if (!config_path.empty()) {
      const std::string text = indist::cli::read_file(config_path);
      ctx.cfg = indist::Config::parse(text, config_path);
      ctx.add_input(config_path, text);
    }
    for (const auto& s : sets) ctx.cfg.set(s);
    if (!mode.empty()) ctx.cfg.set("mode=" + mode);
    if (*seed_opt) ctx.cfg.set("seed=" + std::to_string(seed));
    if (full_scale) ctx.cfg.set("paper_scale=true");
  } catch (const indist::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return indist::cli::kExitConfig;
  }
  ctx.out = out;
  ctx.jobs = jobs;
  ctx.resume = resume;
  return indist::cli::run(ctx);
}
