#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "indist/cli.hpp"

namespace fs = std::filesystem;
using indist::Config;
using indist::ConfigError;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("indist_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return indist::cli::read_file(p); }

struct RunResult {
  int code;
  std::string log;
};

RunResult run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(INDIST_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), slurp(log)};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

// ---------------------------------------------------------------- config

TEST(Config, SectionsCommentsAndLists) {
  Config c = Config::parse(
      "mode = sweep2  # trailing comment\n"
      "\n"
      "[params]\n"
      "kappa = 50\n"
      "[sweep]\n"
      "g = 1:3:3\n"
      "kappa = 0.1:10:3:log\n"
      "d = 0.069, 0.07\n");
  EXPECT_EQ(c.get_string("mode", ""), "sweep2");
  EXPECT_DOUBLE_EQ(c.get_double("params.kappa", 1.0), 50.0);
  EXPECT_DOUBLE_EQ(c.get_double("params.g", 7.0), 7.0);
  EXPECT_EQ(c.get_list("sweep.g", ""), (std::vector<double>{1, 2, 3}));
  const auto k = c.get_list("sweep.kappa", "");
  ASSERT_EQ(k.size(), 3u);
  EXPECT_NEAR(k[1], 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(k[2], 10.0);
  EXPECT_EQ(c.get_list("sweep.d", "").size(), 2u);
  EXPECT_NO_THROW(c.finish());
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(Config::parse("[params\n"), ConfigError);
  EXPECT_THROW(Config::parse("no equals sign\n"), ConfigError);
  Config c = Config::parse("[params]\nkappa = ten\ng = 1.5\nn = 2.5\nflag = maybe\nr = 1:2:0\n");
  EXPECT_THROW(c.get_double("params.kappa", 1.0), ConfigError);
  EXPECT_THROW(c.get_int("params.g", 1), ConfigError);
  EXPECT_THROW(c.get_bool("params.flag", false), ConfigError);
  EXPECT_THROW(c.get_list("params.r", ""), ConfigError);
  EXPECT_THROW(c.get_choice("params.n", "a", {"a", "b"}), ConfigError);
}

TEST(Config, UnusedKeysAreErrors) {
  Config c = Config::parse("[params]\nkappa = 1\nkapa = 2\n");
  c.get_double("params.kappa", 0.0);
  ASSERT_EQ(c.unused(), std::vector<std::string>{"params.kapa"});
  EXPECT_THROW(c.finish(), ConfigError);
}

TEST(Config, ResolvedTextParsesBackToSameValues) {
  Config c = Config::parse("[sweep]\ng = 1:30:30\nd = 0.069, 0.07\n[params]\nkappa = 0.1\n");
  c.set("params.g=3");
  const auto g = c.get_list("sweep.g", "");
  const auto d = c.get_list("sweep.d", "");
  const double kappa = c.get_double("params.kappa", 0.0);
  const double gg = c.get_double("params.g", 0.0);
  c.get_double("params.gamma_star", 1e4);  // default, still recorded

  Config r = Config::parse(c.to_text());
  EXPECT_EQ(r.get_list("sweep.g", ""), g);
  EXPECT_EQ(r.get_list("sweep.d", ""), d);
  EXPECT_EQ(r.get_double("params.kappa", -1.0), kappa);
  EXPECT_EQ(r.get_double("params.g", -1.0), gg);
  EXPECT_EQ(r.get_double("params.gamma_star", -1.0), 1e4);
  EXPECT_NO_THROW(r.finish());
}

TEST(CliHelpers, Sha256KnownVector) {
  EXPECT_EQ(indist::cli::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(CliHelpers, ContourCrossingInterpolates) {
  const std::vector<double> g{1, 2, 3, 4};
  const auto [gmax, gx] = indist::cli::contour_point(g, {0.95, 0.93, 0.85, 0.8}, 0.9);
  EXPECT_EQ(gmax, 2.0);
  EXPECT_NEAR(gx, 2.0 + 0.03 / 0.08, 1e-12);
  const auto [none, nx] = indist::cli::contour_point(g, {0.5, 0.5, 0.5, 0.5}, 0.9);
  EXPECT_TRUE(std::isnan(none) && std::isnan(nx));
  const auto [all, ax] = indist::cli::contour_point(g, {1, 1, 1, 1}, 0.9);
  EXPECT_EQ(all, 4.0);
  EXPECT_TRUE(std::isnan(ax));  // contour leaves the grid
}

// ---------------------------------------------------------------- binary

TEST(CliBinary, SinglePointSweepMatchesLibrary) {
  const fs::path dir = scratch("sweep");
  const auto r = run_cli("--mode sweep2 --set sweep.d=0.07 --set sweep.g=3 --set sweep.kappa=1 "
                         "--set params.gamma_star=100 --out " + dir.string(),
                         dir / "log.txt");
  ASSERT_EQ(r.code, 0) << r.log;
  const auto rows = read_csv(dir / "sweep.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0][3], "I_qrt");
  const double direct =
      indist::simulate_indistinguishability(indist::effective_two_emitter(0.07, 1.0, 100.0, 3.0, 1.0),
                                            indist::InitialState::symmetric(), {})
          .value;
  EXPECT_DOUBLE_EQ(std::stod(rows[1][3]), direct);
  EXPECT_DOUBLE_EQ(std::stod(rows[1][4]),
                   indist::indist_two_emitter_closed(1.0, 100.0, 1.0, 3.0, indist::kd_from_distance(0.07)));
  EXPECT_EQ(read_csv(dir / "contour.csv").size(), 2u);
}

TEST(CliBinary, ExitCodes) {
  const fs::path dir = scratch("codes");
  EXPECT_EQ(run_cli("--mode sweep2 --set sweep.bogus=1 --out " + (dir / "a").string(), dir / "l1").code,
            indist::cli::kExitConfig);
  EXPECT_EQ(read_json(dir / "a" / "manifest.json")["exit_code"], indist::cli::kExitConfig);
  EXPECT_EQ(run_cli("--mode nope --out " + (dir / "b").string(), dir / "l2").code,
            indist::cli::kExitConfig);
  EXPECT_EQ(run_cli("--config /nonexistent.conf --out " + (dir / "c").string(), dir / "l3").code,
            indist::cli::kExitConfig);
  EXPECT_EQ(run_cli("--out " + (dir / "d").string(), dir / "l4").code, indist::cli::kExitConfig);

  // Every detuning trial fails without coupling: a numerical failure.
  const auto r = run_cli("--mode robustness --set geometry.omega=0.1,0.1,0.2,0.1 --set params.g=0 "
                         "--set robustness.n_max=1 --set robustness.trials=2 --out " +
                             (dir / "e").string(),
                         dir / "l5");
  EXPECT_EQ(r.code, indist::cli::kExitNumerical) << r.log;
  const auto m = read_json(dir / "e" / "manifest.json");
  EXPECT_EQ(m["exit_code"], indist::cli::kExitNumerical);
  EXPECT_FALSE(m["error"].get<std::string>().empty());
}

TEST(CliBinary, ManifestRerunReproducesOutputs) {
  const fs::path dir = scratch("rerun");
  const auto a = run_cli("--mode analytic-compare --set analytic.pair_g=1,10 --set analytic.pair_d=0.07 "
                         "--set params.gamma_star=10 --seed 4 --out " + (dir / "a").string(),
                         dir / "l1");
  ASSERT_EQ(a.code, 0) << a.log;
  const auto m1 = read_json(dir / "a" / "manifest.json");
  EXPECT_EQ(m1["seed"], 4);
  EXPECT_EQ(m1["config_file"], "resolved.conf");

  const auto b = run_cli("--config " + (dir / "a" / "resolved.conf").string() + " --out " +
                             (dir / "b").string(),
                         dir / "l2");
  ASSERT_EQ(b.code, 0) << b.log;
  const auto m2 = read_json(dir / "b" / "manifest.json");
  EXPECT_EQ(m1["outputs"], m2["outputs"]);
  EXPECT_EQ(m1["config"], m2["config"]);
  ASSERT_EQ(m2["inputs"].size(), 1u);
  EXPECT_EQ(m2["inputs"][0]["sha256"], indist::cli::sha256_hex(slurp(dir / "a" / "resolved.conf")));
}

TEST(CliBinary, StabilityRasterShapeAndOrientation) {
  const fs::path dir = scratch("stability");
  const auto r = run_cli("--mode stability-map --set stability.n_re=7 --set stability.n_im=5 --out " +
                             dir.string(),
                         dir / "log.txt");
  ASSERT_EQ(r.code, 0) << r.log;
  const auto rows = read_csv(dir / "stability.csv");
  ASSERT_EQ(rows.size(), 1u + 7 * 5);
  // Row 0 of the CSV is the smallest imaginary part.
  EXPECT_DOUBLE_EQ(std::stod(rows[1][3]), -3.0);
  EXPECT_DOUBLE_EQ(std::stod(rows.back()[3]), 3.0);

  std::istringstream pgm(slurp(dir / "stability.pgm"));
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  pgm >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(w, 7);
  EXPECT_EQ(h, 5);
  EXPECT_EQ(maxv, 255);
  int count = 0, v = 0;
  while (pgm >> v) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 255);
    ++count;
  }
  EXPECT_EQ(count, 35);
}

TEST(CliBinary, CascadeTable) {
  const fs::path dir = scratch("cascade");
  const auto r = run_cli("--mode cascade --set cascade.kappa2=0.01:100:9:log --set cascade.g1=1,3 --out " +
                             dir.string(),
                         dir / "log.txt");
  ASSERT_EQ(r.code, 0) << r.log;
  const auto rows = read_csv(dir / "cascade.csv");
  ASSERT_EQ(rows.size(), 1u + 2 * 9);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double g = std::stod(rows[i][0]), k1 = std::stod(rows[i][1]), k2 = std::stod(rows[i][2]);
    EXPECT_NEAR(std::stod(rows[i][3]), 4 * g * g / (k1 + k2), 1e-12 * (1 + 4 * g * g / (k1 + k2)));
    const double I = std::stod(rows[i][4]);
    EXPECT_GT(I, 0.0);
    EXPECT_LE(I, 1.0);
  }
}

TEST(CliBinary, RobustnessRows) {
  const fs::path dir = scratch("robustness");
  const auto r = run_cli("--mode robustness --set geometry.omega=0.1,0.1,0.2,0.1 --set params.gamma_star=0.1 "
                         "--set robustness.n_max=3 --set robustness.trials=4 --seed 2 --out " +
                             dir.string(),
                         dir / "log.txt");
  ASSERT_EQ(r.code, 0) << r.log;
  const auto curve = read_csv(dir / "robustness.csv");
  ASSERT_EQ(curve.size(), 1u + 4);
  EXPECT_EQ(curve[0][0], "sigma");
  EXPECT_EQ(std::stod(curve[2][0]), 1.0);
  EXPECT_EQ(std::stod(curve[1][2]), 0.0);  // sigma = 0 has no spread
  const auto draws = read_csv(dir / "robustness_draws.csv");
  ASSERT_EQ(draws.size(), 1u + 4 * 4);
  EXPECT_EQ(draws[0].size(), 6u);  // sigma, trial, I, delta_0, delta_1, error
}

TEST(CliBinary, OptimizeSmokeAndResume) {
  const fs::path dir = scratch("optimize");
  {
    std::ofstream f(dir / "run.conf");
    f << "mode = optimize\nseed = 11\n"
         "[constraints]\nn_emitters = 3\n"
         "[dataset]\nsize = 16\n"
         "[train]\nhidden = 8, 8\nepochs = 10\nbatch_size = 8\n"
         "[ga]\npopulation_size = 12\ngenerations = 4\n"
         "[optimize]\ntolerance = false\n";
  }
  const fs::path out = dir / "out";
  const auto a = run_cli("--config " + (dir / "run.conf").string() + " --out " + out.string(),
                         dir / "l1");
  ASSERT_TRUE(a.code == 0 || a.code == indist::cli::kExitRegression) << a.log;
  for (const char* f : {"dataset.json", "model.json", "training.csv", "ga_history.csv",
                        "geometry.json", "manifest.json", "resolved.conf"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto geo = read_json(out / "geometry.json");
  EXPECT_EQ(geo["omega"].size(), 6u);
  EXPECT_EQ(geo["improved"].get<bool>(), a.code == 0);
  EXPECT_GT(geo["verified_I"].get<double>(), 0.0);
  EXPECT_EQ(read_csv(out / "ga_history.csv").size(), 1u + 5);
  EXPECT_EQ(read_csv(out / "training.csv").size(), 1u + 10);
  const std::string dataset_before = slurp(out / "dataset.json");

  const auto b = run_cli("--config " + (dir / "run.conf").string() + " --resume --out " + out.string(),
                         dir / "l2");
  EXPECT_EQ(b.code, a.code) << b.log;
  EXPECT_NE(b.log.find("loaded 16 samples"), std::string::npos) << b.log;
  EXPECT_EQ(slurp(out / "dataset.json"), dataset_before);
  const auto m = read_json(out / "manifest.json");
  bool dataset_input = false;
  for (const auto& in : m["inputs"])
    if (in["path"].get<std::string>().find("dataset.json") != std::string::npos) dataset_input = true;
  EXPECT_TRUE(dataset_input);
  EXPECT_EQ(read_json(out / "geometry.json")["omega"], geo["omega"]);

  // The winner feeds the tolerance mode directly.
  const auto t = run_cli("--mode tolerance --set geometry.file=" + (out / "geometry.json").string() +
                             " --set tolerance.emitters=1 --set tolerance.threshold=0.01 --out " +
                             (dir / "tol").string(),
                         dir / "l3");
  ASSERT_EQ(t.code, 0) << t.log;
  const auto tol = read_csv(dir / "tol" / "tolerance.csv");
  ASSERT_EQ(tol.size(), 2u);
  EXPECT_EQ(tol[1][0], "1");
  EXPECT_EQ(tol[1].size(), 13u);
}

TEST(CliBinary, ResumeRejectsMismatchedDataset) {
  const fs::path dir = scratch("mismatch");
  const auto a = run_cli("--mode dataset --set constraints.n_emitters=2 --set dataset.size=3 --out " +
                             dir.string(),
                         dir / "l1");
  ASSERT_EQ(a.code, 0) << a.log;
  const auto b = run_cli("--mode dataset --set constraints.n_emitters=2 --set dataset.size=3 "
                         "--set params.kappa=50 --resume --out " + dir.string(),
                         dir / "l2");
  EXPECT_EQ(b.code, indist::cli::kExitConfig) << b.log;
}
