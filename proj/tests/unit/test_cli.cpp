#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "pathtemper/cli.hpp"

namespace fs = std::filesystem;
using pathtemper::run_cli;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pathtemper");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pathtemper_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

// Header row present; every numeric cell prints back identically at 17 digits.
void check_csv(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  REQUIRE(std::getline(is, line));
  const auto header = split(line);
  REQUIRE(!header.empty());
  for (const auto& h : header) CHECK(std::isalpha(static_cast<unsigned char>(h.front())));
  std::size_t rows = 0;
  while (std::getline(is, line) && rows < 200) {
    const auto cells = split(line);
    CHECK(cells.size() == header.size());
    for (const auto& c : cells) {
      if (c == "nan" || c == "inf" || c == "-inf") continue;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", std::strtod(c.c_str(), nullptr));
      CHECK(c == buf);
    }
    ++rows;
  }
  CHECK(rows > 0);
}

const std::vector<std::string> kSmoke{"temper", "--fixture", "beta_binomial_easy", "--adaptations", "20",
                                      "--draws",  "3000",      "--seed",             "1"};

std::vector<std::string> with_out(std::vector<std::string> args, const fs::path& out) {
  args.push_back("--out");
  args.push_back(out.string());
  return args;
}

}  // namespace

TEST_CASE("temper smoke run writes every artifact") {
  const fs::path out = scratch("r1");
  const Run r = cli(with_out(kSmoke, out));
  REQUIRE(r.code == 0);
  for (const char* f : {"logz.csv", "marginal.csv", "draws.csv", "report.json", "config_resolved.json"})
    CHECK(fs::is_regular_file(out / f));
  for (const char* f : {"logz.csv", "marginal.csv", "draws.csv"}) check_csv(out / f);
  const auto rep = read_json(out / "report.json");
  CHECK(rep["command"] == "temper");
  CHECK(rep["fixture"] == "beta_binomial_easy");
  CHECK(rep["converged"].get<bool>());
}

TEST_CASE("identical invocations are byte-identical") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  REQUIRE(cli(with_out(kSmoke, a)).code == 0);
  REQUIRE(cli(with_out(kSmoke, b)).code == 0);
  CHECK(slurp(a / "logz.csv") == slurp(b / "logz.csv"));
  CHECK(slurp(a / "draws.csv") == slurp(b / "draws.csv"));
}

TEST_CASE("resolved configuration replays the run") {
  const fs::path a = scratch("replay_a"), b = scratch("replay_b");
  REQUIRE(cli({"temper", "--fixture", "beta_binomial_hard", "--adaptations", "3", "--draws", "1200",
               "--seed", "9", "--no-stop", "--out", a.string()})
              .code == 0);
  REQUIRE(cli({"temper", "--config", (a / "config_resolved.json").string(), "--out", b.string()}).code == 0);
  CHECK(slurp(a / "logz.csv") == slurp(b / "logz.csv"));
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
}

TEST_CASE("non-convergence exits zero and is recorded") {
  const fs::path out = scratch("nonconv");
  const Run r = cli({"temper", "--fixture", "beta_binomial_hard", "--adaptations", "1", "--draws", "600",
                     "--out", out.string()});
  CHECK(r.code == 0);
  CHECK_FALSE(read_json(out / "report.json")["converged"].get<bool>());
}

TEST_CASE("usage and output errors") {
  SUBCASE("unknown fixture") {
    const fs::path out = scratch("nope");
    const Run r = cli({"temper", "--fixture", "nope", "--out", out.string()});
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(out));
    CHECK(r.err.find("nope") != std::string::npos);
    CHECK(r.err.find("Usage") != std::string::npos);
  }
  SUBCASE("unknown flag") {
    const Run r = cli({"temper", "--fixture", "beta_binomial_easy", "--bogus", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("bogus") != std::string::npos);
  }
  SUBCASE("no subcommand") { CHECK(cli({}).code == 2); }
  SUBCASE("bad parameter override") {
    CHECK(cli({"temper", "--fixture", "beta_binomial_easy", "--param", "y=x", "--out",
               scratch("badp").string()})
              .code == 2);
  }
  SUBCASE("output directory below a regular file") {
    const fs::path blocker = scratch("blocker");
    fs::create_directories(blocker.parent_path());
    std::ofstream(blocker) << "x";
    CHECK(cli({"temper", "--fixture", "beta_binomial_easy", "--out", (blocker / "sub").string()}).code == 3);
  }
  SUBCASE("missing config file") {
    CHECK(cli({"temper", "--config", "/nonexistent/config.json", "--out", scratch("cfg").string()}).code == 3);
  }
}

TEST_CASE("other commands") {
  SUBCASE("logz") {
    const fs::path out = scratch("logz");
    REQUIRE(cli({"logz", "--fixture", "beta_binomial_hard", "--out", out.string()}).code == 0);
    check_csv(out / "logz.csv");
    CHECK(read_json(out / "report.json")["method"] == "analytic");
  }
  SUBCASE("idc") {
    const fs::path out = scratch("idc");
    REQUIRE(cli({"idc", "--fixture", "eight_schools", "--adaptations", "2", "--min-adaptations", "1",
                 "--draws", "2000", "--out",
                 out.string()})
                .code == 0);
    check_csv(out / "marginal.csv");
    CHECK(fs::is_regular_file(out / "draws.csv"));
    const auto rep = read_json(out / "report.json");
    CHECK(std::abs(rep["density_integral"].get<double>() - 1.0) < 1e-8);
  }
  SUBCASE("idc with fewer adaptations than the default minimum") {
    const fs::path out = scratch("idc_short");
    REQUIRE(cli({"idc", "--fixture", "eight_schools", "--adaptations", "2", "--draws", "2000", "--out",
                 out.string()})
                .code == 0);
    CHECK(read_json(out / "config_resolved.json")["min_adaptations"] == 2);
    CHECK(cli({"idc", "--fixture", "eight_schools", "--adaptations", "2", "--min-adaptations", "3", "--out",
               scratch("idc_bad").string()})
              .code == 2);
  }
  SUBCASE("bench") {
    const fs::path out = scratch("bench");
    REQUIRE(cli({"bench", "--fixture", "beta_binomial_easy", "--adaptations", "2", "--draws", "1000",
                 "--lambda-draws", "20", "--hmc-updates", "5", "--out", out.string()})
                .code == 0);
    check_csv(out / "l2_error.csv");
  }
  SUBCASE("diagnose") {
    const fs::path src = scratch("diag_src"), out = scratch("diag");
    REQUIRE(cli({"temper", "--fixture", "gaussian_mixture", "--adaptations", "2", "--draws", "2000",
                 "--out", src.string()})
                .code == 0);
    REQUIRE(cli({"diagnose", "--input", (src / "draws.csv").string(), "--out", out.string()}).code == 0);
    const auto rep = read_json(out / "report.json");
    CHECK(rep.contains("rhat"));
  }
  SUBCASE("gnuplot data") {
    const fs::path out = scratch("gp");
    REQUIRE(cli({"temper", "--fixture", "beta_binomial_easy", "--draws", "1000", "--emit-gnuplot", "--out",
                 out.string()})
                .code == 0);
    CHECK(fs::is_directory(out / "gnuplot"));
  }
}

TEST_CASE("help exits zero") {
  const Run r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("temper") != std::string::npos);
}
