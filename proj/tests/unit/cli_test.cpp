#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded and returns its exit code and stdout.
CliResult cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TWOPHASE_CLI_PATH + "\" " + args + " 2>/dev/null";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "twophase_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

TEST(Cli, Version) {
  const CliResult r = cli("version");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "twophase 0.1.0\n");
}

TEST(Cli, ParseErrorsExitOne) {
  EXPECT_EQ(cli("simulate --no-such-flag").code, 1);
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("simulate --scenario s9 --quiet").code, 1);
  EXPECT_EQ(cli("simulate --profile laptop --quiet").code, 1);
  EXPECT_EQ(cli("simulate --replicates 0 --methods benchmark --quiet").code, 1);
  EXPECT_EQ(cli("simulate --config /nonexistent/run.cfg").code, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  const CliResult r = cli(
      "analyze --data /nonexistent/data.csv --stratum h --cluster c --weight w "
      "--phase2 r --outcome y --method mi-bart");
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, SimulateWritesCsv) {
  const fs::path metrics = scratch("metrics.csv");
  const fs::path reps = scratch("replicates.csv");
  fs::remove(metrics);
  fs::remove(reps);
  const CliResult r = cli("simulate --methods benchmark --replicates 2 --quiet --out " +
                    metrics.string() + " --replicate-out " + reps.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  ASSERT_TRUE(fs::exists(metrics));
  EXPECT_EQ(line_count(metrics), 2u);
  EXPECT_EQ(line_count(reps), 3u);
  std::ifstream in(metrics);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("scenario,method,absolute_bias,rmse,coverage,width", 0), 0u);
}

TEST(Cli, FlagsOverrideConfigFile) {
  const fs::path cfg = scratch("run.cfg");
  {
    std::ofstream out(cfg);
    out << "# small run\nmethods = benchmark\nreplicates = 3\nquiet = true\n";
  }
  const fs::path a = scratch("from_file.csv"), b = scratch("overridden.csv");
  ASSERT_EQ(cli("simulate --config " + cfg.string() + " --replicate-out " + a.string()).code, 0);
  ASSERT_EQ(cli("simulate --config " + cfg.string() + " --replicates 2 --replicate-out " +
                b.string())
                .code,
            0);
  EXPECT_EQ(line_count(a), 4u);
  EXPECT_EQ(line_count(b), 3u);
}

TEST(Cli, SameSeedSameOutput) {
  const std::string args = "simulate --methods benchmark --replicates 2 --quiet --seed 5";
  const CliResult a = cli(args), b = cli(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, cli("simulate --methods benchmark --replicates 2 --quiet --seed 6").out);
}

}  // namespace
