#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kBinary = QKIN_CLI_PATH;
const fs::path kConfigs = QKIN_CONFIG_DIR;

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / ("qkin_cli_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = kBinary.string() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  o.output = ss.str();
  fs::remove(log);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("qkin_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::size_t count_rows(const std::string& csv) {
  std::size_t n = 0;
  for (char c : csv) n += c == '\n';
  return n - 1;
}

} // namespace

TEST(Cli, ValidateAcceptsShippedConfigs) {
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".cfg") continue;
    const auto o = run("validate " + entry.path().string());
    EXPECT_EQ(o.code, 0) << entry.path() << "\n" << o.output;
    EXPECT_EQ(o.output, "ok\n");
  }
}

TEST(Cli, InvalidConfigsExitTwoWithReason) {
  const auto key = run("validate " + (kConfigs / "invalid/unknown_key.cfg").string());
  EXPECT_EQ(key.code, 2);
  EXPECT_NE(key.output.find("sigmaa"), std::string::npos) << key.output;

  const auto margin = run("validate " + (kConfigs / "invalid/box_margin.cfg").string());
  EXPECT_EQ(margin.code, 2);
  EXPECT_NE(margin.output.find("make_gaussian"), std::string::npos) << margin.output;

  const auto order = run("validate " + (kConfigs / "invalid/ascending_hbar.cfg").string());
  EXPECT_EQ(order.code, 2);
  EXPECT_NE(order.output.find("descending"), std::string::npos) << order.output;

  EXPECT_EQ(run("run " + (kConfigs / "invalid/unknown_key.cfg").string()).code, 2);
  EXPECT_EQ(run("validate /nonexistent.cfg").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, TransformRunWritesManifestAndTables) {
  const auto dir = scratch("transform");
  const auto o = run("--output-dir " + dir.string() + " run " + (kConfigs / "transform_gaussian.cfg").string());
  ASSERT_EQ(o.code, 0) << o.output;
  ASSERT_TRUE(fs::exists(dir / "wigner.csv"));
  ASSERT_TRUE(fs::exists(dir / "moments.csv"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["experiment"], "transform");
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["options"]["threads"], 1);
  EXPECT_FALSE(manifest["versions"]["fftw"].get<std::string>().empty());
  bool found = false;
  for (const auto& f : manifest["files"])
    if (f["name"] == "wigner.csv") {
      found = true;
      EXPECT_EQ(f["bytes"].get<std::size_t>(), fs::file_size(dir / "wigner.csv"));
      EXPECT_EQ(f["sha256"].get<std::string>().size(), 64u);
    }
  EXPECT_TRUE(found);
  EXPECT_EQ(count_rows(slurp(dir / "wigner.csv")), 256u * 256u);
  fs::remove_all(dir);
}

TEST(Cli, SemiclassicalSweepSmokeRun) {
  const auto dir = scratch("sweep");
  const auto o = run("--output-dir " + dir.string() + " run " + (kConfigs / "sweep_semiclassical.cfg").string());
  ASSERT_EQ(o.code, 0) << o.output;
  const auto csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(count_rows(csv), 6u);
  const auto rep = nlohmann::json::parse(slurp(dir / "sweep.json"));
  EXPECT_TRUE(std::isfinite(rep["fit"]["slope"].get<double>()));
  fs::remove_all(dir);
}

TEST(Cli, ThreadCountDoesNotChangeBytes) {
  const auto a = scratch("threads1"), b = scratch("threads4");
  const auto cfg = (kConfigs / "monokinetic_gaussian.cfg").string();
  ASSERT_EQ(run("--threads 1 --seedless --output-dir " + a.string() + " run " + cfg).code, 0);
  ASSERT_EQ(run("--threads 4 --seedless --output-dir " + b.string() + " run " + cfg).code, 0);
  EXPECT_EQ(slurp(a / "monokinetic.csv"), slurp(b / "monokinetic.csv"));
  const auto manifest = nlohmann::json::parse(slurp(b / "manifest.json"));
  EXPECT_TRUE(manifest["options"]["seedless"].get<bool>());
  fs::remove_all(a);
  fs::remove_all(b);
}
