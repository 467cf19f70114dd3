#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#ifndef SUBDYN_CLI_PATH
#define SUBDYN_CLI_PATH "subdyn"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SUBDYN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "subdyn_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli exit codes and artifact pipeline" * doctest::timeout(600)) {
  TempDir tmp;

  CHECK(run("definitely-not-a-subcommand") == 2);
  CHECK(run("") == 2);
  CHECK(run("gen --scenario no-such-scenario --out " + (tmp / "x")) == 1);

  // a shrunk rod-translation run still emits one file per scripted sequence
  const std::string data = tmp / "data";
  REQUIRE(run("gen --scenario rod-translation --frames 8 --out " + data) == 0);
  int seq_files = 0;
  for (const auto& e : fs::directory_iterator(data))
    if (e.path().extension() == ".sdsq") ++seq_files;
  CHECK(seq_files == 12);
  CHECK(fs::exists(data + "/manifest.json"));
  CHECK(fs::exists(data + "/scenario.json"));

  const std::string ae = tmp / "ae.sdwt";
  REQUIRE(run("train-ae --scenario rod-translation --frames 8 --data " + data +
              " --epochs 20 --batch 64 --seed 5 --out " + ae) == 0);
  CHECK(fs::exists(ae));
  CHECK(fs::exists(ae + ".manifest.json"));
  CHECK(fs::exists(ae + ".report.jsonl"));

  // identical data/seed, different loss: distinct checkpoints
  const std::string int_self = tmp / "int_self.sdwt";
  const std::string int_sup = tmp / "int_sup.sdwt";
  REQUIRE(run("train-int --scenario rod-translation --frames 8 --data " + data + " --ae " + ae +
              " --epochs 4 --batch 64 --seed 5 --out " + int_self) == 0);
  REQUIRE(run("train-int --scenario rod-translation --frames 8 --data " + data + " --ae " + ae +
              " --epochs 4 --batch 64 --seed 5 --supervised --out " + int_sup) == 0);
  CHECK(slurp(int_self) != slurp(int_sup));

  // reproducibility: rerun with the same flags gives bit-identical outputs
  const std::string int_again = tmp / "int_again.sdwt";
  REQUIRE(run("train-int --scenario rod-translation --frames 8 --data " + data + " --ae " + ae +
              " --epochs 4 --batch 64 --seed 5 --out " + int_again) == 0);
  CHECK(slurp(int_self) == slurp(int_again));

  const std::string ro = tmp / "ro.sdsq";
  REQUIRE(run("rollout --scenario rod-translation --frames 8 --ae " + ae + " --int " + int_self +
              " --steps 12 --seq 2 --out " + ro) == 0);
  CHECK(fs::exists(ro));

  const std::string metrics = tmp / "metrics.json";
  REQUIRE(run("eval --scenario rod-translation --frames 8 --pred " + ro + " --data " + data +
              " --seq 2 --out " + metrics) == 0);
  CHECK(fs::exists(metrics));
  CHECK(fs::exists(metrics + ".csv"));

  const std::string objs = tmp / "objs";
  REQUIRE(run("export --in " + ro + " --out " + objs) == 0);
  int obj_files = 0;
  for (const auto& e : fs::directory_iterator(objs))
    if (e.path().extension() == ".obj") ++obj_files;
  CHECK(obj_files == 14);  // 12 steps + 2 seed frames
}
