#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cirgps/model.hpp"
#include "support.hpp"

#ifndef CIRGPS_CLI
#error "CIRGPS_CLI must point at the cirgps executable"
#endif

namespace fs = std::filesystem;
using namespace cirgps;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run run(const std::string& args) {
  const std::string cmd = std::string(CIRGPS_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("cirgps_cli_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

const std::string kGolden = std::string(CIRGPS_TEST_DATA) + "/golden";
// Same widths as the golden checkpoint.
const std::string kSmall =
    "--set model.d0=8 --set model.d_pe=4 --set model.layers=1 --set model.heads=2 --set synth.cells=12 "
    "--set data.split.train=0.6 --set data.split.valid=0.2 --set data.split.test=0.2";

}  // namespace

TEST_CASE("eval reproduces the golden metrics file") {
  TempDir t("golden");
  const auto r = run(fmt::format("eval {0}/model.ckpt {0}/dataset --split test {1} --out {2}", kGolden, kSmall,
                                 t / "ev"));
  INFO(r.out);
  REQUIRE(r.code == 0);
  CHECK(slurp(t / "ev/metrics.json") == slurp(kGolden + "/metrics.json"));
}

TEST_CASE("predict writes one row per sample") {
  TempDir t("predict");
  const auto r = run(fmt::format("predict {0}/model.ckpt {0}/dataset --split test {1} --out {2}", kGolden, kSmall,
                                 t / "p"));
  INFO(r.out);
  REQUIRE(r.code == 0);
  std::ifstream in(t / "p/predictions.jsonl");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line); ++rows) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("score").get<double>() >= 0.0);
    CHECK(j.at("score").get<double>() <= 1.0);
  }
  const auto golden = nlohmann::json::parse(slurp(kGolden + "/metrics.json"));
  CHECK(rows == golden.at("metrics").at("count").get<std::size_t>());
}

TEST_CASE("convert the buffer fixture, twice") {
  TempDir t("convert");
  const std::string in = fmt::format("{0}/buffer.sp {0}/buffer.spf", CIRGPS_TEST_DATA);
  const auto a = run(fmt::format("convert {} --out {}", in, t / "a"));
  const auto b = run(fmt::format("convert {} --out {}", in, t / "b"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto report = nlohmann::json::parse(slurp(t / "a/report.json"));
  CHECK(report.at("nodes").at("total") == 25);
  CHECK(report.at("edges").at("total") == 32);
  for (const auto* f : {"graph.txt", "stats.txt", "links.txt", "ground.txt", "report.json", "config.ini"}) {
    INFO(f);
    CHECK(slurp(t.path / "a" / f) == slurp(t.path / "b" / f));
  }
  CHECK(slurp(t / "a/graph.txt").rfind("25 32\n", 0) == 0);
}

TEST_CASE("error exits") {
  TempDir t("errors");
  const auto missing = run(fmt::format("convert {} {}/buffer.spf --out {}", t / "absent.sp", CIRGPS_TEST_DATA, t / "o"));
  CHECK(missing.code == 2);
  CHECK(missing.out.find(t / "absent.sp") != std::string::npos);
  CHECK_FALSE(fs::exists(t / "o"));

  const auto bad_key = run(fmt::format("synth --set nope.key=1 --out {}", t / "s"));
  CHECK(bad_key.code == 1);
  CHECK(bad_key.out.find("nope.key") != std::string::npos);

  const auto no_args = run("eval");
  CHECK(no_args.code == 1);

  const auto no_data = run(fmt::format("eval {}/model.ckpt {} --out {}", kGolden, t / "nowhere", t / "m"));
  CHECK(no_data.code == 2);
  CHECK(no_data.out.find(t / "nowhere") != std::string::npos);
}

TEST_CASE("head-only fine-tuning through the CLI keeps the backbone") {
  TempDir t("finetune");
  const std::string reg = kSmall + " --set run.task=edge_reg --set train.epochs=4 --set data.fraction=0.3";
  REQUIRE(run(fmt::format("synth {} --seed 5 --out {}", reg, t / "syn")).code == 0);
  REQUIRE(run(fmt::format("convert {0} {1} {2} --out {3}", t / "syn/netlist.sp", t / "syn/labels.spf", reg,
                          t / "g"))
              .code == 0);
  REQUIRE(run(fmt::format("sample {} {} --out {}", t / "g", reg, t / "ds")).code == 0);
  const auto ft = run(fmt::format("finetune {} {} --mode head --checkpoint {}/model.ckpt --out {}", t / "ds", reg,
                                  kGolden, t / "ft"));
  INFO(ft.out);
  REQUIRE(ft.code == 0);

  const auto before = GpsModel::load(kGolden + "/model.ckpt");
  const auto after = GpsModel::load(t / "ft/model.ckpt");
  int head_changed = 0;
  for (const auto* p : before.model->parameters()) {
    const auto h = tensor_hash(after.model->param(p->name));
    if (GpsModel::is_head_parameter(p->name)) {
      head_changed += h != tensor_hash(*p);
    } else {
      INFO(p->name);
      CHECK(h == tensor_hash(*p));
    }
  }
  CHECK(head_changed > 0);
  const auto summary = nlohmann::json::parse(slurp(t / "ft/metrics.json"));
  CHECK(summary.at("mode") == "head");
}
