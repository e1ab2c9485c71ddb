#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "rcmact/dataset.hpp"
#include "rcmact/policy.hpp"
#include "rcmact/text_format.hpp"

using namespace rcmact;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "rcmact_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(RCMACT_CLI) + " " + args + " > " + (kWork / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_log() { return read_file(kWork / "last.log"); }

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path());
  return out;
}

std::string p(const char* name) { return (kWork / name).string(); }

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_CASE("usage and errors") {
  Workspace w;
  CHECK(run("") == 1);
  CHECK(last_log().find("collect") != std::string::npos);
  CHECK(run("frobnicate") == 1);
  CHECK(run("collect --episodes 2") == 1);
  CHECK(run("--set policy.chnk_size=3 collect --episodes 1 --seed 0 --out " + p("x")) == 2);
  CHECK(last_log().find("chnk_size") != std::string::npos);
  CHECK(run("train --data " + p("missing") + " --out " + p("m.arnm")) == 2);
}

TEST_CASE("collect writes one file per episode plus a manifest") {
  Workspace w;
  REQUIRE(run("--quiet collect --episodes 2 --seed 7 --out " + p("d")) == 0);
  const auto files = snapshot(kWork / "d");
  CHECK(files.size() == 3);
  CHECK(files.count(kManifestName) == 1);
  for (const auto& [name, bytes] : files) {
    if (name != kManifestName) CHECK(bytes.substr(0, 4) == "ARNG");
  }
  REQUIRE(run("--quiet collect --episodes 2 --seed 7 --out " + p("d2")) == 0);
  CHECK(snapshot(kWork / "d2") == files);
}

TEST_CASE("calibrate utility") {
  Workspace w;
  write_file(kWork / "ref.txt", "-5,-4,0\n5,-4,0\n0,4.660254037844386,0\n");
  write_file(kWork / "obs.txt", "-4,-3,1\n6,-3,1\n1,5.660254037844386,1\n");
  REQUIRE(run("calibrate --ref " + p("ref.txt") + " --obs " + p("obs.txt")) == 0);
  CHECK(last_log().find("residual") != std::string::npos);
}

TEST_CASE("tiny pipeline") {
  Workspace w;
  const std::string tiny = "--quiet --set policy.hidden_dims=16 --set policy.batch_size=8 --set policy.steps_per_epoch=2 ";
  REQUIRE(run(tiny + "collect --episodes 2 --seed 0 --out " + p("raw")) == 0);
  const auto raw_before = snapshot(kWork / "raw");

  REQUIRE(run(tiny + "calibrate-data --in " + p("raw") + " --out " + p("cal")) == 0);
  REQUIRE(run(tiny + "calibrate-data --identity --in " + p("raw") + " --out " + p("ident")) == 0);
  CHECK(snapshot(kWork / "raw") == raw_before);
  const DatasetManifest m = read_manifest(kWork / "cal");
  CHECK(m.calibrated);
  CHECK(m.stats.has_value());

  SUBCASE("flag beats --set beats config file") {
    write_file(kWork / "c.ini", "[policy]\nchunk_size = 5\nepochs = 1\n");
    const std::string base = tiny + "--config " + p("c.ini") + " ";
    REQUIRE(run(base + "train --data " + p("cal") + " --out " + p("a.arnm")) == 0);
    CHECK(load_model(kWork / "a.arnm").config.chunk_size == 5);
    REQUIRE(run(base + "--set policy.chunk_size=4 train --data " + p("cal") + " --out " + p("b.arnm")) == 0);
    CHECK(load_model(kWork / "b.arnm").config.chunk_size == 4);
    REQUIRE(run(base + "--set policy.chunk_size=4 train --chunk 3 --data " + p("cal") + " --out " + p("c.arnm")) ==
            0);
    CHECK(load_model(kWork / "c.arnm").config.chunk_size == 3);
  }

  SUBCASE("train, roll out, evaluate, ablate, sweep") {
    REQUIRE(run(tiny + "train --chunk 4 --epochs 2 --data " + p("cal") + " --out " + p("m.arnm")) == 0);
    const std::string model = read_file(kWork / "m.arnm");
    CHECK(read_file(kWork / "m.arnm.loss.csv").rfind("epoch,loss", 0) == 0);
    REQUIRE(run(tiny + "train --chunk 4 --epochs 2 --data " + p("cal") + " --out " + p("m2.arnm")) == 0);
    CHECK(read_file(kWork / "m2.arnm") == model);
    CHECK(run(tiny + "train --chunk 4 --epochs 1 --data " + p("raw") + " --out " + p("bad.arnm")) == 2);
    REQUIRE(run(tiny + "train --chunk 4 --epochs 2 --data " + p("ident") + " --out " + p("r.arnm")) == 0);

    REQUIRE(run(tiny + "rollout --model " + p("m.arnm") + " --episodes 2 --seed 100 --out " + p("roll")) == 0);
    CHECK(snapshot(kWork / "roll").size() == 4);
    REQUIRE(run(tiny + "rollout --model " + p("m.arnm") + " --episodes 2 --seed 100 --out " + p("roll2")) == 0);
    CHECK(snapshot(kWork / "roll2") == snapshot(kWork / "roll"));

    REQUIRE(run(tiny + "collect --episodes 2 --seed 100 --expert-noise 0 --out " + p("exp")) == 0);
    REQUIRE(run(tiny + "eval --rollouts " + p("roll") + " --experts " + p("exp") + " --report " + p("eval.csv")) ==
            0);
    const std::string eval = read_file(kWork / "eval.csv");
    CHECK(std::count(eval.begin(), eval.end(), '\n') == 3);

    REQUIRE(run(tiny + "ablate --model " + p("m.arnm") + " --raw-model " + p("r.arnm") +
                " --episodes 2 --seed 100 --report " + p("abl.csv") + " --episodes-report " + p("abl_eps.csv")) == 0);
    const std::string abl = read_file(kWork / "abl.csv");
    CHECK(abl.rfind("variant,episodes,successes", 0) == 0);
    CHECK(std::count(abl.begin(), abl.end(), '\n') == 5);

    REQUIRE(run(tiny + "--set policy.epochs=1 sweep --data " + p("cal") + " --chunks 2,3 --episodes 1 --seed 100 " +
                "--report " + p("sweep.csv")) == 0);
    const std::string sweep = read_file(kWork / "sweep.csv");
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 3);
  }
}
