#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <regex>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "dct/serialization.hpp"
#include "dot_export.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using dct::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome dct_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& file) const { return (path / file).string(); }
};

std::string slurp(const std::string& path) { return dct::read_text_file(path); }

const std::vector<std::string> kSmallData = {"--n", "400", "--p", "3", "--tau-fn", "step", "--data-seed", "4"};
const std::vector<std::string> kSmallForest = {"--num-trees", "30", "--nuisance-trees", "20", "--seed", "2"};
const std::vector<std::string> kSmallEvo = {"--population",   "20", "--max-iterations",     "200", "--min-iterations",
                                            "50",             "--convergence-window", "20", "--min-leaf",
                                            "10",             "--bootstrap",          "50"};

std::vector<std::string> cat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::size_t count_matches(const std::string& text, const std::regex& re) {
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator()));
}

const std::regex kNodeStmt(R"(^  n\d+ \[label=)", std::regex::multiline);
const std::regex kEdgeStmt(R"(^  n\d+ -> n\d+ \[label=)", std::regex::multiline);

// Minimal structural check of the DOT grammar subset we emit.
bool dot_well_formed(const std::string& dot) {
  std::istringstream in(dot);
  std::string line;
  std::getline(in, line);
  if (line != "digraph dct {") return false;
  bool closed = false;
  while (std::getline(in, line)) {
    if (closed) return false;
    if (line == "}") {
      closed = true;
      continue;
    }
    if (line.empty() || line.back() != ';') return false;
    if (std::count(line.begin(), line.end(), '"') % 2 != 0) return false;
    if (std::count(line.begin(), line.end(), '[') != std::count(line.begin(), line.end(), ']')) return false;
  }
  return closed;
}

int shell_exit(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 1 and help with 0") {
    CHECK(dct_run({}).code == 1);
    CHECK(dct_run({"frobnicate"}).code == 1);
    CHECK(dct_run({"generate", "--out"}).code == 1);
    CHECK(dct_run({"generate", "--bogus", "1", "--out", "x.csv"}).code == 1);
    CHECK(dct_run({"distill", "--out", "t.json", "--model", "m.json", "--mode", "fancy"}).code == 1);
    const Outcome help = dct_run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("distill") != std::string::npos);
    const Outcome sub = dct_run({"simulate", "--help"});
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--resume") != std::string::npos);
  }

  TEST_CASE("binary exit codes") {
    TempDir dir("dct_cli_binary");
    const std::string bin = DCT_CLI_PATH;
    CHECK(shell_exit(bin + " --help > /dev/null") == 0);
    CHECK(shell_exit(bin + " > /dev/null 2>&1") == 1);
    CHECK(shell_exit(bin + " fit-teacher --data " + (dir / "missing.csv") + " --out " + (dir / "m.json") +
                     " > /dev/null 2>&1") == 2);
    CHECK(shell_exit(bin + " generate --n 150 --p 2 --out " + (dir / "d.csv") + " > /dev/null") == 0);
    CHECK(fs::exists(dir / "d.csv"));
  }

  TEST_CASE("missing input names the file") {
    TempDir dir("dct_cli_missing");
    const Outcome r = dct_run({"fit-teacher", "--data", dir / "nope.csv", "--out", dir / "m.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("nope.csv") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "m.json"));
  }

  TEST_CASE("fit-teacher writes a model and OOB predictions deterministically") {
    TempDir dir("dct_cli_fit");
    REQUIRE(dct_run(cat({{"generate", "--out", dir / "d.csv"}, kSmallData})).code == 0);
    const auto fit = [&](const std::string& out, const std::string& threads) {
      return dct_run(cat({{"--threads", threads, "fit-teacher", "--data", dir / "d.csv", "--out", out}, kSmallForest}));
    };
    const Outcome r = fit(dir / "a.json", "0");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("trees: 30") != std::string::npos);
    CHECK(r.out.find("OOB coverage") != std::string::npos);
    CHECK(fs::exists(dir / "a.oob.csv"));
    REQUIRE(fit(dir / "b.json", "1").code == 0);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(slurp(dir / "a.oob.csv") == slurp(dir / "b.oob.csv"));
    // A generated file keeps its truth column out of the covariates.
    const auto doc = dct::causal_forest_from_json(slurp(dir / "a.json"));
    CHECK(doc.feature_names == std::vector<std::string>{"x1", "x2", "x3"});
  }

  TEST_CASE("distill in both modes gives valid, reproducible trees") {
    TempDir dir("dct_cli_distill");
    REQUIRE(dct_run(cat({{"fit-teacher", "--out", dir / "m.json"}, kSmallData, kSmallForest})).code == 0);
    for (const std::string mode : {"greedy", "optimal"}) {
      CAPTURE(mode);
      const auto distill = [&](const std::string& out, const std::string& threads) {
        return dct_run(cat({{"--threads", threads, "distill", "--model", dir / "m.json", "--mode", mode, "--out", out,
                             "--seed", "3"},
                            kSmallData,
                            kSmallEvo}));
      };
      const Outcome r = distill(dir / (mode + "1.json"), "0");
      REQUIRE_MESSAGE(r.code == 0, r.err);
      REQUIRE(distill(dir / (mode + "2.json"), "1").code == 0);
      CHECK(slurp(dir / (mode + "1.json")) == slurp(dir / (mode + "2.json")));
      CHECK(slurp(dir / (mode + "1.dot")) == slurp(dir / (mode + "2.dot")));

      const dct::TreeDocument doc = dct::tree_document_from_json(slurp(dir / (mode + "1.json")));
      CHECK(doc.tree.structure.depth() <= 4);
      CHECK(doc.metadata.at("mode") == mode);
      const std::string dot = slurp(dir / (mode + "1.dot"));
      CHECK(dot_well_formed(dot));
      CHECK(count_matches(dot, kNodeStmt) == doc.tree.structure.size());
      CHECK(count_matches(dot, kEdgeStmt) == doc.tree.structure.size() - 1);
    }
  }

  TEST_CASE("distill honours the depth limit") {
    TempDir dir("dct_cli_depth");
    REQUIRE(dct_run(cat({{"fit-teacher", "--out", dir / "m.json"}, kSmallData, kSmallForest})).code == 0);
    for (const std::string depth : {"0", "1", "2"}) {
      const Outcome r = dct_run(cat({{"distill", "--model", dir / "m.json", "--mode", "greedy", "--max-depth", depth,
                                      "--out", dir / "t.json"},
                                     kSmallData,
                                     kSmallEvo}));
      REQUIRE_MESSAGE(r.code == 0, r.err);
      const dct::TreeDocument doc = dct::tree_document_from_json(slurp(dir / "t.json"));
      CHECK(doc.tree.structure.depth() <= std::stoi(depth));
      if (depth == "0") {
        const std::string dot = slurp(dir / "t.dot");
        CHECK(count_matches(dot, kNodeStmt) == 1);
        CHECK(count_matches(dot, kEdgeStmt) == 0);
      }
    }
  }

  TEST_CASE("distill rejects data the teacher was not trained on") {
    TempDir dir("dct_cli_mismatch");
    REQUIRE(dct_run(cat({{"fit-teacher", "--out", dir / "m.json"}, kSmallData, kSmallForest})).code == 0);
    const Outcome r = dct_run(cat({{"distill", "--model", dir / "m.json", "--out", dir / "t.json"},
                                   {"--n", "400", "--p", "3", "--data-seed", "5"},
                                   kSmallEvo}));
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(dir / "t.json"));
    const Outcome missing = dct_run({"distill", "--model", dir / "none.json", "--out", dir / "t.json"});
    CHECK(missing.code == 2);
  }

  TEST_CASE("export round trips and rejects other schema versions") {
    TempDir dir("dct_cli_export");
    REQUIRE(dct_run(cat({{"fit-teacher", "--out", dir / "m.json"}, kSmallData, kSmallForest})).code == 0);
    REQUIRE(dct_run(cat({{"distill", "--model", dir / "m.json", "--mode", "greedy", "--out", dir / "t.json"},
                         kSmallData,
                         kSmallEvo}))
                .code == 0);
    REQUIRE(dct_run({"export", "--tree", dir / "t.json", "--format", "json", "--out", dir / "t2.json"}).code == 0);
    CHECK(slurp(dir / "t.json") == slurp(dir / "t2.json"));
    const Outcome dot = dct_run({"export", "--tree", dir / "t.json"});
    REQUIRE(dot.code == 0);
    CHECK(dot.out == slurp(dir / "t.dot"));

    auto j = nlohmann::json::parse(slurp(dir / "t.json"));
    j["version"] = dct::kSchemaVersion + 1;
    dct::write_text_file(dir / "future.json", j.dump());
    const Outcome bad = dct_run({"export", "--tree", dir / "future.json"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("version") != std::string::npos);
  }

  TEST_CASE("config files supply defaults and flags override them") {
    TempDir dir("dct_cli_config");
    dct::write_text_file(dir / "gen.cfg", "# synthetic data\nn = 150\np = 2\ndata_seed = 9\nout = " + (dir / "a.csv") +
                                              "\n");
    REQUIRE(dct_run({"generate", "--config", dir / "gen.cfg"}).code == 0);
    REQUIRE(dct_run({"generate", "--n", "150", "--p", "2", "--data-seed", "9", "--out", dir / "b.csv"}).code == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

    REQUIRE(dct_run({"generate", "--config", dir / "gen.cfg", "--data-seed", "10", "--out", dir / "c.csv"}).code == 0);
    REQUIRE(dct_run({"generate", "--n", "150", "--p", "2", "--data-seed", "10", "--out", dir / "d.csv"}).code == 0);
    CHECK(slurp(dir / "c.csv") == slurp(dir / "d.csv"));

    dct::write_text_file(dir / "bad.cfg", "n = 150\nbanana = 3\n");
    const Outcome bad = dct_run({"generate", "--config", dir / "bad.cfg", "--out", dir / "e.csv"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("banana") != std::string::npos);
    CHECK(dct_run({"generate", "--config", dir / "absent.cfg", "--out", dir / "e.csv"}).code == 1);
  }

  TEST_CASE("simulate writes reports and resumes completed cells") {
    TempDir dir("dct_cli_simulate");
    const std::vector<std::string> small = {"--dgps", "step",          "--variants", "regular",       "--n",
                                            "400",    "--p",           "3",          "--num-trees",   "20",
                                            "--nuisance-trees",        "20",         "--population",  "20",
                                            "--max-iterations",        "200",        "--min-iterations", "50",
                                            "--convergence-window",    "20",         "--min-leaf",    "10",
                                            "--timing", "false"};
    REQUIRE(dct_run(cat({{"simulate", "--seeds", "0-1", "--histograms", "--out-dir", dir / "full"}, small})).code == 0);
    const std::string full = slurp(dir / "full/report.csv");
    CHECK(std::count(full.begin(), full.end(), '\n') == 15);
    CHECK(fs::exists(dir / "full/report.txt"));
    CHECK(fs::exists(dir / "full/histograms/step_regular_1.csv"));
    const std::string table = slurp(dir / "full/report.txt");
    CHECK(table.find("Teacher") < table.find("Basic causal tree"));

    REQUIRE(dct_run(cat({{"simulate", "--seeds", "0", "--out-dir", dir / "part"}, small})).code == 0);
    const Outcome resumed = dct_run(cat({{"simulate", "--seeds", "0-1", "--resume", "--out-dir", dir / "part"}, small}));
    REQUIRE(resumed.code == 0);
    CHECK(resumed.out.find("1 completed cells skipped") != std::string::npos);
    CHECK(resumed.out.find("done: step regular seed 0") == std::string::npos);
    CHECK(slurp(dir / "part/report.csv") == full);
  }

  TEST_CASE("zero-effect data rarely yields significant nodes") {
    TempDir dir("dct_cli_zero");
    int clean = 0;
    for (int seed = 0; seed < 5; ++seed) {
      const std::vector<std::string> data = {"--tau-fn", "zero", "--n", "2000", "--data-seed", std::to_string(seed)};
      REQUIRE(dct_run(cat({{"fit-teacher", "--out", dir / "m.json", "--num-trees", "500", "--seed",
                            std::to_string(seed)},
                           data}))
                  .code == 0);
      REQUIRE(dct_run(cat({{"distill", "--model", dir / "m.json", "--mode", "optimal", "--out", dir / "t.json",
                            "--seed", std::to_string(seed)},
                           data}))
                  .code == 0);
      const std::string dot = slurp(dir / "t.dot");
      if (dot.find('*') == std::string::npos) ++clean;
    }
    CHECK(clean >= 4);
  }
}
