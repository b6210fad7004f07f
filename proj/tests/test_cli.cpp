// End-to-end tests of the command-line tool, run as a subprocess so the exit
// codes, flag handling, and on-disk artifacts are exercised exactly as a user
// sees them. The binary path is injected at compile time.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch root shared by all cases; wiped once at program start.
const fs::path& scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "vtseg_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunResult run(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  fs::path out_file = scratch_root() / ("stdout_" + std::to_string(counter) + ".txt");
  fs::path err_file = scratch_root() / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;
  std::string cmd = env_prefix + VTSEG_CLI_PATH " " + args + " > " + out_file.string() + " 2> " +
                    err_file.string();
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

// Compares two output directories file by file (names and bytes). Manifests
// record input paths as given, so runs that read equal data from different
// directories compare with with_manifests = false; runs over the very same
// inputs must match manifests too.
bool same_tree(const fs::path& a, const fs::path& b, bool with_manifests = true) {
  std::vector<std::string> names_a, names_b;
  auto list = [with_manifests](const fs::path& dir, std::vector<std::string>& names) {
    for (const auto& e : fs::directory_iterator(dir)) {
      std::string n = e.path().filename().string();
      if (!with_manifests && n.rfind("manifest_", 0) == 0) continue;
      names.push_back(n);
    }
    std::sort(names.begin(), names.end());
  };
  list(a, names_a);
  list(b, names_b);
  if (names_a != names_b || names_a.empty()) return false;
  for (const std::string& n : names_a) {
    if (!same_bytes(a / n, b / n)) return false;
  }
  return true;
}

std::string tiny_net_config() {
  return "[net]\ninput_dims = [16, 16, 16]\nchannel_widths = [4, 8]\n";
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::path p = dir / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p;
}

}  // namespace

TEST_CASE("--help lists all nine subcommands and exits 0") {
  RunResult r = run("--help");
  CHECK(r.exit_code == 0);
  for (const char* sub : {"synth", "preprocess", "augment", "staple", "train", "predict", "eval",
                          "gridsearch", "report"}) {
    CAPTURE(sub);
    CHECK(r.out.find(std::string("\n  ") + sub) != std::string::npos);
  }
  CHECK(r.out.find("Exit codes:") != std::string::npos);
  CHECK(r.out.find("VTSEG_OUT") != std::string::npos);
}

TEST_CASE("error classes map to distinct exit codes") {
  fs::path dir = fresh_dir("exit_codes");

  RunResult unknown = run("frobnicate");
  CHECK(unknown.exit_code == 2);

  RunResult no_sub = run("--seed 3");
  CHECK(no_sub.exit_code == 2);

  fs::path bad_cfg = write_file(dir, "bad.toml", "[net]\nchanel_widths = [4]\n");
  RunResult bad_key = run("train " + dir.string() + " --config " + bad_cfg.string());
  CHECK(bad_key.exit_code == 3);
  CHECK(bad_key.err.find("net.chanel_widths") != std::string::npos);

  RunResult bad_value = run("synth --kind wax --out " + (dir / "o").string());
  CHECK(bad_value.exit_code == 3);
  CHECK(bad_value.err.find("synth.kind") != std::string::npos);

  RunResult missing = run("train " + (dir / "nowhere").string() + " --out " + (dir / "o").string());
  CHECK(missing.exit_code == 4);

  RunResult missing_cfg = run("synth --config " + (dir / "ghost.toml").string());
  CHECK(missing_cfg.exit_code == 4);
}

TEST_CASE("--print-config emits a reusable document") {
  fs::path dir = fresh_dir("print_config");
  RunResult first = run("--print-config --seed 99 --format json");
  CHECK(first.exit_code == 0);
  CHECK(first.out.find("seed = 99") != std::string::npos);
  CHECK(first.out.find("format = \"json\"") != std::string::npos);

  fs::path cfg = write_file(dir, "effective.toml", first.out);
  RunResult second = run("--print-config --config " + cfg.string());
  CHECK(second.exit_code == 0);
  CHECK(second.out == first.out);
}

TEST_CASE("pipeline: synth -> train -> predict -> eval -> report") {
  fs::path dir = fresh_dir("pipeline");
  fs::path data = dir / "data";
  fs::path cfg = write_file(dir, "net.toml", tiny_net_config());

  CHECK(run("synth --count 3 --dims 16 16 16 --noise 0.05 --seed 21 --out " + data.string())
            .exit_code == 0);
  CHECK(fs::exists(data / "phantom_002_lbl.nrrd"));
  CHECK(fs::exists(data / "manifest_synth.json"));

  CHECK(run("train " + data.string() + " --config " + cfg.string() +
            " --seed 21 --epochs 1 --steps 10 --out " + (dir / "model").string())
            .exit_code == 0);
  CHECK(fs::exists(dir / "model" / "checkpoint.vtck"));
  std::string history = slurp(dir / "model" / "history.csv");
  CHECK(history.substr(0, 10) == "step,loss\n");
  CHECK(std::count(history.begin(), history.end(), '\n') == 11);  // header + 10 steps

  CHECK(run("predict " + data.string() + " --checkpoint " +
            (dir / "model" / "checkpoint.vtck").string() + " --out " + (dir / "preds").string())
            .exit_code == 0);
  CHECK(fs::exists(dir / "preds" / "phantom_001_pred.nrrd"));

  CHECK(run("eval " + (dir / "preds").string() + " --ref " + data.string() +
            " --model tiny3d --out " + (dir / "scores").string())
            .exit_code == 0);
  std::string records = slurp(dir / "scores" / "records.csv");
  CHECK(std::count(records.begin(), records.end(), '\n') == 4);  // header + 3 volumes

  CHECK(run("report " + (dir / "scores" / "records.csv").string() + " --format markdown --out " +
            (dir / "rep").string())
            .exit_code == 0);
  std::string table = slurp(dir / "rep" / "report.md");
  for (const char* id : {"phantom_000", "phantom_001", "phantom_002"}) {
    CAPTURE(id);
    CHECK(table.find(id) != std::string::npos);  // one row per phantom
  }
  CHECK(table.find("tiny3d") != std::string::npos);
  CHECK(table.find("Average") != std::string::npos);

  // No subcommand mutated the synthesized inputs.
  RunResult again = run("synth --count 3 --dims 16 16 16 --noise 0.05 --seed 21 --out " +
                        (dir / "data_check").string());
  CHECK(again.exit_code == 0);
  CHECK(same_tree(data, dir / "data_check"));
}

TEST_CASE("identical config and seed reproduce artifacts byte for byte") {
  fs::path dir = fresh_dir("determinism");
  fs::path cfg = write_file(dir, "net.toml", tiny_net_config());

  for (const char* tag : {"a", "b"}) {
    fs::path base = dir / tag;
    REQUIRE(run("synth --count 2 --dims 16 16 16 --noise 0.03 --seed 5 --out " +
                (base / "data").string())
                .exit_code == 0);
    REQUIRE(run("train " + (base / "data").string() + " --config " + cfg.string() +
                " --seed 5 --epochs 1 --steps 6 --out " + (base / "model").string())
                .exit_code == 0);
    REQUIRE(run("predict " + (base / "data").string() + " --checkpoint " +
                (base / "model" / "checkpoint.vtck").string() + " --out " +
                (base / "preds").string())
                .exit_code == 0);
    REQUIRE(run("eval " + (base / "preds").string() + " --ref " + (base / "data").string() +
                " --out " + (base / "scores").string())
                .exit_code == 0);
    REQUIRE(run("report " + (base / "scores" / "records.csv").string() + " --out " +
                (base / "rep").string())
                .exit_code == 0);
  }
  for (const std::string stage : {"data", "model", "preds", "scores", "rep"}) {
    CAPTURE(stage);
    // The two runs read equal inputs from different directories; every
    // artifact must match bytewise (manifests record the paths as given).
    CHECK(same_tree(dir / "a" / stage, dir / "b" / stage, /*with_manifests=*/false));
  }
}

TEST_CASE("outputs are independent of --jobs") {
  fs::path dir = fresh_dir("jobs");
  fs::path cfg = write_file(dir, "net.toml", tiny_net_config());

  // Stages below read from one shared dataset, so even the manifests must be
  // byte-identical: the worker count is normalized in the config snapshot.
  REQUIRE(run("synth --count 4 --dims 16 16 16 --noise 0.02 --seed 8 --jobs 1 --out " +
              (dir / "data").string())
              .exit_code == 0);
  REQUIRE(run("synth --count 4 --dims 16 16 16 --noise 0.02 --seed 8 --jobs 4 --out " +
              (dir / "data_j4").string())
              .exit_code == 0);
  CHECK(same_tree(dir / "data", dir / "data_j4"));

  REQUIRE(run("train " + (dir / "data").string() + " --config " + cfg.string() +
              " --seed 8 --epochs 1 --steps 4 --out " + (dir / "model").string())
              .exit_code == 0);
  std::string ckpt = (dir / "model" / "checkpoint.vtck").string();

  for (const char* jobs : {"1", "4"}) {
    std::string j = std::string(" --jobs ") + jobs;
    std::string suffix = std::string("_j") + jobs;
    REQUIRE(run("augment " + (dir / "data").string() + " --seed 8" + j + " --out " +
                (dir / ("aug" + suffix)).string())
                .exit_code == 0);
    REQUIRE(run("predict " + (dir / "data").string() + " --checkpoint " + ckpt + j + " --out " +
                (dir / ("preds" + suffix)).string())
                .exit_code == 0);
    REQUIRE(run("eval " + (dir / "preds_j1").string() + " --ref " + (dir / "data").string() + j +
                " --out " + (dir / ("scores" + suffix)).string())
                .exit_code == 0);
  }
  for (const std::string stage : {"aug", "preds", "scores"}) {
    CAPTURE(stage);
    CHECK(same_tree(dir / (stage + "_j1"), dir / (stage + "_j4")));
  }
}

TEST_CASE("staple subcommand fuses raters and respects unanimity") {
  fs::path dir = fresh_dir("staple_cli");
  REQUIRE(run("synth --count 1 --dims 16 16 16 --seed 31 --out " + (dir / "data").string())
              .exit_code == 0);
  fs::path lbl = dir / "data" / "phantom_000_lbl.nrrd";

  // Identical raters: the consensus must equal the input mask exactly.
  REQUIRE(run("staple " + lbl.string() + " " + lbl.string() + " " + lbl.string() + " --out " +
              (dir / "fused").string())
              .exit_code == 0);
  CHECK(same_bytes(lbl, dir / "fused" / "staple_consensus.nrrd"));
  std::string sidecar = slurp(dir / "fused" / "staple_result.json");
  CHECK(sidecar.find("\"sensitivity\"") != std::string::npos);
  CHECK(sidecar.find("\"iterations\"") != std::string::npos);

  RunResult one = run("staple " + lbl.string() + " --out " + (dir / "one").string());
  CHECK(one.exit_code == 3);  // fewer than two raters is a config error
}

TEST_CASE("VTSEG_OUT supplies the default output directory") {
  fs::path dir = fresh_dir("envvar");
  RunResult r = run("synth --count 1 --dims 16 16 16 --seed 2",
                    "VTSEG_OUT=" + (dir / "from_env").string() + " ");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "from_env" / "phantom_000_img.nrrd"));
  // --out still wins over the environment.
  RunResult flag = run("synth --count 1 --dims 16 16 16 --seed 2 --out " +
                           (dir / "from_flag").string(),
                       "VTSEG_OUT=" + (dir / "ignored").string() + " ");
  CHECK(flag.exit_code == 0);
  CHECK(fs::exists(dir / "from_flag" / "phantom_000_img.nrrd"));
  CHECK_FALSE(fs::exists(dir / "ignored"));
}

TEST_CASE("manifest records digests that match the artifacts") {
  fs::path dir = fresh_dir("manifest");
  REQUIRE(run("synth --count 1 --dims 16 16 16 --seed 13 --out " + dir.string()).exit_code == 0);
  std::string manifest = slurp(dir / "manifest_synth.json");
  CHECK(manifest.find("\"digest_algorithm\": \"sha256\"") != std::string::npos);
  CHECK(manifest.find("\"tool\": \"vtseg ") != std::string::npos);
  CHECK(manifest.find("\"seed\": 13") != std::string::npos);
  CHECK(manifest.find("phantom_000_img.nrrd") != std::string::npos);
  // The snapshot normalizes execution details.
  CHECK(manifest.find("jobs = 1") != std::string::npos);
  CHECK(manifest.find("out = \\\"\\\"") != std::string::npos);
}
