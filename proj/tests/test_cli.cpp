#include <rodlimit/cli.hpp>
#include <rodlimit/tube.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace rodlimit;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per tag; wiped on reuse so reruns stay clean.
fs::path tmpdir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() /
               ("rodlimit_cli_" + tag + "_" + std::to_string(getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Invoke run_cli in-process with captured stdout/stderr.
int run(std::vector<std::string> args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  args.insert(args.begin(), "rodlimit");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream cout_buf, cerr_buf;
  std::streambuf* old_out = std::cout.rdbuf(cout_buf.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(cerr_buf.rdbuf());
  int code = -1;
  try {
    code = run_cli(static_cast<int>(argv.size()), argv.data());
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  if (out_text) *out_text = cout_buf.str();
  if (err_text) *err_text = cerr_buf.str();
  return code;
}

const std::string kSkeleton = std::string(RODLIMIT_TEST_DATA) + "/lframe.json";
const std::string kLoads = std::string(RODLIMIT_TEST_DATA) + "/lframe_loads.json";

}  // namespace

TEST_CASE("validate accepts a sound structure and reports every check",
          "[cli]") {
  fs::path out = tmpdir("validate_ok");
  std::string text;
  int code = run({"validate", "--skeleton", kSkeleton, "--out", out.string()},
                 &text);
  CHECK(code == 0);
  CHECK(text.find("structure usable") != std::string::npos);

  auto j = nlohmann::json::parse(read_text(out / "validation.json"));
  CHECK(j.at("usable").get<bool>());
  CHECK(j.at("delta0").get<double>() > 0);
  REQUIRE(j.at("checks").size() == 8);
  for (const auto& c : j.at("checks")) CHECK(c.at("pass").get<bool>());

  // determinism: a second run reproduces the report byte for byte
  std::string first = read_text(out / "validation.json");
  fs::path out2 = tmpdir("validate_ok2");
  REQUIRE(run({"validate", "--skeleton", kSkeleton, "--out", out2.string()}) ==
          0);
  CHECK(first == read_text(out2 / "validation.json"));
}

TEST_CASE("validate exits 1 and names the failing check", "[cli]") {
  fs::path dir = tmpdir("validate_bad");
  // two collinear segments through one knot: tangents are parallel there
  write_text(dir / "tangent.json", R"({
    "arcs": [
      {"type": "segment", "start": [-1, 0, 0], "end": [0, 0, 0]},
      {"type": "segment", "start": [0, 0, 0], "end": [1, 0, 0]}
    ],
    "knots": [{"position": [0, 0, 0], "incidences": [[0, 1.0], [1, 0.0]]}],
    "clamped": [{"arc": 0, "end": "start"}]
  })");
  std::string text;
  int code = run({"validate", "--skeleton", (dir / "tangent.json").string(),
                  "--out", (dir / "out").string()},
                 &text);
  CHECK(code == 1);
  CHECK(text.find("FAIL  knot_nontangency") != std::string::npos);

  auto j = nlohmann::json::parse(read_text(dir / "out" / "validation.json"));
  CHECK_FALSE(j.at("usable").get<bool>());
  bool named = false;
  for (const auto& c : j.at("checks"))
    if (c.at("name") == "knot_nontangency" && !c.at("pass").get<bool>())
      named = true;
  CHECK(named);
}

TEST_CASE("usage and input-file problems exit 2", "[cli]") {
  fs::path dir = tmpdir("usage");
  std::string err;

  SECTION("missing skeleton file") {
    CHECK(run({"validate", "--skeleton", (dir / "absent.json").string(),
               "--out", dir.string()},
              nullptr, &err) == 2);
    CHECK(err.find("IOError") != std::string::npos);
  }
  SECTION("malformed JSON") {
    write_text(dir / "broken.json", "{ not json");
    CHECK(run({"validate", "--skeleton", (dir / "broken.json").string(),
               "--out", dir.string()}) == 2);
  }
  SECTION("unknown schema key") {
    write_text(dir / "key.json", R"({
      "arcs": [{"type": "segment", "start": [0,0,0], "end": [1,0,0],
                "nromal": [0,1,0]}]
    })");
    CHECK(run({"validate", "--skeleton", (dir / "key.json").string(), "--out",
               dir.string()},
              nullptr, &err) == 2);
    CHECK(err.find("nromal") != std::string::npos);
  }
  SECTION("knot incidence off the arc endpoints") {
    write_text(dir / "mid.json", R"({
      "arcs": [
        {"type": "segment", "start": [-1, 0, 0], "end": [0, 0, 0]},
        {"type": "segment", "start": [0, 0, 0], "end": [0, 1, 0]}
      ],
      "knots": [{"position": [0, 0, 0], "incidences": [[0, 0.5], [1, 0.0]]}]
    })");
    CHECK(run({"validate", "--skeleton", (dir / "mid.json").string(), "--out",
               dir.string()},
              nullptr, &err) == 2);
    CHECK(err.find("not an endpoint") != std::string::npos);
  }
  SECTION("no subcommand") { CHECK(run({}) == 2); }
  SECTION("unknown flag") {
    CHECK(run({"validate", "--skeleton", kSkeleton, "--frobnicate"}) == 2);
  }
  SECTION("help exits 0") {
    std::string text;
    CHECK(run({"--help"}, &text) == 0);
    CHECK(text.find("validate") != std::string::npos);
    CHECK(text.find("decompose") != std::string::npos);
  }
  SECTION("config with non-positive mesh size") {
    write_text(dir / "conf.json", R"({"h": -0.5})");
    CHECK(run({"validate", "--skeleton", kSkeleton, "--out", dir.string(),
               "--config", (dir / "conf.json").string()},
              nullptr, &err) == 2);
    CHECK(err.find("h must be positive") != std::string::npos);
  }
}

TEST_CASE("solve writes the solution set and zero loads stay zero", "[cli]") {
  fs::path dir = tmpdir("solve");

  SECTION("zero loads give identically zero fields") {
    write_text(dir / "zero.json", "{}");
    fs::path out = dir / "out_zero";
    REQUIRE(run({"solve", "--skeleton", kSkeleton, "--loads",
                 (dir / "zero.json").string(), "--h", "0.25", "--out",
                 out.string()}) == 0);
    std::ifstream is(out / "arc_000.csv");
    std::string line;
    REQUIRE(std::getline(is, line));  // header
    int rows = 0;
    while (std::getline(is, line)) {
      ++rows;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      double v;
      ls >> v;  // abscissa column may be nonzero
      while (ls >> v) CHECK(v == 0.0);
    }
    CHECK(rows > 0);
  }

  SECTION("the shipped case solves, exports and reproduces byte-identically") {
    fs::path out1 = dir / "out1", out2 = dir / "out2";
    std::string text;
    REQUIRE(run({"solve", "--skeleton", kSkeleton, "--loads", kLoads, "--h",
                 "0.1", "--out", out1.string()},
                &text) == 0);
    CHECK(text.find("files written") != std::string::npos);
    for (const char* f :
         {"arc_000.csv", "arc_001.csv", "stress.csv", "summary.json",
          "polyline.txt"})
      CHECK(fs::exists(out1 / f));

    auto j = nlohmann::json::parse(read_text(out1 / "summary.json"));
    CHECK(j.at("energies").at("extensional").get<double>() > 0);
    CHECK(j.at("energies").at("inextensional").get<double>() > 0);

    REQUIRE(run({"solve", "--skeleton", kSkeleton, "--loads", kLoads, "--h",
                 "0.1", "--out", out2.string()}) == 0);
    CHECK(read_text(out1 / "summary.json") == read_text(out2 / "summary.json"));
    CHECK(read_text(out1 / "arc_000.csv") == read_text(out2 / "arc_000.csv"));
  }

  SECTION("check mode rejects an extensional load on the bending space") {
    write_text(dir / "bad_loads.json", R"({
      "mode": "check",
      "knots": [{"knot": 0, "f_E": [0, 0, 1]}]
    })");
    std::string err;
    int code = run({"solve", "--skeleton", kSkeleton, "--loads",
                    (dir / "bad_loads.json").string(), "--h", "0.25", "--out",
                    (dir / "out_bad").string()},
                   nullptr, &err);
    CHECK(code == 1);
    CHECK(err.find("OrthogonalityViolation") != std::string::npos);

    // the same load is admissible after projection
    CHECK(run({"solve", "--skeleton", kSkeleton, "--loads",
               (dir / "bad_loads.json").string(), "--h", "0.25", "--mode",
               "project", "--out", (dir / "out_proj").string()}) == 0);
  }
}

TEST_CASE("decompose reads tube files and reports the rigid recovery",
          "[cli]") {
  fs::path dir = tmpdir("decompose");
  Skeleton skel = read_skeleton(kSkeleton);
  const double delta = 0.1;
  Vec3 b(0.3, -0.2, 0.5), c(0.1, 0.2, -0.3);
  auto rigid = [&](const Vec3& x) -> Vec3 { return Vec3(c + b.cross(x)); };
  std::vector<std::string> tube_args;
  for (std::size_t a = 0; a < skel.arcs.size(); ++a) {
    TubeField f = TubeField::sample(skel.arcs[a], static_cast<int>(a), delta,
                                    121, 4, 12, rigid);
    fs::path csv = dir / ("tube_" + std::to_string(a) + ".csv");
    fs::path hdr = csv;
    hdr.replace_extension(".json");
    write_tube_field(f, csv.string(), hdr.string());
    tube_args.push_back(csv.string());
  }

  SECTION("rigid field: near-zero energy and one junction motion") {
    fs::path out = dir / "out";
    REQUIRE(run({"decompose", "--skeleton", kSkeleton, "--tube", tube_args[0],
                 "--tube", tube_args[1], "--out", out.string()}) == 0);
    auto j = nlohmann::json::parse(read_text(out / "estimate.json"));
    CHECK(j.at("delta").get<double>() == delta);
    CHECK(j.at("ratios").at("energy_E").get<double>() < 1e-20);
    CHECK(j.at("ratios").at("energy_D").get<double>() ==
          Approx(2.0 * b.squaredNorm() * M_PI * delta * delta * 2.0)
              .epsilon(1e-10));
    REQUIRE(j.at("junctions").size() == 2);
    for (const auto& jz : j.at("junctions"))
      for (int k = 0; k < 3; ++k) {
        CHECK(jz.at("a")[k].get<double>() == Approx(c[k]).margin(1e-9));
        CHECK(jz.at("b")[k].get<double>() == Approx(b[k]).margin(1e-9));
      }
    for (const char* f : {"ersd_arc_000.csv", "ersd_arc_001.csv"})
      CHECK(fs::exists(out / f));

    // determinism across reruns
    std::string first = read_text(out / "estimate.json");
    fs::path out2 = dir / "out2";
    REQUIRE(run({"decompose", "--skeleton", kSkeleton, "--tube", tube_args[0],
                 "--tube", tube_args[1], "--out", out2.string()}) == 0);
    CHECK(first == read_text(out2 / "estimate.json"));
  }

  SECTION("malformed header exits 2") {
    write_text(dir / "tube_0.json", "{ \"arc\": ");
    std::string err;
    CHECK(run({"decompose", "--skeleton", kSkeleton, "--tube", tube_args[0],
               "--tube", tube_args[1], "--out", (dir / "o").string()},
              nullptr, &err) == 2);
  }

  SECTION("incomplete arc coverage exits 2") {
    std::string err;
    CHECK(run({"decompose", "--skeleton", kSkeleton, "--tube", tube_args[1],
               "--out", (dir / "o").string()},
              nullptr, &err) == 2);
    CHECK(err.find("no tube field") != std::string::npos);
  }
}

TEST_CASE("report sweeps the synthetic families deterministically", "[cli]") {
  fs::path dir = tmpdir("report");
  fs::path out1 = dir / "r1", out2 = dir / "r2";
  std::string text;
  REQUIRE(run({"report", "--skeleton", kSkeleton, "--delta", "0.2", "--delta",
               "0.1", "--out", out1.string()},
              &text) == 0);
  CHECK(text.find("extension") != std::string::npos);
  CHECK(text.find("bending") != std::string::npos);
  CHECK(text.find("torsion") != std::string::npos);

  auto j = nlohmann::json::parse(read_text(out1 / "report.json"));
  for (const char* fam : {"extension", "bending", "torsion"}) {
    const auto& tables = j.at("families").at(fam).at("tables");
    REQUIRE(tables.size() == 2);
    for (const auto& [key, row] : tables.items())
      for (const char* col : {"r_grad", "r_l2", "r_kinematic", "r_split"})
        CHECK(std::isfinite(row.at(col).get<double>()));
    for (const auto& [key, flag] : j.at("families").at(fam).at("growth_flags").items())
      CHECK_FALSE(flag.get<bool>());
  }

  REQUIRE(run({"report", "--skeleton", kSkeleton, "--delta", "0.2", "--delta",
               "0.1", "--out", out2.string()}) == 0);
  CHECK(read_text(out1 / "report.json") == read_text(out2 / "report.json"));
}

TEST_CASE("the installed binary honors the exit code contract", "[cli]") {
  const std::string exe = RODLIMIT_CLI_EXE;
  if (!fs::exists(exe)) {
    WARN("cli binary not built, skipping subprocess checks: " << exe);
    return;
  }
  fs::path dir = tmpdir("subprocess");
  auto shell = [](const std::string& cmd) {
    int st = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  CHECK(shell(exe + " validate --skeleton " + kSkeleton + " --out " +
              (dir / "v").string()) == 0);
  CHECK(shell(exe + " validate --skeleton " + (dir / "nope.json").string() +
              " --out " + (dir / "v2").string()) == 2);
  CHECK(shell(exe + " solve --skeleton " + kSkeleton + " --loads " + kLoads +
              " --h 0.25 --out " + (dir / "s").string()) == 0);
  CHECK(shell(exe) == 2);
}
