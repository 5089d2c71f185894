#include <filesystem>
#include <fstream>
#include <sstream>

#include "aeflow/harness.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace aeflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("aeflow_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

const char* kSimulate = R"({
  "pipeline": "simulate",
  "preset": {"name": "smooth_lipschitz", "d": 2},
  "time": {"T": 0.1, "dt": 0.01},
  "grid": {"kind": "lattice", "lower": [-1, -1], "upper": [1, 1], "per_axis": 30},
  "save_every": 5,
  "seeds": [3, 4]
})";

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config validation names the field") {
    CHECK(field_of(R"({"preset": {"name": "nope"}})") == "preset.name");
    CHECK(field_of(R"({"preset": {"name": "ou"}, "extra": 1})") == "extra");
    CHECK(field_of(R"({"preset": {"name": "ou"}, "time": {"T": 1, "dt": 0.3}})") == "time");
    CHECK_FALSE(field_of(R"({"preset": {"name": "ou"}, "time": {"T": 1, "dt": 0.3}})").empty());
    CHECK(field_of(R"({"preset": {"name": "ou"}, "truncation": {"deltas": [0.1, 0.2]}})") == "truncation.deltas");
    CHECK(field_of(R"({"preset": {"name": "ou", "d": "x"}})") == "preset.d");
    CHECK(field_of(R"({"preset": {"name": "ou"}, "grid": {"kind": "cloud"}})") == "grid.kind");
    CHECK(field_of("{not json") == "config");
    CHECK(field_of(kSimulate).empty());
  }

  TEST_CASE("simulate without seeds is a validation failure") {
    auto cfg = parse_config(kSimulate);
    cfg.seeds.clear();
    std::ostringstream log;
    const auto res = run("simulate", cfg, scratch("noseeds"), log);
    CHECK(res.status == kExitValidation);
    CHECK(res.message.find("seeds") != std::string::npos);
  }

  TEST_CASE("pipeline mismatch is rejected") {
    const auto cfg = parse_config(kSimulate);
    std::ostringstream log;
    CHECK_THROWS_AS(run("transport", cfg, scratch("mismatch"), log), ValidationError);
  }

  TEST_CASE("reruns and worker counts give identical data files") {
    auto cfg = parse_config(kSimulate);
    std::ostringstream log;
    const auto a = scratch("det_a"), b = scratch("det_b");
    cfg.workers = 1;
    const auto ra = run("simulate", cfg, a, log);
    cfg.workers = 4;
    const auto rb = run("simulate", cfg, b, log);
    REQUIRE(ra.status == kExitOk);
    REQUIRE(ra.outputs == rb.outputs);
    CHECK(ra.outputs.size() > 4);
    for (const auto& o : ra.outputs)
      if (o.ends_with(".csv")) CHECK(slurp(a / o) == slurp(b / o));
  }

  TEST_CASE("manifest records hash, seeds, version and resolved defaults") {
    const auto cfg = parse_config(kSimulate);
    std::ostringstream log;
    const auto dir = scratch("manifest");
    run("simulate", cfg, dir, log);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["config_hash"].get<std::string>().size() == 16);
    CHECK(m["seeds"] == nlohmann::json::array({3, 4}));
    CHECK(m["version"] == AEFLOW_VERSION);
    CHECK(m["config"]["escape_radius"] == 0.0);
    CHECK(m["config"]["scheme"] == "euler_maruyama");
    CHECK(m["config"]["simulate"].contains("track_density"));
    CHECK(m["config"]["simulate"].contains("bin_width"));
    CHECK(log.str().find("status") != std::string::npos);
  }

  TEST_CASE("verify-conditions records the vanishing constant") {
    const auto cfg = load_config(fs::path(AEFLOW_CONFIG_DIR) / "c01_en3_beta51.json");
    std::ostringstream log;
    const auto dir = scratch("en3");
    const auto res = run("verify-conditions", cfg, dir, log);
    CHECK(res.status == kExitOk);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["summary"]["C1"] == 0.0);
    CHECK(m["summary"]["en3_holds"] == true);
  }

  TEST_CASE("every shipped config parses") {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(AEFLOW_CONFIG_DIR)) {
      if (e.path().extension() != ".json") continue;
      INFO(e.path().string());
      CHECK_NOTHROW(load_config(e.path()));
      ++n;
    }
    CHECK(n >= 10);
  }

  TEST_CASE("field builders") {
    PresetConfig p;
    p.name = "linear";
    p.d = 2;
    p.a = {-1, 0, 0, -2};
    p.sigma = {0.5, 0, 0, 0.5};
    CHECK(build_field(p)->dim() == 2);
    p.a = {1, 2, 3};
    CHECK_THROWS_AS(build_field(p), ValidationError);
    PresetConfig e;
    e.name = "example_sec6";
    CHECK(build_field_at_level(e, 4)->name() != build_field(e)->name());
    GridConfig g;
    g.kind = "points";
    g.points = {{0.0, 1.0}};
    CHECK(build_grid(g, 2).size() == 1);
    CHECK_THROWS_AS(build_grid(g, 3), ValidationError);
  }

  TEST_CASE("pipeline list") { CHECK(pipelines().size() == 6); }
}
