#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "flowsteer/script.hpp"
#include "support/scenes.hpp"

using namespace flowsteer;
using namespace flowsteer::steering;
namespace stdfs = std::filesystem;

namespace {

const std::string kScenes = FLOWSTEER_SCENES_DIR;

std::string wall_script(const scenario::SceneSpec& s, int height) {
  const auto& w = s.wall;
  std::string out = "at 0 control start\n";
  if (height > 0) {
    out += "at 0 edit " + std::to_string(w.x[0]) + ".." + std::to_string(w.x[1]) + " " + std::to_string(w.y[0]) +
           ".." + std::to_string(w.y[1]) + " " + std::to_string(w.base_z) + ".." +
           std::to_string(w.base_z + height - 1) + " set_wall\n";
  }
  return out;
}

std::vector<std::string> events_of(const scenario::EventLog& log) {
  std::vector<std::string> out;
  for (const auto& r : log.records()) {
    out.push_back(r.event);
  }
  return out;
}

std::string slurp(const stdfs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("script grammar") {
  const auto s = parse_script(
      "# comment line\n"
      "at 0 control start\n"
      "\n"
      "at 3 edit 1..2 4 5..6 set_wall   # trailing comment\n"
      "at +0.5 param gravity_z -0.0004\n"
      "at 200 scene desk_dam\n"
      "at 200 telemetry camera yaw=30 pitch=10\n"
      "at 201 control step\n",
      0.01);
  REQUIRE(s.size() == 6);
  CHECK(s[0].tick == 0);
  CHECK(s[0].line == 2);
  CHECK(std::get<protocol::Control>(s[0].command).verb == protocol::ControlVerb::Start);
  const auto& e = std::get<protocol::EditCells>(s[1].command);
  REQUIRE(e.cells.size() == 4);
  CHECK(e.cells[0] == protocol::CellEdit{1, 4, 5, protocol::EditAction::SetWall});
  CHECK(e.cells[1] == protocol::CellEdit{2, 4, 5, protocol::EditAction::SetWall});
  CHECK(e.cells[3] == protocol::CellEdit{2, 4, 6, protocol::EditAction::SetWall});
  CHECK(s[2].tick == 53);
  CHECK(std::get<protocol::SetParam>(s[2].command).value == -0.0004);
  CHECK(std::get<protocol::LoadScene>(s[3].command).name == "desk_dam");
  CHECK(std::get<protocol::Telemetry>(s[4].command).text == "camera yaw=30 pitch=10");
  CHECK(std::get<protocol::Control>(s[5].command).verb == protocol::ControlVerb::SingleStep);
}

TEST_CASE("script errors carry the line number") {
  auto line_of = [](const std::string& text) {
    try {
      parse_script(text, 0.01);
    } catch (const ScriptError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("at 0 control start\nat x control pause\n") == 2);
  CHECK(line_of("at 5 control start\nat 4 control pause\n") == 2);
  CHECK(line_of("at 0 control jump\n") == 1);
  CHECK(line_of("\n\nat 0 edit 1 2 set_wall\n") == 3);
  CHECK(line_of("at 0 edit 3..1 2 2 set_wall\n") == 1);
  CHECK(line_of("at 0 edit 1 2 3 paint\n") == 1);
  CHECK(line_of("at 0 param tau\n") == 1);
  CHECK(line_of("at 0 control start extra\n") == 1);
  CHECK(line_of("go 0 control start\n") == 1);
  CHECK(line_of("at 0 edit 0..65535 0..65535 0 empty\n") == 1);

  const auto s = parse_script("at 0 control start\nat 1 edit 1 1 1 set_wall\nat 2 edit 12 1 1 set_wall\n", 0.01);
  try {
    check_script(s, Dims{12, 8, 16});
    FAIL("out-of-range voxel accepted");
  } catch (const ScriptError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("replay without a script logs only scene and detector events") {
  const auto lib = testing::library_of({testing::small_tank()});
  EngineConfig cfg;
  cfg.autostart = true;
  ReplayOptions opts;
  opts.max_ticks = 600;
  const ReplayResult r = replay(lib, "tank", cfg, {}, opts);
  CHECK(r.ticks == 600);
  CHECK(r.timestep == 600);
  CHECK(r.snapshots == 150);
  for (const auto& e : events_of(r.log)) {
    const bool allowed = e == scenario::events::kSceneLoaded || e == scenario::events::kOverflow ||
                         e == scenario::events::kStabilized || e == scenario::events::kFailure ||
                         e == scenario::events::kOverbuilt || e == scenario::events::kSuccess;
    CHECK_MESSAGE(allowed, e);
  }
  CHECK(r.log.records().front().event == scenario::events::kSceneLoaded);
}

TEST_CASE("replaying a script twice gives byte-identical dumps") {
  const auto lib = testing::library_of({testing::small_tank()});
  const auto script = parse_script(
      "at 0 control start\n"
      "at 10 edit 4 1..6 1..3 set_wall\n"
      "at 40 control pause\n"
      "at 50 control resume\n"
      "at 60 edit 9 2 12 fill_water\n",
      0.01);
  const stdfs::path root = stdfs::temp_directory_path() / "flowsteer_replay_test";
  stdfs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    stdfs::create_directories(root / run);
    ReplayOptions opts;
    opts.max_ticks = 200;
    opts.snapshot_dir = root / run;
    const ReplayResult r = replay(lib, "tank", {}, script, opts);
    CHECK(r.snapshots == 47);
  }
  std::size_t files = 0;
  for (const auto& entry : stdfs::directory_iterator(root / "a")) {
    const auto other = root / "b" / entry.path().filename();
    REQUIRE(stdfs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
    CHECK(stdfs::file_size(entry.path()) == 16 + 12 * 8 * 16);
    ++files;
  }
  CHECK(files == 47);
  stdfs::remove_all(root);
}

TEST_CASE("replay: building h* at step 0 succeeds without failures") {
  const auto lib = scenario::SceneLibrary::load(kScenes + "/desk_dam.json");
  const scenario::SceneSpec& desk = *lib.find("desk_dam");
  const auto script = parse_script(wall_script(desk, desk.optimal_height), desk.fluid_params().dt);
  const ReplayResult r = replay(lib, "desk_dam", {}, script, {});
  const scenario::Metrics m = scenario::compute_metrics(r.log.records());
  CHECK(m.failures == 0);
  REQUIRE(m.tct.has_value());
  CHECK(*m.tct > 0.0);
  CHECK(std::isfinite(*m.tct));
  const auto ev = events_of(r.log);
  CHECK(std::find(ev.begin(), ev.end(), "success") != ev.end());
}

TEST_CASE("replay: overbuilt wall is a failure") {
  const auto lib = scenario::SceneLibrary::load(kScenes + "/desk_dam.json");
  const scenario::SceneSpec& desk = *lib.find("desk_dam");
  // Too high first, then lower it to h* once the overbuilt verdict is in.
  std::string text = wall_script(desk, desk.optimal_height + 1);
  const auto first = parse_script(text, desk.fluid_params().dt);
  ReplayOptions opts;
  opts.max_ticks = 20000;
  const ReplayResult r = replay(lib, "desk_dam", {}, first, opts);
  const scenario::Metrics m = scenario::compute_metrics(r.log.records());
  CHECK(m.failures == 1);
  CHECK_FALSE(m.tct.has_value());
  const auto ev = events_of(r.log);
  CHECK(std::find(ev.begin(), ev.end(), "overbuilt") != ev.end());
}
