#include <doctest.h>

#include <sstream>

#include "flowsteer/scenario.hpp"
#include "support/scenes.hpp"

using namespace flowsteer;
using namespace flowsteer::scenario;

namespace {

const std::string kScenes = FLOWSTEER_SCENES_DIR;

LogRecord rec(double t, const char* event, std::string details = "") {
  return LogRecord{t, 0, event, std::move(details)};
}

}  // namespace

TEST_CASE("bundled scenes parse and validate") {
  const SceneLibrary lib = SceneLibrary::load(kScenes);
  CHECK(lib.names().size() >= 4);
  const SceneSpec* desk = lib.find("desk_dam");
  REQUIRE(desk != nullptr);
  CHECK(desk->dims == Dims{20, 20, 48});
  for (const char* name : {"dam_open", "dam_block", "dam_baffles"}) {
    const SceneSpec* s = lib.find(name);
    REQUIRE(s != nullptr);
    CHECK(s->dims == Dims{30, 30, 72});
    CHECK(s->dx == doctest::Approx(1.0 / 30.0));
    // 1 m x 1 m footprint.
    CHECK(s->dims.nx * s->dx == doctest::Approx(1.0));
  }
}

TEST_CASE("scene JSON round trip") {
  const SceneSpec desk = read_scene_file(kScenes + "/desk_dam.json");
  const SceneSpec again = parse_scene(to_json(desk));
  CHECK(to_json(again) == to_json(desk));
  CHECK(again.optimal_height == desk.optimal_height);
  CHECK(again.fluid_params().dt == doctest::Approx(lbm::time_step_for(0.0005, desk.dx)));
}

TEST_CASE("invalid scenes name the offending field") {
  auto expect = [](SceneSpec s, const std::string& field) {
    try {
      validate(s);
      FAIL("accepted an invalid scene");
    } catch (const InvalidScene& e) {
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  SceneSpec s = testing::small_tank();
  CHECK_NOTHROW(validate(s));

  SceneSpec bad = s;
  bad.water = {Box{{0, 1, 1}, {3, 3, 3}}};
  expect(bad, "water");
  bad = s;
  bad.obstacles = {Box{{4, 1, 1}, {5, 2, 2}}};
  expect(bad, "overlaps");
  bad = s;
  bad.optimal_height = 11;
  expect(bad, "optimal_height");
  bad = s;
  bad.tau = 0.5;
  expect(bad, "physics");
  bad = s;
  bad.protected_region = Box{{8, 1, 1}, {9, 2, 2}};
  expect(bad, "overlaps");

  CHECK_THROWS_AS(parse_scene("{not json"), InvalidScene);
  CHECK_THROWS_AS(parse_scene(R"({"name":"x"})"), InvalidScene);
}

TEST_CASE("loading a scene") {
  const SceneSpec s = testing::small_tank();
  const fs::Solver solver = load_scene(s);
  const Dims d = solver.dims();
  CHECK(solver.total_mass() == doctest::Approx(4 * 6 * 8 * 1.0).epsilon(1e-15));
  CHECK(solver.flags()[d.index(0, 3, 3)] == CellFlag::Wall);
  CHECK(solver.flags()[d.index(8, 3, 3)] == CellFlag::Liquid);
  CHECK(solver.flags()[d.index(8, 3, 8)] == CellFlag::Interface);
  CHECK(solver.flags()[d.index(7, 3, 3)] == CellFlag::Interface);
  CHECK(solver.flags()[d.index(3, 3, 3)] == CellFlag::Gas);
  CHECK(fs::flags_consistent(solver.flags(), solver.topology()));

  SceneSpec dry = s;
  dry.water.clear();
  fs::Solver empty = load_scene(dry);
  StabilizationDetector calm;
  int steps = 0;
  while (!calm.update(max_fluid_speed(empty.macro(), empty.flags()), dry.detector)) {
    empty.step();
    ++steps;
  }
  CHECK(steps == dry.detector.stabilization_window - 1);
}

TEST_CASE("wall building") {
  const SceneSpec s = testing::small_tank();
  fs::Solver solver = load_scene(s);
  CHECK(wall_height(solver.flags(), solver.dims(), s.wall) == 0);
  build_wall(solver, s, 4);
  CHECK(wall_height(solver.flags(), solver.dims(), s.wall) == 4);
  solver.flags()[solver.dims().index(4, 3, 2)] = CellFlag::Gas;
  CHECK(wall_height(solver.flags(), solver.dims(), s.wall) == 1);
}

TEST_CASE("overflow detector") {
  SceneSpec s = testing::small_tank();
  fs::Solver solver = load_scene(s);
  OverflowDetector det;
  det.reset(solver, s);
  CHECK_FALSE(det.update(solver, s));
  const std::size_t cell = solver.dims().index(1, 3, 1);
  solver.flags()[cell] = CellFlag::Interface;
  solver.mass()[cell] = 0.6;
  lbm::equilibrium<double>(1.0, lbm::Vec3d::Zero(), solver.populations().cell(cell));
  CHECK(det.update(solver, s));
  CHECK(det.fired());
  CHECK_FALSE(det.update(solver, s));

  std::vector<double> fill(solver.dims().cells(), 0.0);
  CHECK_FALSE(detect_overflow(fill, s));
  fill[cell] = 0.6;
  CHECK(detect_overflow(fill, s));
  fill[cell] = 0.4;
  CHECK_FALSE(detect_overflow(fill, s));
}

TEST_CASE("stabilization detector") {
  DetectorConfig cfg;
  cfg.stabilization_window = 3;
  StabilizationDetector d;
  CHECK_FALSE(d.update(0.0, cfg));
  CHECK_FALSE(d.update(0.0, cfg));
  CHECK_FALSE(d.update(cfg.stabilization_speed, cfg));
  CHECK(d.calm_steps() == 0);
  CHECK_FALSE(d.update(0.0, cfg));
  CHECK_FALSE(d.update(0.0, cfg));
  CHECK(d.update(0.0, cfg));
  CHECK_FALSE(d.update(0.0, cfg));
}

TEST_CASE("attempt evaluation") {
  const SceneSpec s = testing::small_tank();
  CHECK(evaluate_attempt(s, 5, {false, true}) == Outcome::Success);
  CHECK(evaluate_attempt(s, 6, {false, true}) == Outcome::Overbuilt);
  CHECK(evaluate_attempt(s, 2, {true, false}) == Outcome::Overflow);
  CHECK(evaluate_attempt(s, 9, {true, true}) == Outcome::Overflow);
  CHECK_FALSE(evaluate_attempt(s, 5, {false, false}).has_value());
  CHECK_THROWS_AS(evaluate_attempt(s, 4, {false, true}), InconsistentScene);
}

TEST_CASE("metrics: worked examples") {
  Metrics m = compute_metrics({rec(0.0, events::kSceneLoaded), rec(145.2, events::kSuccess)});
  REQUIRE(m.tct);
  CHECK(*m.tct == doctest::Approx(145.2));
  CHECK(m.failures == 0);

  m = compute_metrics({rec(0.0, events::kSceneLoaded), rec(10, events::kOverflow), rec(20, events::kOverflow),
                       rec(30, events::kOverbuilt)});
  CHECK(m.failures == 3);
  CHECK_FALSE(m.tct);

  m = compute_metrics({rec(0.0, events::kSceneLoaded), rec(20, events::kOverflow), rec(28, events::kEdit),
                       rec(40, events::kOverbuilt), rec(45, events::kEdit)});
  CHECK(m.observation_time == doctest::Approx(6.5));
  CHECK(m.observation_gaps == 2);

  CHECK_THROWS_AS(compute_metrics({rec(1.0, events::kEdit)}), IncompleteLog);
}

TEST_CASE("metrics stop at the next scene") {
  const Metrics m = compute_metrics({rec(5.0, events::kSceneLoaded), rec(7, events::kOverflow),
                                     rec(50, events::kSuccess), rec(50, events::kSceneLoaded),
                                     rec(60, events::kOverflow)});
  CHECK(*m.tct == doctest::Approx(45.0));
  CHECK(m.failures == 1);
}

TEST_CASE("event log round trip") {
  EventLog log;
  log.append(rec(0.0, events::kSceneLoaded, "name=desk_dam"));
  log.append(LogRecord{0.125, 42, events::kEdit, "cells=3 set_wall=3"});
  log.append(LogRecord{0.1, 43, events::kTelemetry, "camera\tmoved\nup"});
  std::stringstream ss;
  log.write(ss);
  const EventLog back = EventLog::read(ss);
  REQUIRE(back.records().size() == 3);
  CHECK(back.records() == log.records());
  CHECK(log.records()[2].wall_clock_s == 0.125);
  CHECK(log.records()[2].details == "camera moved up");
  CHECK(EventLog::format(log.records()[1]) == "0.125\t42\tedit\tcells=3 set_wall=3");
  CHECK(compute_metrics(back.records()) == compute_metrics(log.records()));
}

TEST_CASE("desk scene outcome at h* - 1 and h*") {
  const SceneSpec desk = read_scene_file(kScenes + "/desk_dam.json");
  const int h = desk.optimal_height;
  CHECK(run_height(desk, h - 1, 40000).result == SweepPoint::Result::Overflow);
  CHECK(run_height(desk, h, 40000).result == SweepPoint::Result::Held);
}
