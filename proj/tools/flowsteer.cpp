// flowsteer: steering server, headless replay, benchmark and validation runner.

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "flowsteer/scenario.hpp"
#include "flowsteer/script.hpp"
#include "flowsteer/server.hpp"
#include "flowsteer/steering.hpp"
#include "flowsteer/validate.hpp"

namespace fsr = flowsteer;
namespace stdfs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kFault = 2;

struct Options {
  std::string scene_path{"scenes"};
  std::string start;
  int port{7070};
  std::uint32_t cadence{fsr::steering::kDefaultCadence};
  std::string mode{"interactive"};
  std::string script;
  std::string out{"out"};
  std::vector<int> dims{30, 30, 72};
  std::uint64_t steps{0};
  std::uint64_t warmup{100};
  bool no_snapshots{false};
  int lo{0};
  int hi{-1};
  std::vector<std::string> cases;
};

void init_logging() {
  const char* env = std::getenv("FLOWSTEER_LOG_LEVEL");
  spdlog::set_level(env != nullptr ? spdlog::level::from_str(env) : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

struct Loaded {
  fsr::scenario::SceneLibrary library;
  std::string start;
};

// A file yields its single scene; a directory yields every scene in it and
// starts from --start or the first name.
Loaded load_library(const Options& o) {
  Loaded l{fsr::scenario::SceneLibrary::load(o.scene_path), o.start};
  if (l.library.empty()) {
    throw std::runtime_error("no scenes found in " + o.scene_path);
  }
  if (l.start.empty()) {
    l.start = l.library.names().front();
  } else if (l.library.find(l.start) == nullptr) {
    throw std::runtime_error("scene '" + l.start + "' not found in " + o.scene_path);
  }
  return l;
}

fsr::steering::EngineConfig engine_config(const Options& o) {
  fsr::steering::EngineConfig c;
  c.cadence = o.cadence;
  c.mode = o.mode == "restart" ? fsr::steering::Mode::Restart : fsr::steering::Mode::Interactive;
  return c;
}

json metrics_json(const fsr::scenario::EventLog& log) {
  const fsr::scenario::Metrics m = fsr::scenario::compute_metrics(log.records());
  json j;
  j["tct"] = m.tct ? json(*m.tct) : json(nullptr);
  j["failures"] = m.failures;
  j["observation_time"] = m.observation_time;
  j["observation_gaps"] = m.observation_gaps;
  return j;
}

void write_text(const stdfs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

int cmd_replay(const Options& o) {
  const Loaded l = load_library(o);
  const double dt = l.library.find(l.start)->fluid_params().dt;
  std::vector<fsr::steering::ScriptLine> script;
  if (!o.script.empty()) {
    try {
      script = fsr::steering::read_script(o.script, dt);
      fsr::steering::check_script(script, l.library.find(l.start)->dims);
    } catch (const fsr::steering::ScriptError& e) {
      spdlog::error("{}:{}", o.script, e.what());
      return kFault;
    }
  }
  fsr::steering::EngineConfig config = engine_config(o);
  config.autostart = std::none_of(script.begin(), script.end(), [](const fsr::steering::ScriptLine& s) {
    const auto* c = std::get_if<fsr::protocol::Control>(&s.command);
    return c != nullptr && c->verb == fsr::protocol::ControlVerb::Start;
  });

  const stdfs::path out(o.out);
  stdfs::create_directories(out);
  fsr::steering::ReplayOptions ro;
  if (o.steps > 0) {
    ro.max_ticks = o.steps;
  }
  if (!o.no_snapshots) {
    ro.snapshot_dir = out / "snapshots";
    stdfs::create_directories(*ro.snapshot_dir);
  }
  spdlog::info("replaying {} on scene {}", o.script.empty() ? "(no script)" : o.script, l.start);
  const fsr::steering::ReplayResult r = fsr::steering::replay(l.library, l.start, config, script, ro);

  std::ofstream log(out / "events.log");
  r.log.write(log);
  if (!log) {
    throw std::runtime_error("cannot write " + (out / "events.log").string());
  }
  const json m = metrics_json(r.log);
  write_text(out / "metrics.json", m.dump(2) + "\n");
  std::cout << "ticks " << r.ticks << "  timesteps " << r.timestep << "  snapshots " << r.snapshots << "\n"
            << "metrics " << m.dump() << "\n";
  return 0;
}

int cmd_serve(const Options& o) {
  const Loaded l = load_library(o);
  const stdfs::path out(o.out);
  stdfs::create_directories(out);
  std::ofstream log_file(out / "events.log");
  if (!log_file) {
    throw std::runtime_error("cannot write " + (out / "events.log").string());
  }

  std::vector<fsr::steering::ScriptLine> script;
  if (!o.script.empty()) {
    const double dt = l.library.find(l.start)->fluid_params().dt;
    try {
      script = fsr::steering::read_script(o.script, dt);
      fsr::steering::check_script(script, l.library.find(l.start)->dims);
    } catch (const fsr::steering::ScriptError& e) {
      spdlog::error("{}:{}", o.script, e.what());
      return kFault;
    }
  }

  // SIGINT/SIGTERM are collected by sigwait below; threads inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  fsr::net::Server* server = nullptr;
  std::mutex server_mu;
  const auto t0 = std::chrono::steady_clock::now();
  fsr::steering::Engine engine(
      l.library, l.start, engine_config(o),
      [&](const fsr::protocol::Message& m) {
        std::lock_guard lock(server_mu);
        if (server != nullptr) {
          server->deliver(m);
        }
      },
      [t0] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); });

  fsr::net::ServerOptions so;
  so.port = static_cast<std::uint16_t>(o.port);
  fsr::net::Server srv(engine, so);
  {
    std::lock_guard lock(server_mu);
    server = &srv;
  }
  for (const auto& r : engine.log().records()) {
    log_file << fsr::scenario::EventLog::format(r) << '\n';
  }
  log_file.flush();
  engine.set_log_listener([&](const fsr::scenario::LogRecord& r) {
    log_file << fsr::scenario::EventLog::format(r) << '\n';
    log_file.flush();
  });

  spdlog::info("serving scene {} ({}x{}x{}) on port {}, mode {}, cadence {}", l.start, engine.scene().dims.nx,
               engine.scene().dims.ny, engine.scene().dims.nz, srv.port(), o.mode, o.cadence);

  std::thread net([&] { srv.run(); });
  std::jthread sim([&](std::stop_token stop) {
    if (!script.empty()) {
      fsr::steering::ScriptDriver driver(script);
      while (!stop.stop_requested() && !driver.exhausted()) {
        driver.tick(engine);
      }
      spdlog::info("script finished at tick {}", driver.now());
    }
    engine.run(stop);
  });

  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("signal {}, shutting down", sig);
  sim.request_stop();
  engine.queue().notify();
  sim.join();
  {
    std::lock_guard lock(server_mu);
    server = nullptr;
  }
  srv.stop();
  net.join();
  write_text(out / "metrics.json", metrics_json(engine.log()).dump(2) + "\n");
  return 0;
}

int cmd_bench(const Options& o) {
  const fsr::Dims d{o.dims[0], o.dims[1], o.dims[2]};
  const std::uint64_t steps = o.steps > 0 ? o.steps : 1000;
  const fsr::validation::ThroughputReport r = fsr::validation::bench(d, steps, o.warmup);
  std::printf("grid     %dx%dx%d (%zu cells), tau %.3g, threads %d\n", d.nx, d.ny, d.nz, d.cells(), r.tau,
              r.threads);
  std::printf("steps    %llu timed after %llu warmup\n", static_cast<unsigned long long>(r.steps),
              static_cast<unsigned long long>(r.warmup));
  std::printf("wall     %.3f s\n", r.seconds);
  std::printf("rate     %.1f steps/s, %.2f MLUPS\n", r.steps_per_second, r.mlups);
  return 0;
}

int cmd_validate(const Options& o) {
  std::vector<std::string> cases = o.cases.empty() ? fsr::validation::case_names() : o.cases;
  for (const std::string& c : cases) {
    const auto& known = fsr::validation::case_names();
    if (std::find(known.begin(), known.end(), c) == known.end()) {
      std::cerr << "unknown validation case '" << c << "'\n";
      return kUsage;
    }
  }
  bool all = true;
  for (const std::string& c : cases) {
    const fsr::validation::CaseResult r = fsr::validation::run_case(c);
    std::printf("%s %-12s error %.3e  tol %.1e  %6.2f s  %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.error,
                r.tolerance, r.seconds, r.detail.c_str());
    std::fflush(stdout);
    all = all && r.pass;
  }
  return all ? 0 : kFault;
}

int cmd_sweep(const Options& o) {
  const Loaded l = load_library(o);
  const fsr::scenario::SceneSpec& spec = *l.library.find(l.start);
  const int hi = o.hi < 0 ? spec.wall.max_height : o.hi;
  const std::uint64_t steps = o.steps > 0 ? o.steps : 40000;
  const fsr::scenario::SweepReport r = fsr::scenario::sweep_wall_heights(spec, o.lo, hi, steps);
  for (const auto& p : r.points) {
    const char* what = p.result == fsr::scenario::SweepPoint::Result::Overflow ? "overflow"
                       : p.result == fsr::scenario::SweepPoint::Result::Held    ? "held"
                       : p.result == fsr::scenario::SweepPoint::Result::Fault   ? "fault"
                                                                                : "timeout";
    std::printf("h=%d %s steps=%llu\n", p.height, what, static_cast<unsigned long long>(p.steps));
  }
  if (r.threshold) {
    std::printf("threshold %d%s\n", *r.threshold, r.monotone ? "" : " (not monotone)");
  } else {
    std::printf("no height held\n");
  }
  return r.threshold && r.monotone ? 0 : kFault;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  Options o;
  CLI::App app{"flowsteer: interactive free-surface LBM steering server"};
  app.require_subcommand(1);

  auto add_scene = [&](CLI::App* c) {
    c->add_option("--scene", o.scene_path, "Scene file or directory of scene files")->capture_default_str();
    c->add_option("--start", o.start, "Initial scene name when --scene is a directory");
  };
  auto add_steering = [&](CLI::App* c) {
    c->add_option("--cadence", o.cadence, "Steps between snapshots")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--mode", o.mode, "Editing policy")->check(CLI::IsMember({"interactive", "restart"}))->capture_default_str();
    c->add_option("--out", o.out, "Output directory")->capture_default_str();
  };

  CLI::App* serve = app.add_subcommand("serve", "Serve the steering protocol (TCP and WebSocket on one port)");
  add_scene(serve);
  add_steering(serve);
  serve->add_option("--port", o.port, "Listen port")->check(CLI::Range(1, 65535))->capture_default_str();
  serve->add_option("--script", o.script, "Edit script driven into the engine at startup")->check(CLI::ExistingFile);

  CLI::App* replay = app.add_subcommand("replay", "Run an edit script headlessly");
  add_scene(replay);
  add_steering(replay);
  replay->add_option("--script", o.script, "Edit script")->check(CLI::ExistingFile);
  replay->add_option("--steps", o.steps, "Tick budget (default 200000)");
  replay->add_flag("--no-snapshots", o.no_snapshots, "Skip snapshot dumps");

  CLI::App* bench = app.add_subcommand("bench", "Measure lattice throughput on an all-liquid periodic box");
  bench->add_option("--dims", o.dims, "Grid size X,Y,Z")->delimiter(',')->expected(3)->check(CLI::PositiveNumber);
  bench->add_option("--steps", o.steps, "Timed steps (default 1000)")->check(CLI::Range(1000ULL, 1000000000ULL));
  bench->add_option("--warmup", o.warmup, "Untimed warmup steps")->check(CLI::Range(100ULL, 1000000000ULL))
      ->capture_default_str();

  CLI::App* validate = app.add_subcommand("validate", "Run physics validation cases");
  validate->add_option("cases", o.cases, "equilibrium, mass, poiseuille, hydrostatic, symmetry (default all)");

  CLI::App* sweep = app.add_subcommand("sweep", "Find the lowest wall height that holds back the water");
  add_scene(sweep);
  sweep->add_option("--from", o.lo, "Lowest height")->check(CLI::NonNegativeNumber)->capture_default_str();
  sweep->add_option("--to", o.hi, "Highest height (default max_height)");
  sweep->add_option("--steps", o.steps, "Step budget per height (default 40000)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (serve->parsed()) {
      return cmd_serve(o);
    }
    if (replay->parsed()) {
      return cmd_replay(o);
    }
    if (bench->parsed()) {
      return cmd_bench(o);
    }
    if (validate->parsed()) {
      return cmd_validate(o);
    }
    return cmd_sweep(o);
  } catch (const std::exception& e) {
    spdlog::critical("{}", e.what());
    return kFault;
  }
}
