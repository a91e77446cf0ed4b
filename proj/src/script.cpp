#include "flowsteer/script.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace flowsteer::steering {

namespace {

constexpr std::size_t kMaxBatch = 1u << 22;

struct Range {
  int lo{0};
  int hi{0};
};

int parse_int(const std::string& s, int line, const char* what) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    throw ScriptError(line, std::string("bad ") + what + " '" + s + "'");
  }
  if (used != s.size() || v < 0 || v > 65535) {
    throw ScriptError(line, std::string("bad ") + what + " '" + s + "'");
  }
  return static_cast<int>(v);
}

Range parse_range(const std::string& s, int line, const char* what) {
  const std::size_t dots = s.find("..");
  if (dots == std::string::npos) {
    const int v = parse_int(s, line, what);
    return {v, v};
  }
  Range r{parse_int(s.substr(0, dots), line, what), parse_int(s.substr(dots + 2), line, what)};
  if (r.lo > r.hi) {
    throw ScriptError(line, std::string("empty ") + what + " range '" + s + "'");
  }
  return r;
}

template <typename Enum, int N>
Enum parse_name(const std::string& s, int line, const char* what) {
  for (int k = 0; k < N; ++k) {
    if (s == protocol::to_string(static_cast<Enum>(k))) {
      return static_cast<Enum>(k);
    }
  }
  throw ScriptError(line, std::string("unknown ") + what + " '" + s + "'");
}

std::string rest_of(std::istringstream& in) {
  std::string rest;
  std::getline(in, rest);
  const auto b = rest.find_first_not_of(" \t");
  const auto e = rest.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : rest.substr(b, e - b + 1);
}

}  // namespace

std::vector<ScriptLine> parse_script(const std::string& text, double dt) {
  std::vector<ScriptLine> out;
  std::istringstream lines(text);
  std::string raw;
  int lineno = 0;
  std::uint64_t prev = 0;
  while (std::getline(lines, raw)) {
    ++lineno;
    if (const auto hash = raw.find('#'); hash != std::string::npos) {
      raw.erase(hash);
    }
    std::istringstream in(raw);
    std::string at;
    if (!(in >> at)) {
      continue;
    }
    if (at != "at") {
      throw ScriptError(lineno, "expected 'at', got '" + at + "'");
    }
    std::string when;
    std::string kind;
    if (!(in >> when >> kind)) {
      throw ScriptError(lineno, "expected 'at <tick|+seconds> <command>'");
    }
    std::uint64_t tick = 0;
    if (when.front() == '+') {
      char* end = nullptr;
      const double seconds = std::strtod(when.c_str() + 1, &end);
      if (end == when.c_str() + 1 || *end != '\0' || !std::isfinite(seconds) || seconds < 0.0) {
        throw ScriptError(lineno, "bad time offset '" + when + "'");
      }
      tick = prev + static_cast<std::uint64_t>(std::llround(seconds / dt));
    } else {
      std::size_t used = 0;
      try {
        tick = std::stoull(when, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != when.size() || when.front() == '-') {
        throw ScriptError(lineno, "bad tick '" + when + "'");
      }
    }
    if (tick < prev) {
      throw ScriptError(lineno, "tick " + std::to_string(tick) + " is earlier than the previous line");
    }
    prev = tick;

    ScriptLine sl{tick, protocol::Message{}, lineno};
    std::string a;
    if (kind == "control") {
      if (!(in >> a)) {
        throw ScriptError(lineno, "control needs a verb");
      }
      sl.command = protocol::Control{parse_name<protocol::ControlVerb, 6>(a, lineno, "control verb")};
    } else if (kind == "edit") {
      std::string xs, ys, zs;
      if (!(in >> xs >> ys >> zs >> a)) {
        throw ScriptError(lineno, "edit needs <x> <y> <z> <action>");
      }
      const Range rx = parse_range(xs, lineno, "x");
      const Range ry = parse_range(ys, lineno, "y");
      const Range rz = parse_range(zs, lineno, "z");
      const auto action = parse_name<protocol::EditAction, 3>(a, lineno, "edit action");
      const std::size_t n = static_cast<std::size_t>(rx.hi - rx.lo + 1) * static_cast<std::size_t>(ry.hi - ry.lo + 1) *
                            static_cast<std::size_t>(rz.hi - rz.lo + 1);
      if (n > kMaxBatch) {
        throw ScriptError(lineno, "edit batch too large");
      }
      protocol::EditCells batch;
      batch.cells.reserve(n);
      for (int z = rz.lo; z <= rz.hi; ++z) {
        for (int y = ry.lo; y <= ry.hi; ++y) {
          for (int x = rx.lo; x <= rx.hi; ++x) {
            batch.cells.push_back(protocol::CellEdit{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                                     static_cast<std::uint16_t>(z), action});
          }
        }
      }
      sl.command = std::move(batch);
    } else if (kind == "param") {
      double value = 0.0;
      if (!(in >> a >> value)) {
        throw ScriptError(lineno, "param needs <target> <value>");
      }
      sl.command = protocol::SetParam{parse_name<protocol::ParamTarget, 5>(a, lineno, "param target"), value};
    } else if (kind == "scene") {
      if (!(in >> a)) {
        throw ScriptError(lineno, "scene needs a name");
      }
      sl.command = protocol::LoadScene{a};
    } else if (kind == "telemetry") {
      sl.command = protocol::Telemetry{rest_of(in)};
    } else {
      throw ScriptError(lineno, "unknown command '" + kind + "'");
    }
    if (std::string extra; kind != "telemetry" && (in >> extra)) {
      throw ScriptError(lineno, "unexpected '" + extra + "'");
    }
    out.push_back(std::move(sl));
  }
  return out;
}

std::vector<ScriptLine> read_script(const std::filesystem::path& path, double dt) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open script " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_script(ss.str(), dt);
}

void check_script(const std::vector<ScriptLine>& script, const Dims& dims) {
  for (const ScriptLine& sl : script) {
    const auto* e = std::get_if<protocol::EditCells>(&sl.command);
    if (e == nullptr) {
      continue;
    }
    for (const protocol::CellEdit& c : e->cells) {
      if (!dims.contains(c.x, c.y, c.z)) {
        throw ScriptError(sl.line, "voxel (" + std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                                       std::to_string(c.z) + ") is outside the grid");
      }
    }
  }
}

bool ScriptDriver::tick(Engine& engine) {
  while (next_ < script_.size() && script_[next_].tick <= now_) {
    engine.submit(script_[next_].command);
    ++next_;
  }
  const bool stepped = engine.tick();
  ++now_;
  return stepped;
}

std::vector<std::uint8_t> snapshot_payload(const protocol::Snapshot& s) {
  std::vector<std::uint8_t> frame = protocol::encode(s);
  // Drop the length prefix and the type byte.
  return std::vector<std::uint8_t>(frame.begin() + 5, frame.end());
}

ReplayResult replay(const scenario::SceneLibrary& library, const std::string& scene, EngineConfig config,
                    const std::vector<ScriptLine>& script, const ReplayOptions& options) {
  ReplayResult result;
  ScriptDriver driver(script);
  double dt = 0.0;
  std::string write_error;
  auto sink = [&](const protocol::Message& m) {
    if (const auto* s = std::get_if<protocol::Snapshot>(&m)) {
      if (options.snapshot_dir) {
        char name[32];
        std::snprintf(name, sizeof(name), "snap_%08zu.bin", result.snapshots);
        std::ofstream out(*options.snapshot_dir / name, std::ios::binary);
        const std::vector<std::uint8_t> payload = snapshot_payload(*s);
        out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
        if (!out) {
          write_error = "cannot write snapshot " + (*options.snapshot_dir / name).string();
        }
      }
      ++result.snapshots;
      return;
    }
    result.messages.push_back(m);
  };
  Engine engine(library, scene, config, sink, [&] { return static_cast<double>(driver.now()) * dt; });
  dt = engine.solver().params().dt;
  check_script(script, engine.solver().dims());

  while (driver.now() < options.max_ticks) {
    driver.tick(engine);
    if (!write_error.empty()) {
      throw std::runtime_error(write_error);
    }
    if (driver.exhausted() && engine.lifecycle() != Lifecycle::Running) {
      break;
    }
  }
  result.log = engine.log();
  result.ticks = driver.now();
  result.timestep = engine.timestep();
  return result;
}

}  // namespace flowsteer::steering
