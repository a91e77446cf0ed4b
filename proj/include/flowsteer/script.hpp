#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsteer/protocol.hpp"
#include "flowsteer/steering.hpp"

namespace flowsteer::steering {

/// One scripted client command, due at driver tick `tick`.
struct ScriptLine {
  std::uint64_t tick{0};
  protocol::Message command;
  int line{0};
};

class ScriptError : public std::runtime_error {
 public:
  ScriptError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Parses an edit script. Grammar, one command per line:
///
///   at <tick|+seconds> control start|pause|resume|stop|restart|step
///   at <tick|+seconds> edit <x> <y> <z> set_wall|fill_water|empty
///   at <tick|+seconds> param tau|gravity_x|gravity_y|gravity_z|cadence <value>
///   at <tick|+seconds> scene <name>
///   at <tick|+seconds> telemetry <free text>
///
/// Coordinates accept inclusive ranges `a..b`; one edit line is one batch.
/// `+seconds` is relative to the previous line and converted with `dt`.
/// Ticks must not decrease. `#` starts a comment.
std::vector<ScriptLine> parse_script(const std::string& text, double dt);
std::vector<ScriptLine> read_script(const std::filesystem::path& path, double dt);

/// Throws ScriptError for the first edit outside `dims`.
void check_script(const std::vector<ScriptLine>& script, const Dims& dims);

/// Feeds a script into an engine one tick at a time. A tick applies every
/// line due at it and then lets the engine step once if Running, so the
/// script clock keeps advancing while the simulation is paused.
class ScriptDriver {
 public:
  explicit ScriptDriver(std::vector<ScriptLine> script) : script_(std::move(script)) {}

  /// Submits the lines due at the current tick to the engine queue, runs
  /// engine.tick(), and advances the clock.
  bool tick(Engine& engine);

  std::uint64_t now() const { return now_; }
  bool exhausted() const { return next_ >= script_.size(); }

 private:
  std::vector<ScriptLine> script_;
  std::size_t next_{0};
  std::uint64_t now_{0};
};

struct ReplayOptions {
  /// Tick budget; the run also ends once the script is exhausted and the
  /// engine is no longer Running.
  std::uint64_t max_ticks{200000};
  /// Writes one raw SNAPSHOT payload file per snapshot when set.
  std::optional<std::filesystem::path> snapshot_dir;
};

struct ReplayResult {
  scenario::EventLog log;
  std::uint64_t ticks{0};
  std::uint64_t timestep{0};
  std::size_t snapshots{0};
  /// Everything the engine sent except snapshots.
  std::vector<protocol::Message> messages;
};

/// Runs `script` against a fresh engine without a network client. Log
/// timestamps are simulated seconds (ticks * dt).
ReplayResult replay(const scenario::SceneLibrary& library, const std::string& scene, EngineConfig config,
                    const std::vector<ScriptLine>& script, const ReplayOptions& options);

/// Raw SNAPSHOT payload: timestep, seq, cell bytes.
std::vector<std::uint8_t> snapshot_payload(const protocol::Snapshot& s);

}  // namespace flowsteer::steering
