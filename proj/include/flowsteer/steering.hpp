#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "flowsteer/edit.hpp"
#include "flowsteer/free_surface.hpp"
#include "flowsteer/protocol.hpp"
#include "flowsteer/scenario.hpp"

namespace flowsteer::steering {

enum class Lifecycle { Idle, Running, Paused, Finished };
enum class Mode { Interactive, Restart };

const char* to_string(Lifecycle s);
const char* to_string(Mode m);

inline constexpr std::uint32_t kDefaultCadence = 4;

struct EngineConfig {
  std::uint32_t cadence{kDefaultCadence};
  Mode mode{Mode::Interactive};
  /// Begin Running instead of Idle, without a logged start command.
  bool autostart{false};
};

/// Receives every server-to-client message the engine produces.
using Sink = std::function<void(const protocol::Message&)>;
/// Seconds stamped on log records.
using Clock = std::function<double()>;

/// Thread-safe FIFO of client commands.
class CommandQueue {
 public:
  void push(protocol::Message m);
  std::vector<protocol::Message> drain();
  /// Blocks until a command arrives, `stop` is requested or `timeout` passes.
  void wait(std::stop_token stop, std::chrono::milliseconds timeout);
  void notify();
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::deque<protocol::Message> items_;
};

/// Owns the physics state of one steering run. Commands are applied only
/// between timesteps; every state change is reported through the sink and
/// the event log.
class Engine {
 public:
  Engine(scenario::SceneLibrary library, const std::string& scene, EngineConfig config, Sink sink, Clock clock);

  /// Thread-safe: enqueue a client command for the next step boundary.
  void submit(protocol::Message m);
  CommandQueue& queue() { return queue_; }

  /// Applies queued commands, then advances one step if Running.
  /// Returns true when a step was executed.
  bool tick();

  /// Applies one client command immediately. Must not be called mid-step.
  void apply(const protocol::Message& m);

  /// Runs tick() until `stop`; blocks on the queue while not Running.
  void run(std::stop_token stop);

  Lifecycle lifecycle() const { return lifecycle_; }
  Mode mode() const { return config_.mode; }
  std::uint64_t timestep() const { return timestep_; }
  std::uint64_t seq() const { return seq_; }
  std::uint32_t cadence() const { return config_.cadence; }
  const fs::Solver& solver() const { return solver_; }
  const scenario::SceneSpec& scene() const { return *spec_; }
  const scenario::SceneLibrary& library() const { return library_; }
  const scenario::EventLog& log() const { return log_; }
  int failures() const { return failures_; }
  bool attempt_open() const { return attempt_open_; }

  /// Current handshake parameters; safe to call from any thread.
  protocol::ServerCaps caps() const;

  /// Called with each record as it is appended.
  void set_log_listener(std::function<void(const scenario::LogRecord&)> fn) { on_record_ = std::move(fn); }

  /// Snapshot of the current fill field.
  protocol::Snapshot snapshot() const;

 private:
  void load(const scenario::SceneSpec& spec);
  void record(const char* event, std::string details);
  void emit(protocol::Message m);
  void error(protocol::ErrorCode code, std::string message);
  void ack(protocol::MessageType type);
  void event(protocol::EventCode code);

  void on_control(const protocol::Control& c);
  void on_edit(const protocol::EditCells& e);
  void on_param(const protocol::SetParam& p);
  void on_load(const protocol::LoadScene& l);
  void on_cadence(const protocol::SetCadence& c);
  void on_telemetry(const protocol::Telemetry& t);

  void open_attempt();
  void step();
  void detect();

  scenario::SceneLibrary library_;
  const scenario::SceneSpec* spec_{nullptr};
  EngineConfig config_;
  Sink sink_;
  Clock clock_;
  CommandQueue queue_;

  fs::Solver solver_;
  Lifecycle lifecycle_{Lifecycle::Idle};
  std::uint64_t timestep_{0};
  std::uint64_t seq_{0};

  scenario::OverflowDetector overflow_;
  scenario::StabilizationDetector calm_;
  bool attempt_open_{false};
  int attempt_{0};
  int failures_{0};

  scenario::EventLog log_;
  std::function<void(const scenario::LogRecord&)> on_record_;

  mutable std::mutex caps_mu_;
  protocol::ServerCaps caps_;
};

}  // namespace flowsteer::steering
