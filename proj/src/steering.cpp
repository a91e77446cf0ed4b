#include "flowsteer/steering.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowsteer::steering {

using protocol::ControlVerb;
using protocol::ErrorCode;
using protocol::EventCode;
using protocol::MessageType;

const char* to_string(Lifecycle s) {
  switch (s) {
    case Lifecycle::Idle:
      return "idle";
    case Lifecycle::Running:
      return "running";
    case Lifecycle::Paused:
      return "paused";
    case Lifecycle::Finished:
      return "finished";
  }
  return "unknown";
}

const char* to_string(Mode m) { return m == Mode::Interactive ? "interactive" : "restart"; }

void CommandQueue::push(protocol::Message m) {
  {
    std::lock_guard lock(mu_);
    items_.push_back(std::move(m));
  }
  cv_.notify_one();
}

std::vector<protocol::Message> CommandQueue::drain() {
  std::lock_guard lock(mu_);
  std::vector<protocol::Message> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
  items_.clear();
  return out;
}

void CommandQueue::wait(std::stop_token stop, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, stop, timeout, [&] { return !items_.empty(); });
}

void CommandQueue::notify() { cv_.notify_all(); }

std::size_t CommandQueue::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

Engine::Engine(scenario::SceneLibrary library, const std::string& scene, EngineConfig config, Sink sink, Clock clock)
    : library_(std::move(library)), config_(config), sink_(std::move(sink)), clock_(std::move(clock)) {
  if (config_.cadence == 0) {
    throw std::invalid_argument("snapshot cadence must be at least 1");
  }
  const scenario::SceneSpec* spec = library_.find(scene);
  if (spec == nullptr) {
    throw std::invalid_argument("unknown scene '" + scene + "'");
  }
  load(*spec);
  record(scenario::events::kSceneLoaded, "name=" + spec->name);
  event(EventCode::SceneLoaded);
  if (config_.autostart) {
    lifecycle_ = Lifecycle::Running;
  }
}

void Engine::submit(protocol::Message m) { queue_.push(std::move(m)); }

protocol::ServerCaps Engine::caps() const {
  std::lock_guard lock(caps_mu_);
  return caps_;
}

protocol::Snapshot Engine::snapshot() const {
  const std::vector<double> fill = solver_.fill_fraction();
  return protocol::Snapshot{timestep_, seq_, protocol::quantize_field(fill)};
}

void Engine::load(const scenario::SceneSpec& spec) {
  fs::Solver fresh = scenario::load_scene(spec);
  const bool new_scene = spec_ != &spec;
  spec_ = &spec;
  solver_ = std::move(fresh);
  lifecycle_ = Lifecycle::Idle;
  timestep_ = 0;
  seq_ = 0;
  if (new_scene) {
    failures_ = 0;
    attempt_ = 0;
  }
  {
    std::lock_guard lock(caps_mu_);
    caps_ = protocol::ServerCaps{protocol::kVersion, spec.dims, spec.dx, solver_.params().dt};
  }
  open_attempt();
}

void Engine::record(const char* event, std::string details) {
  log_.append(scenario::LogRecord{clock_ ? clock_() : 0.0, timestep_, event, std::move(details)});
  if (on_record_) {
    on_record_(log_.records().back());
  }
}

void Engine::emit(protocol::Message m) {
  if (sink_) {
    sink_(m);
  }
}

void Engine::error(ErrorCode code, std::string message) {
  record(scenario::events::kError, message);
  emit(protocol::Error{code, std::move(message)});
}

void Engine::ack(MessageType type) { emit(protocol::Ack{static_cast<std::uint8_t>(type)}); }

void Engine::event(EventCode code) { emit(protocol::Event{code, timestep_}); }

void Engine::open_attempt() {
  ++attempt_;
  attempt_open_ = true;
  overflow_.reset(solver_, *spec_);
  calm_.reset();
}

bool Engine::tick() {
  std::vector<protocol::Message> batch = queue_.drain();
  // A restart discards whatever was queued ahead of it.
  const auto last_restart = std::find_if(batch.rbegin(), batch.rend(), [](const protocol::Message& m) {
    const auto* c = std::get_if<protocol::Control>(&m);
    return c != nullptr && c->verb == ControlVerb::Restart;
  });
  std::size_t first = 0;
  if (last_restart != batch.rend()) {
    first = static_cast<std::size_t>(batch.rend() - last_restart) - 1;
    if (first > 0) {
      record(scenario::events::kError, "discarded=" + std::to_string(first) + " commands queued before restart");
    }
  }
  for (std::size_t k = first; k < batch.size(); ++k) {
    apply(batch[k]);
  }
  if (lifecycle_ == Lifecycle::Running) {
    step();
    return true;
  }
  return false;
}

void Engine::run(std::stop_token stop) {
  while (!stop.stop_requested()) {
    if (lifecycle_ != Lifecycle::Running) {
      queue_.wait(stop, std::chrono::milliseconds(100));
      if (stop.stop_requested()) {
        break;
      }
    }
    tick();
  }
}

void Engine::apply(const protocol::Message& m) {
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, protocol::Control>) {
          on_control(msg);
        } else if constexpr (std::is_same_v<T, protocol::EditCells>) {
          on_edit(msg);
        } else if constexpr (std::is_same_v<T, protocol::SetParam>) {
          on_param(msg);
        } else if constexpr (std::is_same_v<T, protocol::LoadScene>) {
          on_load(msg);
        } else if constexpr (std::is_same_v<T, protocol::SetCadence>) {
          on_cadence(msg);
        } else if constexpr (std::is_same_v<T, protocol::Telemetry>) {
          on_telemetry(msg);
        } else if constexpr (std::is_same_v<T, protocol::Hello>) {
          // The transport owns the handshake.
        } else {
          error(ErrorCode::MalformedFrame, "server-to-client message sent by the client");
        }
      },
      m);
}

void Engine::on_control(const protocol::Control& c) {
  const Lifecycle from = lifecycle_;
  auto illegal = [&] {
    error(ErrorCode::IllegalTransition,
          std::string(protocol::to_string(c.verb)) + " is not allowed while " + to_string(from));
  };
  switch (c.verb) {
    case ControlVerb::Start:
      if (from != Lifecycle::Idle) {
        return illegal();
      }
      lifecycle_ = Lifecycle::Running;
      break;
    case ControlVerb::Pause:
      if (from != Lifecycle::Running) {
        return illegal();
      }
      lifecycle_ = Lifecycle::Paused;
      break;
    case ControlVerb::Resume:
      if (from != Lifecycle::Paused) {
        return illegal();
      }
      lifecycle_ = Lifecycle::Running;
      break;
    case ControlVerb::Stop:
      if (from != Lifecycle::Running && from != Lifecycle::Paused) {
        return illegal();
      }
      lifecycle_ = Lifecycle::Idle;
      break;
    case ControlVerb::Restart:
      load(*spec_);
      break;
    case ControlVerb::SingleStep:
      if (from != Lifecycle::Idle && from != Lifecycle::Paused) {
        return illegal();
      }
      break;
  }
  record(scenario::events::kControl, protocol::to_string(c.verb));
  ack(MessageType::Control);
  if (c.verb == ControlVerb::Restart) {
    event(EventCode::SceneLoaded);
  } else if (c.verb == ControlVerb::SingleStep) {
    step();
  }
}

void Engine::on_edit(const protocol::EditCells& e) {
  if (lifecycle_ == Lifecycle::Finished) {
    return error(ErrorCode::EditRejected, "scene finished; load the next scene or restart");
  }
  if (config_.mode == Mode::Restart && lifecycle_ != Lifecycle::Idle) {
    return error(ErrorCode::EditRejected,
                 std::string("restart mode accepts edits only while idle (now ") + to_string(lifecycle_) + ")");
  }
  std::vector<EditCommand> cmds;
  cmds.reserve(e.cells.size());
  for (const protocol::CellEdit& c : e.cells) {
    cmds.push_back(EditCommand{c.x, c.y, c.z, c.action});
  }
  try {
    check_bounds(solver_.dims(), cmds);
  } catch (const OutOfBounds& ex) {
    return error(ErrorCode::OutOfBounds, ex.what());
  }
  ack(MessageType::EditCells);
  if (cmds.empty()) {
    return;
  }
  std::array<int, 3> counts{0, 0, 0};
  double discarded = 0.0;
  for (const EditCommand& c : cmds) {
    discarded += apply_edit(solver_, c).discarded_mass;
    ++counts[static_cast<std::size_t>(c.action)];
  }
  std::ostringstream d;
  d << "cells=" << cmds.size() << " set_wall=" << counts[1] << " fill_water=" << counts[2] << " empty=" << counts[0]
    << " height=" << scenario::wall_height(solver_.flags(), solver_.dims(), spec_->wall)
    << " discarded_mass=" << discarded;
  record(scenario::events::kEdit, d.str());
  open_attempt();
}

void Engine::on_param(const protocol::SetParam& p) {
  if (!std::isfinite(p.value)) {
    return error(ErrorCode::InvalidParam, "parameter value must be finite");
  }
  if (p.target == protocol::ParamTarget::SnapshotCadence) {
    if (p.value < 1.0 || p.value > 4294967295.0 || p.value != std::floor(p.value)) {
      return error(ErrorCode::InvalidParam, "cadence must be a positive integer");
    }
    return on_cadence(protocol::SetCadence{static_cast<std::uint32_t>(p.value)});
  }
  lbm::FluidParams params = solver_.params();
  switch (p.target) {
    case protocol::ParamTarget::Tau:
      params.tau = p.value;
      break;
    case protocol::ParamTarget::GravityX:
      params.gravity[0] = p.value;
      break;
    case protocol::ParamTarget::GravityY:
      params.gravity[1] = p.value;
      break;
    case protocol::ParamTarget::GravityZ:
      params.gravity[2] = p.value;
      break;
    case protocol::ParamTarget::SnapshotCadence:
      break;
  }
  try {
    solver_.set_params(params);
  } catch (const std::invalid_argument& ex) {
    return error(ErrorCode::InvalidParam, ex.what());
  }
  std::ostringstream d;
  d << protocol::to_string(p.target) << "=" << p.value;
  record(scenario::events::kParam, d.str());
  ack(MessageType::SetParam);
}

void Engine::on_cadence(const protocol::SetCadence& c) {
  if (c.cadence == 0) {
    return error(ErrorCode::InvalidParam, "cadence must be at least 1");
  }
  config_.cadence = c.cadence;
  record(scenario::events::kParam, "cadence=" + std::to_string(c.cadence));
  ack(MessageType::SetCadence);
}

void Engine::on_load(const protocol::LoadScene& l) {
  const scenario::SceneSpec* spec = library_.find(l.name);
  if (spec == nullptr) {
    return error(ErrorCode::UnknownScene, "unknown scene '" + l.name + "'");
  }
  load(*spec);
  record(scenario::events::kSceneLoaded, "name=" + spec->name);
  ack(MessageType::LoadScene);
  const protocol::ServerCaps c = caps();
  emit(protocol::Welcome{c.version, static_cast<std::uint32_t>(c.dims.nx), static_cast<std::uint32_t>(c.dims.ny),
                         static_cast<std::uint32_t>(c.dims.nz), c.dx, c.dt});
  event(EventCode::SceneLoaded);
}

void Engine::on_telemetry(const protocol::Telemetry& t) {
  record(scenario::events::kTelemetry, t.text);
  ack(MessageType::Telemetry);
}

void Engine::step() {
  try {
    solver_.step();
  } catch (const lbm::StabilityFault& f) {
    if (lifecycle_ == Lifecycle::Running) {
      lifecycle_ = Lifecycle::Paused;
    }
    record(scenario::events::kFault, f.what());
    emit(protocol::Error{ErrorCode::StabilityFault, f.what()});
    return;
  }
  ++timestep_;
  detect();
  if (timestep_ % config_.cadence == 0) {
    ++seq_;
    emit(snapshot());
  }
}

void Engine::detect() {
  if (!attempt_open_) {
    return;
  }
  const scenario::SceneSpec& spec = *spec_;
  const int height = scenario::wall_height(solver_.flags(), solver_.dims(), spec.wall);
  const std::string tag = "attempt=" + std::to_string(attempt_) + " height=" + std::to_string(height);
  auto fail = [&](const char* what, EventCode code) {
    attempt_open_ = false;
    ++failures_;
    record(what, tag);
    event(code);
    record(scenario::events::kFailure, "failures=" + std::to_string(failures_));
    event(EventCode::FailureRegistered);
  };

  if (overflow_.update(solver_, spec)) {
    return fail(scenario::events::kOverflow, EventCode::Overflow);
  }
  if (!calm_.update(scenario::max_fluid_speed(solver_.macro(), solver_.flags()), spec.detector)) {
    return;
  }
  attempt_open_ = false;
  record(scenario::events::kStabilized, tag);
  event(EventCode::Stabilized);
  std::optional<scenario::Outcome> outcome;
  try {
    outcome = scenario::evaluate_attempt(spec, height, scenario::AttemptEvents{false, true});
  } catch (const scenario::InconsistentScene& ex) {
    // A wall built after the water already settled can hold while too low.
    record(scenario::events::kError, ex.what());
    return;
  }
  if (outcome == scenario::Outcome::Overbuilt) {
    return fail(scenario::events::kOverbuilt, EventCode::Overbuilt);
  }
  record(scenario::events::kSuccess, tag);
  event(EventCode::Success);
  lifecycle_ = Lifecycle::Finished;
  if (spec.next_scene) {
    if (const scenario::SceneSpec* next = library_.find(*spec.next_scene)) {
      load(*next);
      record(scenario::events::kSceneLoaded, "name=" + next->name);
      const protocol::ServerCaps c = caps();
      emit(protocol::Welcome{c.version, static_cast<std::uint32_t>(c.dims.nx), static_cast<std::uint32_t>(c.dims.ny),
                             static_cast<std::uint32_t>(c.dims.nz), c.dx, c.dt});
      event(EventCode::SceneLoaded);
    } else {
      record(scenario::events::kError, "next scene '" + *spec.next_scene + "' is not in the library");
    }
  }
}

}  // namespace flowsteer::steering
