#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsteer/free_surface.hpp"
#include "flowsteer/grid.hpp"

namespace flowsteer::scenario {

/// Inclusive axis-aligned cell range.
struct Box {
  std::array<int, 3> min{0, 0, 0};
  std::array<int, 3> max{0, 0, 0};

  bool contains(int x, int y, int z) const {
    return x >= min[0] && x <= max[0] && y >= min[1] && y <= max[1] && z >= min[2] && z <= max[2];
  }
  bool overlaps(const Box& o) const;
  std::size_t cells() const;
};

/// Wall the user builds: a footprint in the horizontal plane grown upward
/// along z from `base_z`, at most `max_height` cells.
struct WallRegion {
  std::array<int, 2> x{0, 0};
  std::array<int, 2> y{0, 0};
  int base_z{1};
  int max_height{1};

  Box as_box() const { return Box{{x[0], y[0], base_z}, {x[1], y[1], base_z + max_height - 1}}; }
};

struct DetectorConfig {
  double overflow_threshold{0.5};
  double stabilization_speed{1e-3};
  int stabilization_window{200};
};

struct SceneSpec {
  std::string name;
  Dims dims;
  double dx{1.0 / 30.0};
  double tau{0.55};
  lbm::Vec3d gravity{0.0, 0.0, -0.0005};
  /// Seconds per step; derived from |gravity| and dx when not given.
  std::optional<double> dt;
  std::vector<Box> water;
  std::vector<Box> obstacles;
  WallRegion wall;
  Box protected_region;
  int optimal_height{1};
  DetectorConfig detector;
  std::optional<std::string> next_scene;
  std::string provenance;

  lbm::FluidParams fluid_params() const;
};

/// Raised for scenes violating their structural invariants. The message
/// names the offending field.
class InvalidScene : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a run shows the stored optimal height is not the minimum.
class InconsistentScene : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void validate(const SceneSpec& spec);

/// Parses the JSON scene format documented in scenes/README.md.
SceneSpec parse_scene(const std::string& text);
SceneSpec read_scene_file(const std::filesystem::path& path);
std::string to_json(const SceneSpec& spec);

/// Scenes keyed by name.
class SceneLibrary {
 public:
  void add(SceneSpec spec);
  const SceneSpec* find(const std::string& name) const;
  std::vector<std::string> names() const;
  bool empty() const { return scenes_.empty(); }

  /// Reads one file, or every *.json file in a directory.
  static SceneLibrary load(const std::filesystem::path& path);

 private:
  std::map<std::string, SceneSpec> scenes_;
};

/// Fresh solver for the scene: domain faces and obstacles Wall, water boxes
/// Liquid at rest with m = rho0 (surface layer Interface), the rest Gas.
fs::Solver load_scene(const SceneSpec& spec);

/// Marks wall cells on the footprint from base_z up to `height` cells.
void build_wall(fs::Solver& solver, const SceneSpec& spec, int height);

/// Minimum over footprint columns of the contiguous Wall run starting at base_z.
int wall_height(const FlagField& flags, const Dims& dims, const WallRegion& wall);

/// Fires once per attempt when a protected cell that was below the threshold
/// when the attempt began reaches it.
class OverflowDetector {
 public:
  void reset(const fs::Solver& solver, const SceneSpec& spec);
  /// True on the step the detector fires.
  bool update(const fs::Solver& solver, const SceneSpec& spec);
  bool fired() const { return fired_; }

 private:
  std::vector<std::size_t> watched_;
  double threshold_{0.5};
  bool fired_{false};
};

/// Fires once the maximum fluid speed stays below the threshold for the window.
class StabilizationDetector {
 public:
  void reset() {
    calm_steps_ = 0;
    fired_ = false;
  }
  /// True on the step the detector fires.
  bool update(double max_speed, const DetectorConfig& config);
  int calm_steps() const { return calm_steps_; }
  bool fired() const { return fired_; }

 private:
  int calm_steps_{0};
  bool fired_{false};
};

/// Largest |u| over Liquid and Interface cells; 0 when there are none.
double max_fluid_speed(const lbm::MacroFields& macro, const FlagField& flags);

/// True when the protected region holds a cell at or above the threshold.
bool detect_overflow(const std::vector<double>& fill, const SceneSpec& spec);

enum class Outcome { Success, Overflow, Overbuilt };
const char* to_string(Outcome o);

struct AttemptEvents {
  bool overflow{false};
  bool stabilized{false};
};

/// nullopt while the attempt is still open. Throws InconsistentScene when a
/// wall lower than the optimal height holds.
std::optional<Outcome> evaluate_attempt(const SceneSpec& spec, int height, const AttemptEvents& events);

struct LogRecord {
  double wall_clock_s{0.0};
  std::uint64_t timestep{0};
  std::string event;
  std::string details;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

/// Append-only activity record, one line per entry:
/// wall_clock_s<TAB>timestep<TAB>event<TAB>details
class EventLog {
 public:
  void append(LogRecord r);
  const std::vector<LogRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }

  void write(std::ostream& os) const;
  static EventLog read(std::istream& is);
  static std::string format(const LogRecord& r);

 private:
  std::vector<LogRecord> records_;
};

namespace events {
inline constexpr const char* kSceneLoaded = "scene_loaded";
inline constexpr const char* kControl = "control";
inline constexpr const char* kEdit = "edit";
inline constexpr const char* kParam = "param";
inline constexpr const char* kTelemetry = "telemetry";
inline constexpr const char* kOverflow = "overflow";
inline constexpr const char* kOverbuilt = "overbuilt";
inline constexpr const char* kStabilized = "stabilized";
inline constexpr const char* kSuccess = "success";
inline constexpr const char* kFailure = "failure_registered";
inline constexpr const char* kFault = "fault";
inline constexpr const char* kError = "error";
}  // namespace events

class IncompleteLog : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Metrics {
  /// Undefined when the log has no success record.
  std::optional<double> tct;
  int failures{0};
  /// Mean seconds from an attempt outcome to the next edit batch; 0 with no gaps.
  double observation_time{0.0};
  int observation_gaps{0};

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Metrics for the first scene in the log. Throws IncompleteLog when no
/// scene_loaded record exists.
Metrics compute_metrics(const std::vector<LogRecord>& log);

struct SweepPoint {
  int height{0};
  /// Held: stabilized without overflow. Timeout: neither within the budget.
  /// Fault: the solver raised a stability fault.
  enum class Result { Overflow, Held, Timeout, Fault } result{Result::Timeout};
  std::uint64_t steps{0};
};

struct SweepReport {
  std::vector<SweepPoint> points;
  /// Lowest height that held, if any.
  std::optional<int> threshold;
  /// Every height below the threshold overflowed and every one at or above held.
  bool monotone{false};
};

/// Runs the scene once per wall height in [lo, hi] until overflow or
/// stabilization, at most `max_steps` steps each.
SweepReport sweep_wall_heights(const SceneSpec& spec, int lo, int hi, std::uint64_t max_steps);

/// Single run used by the sweep.
SweepPoint run_height(const SceneSpec& spec, int height, std::uint64_t max_steps);

}  // namespace flowsteer::scenario
