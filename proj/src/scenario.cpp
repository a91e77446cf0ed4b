#include "flowsteer/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "flowsteer/edit.hpp"

namespace flowsteer::scenario {

using nlohmann::json;

bool Box::overlaps(const Box& o) const {
  for (int a = 0; a < 3; ++a) {
    if (max[a] < o.min[a] || o.max[a] < min[a]) {
      return false;
    }
  }
  return true;
}

std::size_t Box::cells() const {
  std::size_t n = 1;
  for (int a = 0; a < 3; ++a) {
    n *= static_cast<std::size_t>(std::max(0, max[a] - min[a] + 1));
  }
  return n;
}

lbm::FluidParams SceneSpec::fluid_params() const {
  lbm::FluidParams p;
  p.tau = tau;
  p.gravity = gravity;
  p.dx = dx;
  const double g = gravity.norm();
  p.dt = dt.value_or(lbm::time_step_for(g > 0.0 ? g : 0.0005, dx));
  return p;
}

namespace {

std::string box_str(const Box& b) {
  std::ostringstream os;
  os << "[" << b.min[0] << "," << b.min[1] << "," << b.min[2] << "]..[" << b.max[0] << "," << b.max[1] << ","
     << b.max[2] << "]";
  return os.str();
}

void check_box(const SceneSpec& s, const Box& b, const std::string& field) {
  const std::array<int, 3> extent = {s.dims.nx, s.dims.ny, s.dims.nz};
  for (int a = 0; a < 3; ++a) {
    if (b.min[a] > b.max[a]) {
      throw InvalidScene(field + ": empty range " + box_str(b));
    }
    if (b.min[a] < 1 || b.max[a] > extent[a] - 2) {
      throw InvalidScene(field + ": " + box_str(b) + " leaves the interior [1, n-2] on axis " + "xyz"[a]);
    }
  }
}

struct Named {
  std::string field;
  Box box;
};

Box read_box(const json& j) {
  Box b;
  for (int a = 0; a < 3; ++a) {
    b.min[a] = j.at("min").at(a).get<int>();
    b.max[a] = j.at("max").at(a).get<int>();
  }
  return b;
}

json write_box(const Box& b) { return json{{"min", b.min}, {"max", b.max}}; }

double fill_at(const fs::Solver& solver, std::size_t idx) {
  switch (solver.flags()[idx]) {
    case CellFlag::Liquid:
      return 1.0;
    case CellFlag::Interface: {
      double rho = 0.0;
      for (double v : solver.populations().cell(idx)) {
        rho += v;
      }
      return rho > 0.0 ? std::clamp(solver.mass()[idx] / rho, 0.0, 1.0) : 0.0;
    }
    default:
      return 0.0;
  }
}

std::string sanitize(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
  return s;
}

}  // namespace

void validate(const SceneSpec& s) {
  if (s.name.empty()) {
    throw InvalidScene("name: must not be empty");
  }
  if (s.dims.nx < 3 || s.dims.ny < 3 || s.dims.nz < 3) {
    throw InvalidScene("dims: every extent must be at least 3");
  }
  if (s.dims.nx > 65535 || s.dims.ny > 65535 || s.dims.nz > 65535) {
    throw InvalidScene("dims: extents must fit the u16 edit coordinates");
  }
  if (!(s.dx > 0.0)) {
    throw InvalidScene("dx: must be positive");
  }
  try {
    s.fluid_params().validate();
  } catch (const std::invalid_argument& e) {
    throw InvalidScene(std::string("physics: ") + e.what());
  }

  std::vector<Named> regions;
  for (std::size_t k = 0; k < s.water.size(); ++k) {
    const std::string f = "water[" + std::to_string(k) + "]";
    check_box(s, s.water[k], f);
    regions.push_back({f, s.water[k]});
  }
  for (std::size_t k = 0; k < s.obstacles.size(); ++k) {
    const std::string f = "obstacles[" + std::to_string(k) + "]";
    check_box(s, s.obstacles[k], f);
    regions.push_back({f, s.obstacles[k]});
  }
  if (s.wall.max_height < 1) {
    throw InvalidScene("wall.max_height: must be at least 1");
  }
  check_box(s, s.wall.as_box(), "wall");
  regions.push_back({"wall", s.wall.as_box()});
  check_box(s, s.protected_region, "protected");
  regions.push_back({"protected", s.protected_region});

  for (std::size_t a = 0; a < regions.size(); ++a) {
    for (std::size_t b = a + 1; b < regions.size(); ++b) {
      const bool same_kind = regions[a].field.substr(0, 5) == regions[b].field.substr(0, 5);
      if (!same_kind && regions[a].box.overlaps(regions[b].box)) {
        throw InvalidScene(regions[a].field + " overlaps " + regions[b].field);
      }
    }
  }
  if (s.optimal_height < 1 || s.optimal_height > s.wall.max_height) {
    throw InvalidScene("optimal_height: must lie in [1, wall.max_height]");
  }
  if (!(s.detector.overflow_threshold > 0.0) || !(s.detector.stabilization_speed > 0.0)) {
    throw InvalidScene("detector: thresholds must be positive");
  }
  if (s.detector.stabilization_window < 1) {
    throw InvalidScene("detector.stabilization_window: must be at least 1");
  }
}

SceneSpec parse_scene(const std::string& text) {
  SceneSpec s;
  try {
    const json j = json::parse(text);
    s.name = j.at("name").get<std::string>();
    const auto& d = j.at("dims");
    s.dims = Dims{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
    s.dx = j.value("dx", 1.0 / 30.0);
    if (j.contains("physics")) {
      const auto& p = j.at("physics");
      s.tau = p.value("tau", s.tau);
      if (p.contains("gravity")) {
        const auto& g = p.at("gravity");
        s.gravity = lbm::Vec3d(g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>());
      }
      if (p.contains("dt")) {
        s.dt = p.at("dt").get<double>();
      }
    }
    for (const auto& b : j.value("water", json::array())) {
      s.water.push_back(read_box(b));
    }
    for (const auto& b : j.value("obstacles", json::array())) {
      s.obstacles.push_back(read_box(b));
    }
    const auto& w = j.at("wall");
    s.wall.x = {w.at("x").at(0).get<int>(), w.at("x").at(1).get<int>()};
    s.wall.y = {w.at("y").at(0).get<int>(), w.at("y").at(1).get<int>()};
    s.wall.base_z = w.value("base_z", 1);
    s.wall.max_height = w.at("max_height").get<int>();
    s.protected_region = read_box(j.at("protected"));
    s.optimal_height = j.at("optimal_height").get<int>();
    if (j.contains("detector")) {
      const auto& det = j.at("detector");
      s.detector.overflow_threshold = det.value("overflow_threshold", s.detector.overflow_threshold);
      s.detector.stabilization_speed = det.value("stabilization_speed", s.detector.stabilization_speed);
      s.detector.stabilization_window = det.value("stabilization_window", s.detector.stabilization_window);
    }
    if (j.contains("next_scene")) {
      s.next_scene = j.at("next_scene").get<std::string>();
    }
    s.provenance = j.value("provenance", std::string{});
  } catch (const json::exception& e) {
    throw InvalidScene(std::string("malformed scene file: ") + e.what());
  }
  validate(s);
  return s;
}

SceneSpec read_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidScene("cannot open scene file " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::string to_json(const SceneSpec& s) {
  json j;
  j["name"] = s.name;
  j["dims"] = {s.dims.nx, s.dims.ny, s.dims.nz};
  j["dx"] = s.dx;
  j["physics"] = {{"tau", s.tau}, {"gravity", {s.gravity[0], s.gravity[1], s.gravity[2]}}};
  if (s.dt) {
    j["physics"]["dt"] = *s.dt;
  }
  j["water"] = json::array();
  for (const Box& b : s.water) {
    j["water"].push_back(write_box(b));
  }
  j["obstacles"] = json::array();
  for (const Box& b : s.obstacles) {
    j["obstacles"].push_back(write_box(b));
  }
  j["wall"] = {{"x", s.wall.x}, {"y", s.wall.y}, {"base_z", s.wall.base_z}, {"max_height", s.wall.max_height}};
  j["protected"] = write_box(s.protected_region);
  j["optimal_height"] = s.optimal_height;
  j["detector"] = {{"overflow_threshold", s.detector.overflow_threshold},
                   {"stabilization_speed", s.detector.stabilization_speed},
                   {"stabilization_window", s.detector.stabilization_window}};
  if (s.next_scene) {
    j["next_scene"] = *s.next_scene;
  }
  if (!s.provenance.empty()) {
    j["provenance"] = s.provenance;
  }
  return j.dump(2);
}

void SceneLibrary::add(SceneSpec spec) {
  const std::string name = spec.name;
  scenes_.insert_or_assign(name, std::move(spec));
}

const SceneSpec* SceneLibrary::find(const std::string& name) const {
  const auto it = scenes_.find(name);
  return it == scenes_.end() ? nullptr : &it->second;
}

std::vector<std::string> SceneLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : scenes_) {
    out.push_back(name);
  }
  return out;
}

SceneLibrary SceneLibrary::load(const std::filesystem::path& path) {
  SceneLibrary lib;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      lib.add(read_scene_file(f));
    }
  } else {
    lib.add(read_scene_file(path));
  }
  return lib;
}

fs::Solver load_scene(const SceneSpec& spec) {
  validate(spec);
  const lbm::FluidParams params = spec.fluid_params();
  fs::Solver solver(spec.dims, params);
  const Dims& d = spec.dims;
  FlagField& flags = solver.flags();

  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t idx = d.index(x, y, z);
        const bool face = x == 0 || y == 0 || z == 0 || x == d.nx - 1 || y == d.ny - 1 || z == d.nz - 1;
        const bool obstacle =
            std::any_of(spec.obstacles.begin(), spec.obstacles.end(), [&](const Box& b) { return b.contains(x, y, z); });
        if (face || obstacle) {
          flags[idx] = CellFlag::Wall;
        } else if (std::any_of(spec.water.begin(), spec.water.end(),
                               [&](const Box& b) { return b.contains(x, y, z); })) {
          solver.make_liquid(idx, params.rho0);
        }
      }
    }
  }
  // Surface layer: liquid touching gas becomes a full interface cell.
  const lbm::Topology& topo = solver.topology();
  std::vector<std::size_t> surface;
  for (std::size_t idx = 0; idx < flags.size(); ++idx) {
    if (flags[idx] != CellFlag::Liquid) {
      continue;
    }
    for (int i = 1; i < lbm::D3Q19::Q; ++i) {
      const std::int32_t nb = topo.neighbor(idx, i);
      if (nb != lbm::Topology::kOutside && flags[static_cast<std::size_t>(nb)] == CellFlag::Gas) {
        surface.push_back(idx);
        break;
      }
    }
  }
  for (std::size_t idx : surface) {
    flags[idx] = CellFlag::Interface;
  }
  solver.refresh_macro();
  return solver;
}

void build_wall(fs::Solver& solver, const SceneSpec& spec, int height) {
  const WallRegion& w = spec.wall;
  for (int z = w.base_z; z < w.base_z + height; ++z) {
    for (int y = w.y[0]; y <= w.y[1]; ++y) {
      for (int x = w.x[0]; x <= w.x[1]; ++x) {
        steering::apply_edit(solver, steering::EditCommand{x, y, z, steering::EditAction::SetWall});
      }
    }
  }
}

int wall_height(const FlagField& flags, const Dims& dims, const WallRegion& wall) {
  int h = wall.max_height;
  for (int y = wall.y[0]; y <= wall.y[1]; ++y) {
    for (int x = wall.x[0]; x <= wall.x[1]; ++x) {
      int run = 0;
      while (run < wall.max_height && wall.base_z + run < dims.nz &&
             flags[dims.index(x, y, wall.base_z + run)] == CellFlag::Wall) {
        ++run;
      }
      h = std::min(h, run);
    }
  }
  return h;
}

void OverflowDetector::reset(const fs::Solver& solver, const SceneSpec& spec) {
  watched_.clear();
  fired_ = false;
  threshold_ = spec.detector.overflow_threshold;
  const Box& p = spec.protected_region;
  const Dims& d = solver.dims();
  for (int z = p.min[2]; z <= p.max[2]; ++z) {
    for (int y = p.min[1]; y <= p.max[1]; ++y) {
      for (int x = p.min[0]; x <= p.max[0]; ++x) {
        const std::size_t idx = d.index(x, y, z);
        if (fill_at(solver, idx) < threshold_) {
          watched_.push_back(idx);
        }
      }
    }
  }
}

bool OverflowDetector::update(const fs::Solver& solver, const SceneSpec&) {
  if (fired_) {
    return false;
  }
  for (std::size_t idx : watched_) {
    if (fill_at(solver, idx) >= threshold_) {
      fired_ = true;
      return true;
    }
  }
  return false;
}

bool StabilizationDetector::update(double max_speed, const DetectorConfig& config) {
  if (fired_) {
    return false;
  }
  calm_steps_ = max_speed < config.stabilization_speed ? calm_steps_ + 1 : 0;
  if (calm_steps_ >= config.stabilization_window) {
    fired_ = true;
    return true;
  }
  return false;
}

double max_fluid_speed(const lbm::MacroFields& macro, const FlagField& flags) {
  double vmax2 = 0.0;
  for (std::size_t idx = 0; idx < flags.size(); ++idx) {
    if (is_fluid(flags[idx])) {
      vmax2 = std::max(vmax2, macro.u[idx].squaredNorm());
    }
  }
  return std::sqrt(vmax2);
}

bool detect_overflow(const std::vector<double>& fill, const SceneSpec& spec) {
  const Box& p = spec.protected_region;
  for (int z = p.min[2]; z <= p.max[2]; ++z) {
    for (int y = p.min[1]; y <= p.max[1]; ++y) {
      for (int x = p.min[0]; x <= p.max[0]; ++x) {
        if (fill[spec.dims.index(x, y, z)] >= spec.detector.overflow_threshold) {
          return true;
        }
      }
    }
  }
  return false;
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Success:
      return "success";
    case Outcome::Overflow:
      return "overflow";
    case Outcome::Overbuilt:
      return "overbuilt";
  }
  return "unknown";
}

std::optional<Outcome> evaluate_attempt(const SceneSpec& spec, int height, const AttemptEvents& events) {
  if (events.overflow) {
    return Outcome::Overflow;
  }
  if (!events.stabilized) {
    return std::nullopt;
  }
  if (height > spec.optimal_height) {
    return Outcome::Overbuilt;
  }
  if (height == spec.optimal_height) {
    return Outcome::Success;
  }
  throw InconsistentScene("scene '" + spec.name + "': wall height " + std::to_string(height) +
                          " held although optimal_height is " + std::to_string(spec.optimal_height));
}

void EventLog::append(LogRecord r) {
  if (!records_.empty() && r.wall_clock_s < records_.back().wall_clock_s) {
    r.wall_clock_s = records_.back().wall_clock_s;
  }
  r.details = sanitize(std::move(r.details));
  r.event = sanitize(std::move(r.event));
  records_.push_back(std::move(r));
}

std::string EventLog::format(const LogRecord& r) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), r.wall_clock_s);
  std::string out(buf, res.ptr);
  out += '\t';
  out += std::to_string(r.timestep);
  out += '\t';
  out += r.event;
  out += '\t';
  out += r.details;
  return out;
}

void EventLog::write(std::ostream& os) const {
  for (const LogRecord& r : records_) {
    os << format(r) << '\n';
  }
}

EventLog EventLog::read(std::istream& is) {
  EventLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int k = 0; k < 3; ++k) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        throw std::runtime_error("event log line " + std::to_string(lineno) + ": expected 4 tab-separated fields");
      }
      fields[k] = line.substr(start, tab - start);
      start = tab + 1;
    }
    fields[3] = line.substr(start);
    LogRecord r;
    const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), r.wall_clock_s);
    const auto res2 = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), r.timestep);
    if (res.ec != std::errc{} || res2.ec != std::errc{}) {
      throw std::runtime_error("event log line " + std::to_string(lineno) + ": bad numeric field");
    }
    r.event = fields[2];
    r.details = fields[3];
    log.records_.push_back(std::move(r));
  }
  return log;
}

Metrics compute_metrics(const std::vector<LogRecord>& log) {
  const auto is = [](const LogRecord& r, const char* name) { return r.event == name; };
  const auto begin = std::find_if(log.begin(), log.end(), [&](const LogRecord& r) { return is(r, events::kSceneLoaded); });
  if (begin == log.end()) {
    throw IncompleteLog("log has no scene_loaded record");
  }
  auto end = std::find_if(begin + 1, log.end(), [&](const LogRecord& r) { return is(r, events::kSceneLoaded); });
  const auto success = std::find_if(begin, end, [&](const LogRecord& r) { return is(r, events::kSuccess); });
  if (success != end) {
    end = success + 1;
  }

  Metrics m;
  if (success != log.end() && is(*success, events::kSuccess)) {
    m.tct = success->wall_clock_s - begin->wall_clock_s;
  }
  double gap_sum = 0.0;
  for (auto it = begin; it != end; ++it) {
    const bool failure = is(*it, events::kOverflow) || is(*it, events::kOverbuilt);
    if (failure) {
      ++m.failures;
    }
    if (failure || is(*it, events::kSuccess)) {
      const auto next_edit = std::find_if(it + 1, end, [&](const LogRecord& r) { return is(r, events::kEdit); });
      if (next_edit != end) {
        gap_sum += next_edit->wall_clock_s - it->wall_clock_s;
        ++m.observation_gaps;
      }
    }
  }
  if (m.observation_gaps > 0) {
    m.observation_time = gap_sum / m.observation_gaps;
  }
  return m;
}

SweepPoint run_height(const SceneSpec& spec, int height, std::uint64_t max_steps) {
  fs::Solver solver = load_scene(spec);
  build_wall(solver, spec, height);
  OverflowDetector overflow;
  StabilizationDetector calm;
  overflow.reset(solver, spec);
  SweepPoint point{height, SweepPoint::Result::Timeout, 0};
  for (std::uint64_t t = 1; t <= max_steps; ++t) {
    try {
      solver.step();
    } catch (const lbm::StabilityFault&) {
      point.result = SweepPoint::Result::Fault;
      return point;
    }
    point.steps = t;
    if (overflow.update(solver, spec)) {
      point.result = SweepPoint::Result::Overflow;
      return point;
    }
    if (calm.update(max_fluid_speed(solver.macro(), solver.flags()), spec.detector)) {
      point.result = SweepPoint::Result::Held;
      return point;
    }
  }
  return point;
}

SweepReport sweep_wall_heights(const SceneSpec& spec, int lo, int hi, std::uint64_t max_steps) {
  SweepReport report;
  for (int h = lo; h <= hi; ++h) {
    report.points.push_back(run_height(spec, h, max_steps));
  }
  for (const SweepPoint& p : report.points) {
    if (p.result == SweepPoint::Result::Held) {
      report.threshold = p.height;
      break;
    }
  }
  report.monotone = report.threshold.has_value();
  for (const SweepPoint& p : report.points) {
    const auto expected = report.threshold && p.height >= *report.threshold ? SweepPoint::Result::Held
                                                                            : SweepPoint::Result::Overflow;
    if (p.result != expected) {
      report.monotone = false;
    }
  }
  return report;
}

}  // namespace flowsteer::scenario
