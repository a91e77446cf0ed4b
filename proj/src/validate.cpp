#include "flowsteer/validate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "flowsteer/free_surface.hpp"
#include "flowsteer/scenario.hpp"

namespace flowsteer::validation {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* label, double v) {
  std::ostringstream os;
  os << label << v;
  return os.str();
}

// Closed cube with an x-centred water column, the standard dam break.
fs::Solver dam_break(int n, double tau) {
  lbm::FluidParams p;
  p.tau = tau;
  p.dt = lbm::time_step_for(0.0005, p.dx);
  fs::Solver s(Dims{n, n, n}, p);
  const Dims d = s.dims();
  const int lo = n / 3;
  const int hi = n - 1 - lo;
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const std::size_t idx = d.index(x, y, z);
        if (x == 0 || y == 0 || z == 0 || x == n - 1 || y == n - 1 || z == n - 1) {
          s.flags()[idx] = CellFlag::Wall;
        } else if (x >= lo && x <= hi && z <= 2 * n / 3) {
          s.make_liquid(idx, 1.0);
        }
      }
    }
  }
  std::vector<std::size_t> surface;
  for (std::size_t idx = 0; idx < d.cells(); ++idx) {
    if (s.flags()[idx] != CellFlag::Liquid) {
      continue;
    }
    for (int i = 1; i < lbm::D3Q19::Q; ++i) {
      const std::int32_t nb = s.topology().neighbor(idx, i);
      if (nb >= 0 && s.flags()[static_cast<std::size_t>(nb)] == CellFlag::Gas) {
        surface.push_back(idx);
        break;
      }
    }
  }
  for (std::size_t idx : surface) {
    s.flags()[idx] = CellFlag::Interface;
  }
  s.refresh_macro();
  return s;
}

}  // namespace

CaseResult equilibrium(int n, int steps) {
  const auto t0 = Clock::now();
  lbm::FluidParams p;
  p.gravity = lbm::Vec3d::Zero();
  p.dt = 1.0;
  fs::Solver s(Dims{n, n, n}, p, {}, {true, true, true});
  for (std::size_t idx = 0; idx < s.dims().cells(); ++idx) {
    s.make_liquid(idx, 1.0);
  }
  const auto raw0 = std::as_const(s).populations().raw();
  const std::vector<double> f0(raw0.begin(), raw0.end());
  for (int t = 0; t < steps; ++t) {
    s.step();
  }
  double drift = 0.0;
  const auto f = std::as_const(s).populations().raw();
  for (std::size_t k = 0; k < f.size(); ++k) {
    drift = std::max(drift, std::abs(f[k] - f0[k]));
  }
  CaseResult r{"equilibrium", drift < 1e-14, drift, 1e-14, "", since(t0)};
  r.detail = std::to_string(n) + "^3 periodic, " + std::to_string(steps) + " steps, max |df|";
  return r;
}

CaseResult mass_conservation(int n, int steps) {
  const auto t0 = Clock::now();
  fs::Solver s = dam_break(n, 0.55);
  const double m0 = s.total_mass();
  double worst = 0.0;
  double lost = 0.0;
  for (int t = 0; t < steps; ++t) {
    lost += s.step().lost_mass;
    worst = std::max(worst, std::abs(s.total_mass() - m0) / m0);
  }
  CaseResult r{"mass", worst < 1e-9, worst, 1e-9, "", since(t0)};
  r.detail = std::to_string(n) + "^3 dam break, " + std::to_string(steps) + " steps, max relative drift" +
             (lost > 0.0 ? fmt(", lost mass ", lost) : "");
  return r;
}

CaseResult poiseuille(int width, double tau, double g, int max_steps) {
  const auto t0 = Clock::now();
  lbm::FluidParams p;
  p.tau = tau;
  p.gravity = lbm::Vec3d(g, 0.0, 0.0);
  p.dt = 1.0;
  const Dims d{1, width + 2, 1};
  fs::Solver s(d, p, {}, {true, false, true});
  for (int y = 0; y < d.ny; ++y) {
    const std::size_t idx = d.index(0, y, 0);
    if (y == 0 || y == d.ny - 1) {
      s.flags()[idx] = CellFlag::Wall;
    } else {
      s.make_liquid(idx, 1.0);
    }
  }
  const double nu = p.viscosity();
  auto profile_error = [&] {
    s.refresh_macro();
    double num = 0.0;
    double den = 0.0;
    for (int j = 1; j <= width; ++j) {
      // Half-way bounce-back puts the walls half a cell outside the fluid.
      const double y = j - 0.5;
      const double exact = g / (2.0 * nu) * y * (width - y);
      const double u = s.macro().u[d.index(0, j, 0)][0];
      num += (u - exact) * (u - exact);
      den += exact * exact;
    }
    return std::sqrt(num / den);
  };
  double err = 1.0;
  double prev = 2.0;
  int t = 0;
  while (t < max_steps) {
    for (int k = 0; k < 1000; ++k, ++t) {
      s.step();
    }
    err = profile_error();
    if (std::abs(err - prev) < 1e-6) {
      break;
    }
    prev = err;
  }
  CaseResult r{"poiseuille", err < 0.02, err, 0.02, "", since(t0)};
  r.detail = "H=" + std::to_string(width) + fmt(" tau=", tau) + ", " + std::to_string(t) +
             " steps, relative L2 vs parabola";
  return r;
}

CaseResult hydrostatic(Dims dims, int depth, int max_steps) {
  const auto t0 = Clock::now();
  scenario::SceneSpec spec;
  spec.name = "hydrostatic";
  spec.dims = dims;
  spec.tau = 0.6;
  spec.water = {scenario::Box{{1, 1, 1}, {dims.nx - 2, dims.ny - 2, depth}}};
  spec.wall = scenario::WallRegion{{1, 1}, {1, 1}, dims.nz - 3, 1};
  spec.protected_region = scenario::Box{{dims.nx - 2, dims.ny - 2, dims.nz - 2}, {dims.nx - 2, dims.ny - 2, dims.nz - 2}};
  spec.optimal_height = 1;
  fs::Solver s = scenario::load_scene(spec);
  const double g = -spec.gravity[2];

  scenario::StabilizationDetector calm;
  int fired_at = -1;
  for (int t = 1; t <= max_steps; ++t) {
    s.step();
    if (fired_at < 0 && calm.update(scenario::max_fluid_speed(s.macro(), s.flags()), spec.detector)) {
      fired_at = t;
    }
  }
  s.refresh_macro();
  // Mean density per fully liquid layer, bottom up.
  std::vector<double> layer;
  for (int z = 1; z < dims.nz - 1; ++z) {
    double sum = 0.0;
    int count = 0;
    bool full = true;
    for (int y = 1; y < dims.ny - 1; ++y) {
      for (int x = 1; x < dims.nx - 1; ++x) {
        const std::size_t idx = dims.index(x, y, z);
        if (s.flags()[idx] != CellFlag::Liquid) {
          full = false;
        }
        sum += s.macro().rho[idx];
        ++count;
      }
    }
    if (!full) {
      break;
    }
    layer.push_back(sum / count);
  }
  // Least-squares line rho = a + b * depth. The slope must match the
  // hydrostatic gradient 3 g rho_mean and the residuals must be small next to
  // the density span.
  double err = 1.0;
  const std::size_t n = layer.size();
  if (n >= 3) {
    double sd = 0.0, sr = 0.0, sdd = 0.0, sdr = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double depth = static_cast<double>(n - 1 - k);
      sd += depth;
      sr += layer[k];
      sdd += depth * depth;
      sdr += depth * layer[k];
    }
    const double nn = static_cast<double>(n);
    const double slope = (nn * sdr - sd * sr) / (nn * sdd - sd * sd);
    const double icpt = (sr - slope * sd) / nn;
    const double expected = 3.0 * g * sr / nn;
    const double span = expected * static_cast<double>(n - 1);
    double resid = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double depth = static_cast<double>(n - 1 - k);
      resid = std::max(resid, std::abs(layer[k] - (icpt + slope * depth)));
    }
    err = std::max(std::abs(slope - expected) / expected, resid / span);
  }
  const bool stabilized = fired_at >= 0;
  CaseResult r{"hydrostatic", stabilized && err < 0.01, err, 0.01, "", since(t0)};
  std::ostringstream os;
  os << dims.nx << "x" << dims.ny << "x" << dims.nz << " pool, "
     << (stabilized ? "stabilized at step " + std::to_string(fired_at) : "not stabilized")
     << ", profile after " << max_steps << " steps over " << n << " liquid layers";
  r.detail = os.str();
  return r;
}

CaseResult symmetry(int n, int steps) {
  const auto t0 = Clock::now();
  fs::Solver s = dam_break(n, 0.55);
  for (int t = 0; t < steps; ++t) {
    s.step();
  }
  const std::vector<double> e = s.fill_fraction();
  const Dims d = s.dims();
  double worst = 0.0;
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        worst = std::max(worst, std::abs(e[d.index(x, y, z)] - e[d.index(n - 1 - x, y, z)]));
      }
    }
  }
  CaseResult r{"symmetry", worst < 1e-9, worst, 1e-9, "", since(t0)};
  r.detail = std::to_string(n) + "^3 mirrored dam break, " + std::to_string(steps) + " steps, max |eps - mirror|";
  return r;
}

ThroughputReport bench(Dims dims, std::uint64_t steps, std::uint64_t warmup, double tau) {
  lbm::FluidParams p;
  p.tau = tau;
  p.gravity = lbm::Vec3d::Zero();
  p.dt = 1.0;
  fs::Solver s(dims, p, {}, {true, true, true});
  for (std::size_t idx = 0; idx < dims.cells(); ++idx) {
    s.make_liquid(idx, 1.0);
  }
  for (std::uint64_t t = 0; t < warmup; ++t) {
    s.step();
  }
  const auto t0 = Clock::now();
  for (std::uint64_t t = 0; t < steps; ++t) {
    s.step();
  }
  ThroughputReport r;
  r.dims = dims;
  r.tau = tau;
  r.threads = 1;
  r.warmup = warmup;
  r.steps = steps;
  r.seconds = since(t0);
  r.steps_per_second = static_cast<double>(steps) / r.seconds;
  r.mlups = r.steps_per_second * static_cast<double>(dims.cells()) / 1e6;
  return r;
}

const std::vector<std::string>& case_names() {
  static const std::vector<std::string> names{"equilibrium", "mass", "poiseuille", "hydrostatic", "symmetry"};
  return names;
}

CaseResult run_case(const std::string& name) {
  if (name == "equilibrium") {
    return equilibrium();
  }
  if (name == "mass") {
    return mass_conservation();
  }
  if (name == "poiseuille") {
    return poiseuille();
  }
  if (name == "hydrostatic") {
    return hydrostatic();
  }
  if (name == "symmetry") {
    return symmetry();
  }
  throw std::invalid_argument("unknown validation case '" + name + "'");
}

}  // namespace flowsteer::validation
