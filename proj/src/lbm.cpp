#include "flowsteer/lbm.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace flowsteer::lbm {

namespace {

std::string fault_message(std::size_t cell, double rho, double speed) {
  std::ostringstream os;
  os << "stability fault at cell " << cell << ": rho=" << rho << " |u|=" << speed;
  return os.str();
}

}  // namespace

StabilityFault::StabilityFault(std::size_t cell, double rho, double speed)
    : std::runtime_error(fault_message(cell, rho, speed)), cell_(cell), rho_(rho), speed_(speed) {}

void collide(PopulationGrid& grid, const FlagField& flags, const FluidParams& params, MacroFields* macro) {
  collide(grid, grid, flags, params, macro);
}

void collide(const PopulationGrid& src, PopulationGrid& dst, const FlagField& flags, const FluidParams& params,
             MacroFields* macro) {
  const double omega = 1.0 / params.tau;
  const Vec3d& g = params.gravity;

  // w_i * 3 * (c_i . g) does not depend on the cell.
  std::array<double, D3Q19::Q> force_dir{};
  for (int i = 0; i < D3Q19::Q; ++i) {
    const auto& ci = D3Q19::c[i];
    force_dir[i] = D3Q19::w[i] * 3.0 * (ci[0] * g[0] + ci[1] * g[1] + ci[2] * g[2]);
  }

  if (macro != nullptr && macro->rho.size() != src.cells()) {
    macro->resize(src.cells());
  }

  Populations<double> f;
  Populations<double> feq;
  const std::size_t n = src.cells();
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (!is_fluid(flags[idx])) {
      continue;
    }
    const auto in = src.cell(idx);
    std::copy(in.begin(), in.end(), f.begin());
    const Moments<double> mom = moments<double>(f);
    const double speed = mom.u.norm();
    if (!(mom.rho > 0.0) || !(speed < kMaxSpeed)) {
      throw StabilityFault(idx, mom.rho, speed);
    }
    const double post_speed = (mom.u + g).norm();
    if (!(post_speed < kMaxSpeed)) {
      throw StabilityFault(idx, mom.rho, post_speed);
    }
    equilibrium<double>(mom.rho, mom.u, std::span<double, D3Q19::Q>(feq));
    auto out = dst.cell(idx);
    for (int i = 0; i < D3Q19::Q; ++i) {
      out[i] = f[i] + omega * (feq[i] - f[i]) + mom.rho * force_dir[i];
    }
    if (macro != nullptr) {
      macro->rho[idx] = mom.rho;
      macro->u[idx] = mom.u;
    }
  }
}

void stream(const PopulationGrid& src, PopulationGrid& dst, const FlagField& flags, const Topology& topo) {
  constexpr double kMarked = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = src.cells();
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (!is_fluid(flags[idx])) {
      continue;
    }
    dst.at(idx, 0) = src.at(idx, 0);
    for (int i = 1; i < D3Q19::Q; ++i) {
      // Upstream cell x - c_i is the neighbour in the opposite direction.
      const std::int32_t up = topo.neighbor(idx, D3Q19::opposite[i]);
      if (up == Topology::kOutside || flags[static_cast<std::size_t>(up)] == CellFlag::Wall) {
        dst.at(idx, i) = bounce_back(src, idx, i);
      } else if (flags[static_cast<std::size_t>(up)] == CellFlag::Gas) {
        dst.at(idx, i) = kMarked;
      } else {
        dst.at(idx, i) = src.at(static_cast<std::size_t>(up), i);
      }
    }
  }
}

MacroFields compute_macro(const PopulationGrid& grid, const FlagField& flags) {
  MacroFields out;
  out.resize(grid.cells());
  for (std::size_t idx = 0; idx < grid.cells(); ++idx) {
    if (!is_fluid(flags[idx])) {
      continue;
    }
    const Moments<double> m = moments<double>(grid.cell(idx));
    out.rho[idx] = m.rho;
    out.u[idx] = m.u;
  }
  return out;
}

void fill_equilibrium(PopulationGrid& grid, double rho, const Vec3d& u) {
  const Populations<double> feq = equilibrium<double>(rho, u);
  for (std::size_t idx = 0; idx < grid.cells(); ++idx) {
    auto f = grid.cell(idx);
    std::copy(feq.begin(), feq.end(), f.begin());
  }
}

}  // namespace flowsteer::lbm
