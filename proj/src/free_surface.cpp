#include "flowsteer/free_surface.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowsteer::fs {

using lbm::PopulationGrid;
using lbm::Topology;

namespace {

constexpr std::size_t kMaxSweeps = 32;

double density(const PopulationGrid& grid, std::size_t idx) {
  double rho = 0.0;
  for (double v : grid.cell(idx)) {
    rho += v;
  }
  return rho;
}

bool valid_neighbor(std::int32_t nb) { return nb != Topology::kOutside; }

// Mean (rho, u) over the fluid neighbours of `cell` that are not flagged in `skip`.
lbm::Moments<double> neighbour_average(const PopulationGrid& grid, const FlagField& flags, const Topology& topo,
                                       std::size_t cell, const std::vector<std::uint8_t>* skip, double rho_fallback) {
  lbm::Moments<double> avg;
  int count = 0;
  for (int i = 1; i < D3Q19::Q; ++i) {
    const std::int32_t nb = topo.neighbor(cell, i);
    if (!valid_neighbor(nb)) {
      continue;
    }
    const auto n = static_cast<std::size_t>(nb);
    if (!is_fluid(flags[n]) || (skip != nullptr && (*skip)[n] != 0)) {
      continue;
    }
    const lbm::Moments<double> m = lbm::moments<double>(grid.cell(n));
    avg.rho += m.rho;
    avg.u += m.u;
    ++count;
  }
  if (count == 0) {
    avg.rho = rho_fallback;
    avg.u.setZero();
  } else {
    avg.rho /= count;
    avg.u /= count;
  }
  return avg;
}

void set_equilibrium(PopulationGrid& grid, std::size_t cell, const lbm::Moments<double>& m) {
  lbm::equilibrium<double>(m.rho, m.u, grid.cell(cell));
}

bool has_neighbor(const FlagField& flags, const Topology& topo, std::size_t cell, CellFlag wanted) {
  for (int i = 1; i < D3Q19::Q; ++i) {
    const std::int32_t nb = topo.neighbor(cell, i);
    if (valid_neighbor(nb) && flags[static_cast<std::size_t>(nb)] == wanted) {
      return true;
    }
  }
  return false;
}

// Cells reachable in the fewest lattice hops from `from` that carry `wanted`.
// Every cell of that closest shell is returned so callers can split evenly.
std::vector<std::size_t> nearest_shell(const FlagField& flags, const Topology& topo, std::size_t from,
                                       CellFlag wanted) {
  std::vector<std::uint8_t> seen(flags.size(), 0);
  std::vector<std::size_t> frontier{from};
  seen[from] = 1;
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    std::vector<std::size_t> hits;
    for (std::size_t c : frontier) {
      for (int i = 1; i < D3Q19::Q; ++i) {
        const std::int32_t nb = topo.neighbor(c, i);
        if (!valid_neighbor(nb) || seen[static_cast<std::size_t>(nb)] != 0) {
          continue;
        }
        const auto y = static_cast<std::size_t>(nb);
        seen[y] = 1;
        if (flags[y] == wanted) {
          hits.push_back(y);
        }
        next.push_back(y);
      }
    }
    if (!hits.empty()) {
      return hits;
    }
    frontier = std::move(next);
  }
  return {};
}

}  // namespace

void ConversionConfig::validate() const {
  if (!(kappa > 0.0)) {
    throw std::invalid_argument("kappa must be positive");
  }
  if (!(rho_atm > 0.0)) {
    throw std::invalid_argument("atmospheric density must be positive");
  }
}

lbm::Populations<double> reconstruct_from_gas(std::span<const double, D3Q19::Q> outgoing,
                                              std::span<const double, D3Q19::Q> incoming,
                                              std::bitset<D3Q19::Q> from_gas, const Vec3d& u, double rho_atm) {
  lbm::Populations<double> out;
  std::copy(incoming.begin(), incoming.end(), out.begin());
  if (from_gas.none()) {
    return out;
  }
  const lbm::Populations<double> feq = lbm::equilibrium<double>(rho_atm, u);
  for (int i = 0; i < D3Q19::Q; ++i) {
    if (from_gas.test(static_cast<std::size_t>(i))) {
      const int opp = D3Q19::opposite[i];
      out[i] = feq[i] + feq[opp] - outgoing[opp];
    }
  }
  return out;
}

void reconstruct_interface(const PopulationGrid& post_collision, PopulationGrid& post_stream, const FlagField& flags,
                           const Topology& topo, const lbm::MacroFields& macro, double rho_atm) {
  for (std::size_t idx = 0; idx < flags.size(); ++idx) {
    if (flags[idx] != CellFlag::Interface) {
      continue;
    }
    std::bitset<D3Q19::Q> from_gas;
    for (int i = 1; i < D3Q19::Q; ++i) {
      const std::int32_t up = topo.neighbor(idx, D3Q19::opposite[i]);
      if (valid_neighbor(up) && flags[static_cast<std::size_t>(up)] == CellFlag::Gas) {
        from_gas.set(static_cast<std::size_t>(i));
      }
    }
    if (from_gas.none()) {
      continue;
    }
    const auto rebuilt =
        reconstruct_from_gas(post_collision.cell(idx), post_stream.cell(idx), from_gas, macro.u[idx], rho_atm);
    auto dst = post_stream.cell(idx);
    std::copy(rebuilt.begin(), rebuilt.end(), dst.begin());
  }
}

std::vector<double> exchange_fractions(const FlagField& flags, const MassField& mass, std::span<const double> rho) {
  std::vector<double> eps(flags.size(), 0.0);
  for (std::size_t idx = 0; idx < flags.size(); ++idx) {
    if (flags[idx] == CellFlag::Liquid) {
      eps[idx] = 1.0;
    } else if (flags[idx] == CellFlag::Interface && rho[idx] > 0.0) {
      eps[idx] = mass[idx] / rho[idx];
    }
  }
  return eps;
}

void exchange_mass(const PopulationGrid& post_stream, const FlagField& flags, const Topology& topo,
                   std::span<const double> fraction, MassField& mass) {
  // Each unordered pair is visited from both ends; the two contributions are
  // exact negatives because the weight is symmetric in the pair.
  for (std::size_t idx = 0; idx < flags.size(); ++idx) {
    const CellFlag fx = flags[idx];
    if (!is_fluid(fx)) {
      continue;
    }
    double dm = 0.0;
    for (int i = 1; i < D3Q19::Q; ++i) {
      const std::int32_t nb = topo.neighbor(idx, i);
      if (!valid_neighbor(nb)) {
        continue;
      }
      const auto y = static_cast<std::size_t>(nb);
      const CellFlag fy = flags[y];
      if (!is_fluid(fy)) {
        continue;
      }
      const int opp = D3Q19::opposite[i];
      // Arrived at x from y, minus what x sent to y.
      const double flux = post_stream.at(idx, opp) - post_stream.at(y, i);
      if (fx == CellFlag::Liquid || fy == CellFlag::Liquid) {
        dm += flux;
      } else {
        dm += 0.5 * (fraction[idx] + fraction[y]) * flux;
      }
    }
    mass[idx] += dm;
  }
}

ConversionReport convert_cells(PopulationGrid& grid, FlagField& flags, MassField& mass, const Topology& topo,
                               const ConversionConfig& config) {
  ConversionReport report;
  const std::size_t n = flags.size();
  const double kappa = config.kappa;

  enum Mark : std::uint8_t { kNone = 0, kFill = 1, kEmpty = 2 };
  std::vector<std::uint8_t> mark(n, kNone);
  std::vector<std::uint8_t> fresh(n, 0);
  std::vector<double> delta(n, 0.0);
  std::vector<double> rho(n, 0.0);

  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    std::vector<std::size_t> filled;
    std::vector<std::size_t> emptied;
    for (std::size_t idx = 0; idx < n; ++idx) {
      if (flags[idx] != CellFlag::Interface) {
        continue;
      }
      rho[idx] = density(grid, idx);
      if (mass[idx] > (1.0 + kappa) * rho[idx]) {
        filled.push_back(idx);
        mark[idx] = kFill;
      } else if (mass[idx] < -kappa * rho[idx] || !has_neighbor(flags, topo, idx, CellFlag::Liquid)) {
        emptied.push_back(idx);
        mark[idx] = kEmpty;
      }
    }
    if (filled.empty() && emptied.empty()) {
      break;
    }
    report.sweeps = sweep + 1;

    // A cell about to empty next to one about to fill stays an interface.
    std::erase_if(emptied, [&](std::size_t e) {
      for (int i = 1; i < D3Q19::Q; ++i) {
        const std::int32_t nb = topo.neighbor(e, i);
        if (valid_neighbor(nb) && mark[static_cast<std::size_t>(nb)] == kFill) {
          mark[e] = kNone;
          return true;
        }
      }
      return false;
    });

    std::vector<std::size_t> created;
    for (std::size_t f : filled) {
      for (int i = 1; i < D3Q19::Q; ++i) {
        const std::int32_t nb = topo.neighbor(f, i);
        if (!valid_neighbor(nb)) {
          continue;
        }
        const auto y = static_cast<std::size_t>(nb);
        if (flags[y] == CellFlag::Gas && fresh[y] == 0) {
          fresh[y] = 1;
          created.push_back(y);
        }
      }
    }
    for (std::size_t e : emptied) {
      for (int i = 1; i < D3Q19::Q; ++i) {
        const std::int32_t nb = topo.neighbor(e, i);
        if (valid_neighbor(nb) && flags[static_cast<std::size_t>(nb)] == CellFlag::Liquid) {
          flags[static_cast<std::size_t>(nb)] = CellFlag::Interface;
        }
      }
    }
    for (std::size_t f : filled) {
      flags[f] = CellFlag::Liquid;
    }
    for (std::size_t e : emptied) {
      flags[e] = CellFlag::Gas;
    }
    // New interface cells start empty at the mean equilibrium of their fluid
    // neighbours. Averages read only pre-existing fluid cells.
    for (std::size_t y : created) {
      const lbm::Moments<double> avg = neighbour_average(grid, flags, topo, y, &fresh, config.rho_atm);
      set_equilibrium(grid, y, avg);
    }
    for (std::size_t y : created) {
      flags[y] = CellFlag::Interface;
      mass[y] = 0.0;
      fresh[y] = 0;
    }

    auto share_among = [&](const std::vector<std::size_t>& receivers, double excess) {
      const double share = excess / static_cast<double>(receivers.size());
      for (std::size_t r : receivers) {
        delta[r] += share;
      }
    };
    auto neighbours_with = [&](std::size_t cell, CellFlag wanted) {
      std::vector<std::size_t> out;
      for (int i = 1; i < D3Q19::Q; ++i) {
        const std::int32_t nb = topo.neighbor(cell, i);
        if (valid_neighbor(nb) && flags[static_cast<std::size_t>(nb)] == wanted) {
          out.push_back(static_cast<std::size_t>(nb));
        }
      }
      return out;
    };
    // Interface neighbours first, then Liquid neighbours, then the closest
    // Liquid (or, failing that, Interface) cells anywhere in the domain.
    auto distribute = [&](std::size_t cell, double excess) {
      for (CellFlag wanted : {CellFlag::Interface, CellFlag::Liquid}) {
        if (auto r = neighbours_with(cell, wanted); !r.empty()) {
          share_among(r, excess);
          return;
        }
      }
      for (CellFlag wanted : {CellFlag::Liquid, CellFlag::Interface}) {
        if (auto r = nearest_shell(flags, topo, cell, wanted); !r.empty()) {
          share_among(r, excess);
          return;
        }
      }
      report.lost_mass += excess;
    };

    for (std::size_t f : filled) {
      const double excess = mass[f] - rho[f];
      mass[f] = rho[f];
      distribute(f, excess);
    }
    for (std::size_t e : emptied) {
      const double excess = mass[e];
      mass[e] = 0.0;
      distribute(e, excess);
    }
    for (std::size_t idx = 0; idx < n; ++idx) {
      if (delta[idx] != 0.0) {
        mass[idx] += delta[idx];
        delta[idx] = 0.0;
      }
    }
    for (std::size_t f : filled) {
      mark[f] = kNone;
    }
    for (std::size_t e : emptied) {
      mark[e] = kNone;
    }

    report.filled += filled.size();
    report.emptied += emptied.size();
    report.created_interface += created.size();
  }
  return report;
}

std::vector<double> fill_fraction_field(const FlagField& flags, const MassField& mass, const PopulationGrid& grid) {
  std::vector<double> eps(flags.size(), 0.0);
  for (std::size_t idx = 0; idx < flags.size(); ++idx) {
    switch (flags[idx]) {
      case CellFlag::Gas:
        break;
      case CellFlag::Liquid:
        eps[idx] = 1.0;
        break;
      case CellFlag::Wall:
        eps[idx] = kWallFraction;
        break;
      case CellFlag::Interface: {
        const double rho = density(grid, idx);
        eps[idx] = rho > 0.0 ? std::clamp(mass[idx] / rho, 0.0, 1.0) : 0.0;
        break;
      }
    }
  }
  return eps;
}

bool flags_consistent(const FlagField& flags, const Topology& topo) {
  for (std::size_t idx = 0; idx < flags.size(); ++idx) {
    if (flags[idx] != CellFlag::Liquid) {
      continue;
    }
    for (int i = 1; i < D3Q19::Q; ++i) {
      const std::int32_t nb = topo.neighbor(idx, i);
      if (valid_neighbor(nb) && flags[static_cast<std::size_t>(nb)] == CellFlag::Gas) {
        return false;
      }
    }
  }
  return true;
}

void repair_around(PopulationGrid& grid, FlagField& flags, MassField& mass, const Topology& topo, std::size_t cell,
                   double rho_fallback) {
  if (flags[cell] == CellFlag::Liquid) {
    std::vector<std::size_t> created;
    for (int i = 1; i < D3Q19::Q; ++i) {
      const std::int32_t nb = topo.neighbor(cell, i);
      if (valid_neighbor(nb) && flags[static_cast<std::size_t>(nb)] == CellFlag::Gas) {
        created.push_back(static_cast<std::size_t>(nb));
      }
    }
    std::vector<std::uint8_t> fresh(flags.size(), 0);
    for (std::size_t y : created) {
      fresh[y] = 1;
    }
    for (std::size_t y : created) {
      set_equilibrium(grid, y, neighbour_average(grid, flags, topo, y, &fresh, rho_fallback));
    }
    for (std::size_t y : created) {
      flags[y] = CellFlag::Interface;
      mass[y] = 0.0;
    }
  } else if (flags[cell] == CellFlag::Gas || flags[cell] == CellFlag::Wall) {
    if (flags[cell] == CellFlag::Wall) {
      // A wall separates; only a gas cell exposes liquid neighbours.
      return;
    }
    for (int i = 1; i < D3Q19::Q; ++i) {
      const std::int32_t nb = topo.neighbor(cell, i);
      if (valid_neighbor(nb) && flags[static_cast<std::size_t>(nb)] == CellFlag::Liquid) {
        flags[static_cast<std::size_t>(nb)] = CellFlag::Interface;
      }
    }
  }
}

Solver::Solver(Dims dims, lbm::FluidParams params, ConversionConfig config, Periodicity periodic)
    : topo_(dims, periodic),
      params_(params),
      config_(config),
      f_(dims),
      scratch_(dims),
      flags_(dims.cells(), CellFlag::Gas),
      mass_(dims.cells(), 0.0) {
  params_.validate();
  config_.validate();
  macro_.resize(dims.cells());
}

void Solver::set_params(const lbm::FluidParams& params) {
  params.validate();
  params_ = params;
}

const ConversionReport& Solver::step() {
  lbm::collide(f_, scratch_, flags_, params_, &macro_);
  lbm::stream(scratch_, f_, flags_, topo_);
  reconstruct_interface(scratch_, f_, flags_, topo_, macro_, config_.rho_atm);
  fraction_ = exchange_fractions(flags_, mass_, macro_.rho);
  exchange_mass(f_, flags_, topo_, fraction_, mass_);
  report_ = convert_cells(f_, flags_, mass_, topo_, config_);
  return report_;
}

void Solver::make_liquid(std::size_t cell, double rho) {
  flags_[cell] = CellFlag::Liquid;
  lbm::equilibrium<double>(rho, Vec3d::Zero(), f_.cell(cell));
  mass_[cell] = rho;
}

void Solver::refresh_macro() { macro_ = lbm::compute_macro(f_, flags_); }

double Solver::total_mass() const {
  double total = 0.0;
  for (double m : mass_) {
    total += m;
  }
  return total;
}

}  // namespace flowsteer::fs
