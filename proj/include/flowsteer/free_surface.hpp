#pragma once

#include <bitset>
#include <cstddef>
#include <span>
#include <vector>

#include "flowsteer/grid.hpp"
#include "flowsteer/lbm.hpp"

namespace flowsteer::fs {

using lbm::D3Q19;
using lbm::Vec3d;

/// Liquid mass per cell in lattice mass units.
using MassField = std::vector<double>;

struct ConversionConfig {
  double kappa{1e-3};
  double rho_atm{1.0};

  void validate() const;
};

/// Marker reported by fill_fraction_field for wall cells.
inline constexpr double kWallFraction = -1.0;

/// Gas-side closure for one interface cell. `outgoing` holds the cell's
/// post-collision populations, `incoming` its post-stream populations and
/// `from_gas` flags the directions whose upstream neighbour is gas. Returns
/// `incoming` with exactly those entries replaced by
/// f_i = feq_i(rho_atm, u) + feq_opp(i)(rho_atm, u) - outgoing_opp(i).
lbm::Populations<double> reconstruct_from_gas(std::span<const double, D3Q19::Q> outgoing,
                                              std::span<const double, D3Q19::Q> incoming,
                                              std::bitset<D3Q19::Q> from_gas, const Vec3d& u, double rho_atm);

/// Applies reconstruct_from_gas to every interface cell of `post_stream`.
void reconstruct_interface(const lbm::PopulationGrid& post_collision, lbm::PopulationGrid& post_stream,
                           const FlagField& flags, const lbm::Topology& topo, const lbm::MacroFields& macro,
                           double rho_atm);

/// Per-cell fill fraction used by the exchange weights: 1 for Liquid,
/// m / rho for Interface (rho from `rho`), 0 otherwise. Not clamped.
std::vector<double> exchange_fractions(const FlagField& flags, const MassField& mass, std::span<const double> rho);

/// Pairwise mass exchange between fluid neighbours from post-stream populations.
/// The weight is 1 when either cell is Liquid and the mean fill fraction for
/// two Interface cells, so every transfer is exactly antisymmetric.
void exchange_mass(const lbm::PopulationGrid& post_stream, const FlagField& flags, const lbm::Topology& topo,
                   std::span<const double> fraction, MassField& mass);

struct ConversionReport {
  std::size_t filled{0};
  std::size_t emptied{0};
  std::size_t created_interface{0};
  std::size_t sweeps{0};
  /// Mass that had no fluid cell left to receive it.
  double lost_mass{0.0};
};

/// Interface -> Liquid / Gas conversion with hysteresis kappa, flag repair
/// and equal redistribution of excess mass. An interface cell with no Liquid
/// neighbour empties as well; single-layer exchange cannot move its mass, so
/// it would otherwise hang in place. Repeats until every interface cell
/// satisfies -kappa <= m / rho <= 1 + kappa and touches a Liquid cell.
ConversionReport convert_cells(lbm::PopulationGrid& grid, FlagField& flags, MassField& mass, const lbm::Topology& topo,
                               const ConversionConfig& config);

/// Fill fraction in [0, 1] per cell, kWallFraction for walls.
std::vector<double> fill_fraction_field(const FlagField& flags, const MassField& mass, const lbm::PopulationGrid& grid);

/// True when no Liquid cell has a Gas cell among its 18 lattice neighbours.
bool flags_consistent(const FlagField& flags, const lbm::Topology& topo);

/// Restores flag consistency around `cell` after an edit: a Liquid cell turns
/// its Gas neighbours into empty Interface cells initialized at the mean
/// equilibrium of their fluid neighbours; a Gas or Wall cell turns its Liquid
/// neighbours into Interface cells keeping their mass.
void repair_around(lbm::PopulationGrid& grid, FlagField& flags, MassField& mass, const lbm::Topology& topo,
                   std::size_t cell, double rho_fallback);

/// Full free-surface solver state: populations, flags, mass, scratch grid.
class Solver {
 public:
  Solver() = default;
  Solver(Dims dims, lbm::FluidParams params, ConversionConfig config = {}, Periodicity periodic = {false, false, false});

  const Dims& dims() const { return topo_.dims(); }
  const lbm::Topology& topology() const { return topo_; }

  lbm::PopulationGrid& populations() { return f_; }
  const lbm::PopulationGrid& populations() const { return f_; }
  FlagField& flags() { return flags_; }
  const FlagField& flags() const { return flags_; }
  MassField& mass() { return mass_; }
  const MassField& mass() const { return mass_; }

  /// Pre-collision moments of the most recent step.
  const lbm::MacroFields& macro() const { return macro_; }

  const lbm::FluidParams& params() const { return params_; }
  /// Validates before replacing; throws std::invalid_argument on violation.
  void set_params(const lbm::FluidParams& params);
  const ConversionConfig& conversion() const { return config_; }

  /// Collide, stream, close the gas side, exchange mass, convert cells.
  /// Throws lbm::StabilityFault from the collision with state unchanged.
  const ConversionReport& step();
  const ConversionReport& last_report() const { return report_; }

  /// Sets a cell to Liquid at rest equilibrium with m = rho.
  void make_liquid(std::size_t cell, double rho);
  /// Recomputes pre-collision moments from the current populations.
  void refresh_macro();

  double total_mass() const;
  std::vector<double> fill_fraction() const { return fill_fraction_field(flags_, mass_, f_); }

  friend bool operator==(const Solver& a, const Solver& b) {
    return a.f_ == b.f_ && a.flags_ == b.flags_ && a.mass_ == b.mass_;
  }

 private:
  lbm::Topology topo_;
  lbm::FluidParams params_;
  ConversionConfig config_;
  lbm::PopulationGrid f_;
  lbm::PopulationGrid scratch_;
  FlagField flags_;
  MassField mass_;
  lbm::MacroFields macro_;
  std::vector<double> fraction_;
  ConversionReport report_;
};

}  // namespace flowsteer::fs
