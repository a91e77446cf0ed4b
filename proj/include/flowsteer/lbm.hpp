#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsteer/grid.hpp"
#include "flowsteer/lattice.hpp"

namespace flowsteer::lbm {

inline constexpr double kMaxSpeed = 0.3;

/// Raised when a fluid cell leaves the stable regime (rho <= 0 or |u| >= 0.3).
class StabilityFault : public std::runtime_error {
 public:
  StabilityFault(std::size_t cell, double rho, double speed);

  std::size_t cell() const { return cell_; }
  double rho() const { return rho_; }
  double speed() const { return speed_; }

 private:
  std::size_t cell_;
  double rho_;
  double speed_;
};

struct MacroFields {
  std::vector<double> rho;
  std::vector<Vec3d> u;

  void resize(std::size_t cells) {
    rho.assign(cells, 0.0);
    u.assign(cells, Vec3d::Zero());
  }
};

/// BGK relaxation with a first-order body force on Liquid and Interface
/// cells, in place. Pre-collision moments are written to `macro` when given.
void collide(PopulationGrid& grid, const FlagField& flags, const FluidParams& params, MacroFields* macro = nullptr);

/// Out-of-place variant: reads `src`, writes fluid cells of `dst`. `src` is
/// never modified, so a StabilityFault leaves the caller's state intact.
void collide(const PopulationGrid& src, PopulationGrid& dst, const FlagField& flags, const FluidParams& params,
             MacroFields* macro = nullptr);

/// Post-collision value arriving along direction i at a cell whose upstream
/// neighbour is a wall: the opposite population of the same cell.
inline double bounce_back(const PopulationGrid& post_collision, std::size_t cell, int i) {
  return post_collision.at(cell, D3Q19::opposite[i]);
}

/// Pull streaming from `src` into `dst` for Liquid and Interface cells.
/// Populations whose upstream cell is Gas are left as quiet NaN for the
/// free-surface closure to fill. Wall and Gas cells in `dst` are untouched.
void stream(const PopulationGrid& src, PopulationGrid& dst, const FlagField& flags, const Topology& topo);

/// Density and velocity for every cell; non-fluid cells get rho = 0, u = 0.
MacroFields compute_macro(const PopulationGrid& grid, const FlagField& flags);

/// Initializes every cell to equilibrium(rho, u).
void fill_equilibrium(PopulationGrid& grid, double rho, const Vec3d& u);

}  // namespace flowsteer::lbm
