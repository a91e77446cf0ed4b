#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsteer/lattice.hpp"

namespace flowsteer {

struct Dims {
  int nx{0};
  int ny{0};
  int nz{0};

  std::size_t cells() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  /// x fastest, then y, then z.
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
  }
  std::array<int, 3> coords(std::size_t idx) const {
    const int x = static_cast<int>(idx % static_cast<std::size_t>(nx));
    const std::size_t rest = idx / static_cast<std::size_t>(nx);
    return {x, static_cast<int>(rest % static_cast<std::size_t>(ny)), static_cast<int>(rest / static_cast<std::size_t>(ny))};
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

enum class CellFlag : std::uint8_t { Gas = 0, Liquid = 1, Interface = 2, Wall = 3 };

inline bool is_fluid(CellFlag f) { return f == CellFlag::Liquid || f == CellFlag::Interface; }

using FlagField = std::vector<CellFlag>;

/// Which axes wrap around. Off-grid neighbours on non-periodic axes act as walls.
using Periodicity = std::array<bool, 3>;

namespace lbm {

/// 19 populations per cell, cells ordered x fastest.
class PopulationGrid {
 public:
  PopulationGrid() = default;
  explicit PopulationGrid(Dims dims) : dims_(dims), f_(dims.cells() * D3Q19::Q, 0.0) {}

  const Dims& dims() const { return dims_; }
  std::size_t cells() const { return dims_.cells(); }

  std::span<double, D3Q19::Q> cell(std::size_t idx) {
    return std::span<double, D3Q19::Q>(f_.data() + idx * D3Q19::Q, D3Q19::Q);
  }
  std::span<const double, D3Q19::Q> cell(std::size_t idx) const {
    return std::span<const double, D3Q19::Q>(f_.data() + idx * D3Q19::Q, D3Q19::Q);
  }
  double& at(std::size_t idx, int i) { return f_[idx * D3Q19::Q + static_cast<std::size_t>(i)]; }
  double at(std::size_t idx, int i) const { return f_[idx * D3Q19::Q + static_cast<std::size_t>(i)]; }

  std::span<double> raw() { return f_; }
  std::span<const double> raw() const { return f_; }

  friend bool operator==(const PopulationGrid&, const PopulationGrid&) = default;

 private:
  Dims dims_;
  std::vector<double> f_;
};

/// Precomputed neighbour indices: neighbor(x, i) is the cell at x + c_i,
/// or kOutside when that position falls off a non-periodic face.
class Topology {
 public:
  static constexpr std::int32_t kOutside = -1;

  Topology() = default;
  Topology(Dims dims, Periodicity periodic);

  const Dims& dims() const { return dims_; }
  const Periodicity& periodicity() const { return periodic_; }

  std::int32_t neighbor(std::size_t idx, int i) const { return table_[idx * D3Q19::Q + static_cast<std::size_t>(i)]; }

 private:
  Dims dims_;
  Periodicity periodic_{false, false, false};
  std::vector<std::int32_t> table_;
};

struct FluidParams {
  double tau{0.55};
  Vec3d gravity{0.0, 0.0, -0.0005};
  double rho0{1.0};
  double dx{1.0 / 30.0};
  double dt{0.0};

  double viscosity() const { return D3Q19::cs2 * (tau - 0.5); }

  /// Throws std::invalid_argument naming the violated bound.
  void validate() const;
};

/// Time step implied by a lattice gravity and a cell size under 9.81 m/s^2.
double time_step_for(double lattice_gravity, double dx);

}  // namespace lbm
}  // namespace flowsteer
