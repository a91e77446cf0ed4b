#include "flowsteer/grid.hpp"

#include <cmath>

namespace flowsteer::lbm {

Topology::Topology(Dims dims, Periodicity periodic)
    : dims_(dims), periodic_(periodic), table_(dims.cells() * D3Q19::Q, kOutside) {
  const std::array<int, 3> extent = {dims.nx, dims.ny, dims.nz};
  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        const std::size_t idx = dims.index(x, y, z);
        for (int i = 0; i < D3Q19::Q; ++i) {
          std::array<int, 3> p = {x + D3Q19::c[i][0], y + D3Q19::c[i][1], z + D3Q19::c[i][2]};
          bool inside = true;
          for (int a = 0; a < 3; ++a) {
            if (p[a] < 0 || p[a] >= extent[a]) {
              if (periodic_[a]) {
                p[a] = (p[a] + extent[a]) % extent[a];
              } else {
                inside = false;
              }
            }
          }
          if (inside) {
            table_[idx * D3Q19::Q + static_cast<std::size_t>(i)] =
                static_cast<std::int32_t>(dims.index(p[0], p[1], p[2]));
          }
        }
      }
    }
  }
}

void FluidParams::validate() const {
  if (!(tau > 0.5)) {
    throw std::invalid_argument("tau must exceed 0.5, got " + std::to_string(tau));
  }
  if (!(gravity.norm() <= 0.01)) {
    throw std::invalid_argument("|gravity| must not exceed 0.01 lattice units");
  }
  if (!(dx > 0.0)) {
    throw std::invalid_argument("dx must be positive");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("dt must be positive");
  }
  if (!(rho0 > 0.0)) {
    throw std::invalid_argument("rho0 must be positive");
  }
}

double time_step_for(double lattice_gravity, double dx) {
  return std::sqrt(lattice_gravity * dx / 9.81);
}

}  // namespace flowsteer::lbm
