#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowsteer/grid.hpp"

namespace flowsteer::validation {

/// Outcome of one physics validation case.
struct CaseResult {
  std::string name;
  bool pass{false};
  double error{0.0};
  double tolerance{0.0};
  std::string detail;
  double seconds{0.0};
};

/// Uniform rho=1, u=0, g=0 on a periodic cube: largest population change.
CaseResult equilibrium(int n = 16, int steps = 100);

/// Dam break in a closed cube: relative drift of total liquid mass.
CaseResult mass_conservation(int n = 24, int steps = 10000);

/// Body-force driven channel between two walls, compared with the parabola
/// u(y) = g / (2 nu) * y (H - y) measured from the wall planes.
CaseResult poiseuille(int width = 32, double tau = 0.8, double g = 1e-5, int max_steps = 40000);

/// Resting pool under gravity. Passes when the stabilization detector fires
/// within `max_steps` and, at the end of that window, the layer-mean density
/// is linear in depth: the fitted slope matches 3 g rho_mean and the largest
/// residual is small next to the density span (error is the larger ratio).
CaseResult hydrostatic(Dims dims = {16, 16, 32}, int depth = 16, int max_steps = 10000);

/// Dam break mirrored across the x mid-plane: largest fill-fraction asymmetry.
CaseResult symmetry(int n = 24, int steps = 500);

struct ThroughputReport {
  Dims dims;
  double tau{0.0};
  int threads{1};
  std::uint64_t warmup{0};
  std::uint64_t steps{0};
  double seconds{0.0};
  double steps_per_second{0.0};
  double mlups{0.0};
};

/// All-liquid periodic box at rest, g = 0 (uniform forcing would accelerate
/// a fully periodic box without bound).
ThroughputReport bench(Dims dims, std::uint64_t steps, std::uint64_t warmup = 100, double tau = 0.6);

const std::vector<std::string>& case_names();
/// Runs a case by name with its default size; throws std::invalid_argument.
CaseResult run_case(const std::string& name);

}  // namespace flowsteer::validation
