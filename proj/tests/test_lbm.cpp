#include <doctest.h>

#include <cmath>
#include <random>

#include "flowsteer/lattice.hpp"
#include "flowsteer/lbm.hpp"
#include "flowsteer/validate.hpp"

using namespace flowsteer;
using lbm::D3Q19;
using lbm::Vec3d;

TEST_CASE("velocity set identities") {
  double wsum = 0.0;
  for (int i = 0; i < D3Q19::Q; ++i) {
    wsum += D3Q19::w[i];
    const int o = D3Q19::opposite[i];
    CHECK(D3Q19::opposite[o] == i);
    for (int a = 0; a < 3; ++a) {
      CHECK(D3Q19::c[o][a] == -D3Q19::c[i][a]);
    }
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-15));
  // Second moment: sum w c_a c_b = cs2 delta_ab.
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double m = 0.0;
      for (int i = 0; i < D3Q19::Q; ++i) {
        m += D3Q19::w[i] * D3Q19::c[i][a] * D3Q19::c[i][b];
      }
      CHECK(m == doctest::Approx(a == b ? 1.0 / 3.0 : 0.0));
    }
  }
}

TEST_CASE("equilibrium at rest is the weights") {
  const auto f = lbm::equilibrium<double>(1.0, Vec3d::Zero());
  CHECK(f[0] == 1.0 / 3.0);
  for (int i = 1; i <= 6; ++i) {
    CHECK(f[i] == 1.0 / 18.0);
  }
  for (int i = 7; i < D3Q19::Q; ++i) {
    CHECK(f[i] == 1.0 / 36.0);
  }
  const auto h = lbm::equilibrium<double>(0.5, Vec3d::Zero());
  for (int i = 0; i < D3Q19::Q; ++i) {
    CHECK(h[i] == 0.5 * D3Q19::w[i]);
  }
}

TEST_CASE("equilibrium expansion for a moving cell") {
  const auto f = lbm::equilibrium<double>(1.0, Vec3d(0.1, 0.0, 0.0));
  // (1/18)(1 + 0.3 + 0.045 - 0.015)
  CHECK(f[1] == doctest::Approx(0.0738888888888889).epsilon(1e-14));
  CHECK(lbm::equilibrium_component<double>(1, 1.0, Vec3d(0.1, 0.0, 0.0)) == doctest::Approx(f[1]).epsilon(1e-15));
}

TEST_CASE("moments of weights and of equilibria") {
  lbm::Populations<double> w;
  std::copy(D3Q19::w.begin(), D3Q19::w.end(), w.begin());
  auto m = lbm::moments<double>(w);
  CHECK(m.rho == doctest::Approx(1.0));
  CHECK(m.u.norm() < 1e-16);
  for (double& v : w) {
    v *= 2.0;
  }
  m = lbm::moments<double>(w);
  CHECK(m.rho == doctest::Approx(2.0));

  const Vec3d u(0.05, -0.02, 0.01);
  const auto feq = lbm::equilibrium<double>(1.2, u);
  // Brute-force summation, independent of moments().
  double rho = 0.0;
  Vec3d j = Vec3d::Zero();
  for (int i = 0; i < D3Q19::Q; ++i) {
    rho += feq[i];
    j += feq[i] * D3Q19::velocity(i).cast<double>();
  }
  CHECK(std::abs(rho - 1.2) < 1e-14);
  CHECK((j / rho - u).norm() < 1e-14);
  m = lbm::moments<double>(feq);
  CHECK(std::abs(m.rho - 1.2) < 1e-14);
  CHECK((m.u - u).norm() < 1e-14);
}

TEST_CASE("equilibrium works in single precision") {
  const auto f = lbm::equilibrium<float>(1.0f, lbm::Vec3<float>(0.1f, 0.0f, 0.0f));
  CHECK(f[1] == doctest::Approx(0.0738889).epsilon(1e-6));
}

namespace {

lbm::PopulationGrid random_grid(Dims d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pert(-0.01, 0.01);
  lbm::PopulationGrid g(d);
  for (std::size_t idx = 0; idx < d.cells(); ++idx) {
    for (int i = 0; i < D3Q19::Q; ++i) {
      g.at(idx, i) = D3Q19::w[i] * (1.0 + pert(rng));
    }
  }
  return g;
}

int wrap(int v, int n) { return ((v % n) + n) % n; }

}  // namespace

TEST_CASE("collision keeps the equilibrium fixed and conserves mass") {
  const Dims d{3, 3, 3};
  lbm::FluidParams p;
  p.gravity = Vec3d::Zero();
  p.tau = 0.7;
  FlagField flags(d.cells(), CellFlag::Liquid);

  lbm::PopulationGrid g(d);
  lbm::fill_equilibrium(g, 1.1, Vec3d(0.02, 0.0, -0.01));
  const lbm::PopulationGrid before = g;
  lbm::collide(g, flags, p);
  for (std::size_t k = 0; k < g.raw().size(); ++k) {
    CHECK(std::abs(g.raw()[k] - before.raw()[k]) < 1e-15);
  }

  std::mt19937_64 rng(3);
  g = random_grid(d, rng);
  const auto rho_before = lbm::compute_macro(g, flags).rho;
  lbm::collide(g, flags, p);
  const auto rho_after = lbm::compute_macro(g, flags).rho;
  for (std::size_t idx = 0; idx < d.cells(); ++idx) {
    CHECK(std::abs(rho_after[idx] - rho_before[idx]) < 1e-15);
  }
}

TEST_CASE("collision adds rho g of momentum") {
  const Dims d{2, 2, 2};
  lbm::FluidParams p;
  p.gravity = Vec3d(0.0, 0.0, -0.001);
  FlagField flags(d.cells(), CellFlag::Liquid);
  lbm::PopulationGrid g(d);
  lbm::fill_equilibrium(g, 1.0, Vec3d::Zero());
  lbm::collide(g, flags, p);
  for (std::size_t idx = 0; idx < d.cells(); ++idx) {
    Vec3d j = Vec3d::Zero();
    for (int i = 0; i < D3Q19::Q; ++i) {
      j += g.at(idx, i) * D3Q19::velocity(i).cast<double>();
    }
    CHECK(std::abs(j[2] + 0.001) < 1e-16);
    CHECK(std::abs(j[0]) < 1e-18);
  }
}

TEST_CASE("collision faults leave the source intact") {
  const Dims d{1, 1, 1};
  lbm::FluidParams p;
  FlagField flags(1, CellFlag::Liquid);
  lbm::PopulationGrid g(d);
  lbm::fill_equilibrium(g, 1.0, Vec3d(0.35, 0.0, 0.0));
  const lbm::PopulationGrid before = g;
  lbm::PopulationGrid dst(d);
  CHECK_THROWS_AS(lbm::collide(g, dst, flags, p), lbm::StabilityFault);
  CHECK(g == before);

  lbm::fill_equilibrium(g, -0.1, Vec3d::Zero());
  CHECK_THROWS_AS(lbm::collide(g, dst, flags, p), lbm::StabilityFault);
}

TEST_CASE("streaming moves a single population along its velocity") {
  const Dims d{5, 4, 3};
  const lbm::Topology topo(d, {true, true, true});
  FlagField flags(d.cells(), CellFlag::Liquid);
  for (int i = 0; i < D3Q19::Q; ++i) {
    lbm::PopulationGrid src(d);
    src.at(d.index(2, 1, 1), i) = 1.0;
    lbm::PopulationGrid dst(d);
    lbm::stream(src, dst, flags, topo);
    const auto& c = D3Q19::c[i];
    const std::size_t target = d.index(wrap(2 + c[0], 5), wrap(1 + c[1], 4), wrap(1 + c[2], 3));
    double total = 0.0;
    for (double v : dst.raw()) {
      total += v;
    }
    CHECK(total == 1.0);
    CHECK(dst.at(target, i) == 1.0);
  }
}

TEST_CASE("streaming matches a brute-force gather on a random periodic grid") {
  const Dims d{4, 4, 4};
  std::mt19937_64 rng(11);
  const lbm::PopulationGrid src = random_grid(d, rng);
  const lbm::Topology topo(d, {true, true, true});
  FlagField flags(d.cells(), CellFlag::Liquid);
  lbm::PopulationGrid dst(d);
  lbm::stream(src, dst, flags, topo);
  for (int z = 0; z < 4; ++z) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        for (int i = 0; i < D3Q19::Q; ++i) {
          const auto& c = D3Q19::c[i];
          const std::size_t from = d.index(wrap(x - c[0], 4), wrap(y - c[1], 4), wrap(z - c[2], 4));
          CHECK(dst.at(d.index(x, y, z), i) == src.at(from, i));
        }
      }
    }
  }

  lbm::PopulationGrid uniform(d);
  lbm::fill_equilibrium(uniform, 1.0, Vec3d(0.01, 0.02, 0.0));
  lbm::PopulationGrid out(d);
  lbm::stream(uniform, out, flags, topo);
  CHECK(out == uniform);
}

TEST_CASE("a cell enclosed by walls reverses its populations") {
  const Dims d{3, 3, 3};
  const lbm::Topology topo(d, {false, false, false});
  FlagField flags(d.cells(), CellFlag::Wall);
  const std::size_t mid = d.index(1, 1, 1);
  flags[mid] = CellFlag::Liquid;
  lbm::PopulationGrid src(d);
  for (int i = 0; i < D3Q19::Q; ++i) {
    src.at(mid, i) = 0.01 * (i + 1);
  }
  lbm::PopulationGrid dst(d);
  lbm::stream(src, dst, flags, topo);
  for (int i = 0; i < D3Q19::Q; ++i) {
    CHECK(dst.at(mid, i) == src.at(mid, D3Q19::opposite[i]));
  }
}

TEST_CASE("fluid at rest beside a wall stays at rest") {
  const Dims d{4, 4, 6};
  const lbm::Topology topo(d, {true, true, false});
  FlagField flags(d.cells(), CellFlag::Liquid);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      flags[d.index(x, y, 0)] = CellFlag::Wall;
    }
  }
  lbm::FluidParams p;
  p.gravity = Vec3d::Zero();
  lbm::PopulationGrid a(d);
  lbm::fill_equilibrium(a, 1.0, Vec3d::Zero());
  lbm::PopulationGrid b(d);
  for (int t = 0; t < 200; ++t) {
    lbm::collide(a, b, flags, p);
    lbm::stream(b, a, flags, topo);
  }
  const auto macro = lbm::compute_macro(a, flags);
  for (std::size_t idx = 0; idx < d.cells(); ++idx) {
    if (flags[idx] == CellFlag::Liquid) {
      CHECK(macro.u[idx].norm() < 1e-15);
      CHECK(std::abs(macro.rho[idx] - 1.0) < 1e-14);
    }
  }
}

TEST_CASE("time step from lattice gravity") {
  // g_lattice = g dt^2 / dx
  const double dt = lbm::time_step_for(0.0005, 1.0 / 30.0);
  CHECK(9.81 * dt * dt / (1.0 / 30.0) == doctest::Approx(0.0005).epsilon(1e-12));
}

TEST_CASE("fluid parameter bounds") {
  lbm::FluidParams p;
  p.dt = 0.001;
  CHECK_NOTHROW(p.validate());
  p.tau = 0.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.tau = 0.6;
  p.gravity = Vec3d(0.0, 0.0, std::nan(""));
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("validation cases: equilibrium and Poiseuille") {
  const auto eq = validation::equilibrium();
  CHECK(eq.pass);
  CHECK(eq.error < 1e-14);
  const auto pois = validation::poiseuille();
  CHECK(pois.pass);
  CHECK(pois.error < 0.02);
}

TEST_CASE("throughput report arithmetic") {
  const auto r = validation::bench(Dims{8, 8, 8}, 20, 2);
  CHECK(r.steps == 20);
  CHECK(r.threads == 1);
  CHECK(r.mlups == doctest::Approx(r.steps_per_second * 512 / 1e6));
}
