#pragma once

#include <array>
#include <cassert>
#include <span>

#include <Eigen/Core>

namespace flowsteer::lbm {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using Vec3d = Vec3<double>;
using Vec3i = Eigen::Vector3i;

/// D3Q19 velocity set. Opposite directions sit next to each other
/// (odd i pairs with i + 1), which keeps the opposite map trivial.
struct D3Q19 {
  static constexpr int Q = 19;

  static constexpr std::array<std::array<int, 3>, Q> c = {{
      {0, 0, 0},
      {1, 0, 0},  {-1, 0, 0},  {0, 1, 0},  {0, -1, 0}, {0, 0, 1},  {0, 0, -1},
      {1, 1, 0},  {-1, -1, 0}, {1, -1, 0}, {-1, 1, 0},
      {1, 0, 1},  {-1, 0, -1}, {1, 0, -1}, {-1, 0, 1},
      {0, 1, 1},  {0, -1, -1}, {0, 1, -1}, {0, -1, 1},
  }};

  static constexpr std::array<int, Q> opposite = {0,  2,  1,  4,  3,  6,  5,  8,  7, 10,
                                                  9, 12, 11, 14, 13, 16, 15, 18, 17};

  static constexpr double w0 = 1.0 / 3.0;
  static constexpr double w1 = 1.0 / 18.0;
  static constexpr double w2 = 1.0 / 36.0;
  static constexpr std::array<double, Q> w = {w0, w1, w1, w1, w1, w1, w1, w2, w2, w2,
                                              w2, w2, w2, w2, w2, w2, w2, w2, w2};

  static constexpr double cs2 = 1.0 / 3.0;

  static Vec3i velocity(int i) { return {c[i][0], c[i][1], c[i][2]}; }
};

template <typename Scalar>
using Populations = std::array<Scalar, D3Q19::Q>;

template <typename Scalar>
struct Moments {
  Scalar rho{0};
  Vec3<Scalar> u{Vec3<Scalar>::Zero()};
};

/// Second-order equilibrium w_i rho (1 + 3 c.u + 9/2 (c.u)^2 - 3/2 u.u).
template <typename Scalar>
void equilibrium(Scalar rho, const Vec3<Scalar>& u, std::span<Scalar, D3Q19::Q> out) {
  assert(rho > Scalar(0));
  const Scalar usq = Scalar(1.5) * u.squaredNorm();
  for (int i = 0; i < D3Q19::Q; ++i) {
    const auto& ci = D3Q19::c[i];
    const Scalar cu = Scalar(3) * (Scalar(ci[0]) * u[0] + Scalar(ci[1]) * u[1] + Scalar(ci[2]) * u[2]);
    out[i] = Scalar(D3Q19::w[i]) * rho * (Scalar(1) + cu + Scalar(0.5) * cu * cu - usq);
  }
}

template <typename Scalar>
Populations<Scalar> equilibrium(Scalar rho, const Vec3<Scalar>& u) {
  Populations<Scalar> out;
  equilibrium<Scalar>(rho, u, std::span<Scalar, D3Q19::Q>(out));
  return out;
}

/// Single equilibrium component, used where only one direction is needed.
template <typename Scalar>
Scalar equilibrium_component(int i, Scalar rho, const Vec3<Scalar>& u) {
  const auto& ci = D3Q19::c[i];
  const Scalar cu = Scalar(3) * (Scalar(ci[0]) * u[0] + Scalar(ci[1]) * u[1] + Scalar(ci[2]) * u[2]);
  return Scalar(D3Q19::w[i]) * rho * (Scalar(1) + cu + Scalar(0.5) * cu * cu - Scalar(1.5) * u.squaredNorm());
}

/// Density and velocity of a population set. Zero density yields zero velocity.
template <typename Scalar>
Moments<Scalar> moments(std::span<const Scalar, D3Q19::Q> f) {
  Moments<Scalar> m;
  Scalar jx(0), jy(0), jz(0);
  for (int i = 0; i < D3Q19::Q; ++i) {
    const auto& ci = D3Q19::c[i];
    m.rho += f[i];
    jx += Scalar(ci[0]) * f[i];
    jy += Scalar(ci[1]) * f[i];
    jz += Scalar(ci[2]) * f[i];
  }
  if (m.rho > Scalar(0)) {
    m.u = Vec3<Scalar>(jx, jy, jz) / m.rho;
  }
  return m;
}

template <typename Scalar>
Moments<Scalar> moments(const Populations<Scalar>& f) {
  return moments<Scalar>(std::span<const Scalar, D3Q19::Q>(f));
}

}  // namespace flowsteer::lbm
