#pragma once

#include "flowsteer/scenario.hpp"

namespace flowsteer::testing {

/// Small closed tank with a water column on the +x side of the wall line.
inline scenario::SceneSpec small_tank(const std::string& name = "tank") {
  scenario::SceneSpec s;
  s.name = name;
  s.dims = Dims{12, 8, 16};
  s.tau = 0.6;
  s.water = {scenario::Box{{7, 1, 1}, {10, 6, 8}}};
  s.wall = scenario::WallRegion{{4, 4}, {1, 6}, 1, 10};
  s.protected_region = scenario::Box{{1, 1, 1}, {2, 6, 1}};
  s.optimal_height = 5;
  return s;
}

inline scenario::SceneLibrary library_of(std::initializer_list<scenario::SceneSpec> specs) {
  scenario::SceneLibrary lib;
  for (const auto& s : specs) {
    lib.add(s);
  }
  return lib;
}

}  // namespace flowsteer::testing
