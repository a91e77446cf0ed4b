#pragma once

#include <stdexcept>

#include "flowsteer/free_surface.hpp"
#include "flowsteer/protocol.hpp"

namespace flowsteer::steering {

using protocol::EditAction;

struct EditCommand {
  int x{0};
  int y{0};
  int z{0};
  EditAction action{EditAction::Empty};

  friend bool operator==(const EditCommand&, const EditCommand&) = default;
};

class OutOfBounds : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct EditEffect {
  /// Liquid mass removed by SetWall or Empty.
  double discarded_mass{0.0};
  /// Mass added by FillWater.
  double added_mass{0.0};
};

/// Applies one voxel edit between timesteps, then repairs the flag layer
/// around it. SetWall and Empty drop the cell's mass; FillWater sets the
/// cell to rest equilibrium at rho0 with m = rho0. Throws OutOfBounds
/// without touching the state.
EditEffect apply_edit(fs::Solver& solver, const EditCommand& cmd);

/// Throws OutOfBounds naming the first command outside `dims`.
void check_bounds(const Dims& dims, std::span<const EditCommand> cmds);

}  // namespace flowsteer::steering
