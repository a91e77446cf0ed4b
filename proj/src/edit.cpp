#include "flowsteer/edit.hpp"

#include <string>

namespace flowsteer::steering {

void check_bounds(const Dims& dims, std::span<const EditCommand> cmds) {
  for (std::size_t k = 0; k < cmds.size(); ++k) {
    const EditCommand& c = cmds[k];
    if (!dims.contains(c.x, c.y, c.z)) {
      throw OutOfBounds("edit " + std::to_string(k) + " at (" + std::to_string(c.x) + "," + std::to_string(c.y) +
                        "," + std::to_string(c.z) + ") is outside the " + std::to_string(dims.nx) + "x" +
                        std::to_string(dims.ny) + "x" + std::to_string(dims.nz) + " grid");
    }
  }
}

EditEffect apply_edit(fs::Solver& solver, const EditCommand& cmd) {
  check_bounds(solver.dims(), std::span<const EditCommand>(&cmd, 1));
  const std::size_t idx = solver.dims().index(cmd.x, cmd.y, cmd.z);
  const double rho0 = solver.params().rho0;
  EditEffect effect;
  FlagField& flags = solver.flags();
  fs::MassField& mass = solver.mass();

  switch (cmd.action) {
    case EditAction::SetWall:
      effect.discarded_mass = mass[idx];
      flags[idx] = CellFlag::Wall;
      mass[idx] = 0.0;
      break;
    case EditAction::Empty:
      effect.discarded_mass = mass[idx];
      flags[idx] = CellFlag::Gas;
      mass[idx] = 0.0;
      break;
    case EditAction::FillWater:
      effect.discarded_mass = mass[idx];
      effect.added_mass = rho0;
      solver.make_liquid(idx, rho0);
      break;
  }
  fs::repair_around(solver.populations(), flags, mass, solver.topology(), idx, rho0);
  return effect;
}

}  // namespace flowsteer::steering
