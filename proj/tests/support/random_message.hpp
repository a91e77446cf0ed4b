#pragma once

#include <random>
#include <string>

#include "flowsteer/protocol.hpp"

namespace flowsteer::testing {

/// Uniformly picks a message type and fills every field with random but
/// encodable values. Doubles are finite so that equality round-trips.
inline protocol::Message random_message(std::mt19937_64& rng) {
  using namespace protocol;
  auto pick = [&](int n) { return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng)); };
  auto u16 = [&] { return static_cast<std::uint16_t>(rng()); };
  auto u32 = [&] { return static_cast<std::uint32_t>(rng()); };
  auto f64 = [&] { return std::uniform_real_distribution<double>(-1e6, 1e6)(rng); };
  auto text = [&] {
    std::string s(static_cast<std::size_t>(pick(40)), ' ');
    for (char& c : s) {
      c = static_cast<char>(pick(256));
    }
    return s;
  };
  switch (pick(12)) {
    case 0:
      return Hello{u16()};
    case 1:
      return Control{static_cast<ControlVerb>(pick(6))};
    case 2: {
      EditCells e;
      e.cells.resize(static_cast<std::size_t>(pick(20)));
      for (auto& c : e.cells) {
        c = CellEdit{u16(), u16(), u16(), static_cast<EditAction>(pick(3))};
      }
      return e;
    }
    case 3:
      return SetParam{static_cast<ParamTarget>(pick(5)), f64()};
    case 4:
      return LoadScene{text()};
    case 5:
      return SetCadence{u32()};
    case 6:
      return Telemetry{text()};
    case 7:
      return Welcome{u16(), u32(), u32(), u32(), f64(), f64()};
    case 8: {
      Snapshot s{rng(), rng(), {}};
      s.cells.resize(static_cast<std::size_t>(pick(200)));
      for (auto& b : s.cells) {
        b = static_cast<std::uint8_t>(pick(256));
      }
      return s;
    }
    case 9:
      return Event{static_cast<EventCode>(pick(6)), rng()};
    case 10:
      return Ack{static_cast<std::uint8_t>(pick(256))};
    default:
      return Error{static_cast<ErrorCode>(pick(11)), text()};
  }
}

}  // namespace flowsteer::testing
