#include <doctest.h>

#include <fstream>
#include <iterator>

#include "flowsteer/script.hpp"
#include "support/live_server.hpp"
#include "support/scenes.hpp"

using namespace flowsteer;
using namespace flowsteer::protocol;
using flowsteer::testing::Client;
using flowsteer::testing::LiveServer;

namespace {

const std::string kScenes = FLOWSTEER_SCENES_DIR;

void snapshots_flow(bool websocket) {
  steering::EngineConfig cfg;
  cfg.cadence = 2;
  LiveServer srv(testing::library_of({testing::small_tank()}), "tank", cfg);
  Client c(srv.port(), websocket);
  c.send(Hello{});
  const auto w = c.wait_for<Welcome>();
  REQUIRE(w);
  CHECK(w->first.nx == 12);
  CHECK(w->first.ny == 8);
  CHECK(w->first.nz == 16);
  c.send(Control{ControlVerb::Start});
  std::uint64_t last_seq = 0;
  for (int k = 0; k < 5; ++k) {
    const auto s = c.wait_for<Snapshot>();
    REQUIRE(s);
    CHECK(s->first.seq > last_seq);
    CHECK(s->first.timestep % 2 == 0);
    CHECK(s->first.cells.size() == 12 * 8 * 16);
    // WebSocket messages carry the same length-prefixed frames.
    CHECK(s->second == 4 + 1 + 16 + 12 * 8 * 16);
    last_seq = s->first.seq;
  }
  c.send(Control{ControlVerb::Pause});
}

}  // namespace

TEST_CASE("raw TCP client receives WELCOME and snapshots") { snapshots_flow(false); }

TEST_CASE("WebSocket client receives WELCOME and snapshots") { snapshots_flow(true); }

TEST_CASE("commands before HELLO are refused") {
  LiveServer srv(testing::library_of({testing::small_tank()}), "tank");
  Client c(srv.port(), false);
  c.send(Control{ControlVerb::Start});
  const auto e = c.wait_for<Error>();
  REQUIRE(e);
  CHECK(e->first.code == ErrorCode::HandshakeRequired);
}

TEST_CASE("a second client is turned away") {
  steering::EngineConfig cfg;
  cfg.cadence = 1;
  LiveServer srv(testing::library_of({testing::small_tank()}), "tank", cfg);
  Client first(srv.port(), false);
  first.send(Hello{});
  REQUIRE(first.wait_for<Welcome>());
  Client second(srv.port(), true);
  const auto e = second.wait_for<Error>();
  REQUIRE(e);
  CHECK_FALSE(second.receive().has_value());
  // The first session is unaffected.
  first.send(Control{ControlVerb::SingleStep});
  const auto s = first.wait_for<Snapshot>();
  REQUIRE(s);
  CHECK(s->first.timestep == 1);
}

TEST_CASE("restart mode rejects edits while running") {
  steering::EngineConfig cfg;
  cfg.mode = steering::Mode::Restart;
  LiveServer srv(testing::library_of({testing::small_tank()}), "tank", cfg);
  Client c(srv.port(), false);
  c.send(Hello{});
  REQUIRE(c.wait_for<Welcome>());
  c.send(Control{ControlVerb::Start});
  REQUIRE(c.wait_for<Snapshot>());
  c.send(EditCells{{CellEdit{4, 2, 2, EditAction::SetWall}}});
  const auto e = c.wait_for<Error>();
  REQUIRE(e);
  CHECK(e->first.code == ErrorCode::EditRejected);
}

TEST_CASE("a live session and its script replay agree") {
  const auto lib = testing::library_of({testing::small_tank()});
  steering::EngineConfig cfg;
  cfg.cadence = 1;
  const std::vector<Message> session = {
      EditCells{{CellEdit{4, 1, 1, EditAction::SetWall}, CellEdit{4, 2, 1, EditAction::SetWall}}},
      Control{ControlVerb::SingleStep},
      Control{ControlVerb::SingleStep},
      EditCells{{CellEdit{9, 3, 12, EditAction::FillWater}}},
      Control{ControlVerb::SingleStep},
      SetParam{ParamTarget::Tau, 0.7},
      Control{ControlVerb::SingleStep},
  };

  LiveServer srv(lib, "tank", cfg);
  Snapshot live_last;
  {
    Client c(srv.port(), false);
    c.send(Hello{});
    REQUIRE(c.wait_for<Welcome>());
    for (const Message& m : session) {
      c.send(m);
      if (std::holds_alternative<Control>(m)) {
        const auto snap = c.wait_for<Snapshot>();
        REQUIRE(snap);
        live_last = snap->first;
      }
    }
  }
  srv.stop();

  // Same commands, one per tick.
  std::vector<steering::ScriptLine> script;
  for (std::size_t k = 0; k < session.size(); ++k) {
    script.push_back(steering::ScriptLine{k, session[k], static_cast<int>(k + 1)});
  }
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "flowsteer_server_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  steering::ReplayOptions opts;
  opts.snapshot_dir = dir;
  const steering::ReplayResult r = steering::replay(lib, "tank", cfg, script, opts);

  const auto& live = srv.engine().log().records();
  const auto& offline = r.log.records();
  REQUIRE(live.size() == offline.size());
  for (std::size_t k = 0; k < live.size(); ++k) {
    CHECK(live[k].timestep == offline[k].timestep);
    CHECK(live[k].event == offline[k].event);
    CHECK(live[k].details == offline[k].details);
  }
  CHECK(srv.engine().timestep() == r.timestep);
  CHECK(r.snapshots == 4);
  CHECK(live_last.timestep == 4);
  std::ifstream in(dir / "snap_00000003.bin", std::ios::binary);
  const std::vector<std::uint8_t> offline_last{std::istreambuf_iterator<char>(in), {}};
  CHECK(offline_last == steering::snapshot_payload(live_last));
  std::filesystem::remove_all(dir);
}
