#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>

#include "flowsteer/protocol.hpp"
#include "flowsteer/steering.hpp"

namespace flowsteer::net {

struct ServerOptions {
  std::string address{"0.0.0.0"};
  /// 0 picks a free port.
  std::uint16_t port{7070};
  /// Queued, unsent snapshots beyond this are dropped oldest first.
  std::size_t max_pending_snapshots{8};
};

/// Steering endpoint. Raw frames over TCP and the same frames inside binary
/// WebSocket messages share one port; a connection starting with "GET " is
/// upgraded to WebSocket. One client at a time; a second connection gets an
/// ERROR frame and is closed.
class Server {
 public:
  /// Binds immediately; throws std::system_error when the port is taken.
  Server(steering::Engine& engine, const ServerOptions& options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;

  /// Serves until stop() is called.
  void run();
  /// Thread-safe.
  void stop();

  /// Engine sink: forwards a message to the established client, if any.
  /// Thread-safe.
  void deliver(const protocol::Message& m);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace flowsteer::net
