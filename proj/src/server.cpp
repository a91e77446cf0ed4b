#include "flowsteer/server.hpp"

#include <array>
#include <deque>
#include <mutex>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

namespace flowsteer::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using Bytes = std::shared_ptr<const std::vector<std::uint8_t>>;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  using Closed = std::function<void(Connection*)>;

  Connection(tcp::socket socket, steering::Engine& engine, std::size_t max_snapshots, bool busy, Closed on_closed)
      : socket_(std::move(socket)),
        engine_(engine),
        session_(engine.caps()),
        max_snapshots_(max_snapshots),
        busy_(busy),
        on_closed_(std::move(on_closed)) {
    boost::system::error_code ec;
    const auto ep = socket_.remote_endpoint(ec);
    peer_ = ec ? std::string("?") : ep.address().to_string() + ":" + std::to_string(ep.port());
  }

  void start() { sniff(); }

  bool established() const { return session_.state() == protocol::Session::State::Established; }

  // Runs on the io thread.
  void send(Bytes frame, bool snapshot) {
    if (closing_) {
      return;
    }
    if (snapshot) {
      std::size_t pending = 0;
      for (const auto& q : queue_) {
        pending += q.snapshot ? 1 : 0;
      }
      if (pending >= max_snapshots_) {
        // The front entry may be in flight; drop the oldest one after it.
        for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it) {
          if (it->snapshot) {
            queue_.erase(it);
            ++dropped_;
            break;
          }
        }
      }
    }
    queue_.push_back(Out{std::move(frame), snapshot});
    if (!writing_) {
      write_next();
    }
  }

  void close() {
    if (closed_) {
      return;
    }
    closed_ = true;
    boost::system::error_code ec;
    if (ws_) {
      beast::get_lowest_layer(*ws_).close(ec);
    } else {
      socket_.close(ec);
    }
    if (dropped_ > 0) {
      spdlog::info("client {}: {} snapshots dropped under backlog", peer_, dropped_);
    }
    spdlog::info("client {} disconnected", peer_);
    if (on_closed_) {
      on_closed_(this);
    }
  }

 private:
  struct Out {
    Bytes frame;
    bool snapshot;
  };

  void sniff() {
    auto self = shared_from_this();
    socket_.async_wait(tcp::socket::wait_read, [self](boost::system::error_code ec) {
      if (ec) {
        return self->close();
      }
      std::array<char, 4> head{};
      const std::size_t n = self->socket_.receive(asio::buffer(head), tcp::socket::message_peek, ec);
      if (ec || n == 0) {
        return self->close();
      }
      if (n < head.size() && std::string_view(head.data(), n) == std::string_view("GET ", n)) {
        // Could still be a WebSocket upgrade; wait for more bytes.
        return self->sniff();
      }
      if (n == head.size() && std::string_view(head.data(), 4) == "GET ") {
        self->upgrade();
      } else {
        self->begin();
      }
    });
  }

  void upgrade() {
    ws_.emplace(std::move(socket_));
    ws_->binary(true);
    ws_->read_message_max(protocol::kMaxFrameLength);
    auto self = shared_from_this();
    ws_->async_accept([self](beast::error_code ec) {
      if (ec) {
        spdlog::warn("client {}: websocket upgrade failed: {}", self->peer_, ec.message());
        return self->close();
      }
      self->begin();
    });
  }

  void begin() {
    spdlog::info("client {} connected ({})", peer_, ws_ ? "websocket" : "tcp");
    if (busy_) {
      reject();
      return;
    }
    read();
  }

  void reject() {
    queue_.push_back(Out{std::make_shared<const std::vector<std::uint8_t>>(protocol::encode(
                             protocol::Error{protocol::ErrorCode::Internal, "another client is connected"})),
                         false});
    closing_ = true;
    write_next();
  }

  void read() {
    auto self = shared_from_this();
    if (ws_) {
      ws_->async_read(ws_buffer_, [self](beast::error_code ec, std::size_t) {
        if (ec) {
          return self->close();
        }
        const auto data = self->ws_buffer_.cdata();
        self->consume({static_cast<const std::uint8_t*>(data.data()), data.size()});
        self->ws_buffer_.consume(self->ws_buffer_.size());
        if (!self->closing_) {
          self->read();
        }
      });
    } else {
      socket_.async_read_some(asio::buffer(raw_), [self](boost::system::error_code ec, std::size_t n) {
        if (ec) {
          return self->close();
        }
        self->consume({self->raw_.data(), n});
        if (!self->closing_) {
          self->read();
        }
      });
    }
  }

  void consume(std::span<const std::uint8_t> bytes) {
    for (const protocol::DecodeItem& item : decoder_.feed(bytes)) {
      session_.set_caps(engine_.caps());
      protocol::Session::Outcome out = session_.on_item(item);
      for (const protocol::Message& reply : out.replies) {
        send(std::make_shared<const std::vector<std::uint8_t>>(protocol::encode(reply)), false);
      }
      if (out.forward) {
        engine_.submit(std::move(*out.forward));
      }
      if (out.close) {
        closing_ = true;
        if (!writing_) {
          close();
        }
        return;
      }
    }
  }

  void write_next() {
    if (queue_.empty()) {
      writing_ = false;
      if (closing_) {
        close();
      }
      return;
    }
    writing_ = true;
    auto self = shared_from_this();
    Bytes frame = queue_.front().frame;
    auto done = [self, frame](boost::system::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) {
        return self->close();
      }
      self->write_next();
    };
    if (ws_) {
      ws_->async_write(asio::buffer(*frame), done);
    } else {
      asio::async_write(socket_, asio::buffer(*frame), done);
    }
  }

  tcp::socket socket_;
  std::optional<websocket::stream<tcp::socket>> ws_;
  steering::Engine& engine_;
  protocol::Session session_;
  protocol::StreamDecoder decoder_;
  std::array<std::uint8_t, 65536> raw_{};
  beast::flat_buffer ws_buffer_;
  std::deque<Out> queue_;
  std::size_t max_snapshots_;
  std::size_t dropped_{0};
  bool writing_{false};
  bool closing_{false};
  bool closed_{false};
  bool busy_;
  std::string peer_;
  Closed on_closed_;
};

}  // namespace

struct Server::Impl {
  Impl(steering::Engine& e, const ServerOptions& o)
      : engine(e), options(o), acceptor(ioc), guard(asio::make_work_guard(ioc)) {
    const tcp::endpoint ep(asio::ip::make_address(o.address), o.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  }

  void accept() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec != asio::error::operation_aborted) {
          spdlog::warn("accept failed: {}", ec.message());
        }
        if (!acceptor.is_open()) {
          return;
        }
        return accept();
      }
      socket.set_option(tcp::no_delay(true));
      const bool busy = active != nullptr;
      auto conn = std::make_shared<Connection>(std::move(socket), engine, options.max_pending_snapshots, busy,
                                               [this](Connection* c) {
                                                 std::lock_guard lock(mu);
                                                 if (active.get() == c) {
                                                   active.reset();
                                                 }
                                               });
      if (!busy) {
        std::lock_guard lock(mu);
        active = conn;
      }
      conn->start();
      accept();
    });
  }

  steering::Engine& engine;
  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::executor_work_guard<asio::io_context::executor_type> guard;
  std::mutex mu;
  std::shared_ptr<Connection> active;
};

Server::Server(steering::Engine& engine, const ServerOptions& options)
    : impl_(std::make_unique<Impl>(engine, options)) {}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  impl_->accept();
  impl_->ioc.run();
}

void Server::stop() {
  asio::post(impl_->ioc, [impl = impl_.get()] {
    boost::system::error_code ec;
    impl->acceptor.close(ec);
    std::shared_ptr<Connection> conn;
    {
      std::lock_guard lock(impl->mu);
      conn = impl->active;
    }
    if (conn) {
      conn->close();
    }
    impl->guard.reset();
    impl->ioc.stop();
  });
}

void Server::deliver(const protocol::Message& m) {
  std::shared_ptr<Connection> conn;
  {
    std::lock_guard lock(impl_->mu);
    conn = impl_->active;
  }
  if (!conn) {
    return;
  }
  const bool snapshot = std::holds_alternative<protocol::Snapshot>(m);
  auto frame = std::make_shared<const std::vector<std::uint8_t>>(protocol::encode(m));
  asio::post(impl_->ioc, [conn, frame, snapshot] {
    if (conn->established()) {
      conn->send(frame, snapshot);
    }
  });
}

}  // namespace flowsteer::net
