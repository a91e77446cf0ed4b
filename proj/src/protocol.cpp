#include "flowsteer/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace flowsteer::protocol {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void str16(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw RangeError("string of " + std::to_string(s.size()) + " bytes exceeds u16 length");
    }
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  std::vector<std::uint8_t>& out_;
};

// Bounds-checked little-endian reader; ok() turns false on any overrun.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str16() {
    const std::size_t n = u16();
    if (!ok_ || remaining() < n) {
      ok_ = false;
      return {};
    }
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> rest() {
    auto r = b_.subspan(pos_);
    pos_ = b_.size();
    return r;
  }

  std::size_t remaining() const { return b_.size() - pos_; }
  bool ok() const { return ok_; }
  bool done() const { return ok_ && pos_ == b_.size(); }

 private:
  std::uint64_t get(int n) {
    if (!ok_ || remaining() < static_cast<std::size_t>(n)) {
      ok_ = false;
      return 0;
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_{0};
  bool ok_{true};
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void encode_body(const Message& m, Writer& w) {
  w.u8(static_cast<std::uint8_t>(type_of(m)));
  std::visit(Overloaded{
                 [&](const Hello& v) { w.u16(v.version); },
                 [&](const Control& v) { w.u8(static_cast<std::uint8_t>(v.verb)); },
                 [&](const EditCells& v) {
                   if (v.cells.size() > std::numeric_limits<std::uint32_t>::max()) {
                     throw RangeError("edit count exceeds u32");
                   }
                   w.u32(static_cast<std::uint32_t>(v.cells.size()));
                   for (const CellEdit& c : v.cells) {
                     w.u16(c.x);
                     w.u16(c.y);
                     w.u16(c.z);
                     w.u8(static_cast<std::uint8_t>(c.action));
                   }
                 },
                 [&](const SetParam& v) {
                   w.u8(static_cast<std::uint8_t>(v.target));
                   w.f64(v.value);
                 },
                 [&](const LoadScene& v) { w.str16(v.name); },
                 [&](const SetCadence& v) { w.u32(v.cadence); },
                 [&](const Telemetry& v) { w.str16(v.text); },
                 [&](const Welcome& v) {
                   w.u16(v.version);
                   w.u32(v.nx);
                   w.u32(v.ny);
                   w.u32(v.nz);
                   w.f64(v.dx);
                   w.f64(v.dt);
                 },
                 [&](const Snapshot& v) {
                   w.u64(v.timestep);
                   w.u64(v.seq);
                   w.bytes(v.cells);
                 },
                 [&](const Event& v) {
                   w.u8(static_cast<std::uint8_t>(v.code));
                   w.u64(v.timestep);
                 },
                 [&](const Ack& v) { w.u8(v.echo); },
                 [&](const Error& v) {
                   w.u8(static_cast<std::uint8_t>(v.code));
                   w.str16(v.message);
                 },
             },
             m);
}

DecodeError malformed(std::uint8_t type, std::string detail) {
  return DecodeError{DecodeErrorKind::MalformedFrame, type, std::move(detail)};
}

template <typename E>
bool enum_in_range(std::uint8_t raw, E last) {
  return raw <= static_cast<std::uint8_t>(last);
}

}  // namespace

MessageType type_of(const Message& m) {
  static constexpr MessageType kTypes[] = {
      MessageType::Hello,    MessageType::Control,  MessageType::EditCells, MessageType::SetParam,
      MessageType::LoadScene, MessageType::SetCadence, MessageType::Telemetry, MessageType::Welcome,
      MessageType::Snapshot, MessageType::Event,    MessageType::Ack,       MessageType::Error,
  };
  return kTypes[m.index()];
}

bool is_client_message(MessageType t) { return static_cast<std::uint8_t>(t) < 0x80; }

void encode_into(const Message& m, std::vector<std::uint8_t>& out) {
  const std::size_t start = out.size();
  out.resize(start + 4);
  Writer w(out);
  encode_body(m, w);
  const std::size_t length = out.size() - start - 4;
  if (length > std::numeric_limits<std::uint32_t>::max()) {
    out.resize(start);
    throw RangeError("frame length exceeds u32");
  }
  for (int i = 0; i < 4; ++i) {
    out[start + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(length >> (8 * i));
  }
}

std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> out;
  encode_into(m, out);
  return out;
}

DecodeItem decode_body(std::span<const std::uint8_t> body) {
  if (body.empty()) {
    return malformed(0, "empty frame");
  }
  const std::uint8_t type = body[0];
  Reader r(body.subspan(1));
  auto finish = [&](Message m) -> DecodeItem {
    if (!r.done()) {
      return malformed(type, "payload size does not match the message schema");
    }
    return m;
  };

  switch (static_cast<MessageType>(type)) {
    case MessageType::Hello:
      return finish(Hello{r.u16()});
    case MessageType::Control: {
      const std::uint8_t verb = r.u8();
      if (r.ok() && !enum_in_range(verb, ControlVerb::SingleStep)) {
        return malformed(type, "unknown control verb " + std::to_string(verb));
      }
      return finish(Control{static_cast<ControlVerb>(verb)});
    }
    case MessageType::EditCells: {
      const std::uint32_t count = r.u32();
      if (!r.ok() || r.remaining() != static_cast<std::size_t>(count) * 7) {
        return malformed(type, "edit count does not match payload size");
      }
      EditCells m;
      m.cells.reserve(count);
      for (std::uint32_t k = 0; k < count; ++k) {
        CellEdit c;
        c.x = r.u16();
        c.y = r.u16();
        c.z = r.u16();
        const std::uint8_t action = r.u8();
        if (!enum_in_range(action, EditAction::FillWater)) {
          return malformed(type, "unknown edit action " + std::to_string(action));
        }
        c.action = static_cast<EditAction>(action);
        m.cells.push_back(c);
      }
      return finish(std::move(m));
    }
    case MessageType::SetParam: {
      const std::uint8_t target = r.u8();
      const double value = r.f64();
      if (r.ok() && !enum_in_range(target, ParamTarget::SnapshotCadence)) {
        return malformed(type, "unknown parameter target " + std::to_string(target));
      }
      return finish(SetParam{static_cast<ParamTarget>(target), value});
    }
    case MessageType::LoadScene:
      return finish(LoadScene{r.str16()});
    case MessageType::SetCadence:
      return finish(SetCadence{r.u32()});
    case MessageType::Telemetry:
      return finish(Telemetry{r.str16()});
    case MessageType::Welcome: {
      Welcome m;
      m.version = r.u16();
      m.nx = r.u32();
      m.ny = r.u32();
      m.nz = r.u32();
      m.dx = r.f64();
      m.dt = r.f64();
      return finish(m);
    }
    case MessageType::Snapshot: {
      Snapshot m;
      m.timestep = r.u64();
      m.seq = r.u64();
      if (!r.ok()) {
        return malformed(type, "snapshot header truncated");
      }
      const auto cells = r.rest();
      m.cells.assign(cells.begin(), cells.end());
      return finish(std::move(m));
    }
    case MessageType::Event: {
      const std::uint8_t code = r.u8();
      const std::uint64_t t = r.u64();
      if (r.ok() && !enum_in_range(code, EventCode::FailureRegistered)) {
        return malformed(type, "unknown event code " + std::to_string(code));
      }
      return finish(Event{static_cast<EventCode>(code), t});
    }
    case MessageType::Ack:
      return finish(Ack{r.u8()});
    case MessageType::Error: {
      const std::uint8_t code = r.u8();
      std::string text = r.str16();
      if (r.ok() && !enum_in_range(code, ErrorCode::Internal)) {
        return malformed(type, "unknown error code " + std::to_string(code));
      }
      return finish(Error{static_cast<ErrorCode>(code), std::move(text)});
    }
  }
  return DecodeError{DecodeErrorKind::UnknownType, type, "unknown message type " + std::to_string(type)};
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  DecodeResult out;
  std::size_t pos = 0;
  while (bytes.size() - pos >= 4) {
    const std::uint32_t length = static_cast<std::uint32_t>(bytes[pos]) |
                                 (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                                 (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                                 (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    if (length < 1) {
      out.items.emplace_back(malformed(0, "frame length below 1"));
      pos += 4;
      continue;
    }
    if (length > kMaxFrameLength) {
      out.items.emplace_back(malformed(0, "frame length " + std::to_string(length) + " exceeds limit"));
      pos += 4;
      continue;
    }
    if (bytes.size() - pos - 4 < length) {
      break;
    }
    out.items.push_back(decode_body(bytes.subspan(pos + 4, length)));
    pos += 4 + static_cast<std::size_t>(length);
  }
  out.consumed = pos;
  return out;
}

std::vector<DecodeItem> StreamDecoder::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  DecodeResult r = decode(buffer_);
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(r.consumed));
  return std::move(r.items);
}

std::uint8_t quantize_fill(double eps) {
  if (eps < 0.0) {
    return kWallByte;
  }
  return static_cast<std::uint8_t>(std::lround(std::min(eps, 1.0) * kFullByte));
}

std::optional<double> dequantize_fill(std::uint8_t byte) {
  if (byte > kFullByte) {
    return std::nullopt;
  }
  return static_cast<double>(byte) / kFullByte;
}

std::vector<std::uint8_t> quantize_field(std::span<const double> fill) {
  std::vector<std::uint8_t> out(fill.size());
  std::transform(fill.begin(), fill.end(), out.begin(), quantize_fill);
  return out;
}

std::variant<Welcome, Error> handshake(const Hello& hello, const ServerCaps& caps) {
  if (hello.version != caps.version) {
    return Error{ErrorCode::VersionMismatch, "client version " + std::to_string(hello.version) +
                                                 " does not match server version " + std::to_string(caps.version)};
  }
  return Welcome{caps.version,
                 static_cast<std::uint32_t>(caps.dims.nx),
                 static_cast<std::uint32_t>(caps.dims.ny),
                 static_cast<std::uint32_t>(caps.dims.nz),
                 caps.dx,
                 caps.dt};
}

Session::Outcome Session::on_item(const DecodeItem& item) {
  Outcome out;
  if (state_ == State::Closed) {
    return out;
  }
  if (const auto* err = std::get_if<DecodeError>(&item)) {
    const ErrorCode code =
        err->kind == DecodeErrorKind::UnknownType ? ErrorCode::UnknownType : ErrorCode::MalformedFrame;
    out.replies.emplace_back(Error{code, err->detail});
    return out;
  }
  const Message& m = std::get<Message>(item);
  const MessageType type = type_of(m);

  if (state_ == State::AwaitingHello) {
    if (const auto* hello = std::get_if<Hello>(&m)) {
      auto reply = handshake(*hello, caps_);
      if (std::holds_alternative<Welcome>(reply)) {
        state_ = State::Established;
        version_ = hello->version;
        out.replies.emplace_back(std::get<Welcome>(reply));
      } else {
        state_ = State::Closed;
        out.replies.emplace_back(std::get<Error>(reply));
        out.close = true;
      }
      return out;
    }
    out.replies.emplace_back(Error{ErrorCode::HandshakeRequired, "HELLO must be the first message"});
    return out;
  }

  if (std::holds_alternative<Hello>(m)) {
    out.replies.emplace_back(Error{ErrorCode::IllegalTransition, "handshake already completed"});
    return out;
  }
  if (!is_client_message(type)) {
    out.replies.emplace_back(Error{ErrorCode::MalformedFrame, "server-to-client message received from client"});
    return out;
  }
  out.forward = m;
  return out;
}

const char* to_string(EventCode code) {
  switch (code) {
    case EventCode::Overflow:
      return "overflow";
    case EventCode::Overbuilt:
      return "overbuilt";
    case EventCode::Stabilized:
      return "stabilized";
    case EventCode::Success:
      return "success";
    case EventCode::SceneLoaded:
      return "scene_loaded";
    case EventCode::FailureRegistered:
      return "failure_registered";
  }
  return "unknown";
}

const char* to_string(ControlVerb verb) {
  switch (verb) {
    case ControlVerb::Start:
      return "start";
    case ControlVerb::Pause:
      return "pause";
    case ControlVerb::Resume:
      return "resume";
    case ControlVerb::Stop:
      return "stop";
    case ControlVerb::Restart:
      return "restart";
    case ControlVerb::SingleStep:
      return "step";
  }
  return "unknown";
}

const char* to_string(EditAction action) {
  switch (action) {
    case EditAction::Empty:
      return "empty";
    case EditAction::SetWall:
      return "set_wall";
    case EditAction::FillWater:
      return "fill_water";
  }
  return "unknown";
}

const char* to_string(ParamTarget target) {
  switch (target) {
    case ParamTarget::Tau:
      return "tau";
    case ParamTarget::GravityX:
      return "gravity_x";
    case ParamTarget::GravityY:
      return "gravity_y";
    case ParamTarget::GravityZ:
      return "gravity_z";
    case ParamTarget::SnapshotCadence:
      return "cadence";
  }
  return "unknown";
}

}  // namespace flowsteer::protocol
