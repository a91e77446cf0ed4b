#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "flowsteer/grid.hpp"

namespace flowsteer::protocol {

inline constexpr std::uint16_t kVersion = 1;
/// Frames announcing more than this are treated as corrupt.
inline constexpr std::uint32_t kMaxFrameLength = 64u << 20;

enum class MessageType : std::uint8_t {
  Hello = 0x01,
  Control = 0x02,
  EditCells = 0x03,
  SetParam = 0x04,
  LoadScene = 0x05,
  SetCadence = 0x06,
  Telemetry = 0x07,
  Welcome = 0x81,
  Snapshot = 0x82,
  Event = 0x83,
  Ack = 0x84,
  Error = 0x85,
};

enum class ControlVerb : std::uint8_t { Start = 0, Pause = 1, Resume = 2, Stop = 3, Restart = 4, SingleStep = 5 };
enum class EditAction : std::uint8_t { Empty = 0, SetWall = 1, FillWater = 2 };
enum class ParamTarget : std::uint8_t { Tau = 0, GravityX = 1, GravityY = 2, GravityZ = 3, SnapshotCadence = 4 };
enum class EventCode : std::uint8_t {
  Overflow = 0,
  Overbuilt = 1,
  Stabilized = 2,
  Success = 3,
  SceneLoaded = 4,
  FailureRegistered = 5,
};
enum class ErrorCode : std::uint8_t {
  MalformedFrame = 0,
  UnknownType = 1,
  VersionMismatch = 2,
  HandshakeRequired = 3,
  OutOfBounds = 4,
  IllegalTransition = 5,
  InvalidParam = 6,
  StabilityFault = 7,
  EditRejected = 8,
  UnknownScene = 9,
  Internal = 10,
};

struct Hello {
  std::uint16_t version{kVersion};
  friend bool operator==(const Hello&, const Hello&) = default;
};
struct Control {
  ControlVerb verb{ControlVerb::Start};
  friend bool operator==(const Control&, const Control&) = default;
};
struct CellEdit {
  std::uint16_t x{0};
  std::uint16_t y{0};
  std::uint16_t z{0};
  EditAction action{EditAction::Empty};
  friend bool operator==(const CellEdit&, const CellEdit&) = default;
};
struct EditCells {
  std::vector<CellEdit> cells;
  friend bool operator==(const EditCells&, const EditCells&) = default;
};
struct SetParam {
  ParamTarget target{ParamTarget::Tau};
  double value{0.0};
  friend bool operator==(const SetParam&, const SetParam&) = default;
};
struct LoadScene {
  std::string name;
  friend bool operator==(const LoadScene&, const LoadScene&) = default;
};
struct SetCadence {
  std::uint32_t cadence{1};
  friend bool operator==(const SetCadence&, const SetCadence&) = default;
};
/// Client-reported activity (camera moves and the like), logged verbatim.
struct Telemetry {
  std::string text;
  friend bool operator==(const Telemetry&, const Telemetry&) = default;
};
struct Welcome {
  std::uint16_t version{kVersion};
  std::uint32_t nx{0};
  std::uint32_t ny{0};
  std::uint32_t nz{0};
  double dx{0.0};
  double dt{0.0};
  friend bool operator==(const Welcome&, const Welcome&) = default;
};
/// One quantized fill byte per cell, x fastest: 255 wall, 0..250 = round(eps * 250).
struct Snapshot {
  std::uint64_t timestep{0};
  std::uint64_t seq{0};
  std::vector<std::uint8_t> cells;
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};
struct Event {
  EventCode code{EventCode::SceneLoaded};
  std::uint64_t timestep{0};
  friend bool operator==(const Event&, const Event&) = default;
};
struct Ack {
  std::uint8_t echo{0};
  friend bool operator==(const Ack&, const Ack&) = default;
};
struct Error {
  ErrorCode code{ErrorCode::Internal};
  std::string message;
  friend bool operator==(const Error&, const Error&) = default;
};

using Message = std::variant<Hello, Control, EditCells, SetParam, LoadScene, SetCadence, Telemetry, Welcome, Snapshot,
                             Event, Ack, Error>;

MessageType type_of(const Message& m);
bool is_client_message(MessageType t);

/// Thrown by encode when a field does not fit its wire width.
class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

/// Full frame: u32 LE length (bytes after itself), type byte, payload.
std::vector<std::uint8_t> encode(const Message& m);
/// Appends the frame for `m` to `out`.
void encode_into(const Message& m, std::vector<std::uint8_t>& out);

enum class DecodeErrorKind : std::uint8_t { MalformedFrame, UnknownType };

struct DecodeError {
  DecodeErrorKind kind{DecodeErrorKind::MalformedFrame};
  std::uint8_t type{0};
  std::string detail;
  friend bool operator==(const DecodeError&, const DecodeError&) = default;
};

using DecodeItem = std::variant<Message, DecodeError>;

struct DecodeResult {
  std::vector<DecodeItem> items;
  /// Bytes forming complete frames; the rest is an incomplete tail.
  std::size_t consumed{0};
};

/// Decodes every complete frame at the front of `bytes`. Errors are reported
/// per frame and decoding continues at the next frame boundary.
DecodeResult decode(std::span<const std::uint8_t> bytes);

/// Decodes a single frame body (type byte + payload, no length prefix).
DecodeItem decode_body(std::span<const std::uint8_t> body);

/// Incremental decoder that keeps the unconsumed tail between calls.
class StreamDecoder {
 public:
  std::vector<DecodeItem> feed(std::span<const std::uint8_t> bytes);
  std::size_t pending() const { return buffer_.size(); }

 private:
  std::vector<std::uint8_t> buffer_;
};

inline constexpr std::uint8_t kWallByte = 255;
inline constexpr std::uint8_t kFullByte = 250;

/// Fill fraction to snapshot byte; negative input (the wall marker) maps to 255.
std::uint8_t quantize_fill(double eps);
/// Snapshot byte to fill fraction; walls and reserved bytes yield nullopt.
std::optional<double> dequantize_fill(std::uint8_t byte);
std::vector<std::uint8_t> quantize_field(std::span<const double> fill);

struct ServerCaps {
  std::uint16_t version{kVersion};
  Dims dims;
  double dx{0.0};
  double dt{0.0};
};

/// WELCOME on an exact version match, ERROR VersionMismatch otherwise.
std::variant<Welcome, Error> handshake(const Hello& hello, const ServerCaps& caps);

/// Server-side connection gate: nothing but HELLO is accepted until the
/// handshake succeeds; a failed handshake closes the session.
class Session {
 public:
  enum class State { AwaitingHello, Established, Closed };

  struct Outcome {
    std::vector<Message> replies;
    std::optional<Message> forward;
    bool close{false};
  };

  explicit Session(ServerCaps caps) : caps_(caps) {}

  State state() const { return state_; }
  std::uint16_t version() const { return version_; }
  const ServerCaps& caps() const { return caps_; }
  void set_caps(const ServerCaps& caps) { caps_ = caps; }

  Outcome on_item(const DecodeItem& item);

 private:
  ServerCaps caps_;
  State state_{State::AwaitingHello};
  std::uint16_t version_{0};
};

const char* to_string(EventCode code);
const char* to_string(ControlVerb verb);
const char* to_string(EditAction action);
const char* to_string(ParamTarget target);

}  // namespace flowsteer::protocol
