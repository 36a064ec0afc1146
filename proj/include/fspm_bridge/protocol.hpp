#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "fspm_bridge/exchange_graph.hpp"

// Wire format: every frame is a 4-byte big-endian payload length followed by
// one UTF-8 XML <message> element.
//
//   <message kind="hello" mode="retroactive"/>
//   <message kind="step" index="0">
//     <env>
//       <var name="temperature" type="double" value="20"/>
//     </env>
//     <graph root="1" version="1.0">...</graph>
//   </message>
//   <message kind="step_ok" index="0" status="..."/>
//   <message kind="error" code="OutOfOrderStep" detail="..."/>
namespace fspm_bridge {

enum class SessionMode { retroactive, non_retroactive };

std::string_view mode_name(SessionMode mode) noexcept;
std::optional<SessionMode> parse_mode(std::string_view name) noexcept;

enum class MessageKind { hello, hello_ok, step, step_ok, step_update, error, bye };

std::string_view message_kind_name(MessageKind kind) noexcept;
std::optional<MessageKind> parse_message_kind(std::string_view name) noexcept;

struct Message {
  MessageKind kind = MessageKind::bye;
  SessionMode mode = SessionMode::retroactive;  // hello, hello_ok
  std::uint64_t index = 0;                      // step, step_ok, step_update
  EnvMap env;                                   // step
  ExchangeGraph graph;                          // step, step_update
  std::string status;                           // step_ok
  std::string code;                             // error: an error-code name
  std::string detail;                           // error

  static Message hello(SessionMode mode);
  static Message hello_ok(SessionMode mode);
  static Message step(std::uint64_t index, EnvMap env, ExchangeGraph graph);
  static Message step_ok(std::uint64_t index, std::string status);
  static Message step_update(std::uint64_t index, ExchangeGraph graph);
  static Message error(Errc code, std::string detail);
  static Message bye();
};

/// Field-wise equality of the fields the kind carries; graphs compared with
/// canonical_equal at tolerance 0.
bool messages_equal(const Message& a, const Message& b);

inline constexpr std::size_t kDefaultFrameCap = std::size_t{256} << 20;

/// XML payload without framing. Throws InvalidGraph for unserializable graphs.
std::string encode_message(const Message& message);
/// Throws MalformedMessage.
Message decode_message(std::string_view payload);

/// Throws Oversize when the payload exceeds `cap`.
std::string encode_frame(const Message& message, std::size_t cap = kDefaultFrameCap);

/// Big-endian length prefix helpers.
std::string encode_length(std::uint32_t length);
std::uint32_t decode_length(std::string_view four_bytes);

struct DecodedFrame {
  Message message;
  std::size_t consumed = 0;
};

/// Decodes the frame at the start of `bytes`, consuming exactly 4 + length
/// bytes. Throws Truncated, Oversize, MalformedMessage.
DecodedFrame decode_frame(std::string_view bytes, std::size_t cap = kDefaultFrameCap);

}  // namespace fspm_bridge
