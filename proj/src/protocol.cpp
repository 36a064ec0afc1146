#include "fspm_bridge/protocol.hpp"

#include <charconv>

#include "fspm_bridge/xeg.hpp"
#include "fspm_bridge/xml.hpp"

namespace fspm_bridge {

std::string_view mode_name(SessionMode mode) noexcept {
  return mode == SessionMode::retroactive ? "retroactive" : "non_retroactive";
}

std::optional<SessionMode> parse_mode(std::string_view name) noexcept {
  if (name == "retroactive") return SessionMode::retroactive;
  if (name == "non_retroactive") return SessionMode::non_retroactive;
  return std::nullopt;
}

namespace {

constexpr std::string_view kKindNames[] = {"hello",       "hello_ok", "step", "step_ok",
                                           "step_update", "error",    "bye"};

[[noreturn]] void malformed(const std::string& what) { throw Error(Errc::malformed_message, what); }

const std::string& need(const xml::Element& el, std::string_view name) {
  if (const std::string* v = el.attribute(name)) return *v;
  malformed("message lacks attribute '" + std::string(name) + "'");
}

std::uint64_t parse_index(const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    malformed("bad step index '" + text + "'");
  }
  return v;
}

void only_attributes(const xml::Element& el, std::initializer_list<std::string_view> allowed) {
  try {
    check_attributes(el, allowed, false, nullptr);
  } catch (const Error& e) {
    malformed(e.detail());
  }
}

}  // namespace

std::string_view message_kind_name(MessageKind kind) noexcept { return kKindNames[static_cast<int>(kind)]; }

std::optional<MessageKind> parse_message_kind(std::string_view name) noexcept {
  for (int i = 0; i < 7; ++i) {
    if (kKindNames[i] == name) return static_cast<MessageKind>(i);
  }
  return std::nullopt;
}

Message Message::hello(SessionMode mode) {
  Message m;
  m.kind = MessageKind::hello;
  m.mode = mode;
  return m;
}

Message Message::hello_ok(SessionMode mode) {
  Message m;
  m.kind = MessageKind::hello_ok;
  m.mode = mode;
  return m;
}

Message Message::step(std::uint64_t index, EnvMap env, ExchangeGraph graph) {
  Message m;
  m.kind = MessageKind::step;
  m.index = index;
  m.env = std::move(env);
  m.graph = std::move(graph);
  return m;
}

Message Message::step_ok(std::uint64_t index, std::string status) {
  Message m;
  m.kind = MessageKind::step_ok;
  m.index = index;
  m.status = std::move(status);
  return m;
}

Message Message::step_update(std::uint64_t index, ExchangeGraph graph) {
  Message m;
  m.kind = MessageKind::step_update;
  m.index = index;
  m.graph = std::move(graph);
  return m;
}

Message Message::error(Errc code, std::string detail) {
  Message m;
  m.kind = MessageKind::error;
  m.code = std::string(errc_name(code));
  m.detail = std::move(detail);
  return m;
}

Message Message::bye() { return Message{}; }

bool messages_equal(const Message& a, const Message& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case MessageKind::hello:
    case MessageKind::hello_ok:
      return a.mode == b.mode;
    case MessageKind::step: {
      if (a.index != b.index || a.env.size() != b.env.size()) return false;
      for (const auto& [name, value] : a.env) {
        auto it = b.env.find(name);
        if (it == b.env.end() || !values_equal(value, it->second, FloatTolerance::exact())) return false;
      }
      return canonical_equal(a.graph, b.graph, FloatTolerance::exact()).equal;
    }
    case MessageKind::step_ok:
      return a.index == b.index && a.status == b.status;
    case MessageKind::step_update:
      return a.index == b.index && canonical_equal(a.graph, b.graph, FloatTolerance::exact()).equal;
    case MessageKind::error:
      return a.code == b.code && a.detail == b.detail;
    case MessageKind::bye:
      return true;
  }
  return false;
}

std::string encode_message(const Message& m) {
  std::string out;
  xml::AttributeList attrs{{"kind", std::string(message_kind_name(m.kind))}};
  switch (m.kind) {
    case MessageKind::hello:
    case MessageKind::hello_ok:
      attrs.emplace_back("mode", std::string(mode_name(m.mode)));
      xml::write_start(out, 0, "message", attrs, true);
      break;
    case MessageKind::step:
      attrs.emplace_back("index", std::to_string(m.index));
      xml::write_start(out, 0, "message", attrs, false);
      xml::write_start(out, 1, "env", {}, m.env.empty());
      for (const auto& [name, value] : m.env) write_property_element(out, 2, "var", name, value);
      if (!m.env.empty()) xml::write_end(out, 1, "env");
      write_graph_element(out, m.graph, 1);
      xml::write_end(out, 0, "message");
      break;
    case MessageKind::step_ok:
      attrs.emplace_back("index", std::to_string(m.index));
      attrs.emplace_back("status", m.status);
      xml::write_start(out, 0, "message", attrs, true);
      break;
    case MessageKind::step_update:
      attrs.emplace_back("index", std::to_string(m.index));
      xml::write_start(out, 0, "message", attrs, false);
      write_graph_element(out, m.graph, 1);
      xml::write_end(out, 0, "message");
      break;
    case MessageKind::error:
      attrs.emplace_back("code", m.code);
      attrs.emplace_back("detail", m.detail);
      xml::write_start(out, 0, "message", attrs, true);
      break;
    case MessageKind::bye:
      xml::write_start(out, 0, "message", attrs, true);
      break;
  }
  return out;
}

Message decode_message(std::string_view payload) {
  xml::Element root;
  try {
    root = xml::parse(payload);
  } catch (const Error& e) {
    malformed(e.detail());
  }
  if (root.name != "message") malformed("expected <message>, got <" + root.name + ">");
  const std::string& kind_text = need(root, "kind");
  auto kind = parse_message_kind(kind_text);
  if (!kind) malformed("unknown message kind '" + kind_text + "'");

  Message m;
  m.kind = *kind;
  auto no_children = [&] {
    if (!root.children.empty()) malformed("<message kind=\"" + kind_text + "\"> takes no children");
  };
  auto read_graph = [&](const xml::Element& el) {
    try {
      m.graph = graph_from_element(el, XegParseOptions{}, nullptr);
    } catch (const Error& e) {
      malformed(std::string(errc_name(e.code())) + " in embedded graph: " + e.detail());
    }
  };

  switch (m.kind) {
    case MessageKind::hello:
    case MessageKind::hello_ok: {
      only_attributes(root, {"kind", "mode"});
      no_children();
      const std::string& mode = need(root, "mode");
      auto parsed = parse_mode(mode);
      if (!parsed) malformed("unknown mode '" + mode + "'");
      m.mode = *parsed;
      break;
    }
    case MessageKind::step: {
      only_attributes(root, {"kind", "index"});
      m.index = parse_index(need(root, "index"));
      if (root.children.size() != 2 || root.children[0].name != "env" || root.children[1].name != "graph") {
        malformed("step message needs exactly <env> then <graph>");
      }
      const xml::Element& env = root.children[0];
      only_attributes(env, {});
      for (const auto& var : env.children) {
        if (var.name != "var") malformed("unexpected <" + var.name + "> in <env>");
        only_attributes(var, {"name", "type", "value"});
        try {
          auto [name, value] = property_from_element(var);
          if (!m.env.emplace(name, std::move(value)).second) malformed("duplicate env var '" + name + "'");
        } catch (const Error& e) {
          if (e.code() == Errc::malformed_message) throw;
          malformed(e.detail());
        }
      }
      read_graph(root.children[1]);
      break;
    }
    case MessageKind::step_ok:
      only_attributes(root, {"kind", "index", "status"});
      no_children();
      m.index = parse_index(need(root, "index"));
      m.status = need(root, "status");
      break;
    case MessageKind::step_update:
      only_attributes(root, {"kind", "index"});
      m.index = parse_index(need(root, "index"));
      if (root.children.size() != 1 || root.children[0].name != "graph") {
        malformed("step_update message needs exactly one <graph>");
      }
      read_graph(root.children[0]);
      break;
    case MessageKind::error:
      only_attributes(root, {"kind", "code", "detail"});
      no_children();
      m.code = need(root, "code");
      if (m.code.empty()) malformed("empty error code");
      m.detail = need(root, "detail");
      break;
    case MessageKind::bye:
      only_attributes(root, {"kind"});
      no_children();
      break;
  }
  return m;
}

std::string encode_length(std::uint32_t length) {
  std::string out(4, '\0');
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((length >> (24 - 8 * i)) & 0xFF);
  return out;
}

std::uint32_t decode_length(std::string_view four_bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(four_bytes[i]);
  return v;
}

std::string encode_frame(const Message& message, std::size_t cap) {
  std::string payload = encode_message(message);
  if (payload.size() > cap || payload.size() > UINT32_MAX) {
    throw Error(Errc::oversize, "payload of " + std::to_string(payload.size()) + " bytes exceeds the frame cap");
  }
  return encode_length(static_cast<std::uint32_t>(payload.size())) + payload;
}

DecodedFrame decode_frame(std::string_view bytes, std::size_t cap) {
  if (bytes.size() < 4) throw Error(Errc::truncated, "stream ended inside the length prefix");
  std::uint32_t length = decode_length(bytes.substr(0, 4));
  if (length > cap) throw Error(Errc::oversize, "frame length " + std::to_string(length) + " exceeds the cap");
  if (bytes.size() - 4 < length) throw Error(Errc::truncated, "stream ended inside the payload");
  return {decode_message(bytes.substr(4, length)), 4 + static_cast<std::size_t>(length)};
}

}  // namespace fspm_bridge
