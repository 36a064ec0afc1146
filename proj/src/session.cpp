#include "fspm_bridge/session.hpp"

#include <algorithm>
#include <charconv>

#include <spdlog/spdlog.h>

#include "fspm_bridge/io.hpp"
#include "fspm_bridge/xeg.hpp"

namespace fspm_bridge {

bool TargetModel::supports(SessionMode mode) const {
  return std::find(modes.begin(), modes.end(), mode) != modes.end();
}

namespace {

void reply_error(Socket& socket, SessionLog& log, Errc code, const std::string& detail, std::size_t cap) {
  spdlog::warn("session error {}: {}", errc_name(code), detail);
  log.errors.emplace_back(errc_name(code));
  send_message(socket, Message::error(code, detail), {cap, std::nullopt});
}

}  // namespace

SessionLog serve_session(Socket& socket, const TargetModel& model, std::size_t frame_cap) {
  SessionLog log;
  std::uint64_t expected = 0;
  const FrameIo io{frame_cap, std::nullopt};
  for (;;) {
    Message msg;
    try {
      msg = recv_message(socket, io);
    } catch (const Error& e) {
      if (e.code() != Errc::malformed_message && e.code() != Errc::oversize) {
        spdlog::info("session ended: {}", e.what());
        return log;
      }
      try {
        reply_error(socket, log, e.code(), e.detail(), frame_cap);
      } catch (const Error&) {
        return log;
      }
      // After an oversize header the stream position is lost.
      if (e.code() == Errc::oversize) return log;
      continue;
    }

    try {
      if (msg.kind == MessageKind::bye) {
        log.said_bye = true;
        return log;
      }
      if (!log.mode) {
        if (msg.kind != MessageKind::hello) {
          reply_error(socket, log, Errc::bad_handshake,
                      "expected hello, got " + std::string(message_kind_name(msg.kind)), frame_cap);
        } else if (!model.supports(msg.mode)) {
          reply_error(socket, log, Errc::mode_rejected,
                      model.name + " does not support " + std::string(mode_name(msg.mode)) + " sessions", frame_cap);
        } else {
          log.mode = msg.mode;
          send_message(socket, Message::hello_ok(msg.mode), io);
          spdlog::info("session open, mode {}", mode_name(msg.mode));
        }
        continue;
      }
      if (msg.kind == MessageKind::hello) {
        reply_error(socket, log, Errc::bad_handshake, "session already established", frame_cap);
        continue;
      }
      if (msg.kind != MessageKind::step) {
        reply_error(socket, log, Errc::malformed_message,
                    "unexpected " + std::string(message_kind_name(msg.kind)) + " from client", frame_cap);
        continue;
      }
      if (msg.index != expected) {
        reply_error(socket, log, Errc::out_of_order_step,
                    "expected step " + std::to_string(expected) + ", got " + std::to_string(msg.index), frame_cap);
        continue;
      }

      Message response;
      try {
        if (*log.mode == SessionMode::retroactive) {
          ExchangeGraph updated = model.update(msg.graph, msg.env);
          require_valid(updated, Errc::invalid_graph, "handler result");
          response = Message::step_update(msg.index, std::move(updated));
        } else {
          response = Message::step_ok(msg.index, model.status(msg.graph, msg.env));
        }
      } catch (const std::exception& e) {
        reply_error(socket, log, Errc::handler_failure, e.what(), frame_cap);
        continue;
      }
      send_message(socket, response, io);
      log.steps.push_back(msg.index);
      ++expected;
    } catch (const Error& e) {
      // The reply could not be written; the peer is gone.
      spdlog::info("session ended while replying: {}", e.what());
      return log;
    }
  }
}

std::vector<SessionLog> server_run(Listener& listener, const TargetModel& model, const ServerOptions& options) {
  std::vector<SessionLog> logs;
  while (options.max_sessions == 0 || logs.size() < options.max_sessions) {
    if (options.stop != nullptr && options.stop->load()) break;
    auto socket = listener.accept(std::chrono::milliseconds(100));
    if (!socket) continue;
    logs.push_back(serve_session(*socket, model, options.frame_cap));
  }
  return logs;
}

// ---------------------------------------------------------------------------
// Roster

namespace {

[[noreturn]] void roster_fail(const xml::Element& el, const std::string& what) {
  throw Error(Errc::schema_error, "<" + el.name + "> at " + el.position() + ": " + what);
}

PipelineConfig optional_pipeline(const xml::Element& el, std::string_view attr, const std::filesystem::path& base) {
  const std::string* p = el.attribute(attr);
  if (p == nullptr || p->empty()) return {};
  std::filesystem::path path(*p);
  return load_pipeline(path.is_absolute() ? path : base / path);
}

}  // namespace

Roster parse_roster(std::string_view text, const std::filesystem::path& base_dir) {
  xml::Element root = xml::parse(text);
  if (root.name != "roster") roster_fail(root, "expected <roster> root element");
  check_attributes(root, {}, false, nullptr);
  Roster roster;
  for (const auto& child : root.children) {
    if (child.name == "server") {
      check_attributes(child, {"address", "port", "mode", "export", "import"}, false, nullptr);
      RosterEntry entry;
      if (const std::string* a = child.attribute("address")) entry.address = *a;
      const std::string& port = required_attribute(child, "port");
      unsigned value = 0;
      auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
      if (ec != std::errc{} || ptr != port.data() + port.size() || value == 0 || value > 65535) {
        roster_fail(child, "bad port '" + port + "'");
      }
      entry.port = static_cast<std::uint16_t>(value);
      const std::string& mode = required_attribute(child, "mode");
      auto parsed = parse_mode(mode);
      if (!parsed) roster_fail(child, "unknown mode '" + mode + "'");
      entry.mode = *parsed;
      entry.export_pipeline = optional_pipeline(child, "export", base_dir);
      entry.import_pipeline = optional_pipeline(child, "import", base_dir);
      roster.servers.push_back(std::move(entry));
    } else if (child.name == "env") {
      check_attributes(child, {}, false, nullptr);
      for (const auto& var : child.children) {
        if (var.name != "var") roster_fail(var, "expected <var>");
        check_attributes(var, {"name", "type", "value"}, false, nullptr);
        auto [name, value] = property_from_element(var);
        roster.env[name] = std::move(value);
      }
    } else {
      roster_fail(child, "unknown element");
    }
  }
  if (roster.servers.empty()) roster_fail(root, "roster lists no servers");
  return roster;
}

Roster load_roster(const std::filesystem::path& path) {
  std::string text = read_file(path);
  try {
    return parse_roster(text, path.parent_path());
  } catch (const Error& e) {
    if (e.code() == Errc::io_error) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

// ---------------------------------------------------------------------------
// Client

namespace {

[[noreturn]] void server_error(std::size_t server, const Message& reply) {
  auto code = parse_errc(reply.code);
  std::string text = "server " + std::to_string(server) + " replied " + reply.code + ": " + reply.detail;
  if (code == Errc::mode_rejected) throw Error(Errc::mode_rejected, text);
  throw Error(Errc::server_error, text);
}

}  // namespace

RunReport client_run(const Roster& roster, SourceModel& model, const ExporterRegistry& exporters,
                     std::uint64_t steps, const ClientOptions& options) {
  RunReport report;
  std::vector<Socket> sockets;
  sockets.reserve(roster.servers.size());

  for (std::size_t i = 0; i < roster.servers.size(); ++i) {
    const RosterEntry& entry = roster.servers[i];
    Socket s = connect_to(entry.address, entry.port, options.timeout);
    FrameIo io{options.frame_cap, Clock::now() + options.timeout};
    send_message(s, Message::hello(entry.mode), io);
    Message reply = recv_message(s, io);
    if (reply.kind == MessageKind::error) server_error(i, reply);
    if (reply.kind != MessageKind::hello_ok || reply.mode != entry.mode) {
      throw Error(Errc::bad_handshake, "server " + std::to_string(i) + " answered hello with " +
                                           std::string(message_kind_name(reply.kind)));
    }
    sockets.push_back(std::move(s));
  }

  for (std::uint64_t step = 0; step < steps; ++step) {
    model.advance();
    EnvMap env = options.env_schedule ? options.env_schedule(step) : roster.env;
    for (std::size_t i = 0; i < roster.servers.size(); ++i) {
      const RosterEntry& entry = roster.servers[i];
      auto start = Clock::now();
      FrameIo io{options.frame_cap, start + options.timeout};

      ExchangeGraph graph = export_to_eg(model.state(), exporters);
      PipelineResult outbound = run_pipeline(graph, entry.export_pipeline, env);
      Message request = Message::step(step, std::move(outbound.env), std::move(outbound.graph));
      send_message(sockets[i], request, io);
      Message reply = recv_message(sockets[i], io);

      if (reply.kind == MessageKind::error) server_error(i, reply);
      MessageKind expected =
          entry.mode == SessionMode::retroactive ? MessageKind::step_update : MessageKind::step_ok;
      if (reply.kind != expected) {
        throw Error(Errc::malformed_message, "server " + std::to_string(i) + " sent " +
                                                 std::string(message_kind_name(reply.kind)) + " in a " +
                                                 std::string(mode_name(entry.mode)) + " session");
      }
      if (reply.index != step) {
        throw Error(Errc::step_index_mismatch, "server " + std::to_string(i) + " answered step " +
                                                   std::to_string(reply.index) + " to step " + std::to_string(step));
      }
      StepRecord record{step, i, 0.0, reply.status};
      for (auto& l : outbound.log) report.stage_logs.push_back(std::move(l));
      if (entry.mode == SessionMode::retroactive) {
        PipelineResult inbound = run_pipeline(reply.graph, entry.import_pipeline, env);
        model.install(inbound.graph);
        record.status = "updated";
        if (options.observer) options.observer({step, i, &request.graph, &reply.graph, &inbound.graph});
        for (auto& l : inbound.log) report.stage_logs.push_back(std::move(l));
      }
      if (options.observer && entry.mode == SessionMode::non_retroactive) {
        options.observer({step, i, &request.graph, nullptr, nullptr});
      }
      record.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      spdlog::debug("step {} server {}: {} in {:.2f} ms", step, i, record.status, record.latency_ms);
      report.records.push_back(std::move(record));
    }
  }

  for (auto& s : sockets) {
    try {
      send_message(s, Message::bye(), {options.frame_cap, Clock::now() + options.timeout});
    } catch (const Error& e) {
      spdlog::warn("bye not delivered: {}", e.what());
    }
  }
  return report;
}

}  // namespace fspm_bridge
