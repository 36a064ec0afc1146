#include <gtest/gtest.h>

#include <numeric>
#include <thread>

#include "fspm_bridge/net.hpp"
#include "fspm_bridge/session.hpp"
#include "fspm_bridge/toy_models.hpp"
#include "fspm_bridge/xeg.hpp"

namespace fspm_bridge {
namespace {

const std::filesystem::path kConfig = FSPM_BRIDGE_CONFIG_DIR;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::timeout;
}

/// Serves `sessions` connections of `model` on a free port in the background.
class BackgroundServer {
 public:
  BackgroundServer(TargetModel model, std::size_t sessions = 1, std::size_t frame_cap = kDefaultFrameCap)
      : listener_(Listener::bind(0)), model_(std::move(model)) {
    thread_ = std::thread([this, sessions, frame_cap] {
      logs_ = server_run(listener_, model_, {frame_cap, sessions, &stop_});
    });
  }
  ~BackgroundServer() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }
  BackgroundServer(const BackgroundServer&) = delete;
  BackgroundServer& operator=(const BackgroundServer&) = delete;

  std::uint16_t port() const { return listener_.port(); }
  /// Waits for the server loop to finish and returns its session logs.
  const std::vector<SessionLog>& logs() {
    thread_.join();
    return logs_;
  }

 private:
  Listener listener_;
  TargetModel model_;
  std::atomic<bool> stop_{false};
  std::vector<SessionLog> logs_;
  std::thread thread_;
};

/// A raw scripted client speaking frames directly.
class Script {
 public:
  explicit Script(std::uint16_t port) : socket_(connect_to("127.0.0.1", port, std::chrono::seconds(5))) {}
  Message ask(const Message& m) {
    send_message(socket_, m);
    return reply();
  }
  Message reply() { return recv_message(socket_, {kDefaultFrameCap, Clock::now() + std::chrono::seconds(10)}); }
  void send(const Message& m) { send_message(socket_, m); }
  Socket& socket() { return socket_; }

 private:
  Socket socket_;
};

ExchangeGraph fine_graph(std::uint64_t steps) {
  ExchangeGraph coarse = growth_export(grow(4, steps), false);
  return run_pipeline(coarse, load_pipeline(kConfig / "water_export.pipeline.xml")).graph;
}

void expect_error(const Message& m, Errc code) {
  ASSERT_EQ(m.kind, MessageKind::error) << message_kind_name(m.kind);
  EXPECT_EQ(m.code, errc_name(code)) << m.detail;
}

// Server side -----------------------------------------------------------------------

TEST(Session, RejectedModeKeepsTheSessionOpen) {
  BackgroundServer server(water_model({}));
  {
    Script s(server.port());
    expect_error(s.ask(Message::hello(SessionMode::non_retroactive)), Errc::mode_rejected);
    Message ok = s.ask(Message::hello(SessionMode::retroactive));
    EXPECT_EQ(ok.kind, MessageKind::hello_ok);
    EXPECT_EQ(ok.mode, SessionMode::retroactive);
    expect_error(s.ask(Message::hello(SessionMode::retroactive)), Errc::bad_handshake);
    s.send(Message::bye());
  }
  const auto& logs = server.logs();
  ASSERT_EQ(logs.size(), 1u);
  EXPECT_TRUE(logs[0].said_bye);
  EXPECT_EQ(logs[0].errors, (std::vector<std::string>{"ModeRejected", "BadHandshake"}));
}

TEST(Session, StepBeforeHelloIsBadHandshake) {
  BackgroundServer server(water_model({}));
  Script s(server.port());
  expect_error(s.ask(Message::step(0, {}, fine_graph(1))), Errc::bad_handshake);
  s.send(Message::bye());
}

TEST(Session, TenRetroactiveStepsInOrder) {
  BackgroundServer server(water_model({}));
  {
    Script s(server.port());
    ASSERT_EQ(s.ask(Message::hello(SessionMode::retroactive)).kind, MessageKind::hello_ok);
    for (std::uint64_t i = 0; i < 10; ++i) {
      ExchangeGraph sent = fine_graph(i + 1);
      Message r = s.ask(Message::step(i, {{"temperature", 68.0f}}, sent));
      ASSERT_EQ(r.kind, MessageKind::step_update);
      EXPECT_EQ(r.index, i);
      EXPECT_EQ(r.graph.node_count(), sent.node_count());
    }
    s.send(Message::bye());
  }
  std::vector<std::uint64_t> expected(10);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(server.logs()[0].steps, expected);
}

TEST(Session, OutOfOrderStepIsRejected) {
  BackgroundServer server(water_model({}));
  Script s(server.port());
  s.ask(Message::hello(SessionMode::retroactive));
  expect_error(s.ask(Message::step(1, {}, fine_graph(1))), Errc::out_of_order_step);
  EXPECT_EQ(s.ask(Message::step(0, {}, fine_graph(1))).kind, MessageKind::step_update);
  expect_error(s.ask(Message::step(0, {}, fine_graph(1))), Errc::out_of_order_step);
  s.send(Message::bye());
}

TEST(Session, HandlerFailureAndMalformedInputAreAnswered) {
  BackgroundServer server(water_model({}));
  Script s(server.port());
  s.ask(Message::hello(SessionMode::retroactive));
  // A coarse graph has no internodes for the water model.
  expect_error(s.ask(Message::step(0, {}, growth_export(grow(1, 2), false))), Errc::handler_failure);
  std::string junk = "<message kind=\"wobble\"/>";
  s.socket().send_all(encode_length(static_cast<std::uint32_t>(junk.size())) + junk);
  expect_error(s.reply(), Errc::malformed_message);
  expect_error(s.ask(Message::step_ok(0, "?")), Errc::malformed_message);
  EXPECT_EQ(s.ask(Message::step(0, {}, fine_graph(1))).kind, MessageKind::step_update);
  s.send(Message::bye());
}

TEST(Session, OversizeFrameClosesTheSession) {
  BackgroundServer server(water_model({}), 1, 256);
  Script s(server.port());
  s.ask(Message::hello(SessionMode::retroactive));
  s.send(Message::step(0, {}, fine_graph(3)));
  expect_error(s.reply(), Errc::oversize);
  EXPECT_EQ(code_of([&] { s.reply(); }), Errc::connection_closed);
}

TEST(Session, NonRetroactiveRepliesWithStatus) {
  BackgroundServer server(status_model());
  Script s(server.port());
  s.ask(Message::hello(SessionMode::non_retroactive));
  Message r = s.ask(Message::step(0, {{"temperature", 68.0f}}, fine_graph(1)));
  ASSERT_EQ(r.kind, MessageKind::step_ok);
  // Plant, one metamer and its three parts; one topological, three
  // decomposition and two intra-metamer edges.
  EXPECT_EQ(r.status, "ok: 5 nodes, 6 edges, step env 68");
  s.send(Message::bye());
}

// Client side ------------------------------------------------------------------------

RosterEntry water_entry(std::uint16_t port) {
  RosterEntry e;
  e.port = port;
  e.mode = SessionMode::retroactive;
  e.export_pipeline = load_pipeline(kConfig / "water_export.pipeline.xml");
  e.import_pipeline = load_pipeline(kConfig / "water_import.pipeline.xml");
  return e;
}

ExporterRegistry exporters() {
  ExporterRegistry r;
  register_growth_exporter(r);
  return r;
}

TEST(Client, NonRetroactiveRunLeavesTheSourceUntouched) {
  BackgroundServer server(status_model());
  RosterEntry e;
  e.port = server.port();
  e.mode = SessionMode::non_retroactive;
  e.export_pipeline = load_pipeline(kConfig / "status_export.pipeline.xml");
  GrowthModel model(9);
  RunReport report = client_run({{e}, {{"temperature", 20.0}}}, model, exporters(), 6);
  ASSERT_EQ(report.records.size(), 6u);
  for (std::uint64_t i = 0; i < 6; ++i) {
    EXPECT_EQ(report.records[i].step, i);
    EXPECT_NE(report.records[i].status.find("step env 68"), std::string::npos) << report.records[i].status;
  }
  // Same bytes as a run of the model with no coupling at all.
  EXPECT_EQ(serialize_xeg(growth_export(model.growth_state(), false)), serialize_xeg(growth_export(grow(9, 6), false)));
}

TEST(Client, TwoRetroactiveServersRunInRosterOrder) {
  TargetModel painter;
  painter.name = "painter";
  painter.modes = {SessionMode::retroactive};
  painter.update = [](const ExchangeGraph& g, const EnvMap&) {
    ExchangeGraph out = g;
    for (const auto& n : g.nodes()) {
      if (n.name == "internode") out.mutable_node(n.id).properties["color"] = std::string("red");
    }
    return out;
  };
  BackgroundServer water(water_model({}));
  BackgroundServer paint(painter);
  Roster roster{{water_entry(water.port()), water_entry(paint.port())}, {{"temperature", 20.0}}};
  // The painter's import keeps only the colour.
  roster.servers[1].import_pipeline = parse_pipeline(R"(<pipeline>
    <stage kind="translate_geometry" dictionary="from_target.dictionary.xml"/>
    <stage kind="upscale_properties" scheme="metamer.scheme.xml"><field name="color" op="first"/></stage>
  </pipeline>)", kConfig);

  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  bool painter_saw_pressure = true;
  ClientOptions options;
  options.observer = [&](const StepExchange& x) {
    order.emplace_back(x.step, x.server);
    if (x.server == 1) {
      for (const auto& n : x.sent->nodes()) {
        if (n.type_name == "Metamer" && !n.properties.contains("pressure")) painter_saw_pressure = false;
      }
    }
  };
  GrowthModel model(2);
  RunReport report = client_run(roster, model, exporters(), 3, options);
  EXPECT_EQ(order, (std::vector<std::pair<std::uint64_t, std::size_t>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1}}));
  EXPECT_TRUE(painter_saw_pressure);
  for (const auto& m : model.growth_state().metamers) {
    EXPECT_EQ(m.color, "red");
    EXPECT_TRUE(m.extra.contains("pressure"));
  }
  EXPECT_EQ(report.records.size(), 6u);
}

TEST(Client, ModeRejectedAbortsTheRun) {
  BackgroundServer server(water_model({}));
  RosterEntry e = water_entry(server.port());
  e.mode = SessionMode::non_retroactive;
  GrowthModel model(1);
  EXPECT_EQ(code_of([&] { client_run({{e}, {}}, model, exporters(), 2); }), Errc::mode_rejected);
}

TEST(Client, WrongReplyIndexIsDetected) {
  Listener listener = Listener::bind(0);
  std::thread liar([&] {
    auto socket = listener.accept(std::chrono::seconds(5));
    if (!socket) return;
    try {
      Message hello = recv_message(*socket);
      send_message(*socket, Message::hello_ok(hello.mode));
      Message step = recv_message(*socket);
      send_message(*socket, Message::step_update(step.index + 5, step.graph));
      recv_message(*socket);
    } catch (const Error&) {
      // The client hangs up once it notices the mismatch.
    }
  });
  GrowthModel model(1);
  EXPECT_EQ(code_of([&] { client_run({{water_entry(listener.port())}, {}}, model, exporters(), 2); }),
            Errc::step_index_mismatch);
  liar.join();
}

TEST(Client, UnreachableServer) {
  std::uint16_t port = 0;
  {
    Listener l = Listener::bind(0);
    port = l.port();
  }
  GrowthModel model(1);
  EXPECT_EQ(code_of([&] { client_run({{water_entry(port)}, {}}, model, exporters(), 1); }), Errc::connect_refused);
}

TEST(Client, RosterFile) {
  Roster r = load_roster(kConfig / "example.roster.xml");
  ASSERT_EQ(r.servers.size(), 2u);
  EXPECT_EQ(r.servers[0].port, 5701);
  EXPECT_EQ(r.servers[1].mode, SessionMode::non_retroactive);
  EXPECT_EQ(std::get<double>(r.env.at("temperature")), 20.0);
  EXPECT_EQ(code_of([] { parse_roster("<roster><server port=\"70000\"/></roster>", kConfig); }), Errc::schema_error);
}

}  // namespace
}  // namespace fspm_bridge
