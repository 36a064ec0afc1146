#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "CLI11.hpp"
#include "fspm_bridge/io.hpp"
#include "fspm_bridge/session.hpp"
#include "fspm_bridge/toy_models.hpp"
#include "fspm_bridge/xeg.hpp"

extern char** environ;

namespace fspm_bridge::cli {

namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

/// Input phase failures exit 3, work phase failures exit 4.
class Failure {
 public:
  Failure(int code, std::string message) : code_(code), message_(std::move(message)) {}
  int code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  int code_;
  std::string message_;
};

template <typename F>
auto load(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Failure(kInputError, e.what());
  }
}

template <typename F>
auto work(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Failure(kRuntimeError, e.what());
  }
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    load([&] { write_file(path, text); });
  }
}

std::string report_tsv(const RunReport& report) {
  std::ostringstream s;
  s << "step\tserver\tlatency_ms\tstatus\n";
  for (const auto& r : report.records) {
    s << r.step << '\t' << r.server << '\t' << format_double(r.latency_ms) << '\t' << r.status << '\n';
  }
  return s.str();
}

void print_warnings(const std::vector<StageLog>& logs, std::ostream& err) {
  for (const auto& l : logs) {
    for (const auto& w : l.warnings) err << "warning: " << l.stage << ": " << w << '\n';
  }
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string input;
  std::string pipeline;
  std::string output;
  bool lenient = false;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out, std::ostream& err) {
  XegDocument doc = load([&] { return parse_xeg_document(read_file(a.input), {a.lenient, true}); });
  for (const auto& w : doc.warnings) err << "warning: " << w << '\n';
  PipelineConfig config;
  if (!a.pipeline.empty()) config = load([&] { return load_pipeline(a.pipeline); });
  PipelineResult result = work([&] { return run_pipeline(doc.graph, config); });
  print_warnings(result.log, err);
  write_output(a.output, work([&] { return serialize_xeg(result.graph); }), out);
  return kOk;
}

int cmd_validate(const std::string& path, bool lenient, std::ostream& out, std::ostream& err) {
  XegDocument doc = load([&] { return parse_xeg_document(read_file(path), {lenient, false}); });
  for (const auto& w : doc.warnings) err << "warning: " << w << '\n';
  auto report = validate(doc.graph);
  for (const auto& v : report) out << violation_name(v.kind) << ": " << v.message << '\n';
  return report.empty() ? kOk : kDifference;
}

int cmd_diff(const std::string& a, const std::string& b, double tol, std::ostream& out) {
  ExchangeGraph ga = load([&] { return parse_xeg(read_file(a)); });
  ExchangeGraph gb = load([&] { return parse_xeg(read_file(b)); });
  Comparison c = work([&] { return canonical_equal(ga, gb, FloatTolerance::relative(tol)); });
  if (c.equal) return kOk;
  out << c.difference << '\n';
  return kDifference;
}

struct ServeArgs {
  int port = 0;
  std::string model = "water";
  WaterParams water;
  bool once = false;
  std::string port_file;
};

int cmd_serve(const ServeArgs& a, std::ostream& err) {
  TargetModel model = load([&] { return a.model == "water" ? water_model(a.water) : status_model(); });
  Listener listener = work([&] { return Listener::bind(static_cast<std::uint16_t>(a.port)); });
  err << "serving " << model.name << " model on port " << listener.port() << '\n';
  if (!a.port_file.empty()) {
    std::string tmp = a.port_file + ".tmp";
    load([&] { write_file(tmp, std::to_string(listener.port()) + "\n"); });
    fs::rename(tmp, a.port_file);
  }
  g_stop.store(false);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  ServerOptions options;
  options.max_sessions = a.once ? 1 : 0;
  options.stop = &g_stop;
  auto logs = work([&] { return server_run(listener, model, options); });
  for (const auto& l : logs) {
    err << "session: " << l.steps.size() << " steps, " << l.errors.size() << " errors"
        << (l.said_bye ? ", closed by bye" : "") << '\n';
  }
  return kOk;
}

struct RunArgs {
  std::string roster;
  std::uint64_t steps = 1;
  std::uint64_t seed = 1;
  std::string output;
  std::string report;
  double timeout_s = 30.0;
};

ClientOptions client_options(double timeout_s) {
  ClientOptions o;
  o.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000.0));
  return o;
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  Roster roster = load([&] { return load_roster(a.roster); });
  GrowthModel model(a.seed);
  ExporterRegistry exporters;
  register_growth_exporter(exporters);
  RunReport report = work([&] { return client_run(roster, model, exporters, a.steps, client_options(a.timeout_s)); });
  print_warnings(report.stage_logs, err);
  write_output(a.output, serialize_xeg(growth_export(model.growth_state())), out);
  if (!a.report.empty()) write_output(a.report, report_tsv(report), out);
  return kOk;
}

// ---------------------------------------------------------------------------
// demo-roundtrip

struct DemoArgs {
  std::uint64_t steps = 5;
  std::uint64_t seed = 1;
  WaterParams water;
  int client_port = 0;
  std::string config_dir = FSPM_BRIDGE_CONFIG_DIR;
  std::string out_dir;
  std::string server_exe = "/proc/self/exe";
  double timeout_s = 30.0;
};

/// A child process running `serve --once`; killed if still alive on scope exit.
class ServerProcess {
 public:
  ServerProcess(const DemoArgs& a, const fs::path& port_file) {
    std::vector<std::string> args{a.server_exe,
                                  "serve",
                                  "--port",
                                  "0",
                                  "--model",
                                  "water",
                                  "--once",
                                  "--port-file",
                                  port_file.string(),
                                  "--base-pressure",
                                  format_double(a.water.base_pressure),
                                  "--loss-per-node",
                                  format_double(a.water.loss_per_node)};
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    argv.push_back(nullptr);
    if (posix_spawn(&pid_, a.server_exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
      throw Failure(kRuntimeError, "cannot start server process " + a.server_exe);
    }
  }
  ServerProcess(const ServerProcess&) = delete;
  ServerProcess& operator=(const ServerProcess&) = delete;
  ~ServerProcess() {
    if (pid_ <= 0) return;
    ::kill(pid_, SIGTERM);
    wait();
  }

  /// Port written by the server, waiting at most `timeout`.
  std::uint16_t await_port(const fs::path& port_file, std::chrono::milliseconds timeout) {
    auto deadline = Clock::now() + timeout;
    while (Clock::now() < deadline) {
      std::ifstream in(port_file);
      unsigned port = 0;
      if (in >> port && port != 0) return static_cast<std::uint16_t>(port);
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = 0;
        throw Failure(kRuntimeError, "server process exited before listening");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    throw Failure(kRuntimeError, "server process did not start listening in time");
  }

  int wait() {
    int status = 0;
    if (pid_ > 0 && ::waitpid(pid_, &status, 0) == pid_) pid_ = 0;
    return status;
  }

 private:
  pid_t pid_ = 0;
};

/// Directory removed with everything in it when the scope ends.
struct TempDir {
  explicit TempDir(fs::path p) : path(std::move(p)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path path;
};

/// Growth model that remembers its own export just before each install.
class RecordingModel : public GrowthModel {
 public:
  using GrowthModel::GrowthModel;
  void install(const ExchangeGraph& graph) override {
    before_ = growth_export(growth_state());
    GrowthModel::install(graph);
  }
  const ExchangeGraph& before() const { return before_; }

 private:
  ExchangeGraph before_;
};

double expected_pressure(const WaterParams& w, std::uint64_t depth) {
  return w.base_pressure - w.loss_per_node * static_cast<double>(depth);
}

int cmd_demo(const DemoArgs& a, std::ostream& out, std::ostream& err) {
  auto started = Clock::now();
  fs::path dir = a.config_dir;
  RosterEntry entry;
  entry.mode = SessionMode::retroactive;
  entry.export_pipeline = load([&] { return load_pipeline(dir / "water_export.pipeline.xml"); });
  entry.import_pipeline = load([&] { return load_pipeline(dir / "water_import.pipeline.xml"); });
  Roster roster{{entry}, {{"temperature", 20.0}}};

  TempDir tmp(fs::temp_directory_path() / ("fspm_bridge_demo_" + std::to_string(::getpid())));
  fs::path port_file = tmp.path / "port";

  // With --client-port the server is expected to be running already.
  std::optional<ServerProcess> server;
  if (a.client_port > 0) {
    roster.servers[0].port = static_cast<std::uint16_t>(a.client_port);
  } else {
    server.emplace(a, port_file);
    roster.servers[0].port = server->await_port(port_file, std::chrono::seconds(5));
  }

  RecordingModel model(a.seed);
  ExporterRegistry exporters;
  register_growth_exporter(exporters);
  std::vector<std::string> failures;
  auto fail = [&](std::uint64_t step, const std::string& what) {
    if (failures.size() < 10) failures.push_back("step " + std::to_string(step) + ": " + what);
  };

  ClientOptions options = client_options(a.timeout_s);
  options.observer = [&](const StepExchange& x) {
    if (x.received->node_count() != x.sent->node_count() || x.received->edge_count() != x.sent->edge_count()) {
      fail(x.step, "server changed the node/edge census");
    }
    for (const GraphNode& n : x.received->nodes()) {
      if (n.name != "internode" || n.scale == 0) continue;
      auto color = n.properties.find("color");
      if (color == n.properties.end() || !values_equal(color->second, std::string("green"), FloatTolerance::exact())) {
        fail(x.step, "internode " + std::to_string(n.id.value) + " is not green");
      }
      auto p = n.properties.find("pressure");
      if (p == n.properties.end() ||
          !values_equal(p->second, expected_pressure(a.water, fine_depth(*x.sent, n.id)), FloatTolerance::exact())) {
        fail(x.step, "internode " + std::to_string(n.id.value) + " has the wrong pressure");
      }
    }
    ExchangeGraph expected = model.before();
    for (const GraphNode& n : model.before().nodes()) {
      if (n.type_name != "Metamer") continue;
      GraphNode& m = expected.mutable_node(n.id);
      m.properties["color"] = std::string("green");
      m.properties["pressure"] = expected_pressure(a.water, fine_depth(expected, n.id));
    }
    Comparison c = canonical_equal(expected, *x.installed, FloatTolerance::exact());
    if (!c.equal) fail(x.step, "installed graph differs from the expected update: " + c.difference);
  };

  RunReport report = work([&] { return client_run(roster, model, exporters, a.steps, options); });
  if (server) server->wait();

  const auto& state = model.growth_state();
  for (const auto& m : state.metamers) {
    if (m.color != "green") fail(a.steps, "metamer " + std::to_string(m.index) + " is " + m.color);
  }
  if (report.records.size() != a.steps) fail(a.steps, "missing step records");

  if (!a.out_dir.empty()) {
    load([&] {
      fs::create_directories(a.out_dir);
      write_file(fs::path(a.out_dir) / "final.xeg", serialize_xeg(growth_export(state)));
      write_file(fs::path(a.out_dir) / "report.tsv", report_tsv(report));
    });
  }
  double seconds = std::chrono::duration<double>(Clock::now() - started).count();
  err << "demo-roundtrip: " << a.steps << " steps, " << state.metamers.size() << " metamers, " << seconds
      << " s\n";
  if (failures.empty()) {
    out << "PASS\n";
    return kOk;
  }
  out << "FAIL\n";
  for (const auto& f : failures) err << f << '\n';
  return kDifference;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bridge between plant models through exchange graphs", "fspm_bridge"};
  app.require_subcommand(1);

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "Run a pipeline over an .xeg file");
  c->add_option("input", convert.input, "Input .xeg file")->required();
  c->add_option("--pipeline,-p", convert.pipeline, "Pipeline configuration file");
  c->add_option("--out,-o", convert.output, "Output file (default stdout)");
  c->add_flag("--lenient", convert.lenient, "Warn about unknown elements instead of failing");

  std::string validate_path;
  bool validate_lenient = false;
  auto* v = app.add_subcommand("validate", "Check the structural invariants of an .xeg file");
  v->add_option("input", validate_path, "Input .xeg file")->required();
  v->add_flag("--lenient", validate_lenient, "Warn about unknown elements instead of failing");

  std::string diff_a, diff_b;
  double tol = 1e-9;
  auto* d = app.add_subcommand("diff", "Compare two .xeg files up to node renumbering");
  d->add_option("a", diff_a)->required();
  d->add_option("b", diff_b)->required();
  d->add_option("--tol", tol, "Relative float tolerance")->capture_default_str()->check(CLI::NonNegativeNumber);

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Serve a target model");
  s->add_option("--port", serve.port, "TCP port (0 picks a free one)")->required()->check(CLI::Range(0, 65535));
  s->add_option("--model", serve.model, "Target model")->check(CLI::IsMember({"water", "status"}))->capture_default_str();
  s->add_option("--base-pressure", serve.water.base_pressure)->capture_default_str();
  s->add_option("--loss-per-node", serve.water.loss_per_node)->capture_default_str()->check(CLI::NonNegativeNumber);
  s->add_flag("--once", serve.once, "Exit after one client session");
  s->add_option("--port-file", serve.port_file, "Write the bound port to this file");

  RunArgs run_args;
  auto* r = app.add_subcommand("run", "Drive the growth model against the servers of a roster");
  r->add_option("roster", run_args.roster, "Roster file")->required();
  r->add_option("--steps", run_args.steps)->capture_default_str();
  r->add_option("--seed", run_args.seed)->capture_default_str();
  r->add_option("--out,-o", run_args.output, "Final graph (default stdout)");
  r->add_option("--report", run_args.report, "Per-step report (TSV)");
  r->add_option("--timeout-s", run_args.timeout_s)->capture_default_str()->check(CLI::PositiveNumber);

  DemoArgs demo;
  auto* dm = app.add_subcommand("demo-roundtrip", "Retroactive loop against a locally spawned water server");
  dm->add_option("--steps", demo.steps)->capture_default_str();
  dm->add_option("--seed", demo.seed)->capture_default_str();
  dm->add_option("--base-pressure", demo.water.base_pressure)->capture_default_str();
  dm->add_option("--loss-per-node", demo.water.loss_per_node)->capture_default_str()->check(CLI::NonNegativeNumber);
  dm->add_option("--client-port", demo.client_port, "Connect here instead of the spawned server")
      ->check(CLI::Range(0, 65535));
  dm->add_option("--config-dir", demo.config_dir)->capture_default_str();
  dm->add_option("--out-dir", demo.out_dir, "Write final.xeg and report.tsv here");
  dm->add_option("--server-exe", demo.server_exe, "Binary providing the serve command")->capture_default_str();
  dm->add_option("--timeout-s", demo.timeout_s)->capture_default_str()->check(CLI::PositiveNumber);

  std::vector<const char*> argv{"fspm_bridge"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c->parsed()) return cmd_convert(convert, out, err);
    if (v->parsed()) return cmd_validate(validate_path, validate_lenient, out, err);
    if (d->parsed()) return cmd_diff(diff_a, diff_b, tol, out);
    if (s->parsed()) return cmd_serve(serve, err);
    if (r->parsed()) return cmd_run(run_args, out, err);
    if (dm->parsed()) return cmd_demo(demo, out, err);
  } catch (const Failure& f) {
    err << "error: " << f.message() << '\n';
    return f.code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsage;
}

}  // namespace fspm_bridge::cli
