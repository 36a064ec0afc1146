#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fspm_bridge/net.hpp"
#include "fspm_bridge/pipeline.hpp"
#include "fspm_bridge/protocol.hpp"

namespace fspm_bridge {

// ---------------------------------------------------------------------------
// Server side

/// A target model as seen by the server. Retroactive sessions call `update`
/// and send the returned graph back; non-retroactive sessions call `status`.
struct TargetModel {
  std::string name;
  std::vector<SessionMode> modes;
  std::function<ExchangeGraph(const ExchangeGraph&, const EnvMap&)> update;
  std::function<std::string(const ExchangeGraph&, const EnvMap&)> status;

  bool supports(SessionMode mode) const;
};

struct SessionLog {
  std::optional<SessionMode> mode;
  std::vector<std::uint64_t> steps;  // indices answered successfully
  std::vector<std::string> errors;   // error codes sent
  bool said_bye = false;
};

/// Serves one client connection until bye, disconnect or an oversize frame.
/// Handler exceptions and protocol violations are answered with error
/// messages; the session stays open except after Oversize.
SessionLog serve_session(Socket& socket, const TargetModel& model, std::size_t frame_cap = kDefaultFrameCap);

struct ServerOptions {
  std::size_t frame_cap = kDefaultFrameCap;
  /// Stop after this many sessions; 0 serves until `stop` is set.
  std::size_t max_sessions = 0;
  const std::atomic<bool>* stop = nullptr;
};

/// Accepts and serves sessions one at a time.
std::vector<SessionLog> server_run(Listener& listener, const TargetModel& model, const ServerOptions& options = {});

// ---------------------------------------------------------------------------
// Client side

/// The source model driven by the client.
class SourceModel {
 public:
  virtual ~SourceModel() = default;
  virtual void advance() = 0;
  virtual ModelState state() const = 0;
  /// Replace the model's state from an updated graph (retroactive sessions).
  virtual void install(const ExchangeGraph& graph) = 0;
};

struct RosterEntry {
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;
  SessionMode mode = SessionMode::retroactive;
  /// Applied to the graph before it is sent.
  PipelineConfig export_pipeline;
  /// Applied to a returned graph before it is installed.
  PipelineConfig import_pipeline;
};

struct Roster {
  std::vector<RosterEntry> servers;
  /// Environment sent with every step.
  EnvMap env;
};

/// `<roster><server address port mode export import/>...<env><var/></env></roster>`;
/// pipeline paths are relative to the roster file. Throws SyntaxError,
/// SchemaError, IoError.
Roster load_roster(const std::filesystem::path& path);
Roster parse_roster(std::string_view text, const std::filesystem::path& base_dir);

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t server = 0;
  double latency_ms = 0.0;
  std::string status;  // step_ok status, or "updated" for step_update
};

struct RunReport {
  std::vector<StepRecord> records;
  std::vector<StageLog> stage_logs;
};

/// What one server saw and returned during one step.
struct StepExchange {
  std::uint64_t step = 0;
  std::size_t server = 0;
  const ExchangeGraph* sent = nullptr;
  const ExchangeGraph* received = nullptr;   // retroactive only
  const ExchangeGraph* installed = nullptr;  // retroactive only
};

struct ClientOptions {
  std::chrono::milliseconds timeout = std::chrono::seconds(30);
  std::size_t frame_cap = kDefaultFrameCap;
  /// Environment for a step; defaults to the roster's environment.
  std::function<EnvMap(std::uint64_t step)> env_schedule;
  std::function<void(const StepExchange&)> observer;
};

/// Lockstep driver: per step, advance the source, then visit every server in
/// roster order. Any error aborts the run. Throws ConnectRefused,
/// ModeRejected, StepIndexMismatch, ServerError, Timeout and the pipeline
/// and export errors.
RunReport client_run(const Roster& roster, SourceModel& model, const ExporterRegistry& exporters,
                     std::uint64_t steps, const ClientOptions& options = {});

}  // namespace fspm_bridge
