// Acceptance runner: one PASS/FAIL line per acceptance criterion, exit 1 if
// any criterion fails. Thresholds are pinned below.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "fspm_bridge/io.hpp"
#include "fspm_bridge/logging.hpp"
#include "fspm_bridge/net.hpp"
#include "fspm_bridge/session.hpp"
#include "fspm_bridge/toy_models.hpp"
#include "fspm_bridge/xeg.hpp"
#include "support/generators.hpp"

namespace fspm_bridge {
namespace {

namespace fs = std::filesystem;
using Seconds = std::chrono::duration<double>;

const fs::path kConfig = FSPM_BRIDGE_CONFIG_DIR;

constexpr std::size_t kRoundTripCases = 40;
constexpr std::size_t kMaxMetamers = 200;
constexpr double kRoundTripTolerance = 1e-9;
constexpr double kRoundTripSecondsPerCase = 5.0;
constexpr std::uint64_t kDemoSteps = 5;
constexpr double kDemoSeconds = 10.0;
constexpr std::size_t kScaleCases = 1000;
constexpr std::size_t kParallelograms = 1000;
constexpr double kAreaTolerance = 1e-9;
constexpr std::size_t kChains = 200;
constexpr std::size_t kChainDepth = 20;
constexpr double kChainTolerance = 1e-9;
constexpr std::size_t kUnitCases = 10000;
constexpr double kUnitTolerance = 1e-6;
constexpr std::size_t kCodecCases = 10000;
constexpr std::uint64_t kOfflineSteps = 12;

/// Thrown by a criterion to report the first violated check.
struct CriterionFailure {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw CriterionFailure{what};
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

// Shared helpers ------------------------------------------------------------------------

/// Steps of the growth model that produce exactly `metamers` metamers, or
/// the largest count below it.
std::uint64_t steps_for(std::size_t metamers) {
  std::uint64_t steps = 0;
  for (std::size_t count = 0;;) {
    std::size_t next = count + (steps % 3 == 2 ? 2 : 1);
    if (next > metamers) return steps;
    count = next;
    ++steps;
  }
}

/// Growth state with randomised dimensions and extra fields on every metamer.
GrowthState random_growth(testing::Rng& rng, std::size_t max_metamers) {
  GrowthState s = grow(rng.bits(), steps_for(rng.below(max_metamers + 1)));
  for (auto& m : s.metamers) {
    if (rng.coin(0.3)) m.internode_length *= rng.uniform(0.5, 2.0);
    if (rng.coin(0.3)) m.leaf_scale_x = rng.uniform(0.01, 0.2);
    if (rng.coin(0.5)) m.water_content = rng.any_double();
    if (rng.coin(0.3)) m.extra["note"] = rng.text();
    if (rng.coin(0.3)) m.extra["age"] = static_cast<std::int64_t>(rng.below(100));
  }
  return s;
}

/// Number of metamers above a metamer along topological edges.
std::uint64_t metamer_depth_oracle(const ExchangeGraph& g, NodeId id) {
  std::uint64_t depth = 0;
  for (;;) {
    const GraphEdge* in = nullptr;
    for (const auto& e : g.edges()) {
      if (e.dst == id && e.etype.kind() != EdgeKind::decomposition) in = &e;
    }
    if (in == nullptr || g.node(in->src).type_name != "Metamer") return depth;
    ++depth;
    id = in->src;
  }
}

// Criteria --------------------------------------------------------------------------------

std::string identity_round_trip() {
  PipelineConfig import = load_pipeline(kConfig / "import.pipeline.xml");
  PipelineConfig inverse = load_pipeline(kConfig / "inverse.pipeline.xml");
  testing::Rng rng(101);
  double slowest = 0.0;
  std::size_t largest = 0;
  for (std::size_t i = 0; i < kRoundTripCases; ++i) {
    GrowthState state = i == 0 ? grow(1, steps_for(kMaxMetamers)) : random_growth(rng, kMaxMetamers);
    auto started = std::chrono::steady_clock::now();
    ExchangeGraph source = growth_export(state, false);
    ExchangeGraph parsed = parse_xeg(serialize_xeg(source));
    ExchangeGraph there = run_pipeline(parsed, import).graph;
    ExchangeGraph back = parse_xeg(serialize_xeg(run_pipeline(there, inverse).graph));
    double seconds = Seconds(std::chrono::steady_clock::now() - started).count();
    Comparison c = canonical_equal(back, source, FloatTolerance::relative(kRoundTripTolerance));
    check(c.equal, "case " + std::to_string(i) + ": " + c.difference);
    check(seconds < kRoundTripSecondsPerCase, "case " + std::to_string(i) + " took " + fmt(seconds) + " s");
    slowest = std::max(slowest, seconds);
    largest = std::max(largest, state.metamers.size());
  }
  check(largest == kMaxMetamers, "largest case had " + std::to_string(largest) + " metamers");
  return std::to_string(kRoundTripCases) + " cases up to " + std::to_string(largest) + " metamers, slowest " +
         fmt(slowest) + " s";
}

std::string retroactive_loop() {
  fs::path out_dir = fs::temp_directory_path() / ("fspm_bridge_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(out_dir);
  std::string command = std::string(FSPM_BRIDGE_CLI_EXE) + " demo-roundtrip --steps " + std::to_string(kDemoSteps) +
                        " --base-pressure 100 --loss-per-node 10 --config-dir '" + kConfig.string() +
                        "' --out-dir '" + out_dir.string() + "' 2>&1";
  auto started = std::chrono::steady_clock::now();
  FILE* pipe = ::popen(command.c_str(), "r");
  check(pipe != nullptr, "cannot start " + command);
  std::string output;
  std::array<char, 256> buffer{};
  while (std::fgets(buffer.data(), buffer.size(), pipe) != nullptr) output += buffer.data();
  int status = ::pclose(pipe);
  double seconds = Seconds(std::chrono::steady_clock::now() - started).count();
  check(status == 0 && output.find("PASS") != std::string::npos, "demo exited with " + std::to_string(status) + ": " + output);
  check(seconds < kDemoSeconds, "demo took " + fmt(seconds) + " s");

  // Independent look at the final state.
  ExchangeGraph final_graph = parse_xeg(read_file(out_dir / "final.xeg"));
  fs::remove_all(out_dir);
  ExchangeGraph offline = growth_export(grow(0, kDemoSteps), false);
  check(final_graph.node_count() == offline.node_count() && final_graph.edge_count() == offline.edge_count(),
        "census changed");
  for (const auto& n : final_graph.nodes()) {
    if (n.type_name != "Metamer") continue;
    check(std::get<std::string>(n.properties.at("color")) == "green", "metamer not green");
    double expected = 100.0 - 10.0 * static_cast<double>(metamer_depth_oracle(final_graph, n.id));
    check(std::get<double>(n.properties.at("pressure")) == expected, "pressure off at node " + std::to_string(n.id.value));
  }
  return std::to_string(kDemoSteps) + " steps in " + fmt(seconds) + " s";
}

std::string decompose_upscale_inverse() {
  DecompositionScheme scheme = load_scheme(kConfig / "metamer.scheme.xml");
  UpscaleSpec restore{{{"color", AggregateOp::first, ""}}};
  UpscaleSpec numeric{{{"load", AggregateOp::sum, "load_sum"}, {"load", AggregateOp::mean, "load_mean"}}};
  testing::Rng rng(102);
  std::size_t parts_checked = 0;
  for (std::size_t i = 0; i < kScaleCases; ++i) {
    GrowthState state = random_growth(rng, 40);
    ExchangeGraph coarse = growth_export(state, rng.coin());
    ExchangeGraph fine = decompose_scale(coarse, scheme);
    Comparison c = canonical_equal(upscale_properties(fine, scheme, restore), coarse, FloatTolerance::exact());
    check(c.equal, "case " + std::to_string(i) + ": " + c.difference);

    // Random loads on the parts; per-composite sums and means by brute force.
    std::map<NodeId, std::vector<double>> loads;
    for (const auto& e : fine.edges()) {
      if (e.etype.kind() != EdgeKind::decomposition) continue;
      double x = rng.uniform(-10, 10);
      fine.mutable_node(e.dst).properties["load"] = x;
      loads[e.src].push_back(x);
    }
    ExchangeGraph up = upscale_properties(fine, scheme, numeric);
    for (const auto& [composite, xs] : loads) {
      double sum = 0.0;
      for (double x : xs) sum += x;
      const auto& p = up.node(composite).properties;
      check(std::get<double>(p.at("load_sum")) == sum, "sum off in case " + std::to_string(i));
      check(std::get<double>(p.at("load_mean")) == sum / static_cast<double>(xs.size()),
            "mean off in case " + std::to_string(i));
      parts_checked += xs.size();
    }
  }
  return std::to_string(kScaleCases) + " graphs, " + std::to_string(parts_checked) + " parts aggregated";
}

double area_of_triangles(const std::vector<Vec3>& v, const DoubleList& idx) {
  double area = 0.0;
  for (std::size_t t = 0; t < idx.size(); t += 3) {
    const Vec3& a = v[static_cast<std::size_t>(idx[t])];
    const Vec3& b = v[static_cast<std::size_t>(idx[t + 1])];
    const Vec3& c = v[static_cast<std::size_t>(idx[t + 2])];
    double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
    double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
    area += 0.5 * std::hypot(uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx);
  }
  return area;
}

bool same_points(std::vector<Vec3> a, std::vector<Vec3> b, double tol) {
  if (a.size() != b.size()) return false;
  for (const Vec3& p : a) {
    auto hit = std::find_if(b.begin(), b.end(), [&](const Vec3& q) {
      for (int k = 0; k < 3; ++k) {
        if (std::abs(p[k] - q[k]) > tol * (1 + std::abs(p[k]))) return false;
      }
      return true;
    });
    if (hit == b.end()) return false;
    b.erase(hit);
  }
  return true;
}

std::string geometry_translation() {
  Dictionary dict = load_dictionary(kConfig / "to_target.dictionary.xml");
  testing::Rng rng(103);
  for (std::size_t i = 0; i < kParallelograms; ++i) {
    auto vec = [&] { return Vec3{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)}; };
    Vec3 o = vec(), u = vec(), v = vec();
    Vec3 ou, ouv, ov, centre;
    for (int k = 0; k < 3; ++k) {
      ou[k] = o[k] + u[k];
      ov[k] = o[k] + v[k];
      ouv[k] = o[k] + u[k] + v[k];
      centre[k] = o[k] + 0.5 * (u[k] + v[k]);
    }
    double area = std::hypot(u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]);
    GeometrySignature sig{"Parallelogram", {{"origin", o}, {"u", u}, {"v", v}}};
    for (const char* form : {"tri2", "tri4"}) {
      GeometrySignature out = translate_signature(sig, dict, std::string(form)).at(0);
      const auto& flat = std::get<DoubleList>(*out.arg("vertices"));
      std::vector<Vec3> vertices;
      for (std::size_t k = 0; k < flat.size(); k += 3) vertices.push_back({flat[k], flat[k + 1], flat[k + 2]});
      const auto& idx = std::get<DoubleList>(*out.arg("indices"));
      std::string where = "parallelogram " + std::to_string(i) + " " + form;
      double got = area_of_triangles(vertices, idx);
      check(std::abs(got - area) <= kAreaTolerance * area, where + ": area " + fmt(got) + " vs " + fmt(area));
      std::vector<Vec3> corners{o, ou, ouv, ov};
      if (std::string_view(form) == "tri4") corners.push_back(centre);
      check(same_points(vertices, corners, 1e-12), where + ": corner set changed");
    }
  }
  for (std::size_t i = 0; i < kChains; ++i) {
    ExchangeGraph g;
    for (std::uint64_t id = 1; id <= kChainDepth; ++id) {
      g.add_node(GraphNode{NodeId{id}, "n", "Node", 0, {}, rng.affine(), std::nullopt});
      if (id > 1) g.add_edge({NodeId{id - 1}, NodeId{id}, rng.coin() ? EdgeKind::successor : EdgeKind::branch});
    }
    Comparison c = canonical_equal(localize(globalize(g)), g, FloatTolerance::relative(kChainTolerance));
    check(c.equal, "chain " + std::to_string(i) + ": " + c.difference);
  }
  return std::to_string(kParallelograms) + " parallelograms x 2 forms, " + std::to_string(kChains) + " chains of " +
         std::to_string(kChainDepth);
}

std::string unit_conversion() {
  std::vector<UnitRule> to_float{{"temperature", PropertyType::float64, PropertyType::float32, 1.8, 32.0}};
  std::vector<UnitRule> to_double{{"temperature", PropertyType::float64, PropertyType::float64, 1.8, 32.0}};
  auto fahrenheit = [&](double c) {
    return convert_env({{"temperature", c}}, to_float, ConvertDirection::forward).at("temperature");
  };
  check(std::get<float>(fahrenheit(100.0)) == 212.0f, "100 C is not 212 F");
  check(std::get<float>(fahrenheit(0.0)) == 32.0f, "0 C is not 32 F");
  testing::Rng rng(104);
  for (std::size_t i = 0; i < kUnitCases; ++i) {
    double c = rng.uniform(-200, 200);
    EnvMap there = convert_env({{"temperature", c}}, to_double, ConvertDirection::forward);
    double back = std::get<double>(convert_env(there, to_double, ConvertDirection::inverse).at("temperature"));
    check(std::abs(back - c) <= kUnitTolerance * std::abs(c), "round trip of " + fmt(c) + " gave " + fmt(back));
  }
  return "100->212, 0->32, " + std::to_string(kUnitCases) + " round trips";
}

std::string protocol_suite() {
  testing::Rng rng(105);
  for (std::size_t i = 0; i < kCodecCases; ++i) {
    Message m = testing::random_message(rng);
    std::string frame = encode_frame(m);
    DecodedFrame d = decode_frame(frame);
    check(d.consumed == frame.size() && messages_equal(d.message, m) && encode_frame(d.message) == frame,
          "codec case " + std::to_string(i) + " is not a bijection");
  }

  // Non-retroactive coupling must not touch the source.
  Listener status_listener = Listener::bind(0);
  TargetModel status = status_model();
  std::thread status_server([&] { server_run(status_listener, status, {kDefaultFrameCap, 1, nullptr}); });
  RosterEntry entry;
  entry.port = status_listener.port();
  entry.mode = SessionMode::non_retroactive;
  entry.export_pipeline = load_pipeline(kConfig / "status_export.pipeline.xml");
  ExporterRegistry exporters;
  register_growth_exporter(exporters);
  GrowthModel coupled(77);
  RunReport report;
  try {
    report = client_run({{entry}, {{"temperature", 20.0}}}, coupled, exporters, kOfflineSteps);
  } catch (...) {
    status_server.join();
    throw;
  }
  status_server.join();
  check(report.records.size() == kOfflineSteps, "missing step records");
  check(serialize_xeg(growth_export(coupled.growth_state(), false)) ==
            serialize_xeg(growth_export(grow(77, kOfflineSteps), false)),
        "non-retroactive run changed the client state");

  // Negative tests.
  Listener water_listener = Listener::bind(0);
  TargetModel water = water_model({});
  std::thread water_server([&] { server_run(water_listener, water, {kDefaultFrameCap, 1, nullptr}); });
  std::string codes;
  try {
    Socket s = connect_to("127.0.0.1", water_listener.port(), std::chrono::seconds(5));
    FrameIo io{kDefaultFrameCap, Clock::now() + std::chrono::seconds(10)};
    send_message(s, Message::hello(SessionMode::non_retroactive), io);
    Message mismatch = recv_message(s, io);
    send_message(s, Message::hello(SessionMode::retroactive), io);
    Message ok = recv_message(s, io);
    ExchangeGraph fine = run_pipeline(growth_export(grow(1, 2), false), load_pipeline(kConfig / "water_export.pipeline.xml")).graph;
    send_message(s, Message::step(3, {}, fine), io);
    Message skipped = recv_message(s, io);
    send_message(s, Message::bye(), io);
    check(mismatch.kind == MessageKind::error && mismatch.code == errc_name(Errc::mode_rejected),
          "mode mismatch answered with " + mismatch.code);
    check(ok.kind == MessageKind::hello_ok, "handshake failed after a rejected mode");
    check(skipped.kind == MessageKind::error && skipped.code == errc_name(Errc::out_of_order_step),
          "out-of-order step answered with " + skipped.code);
    codes = mismatch.code + ", " + skipped.code;
  } catch (...) {
    water_server.join();
    throw;
  }
  water_server.join();
  return std::to_string(kCodecCases) + " codec cases, " + std::to_string(kOfflineSteps) +
         " offline-identical steps, negatives " + codes;
}

struct Criterion {
  const char* name;
  std::function<std::string()> run;
};

}  // namespace
}  // namespace fspm_bridge

int main() {
  using namespace fspm_bridge;
  init_logging();
  const Criterion criteria[] = {
      {"identity-round-trip", identity_round_trip},
      {"retroactive-loop", retroactive_loop},
      {"decompose-upscale-inverse", decompose_upscale_inverse},
      {"geometry-translation", geometry_translation},
      {"unit-conversion", unit_conversion},
      {"protocol-suite", protocol_suite},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    std::string verdict;
    try {
      verdict = "PASS " + std::string(c.name) + ": " + c.run();
    } catch (const CriterionFailure& v) {
      verdict = "FAIL " + std::string(c.name) + ": " + v.what;
    } catch (const std::exception& e) {
      verdict = "FAIL " + std::string(c.name) + ": " + e.what();
    }
    failed += verdict.starts_with("FAIL") ? 1 : 0;
    std::cout << verdict << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
