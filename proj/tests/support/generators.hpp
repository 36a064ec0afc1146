#pragma once

// Hand-rolled random generators for the property tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fspm_bridge/exchange_graph.hpp"
#include "fspm_bridge/geometry.hpp"
#include "fspm_bridge/protocol.hpp"

namespace fspm_bridge::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1p-53);
  }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  /// Doubles including awkward values: tiny, huge, negative zero, long
  /// decimal expansions.
  double any_double() {
    switch (below(6)) {
      case 0: return uniform(-1.0, 1.0);
      case 1: return uniform(-1e6, 1e6);
      case 2: return std::ldexp(uniform(0.5, 1.0), static_cast<int>(below(600)) - 300);
      case 3: return -0.0;
      case 4: return static_cast<double>(static_cast<std::int64_t>(below(2000)) - 1000);
      default: return 0.1 * static_cast<double>(below(100));
    }
  }

  std::string text() {
    static const std::vector<std::string> pieces = {"a", "leaf", " ", "<", ">", "&", "\"", "'", "é", "叶", "\t", "x y"};
    std::string s;
    std::size_t n = below(5);
    for (std::size_t i = 0; i < n; ++i) s += pieces[below(pieces.size())];
    return s;
  }

  PropertyValue value() {
    switch (below(8)) {
      case 0: return static_cast<std::int64_t>(bits());
      case 1: return any_double();
      case 2: return static_cast<float>(any_double());
      case 3: return coin();
      case 4: return text();
      case 5: return Vec3{any_double(), any_double(), any_double()};
      case 6: {
        Matrix4 m{};
        for (auto& x : m) x = any_double();
        return m;
      }
      default: {
        DoubleList l(below(6));
        for (auto& x : l) x = any_double();
        return l;
      }
    }
  }

  /// Random invertible affine matrix: scaling, rotation, translation.
  Matrix4 affine() {
    std::vector<TransformStep> chain;
    chain.emplace_back(Scaling{{uniform(0.5, 2.0), uniform(0.5, 2.0), uniform(0.5, 2.0)}});
    Vec3 axis{uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
    if (std::abs(axis[0]) + std::abs(axis[1]) + std::abs(axis[2]) < 1e-3) axis = {0, 0, 1};
    chain.emplace_back(Rotation{axis, uniform(-180.0, 180.0)});
    chain.emplace_back(Translation{{uniform(-2, 2), uniform(-2, 2), uniform(-2, 2)}});
    return compose_transforms(chain).matrix();
  }

 private:
  std::mt19937_64 engine_;
};

struct GraphShape {
  std::size_t nodes = 20;
  double decomposition_share = 0.2;
  double extra_edge_share = 0.1;  // additional branch edges between existing nodes
  bool transforms = true;
  std::size_t max_properties = 4;
};

/// Random valid graph built only through add_node/add_edge, so every
/// structural invariant holds by construction.
inline ExchangeGraph random_graph(Rng& rng, const GraphShape& shape = {}) {
  ExchangeGraph g;
  std::vector<bool> has_successor;
  auto make_node = [&](std::uint64_t id, std::uint32_t scale) {
    GraphNode n;
    n.id = NodeId{id};
    n.name = rng.coin(0.3) ? rng.text() : "n" + std::to_string(rng.below(4));
    n.type_name = rng.coin() ? "Metamer" : "Node";
    n.scale = scale;
    std::size_t props = rng.below(shape.max_properties + 1);
    for (std::size_t i = 0; i < props; ++i) n.properties["p" + std::to_string(rng.below(8))] = rng.value();
    if (shape.transforms && rng.coin(0.7)) n.local_transform = rng.affine();
    return n;
  };
  g.add_node(make_node(1, 0));
  has_successor.push_back(false);
  for (std::uint64_t id = 2; id <= shape.nodes; ++id) {
    std::size_t parent = rng.below(g.node_count());
    const GraphNode& p = g.nodes()[parent];
    EdgeType etype = EdgeKind::branch;
    std::uint32_t scale = p.scale;
    if (rng.coin(shape.decomposition_share)) {
      etype = EdgeKind::decomposition;
      scale = p.scale + 1;
    } else if (!has_successor[parent] && rng.coin()) {
      etype = EdgeKind::successor;
      has_successor[parent] = true;
    }
    NodeId src = p.id;
    g.add_node(make_node(id, scale));
    has_successor.push_back(false);
    g.add_edge({src, NodeId{id}, etype});
  }
  std::size_t extra = static_cast<std::size_t>(shape.extra_edge_share * static_cast<double>(shape.nodes));
  for (std::size_t i = 0; i < extra && g.node_count() > 2; ++i) {
    // Forward edges only (lower id to higher id) keep the graph acyclic.
    std::size_t a = 1 + rng.below(g.node_count() - 1);
    std::size_t b = 1 + rng.below(g.node_count() - 1);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    g.add_edge({g.nodes()[a].id, g.nodes()[b].id, EdgeKind::branch});
  }
  return g;
}

/// Same graph with fresh ids and shuffled node and edge insertion order.
inline ExchangeGraph renumbered(const ExchangeGraph& g, Rng& rng) {
  std::vector<std::uint64_t> fresh(g.node_count());
  std::iota(fresh.begin(), fresh.end(), 1);
  for (auto& f : fresh) f = f * 7 + 1000;  // distinct, unrelated to the old ids
  std::shuffle(fresh.begin(), fresh.end(), std::mt19937_64(rng.bits()));
  std::unordered_map<NodeId, NodeId> map;
  for (std::size_t i = 0; i < g.node_count(); ++i) map[g.nodes()[i].id] = NodeId{fresh[i]};

  std::vector<GraphNode> nodes = g.nodes();
  for (auto& n : nodes) n.id = map.at(n.id);
  std::vector<GraphEdge> edges = g.edges();
  for (auto& e : edges) {
    e.src = map.at(e.src);
    e.dst = map.at(e.dst);
  }
  std::mt19937_64 shuffle_rng(rng.bits());
  std::shuffle(nodes.begin(), nodes.end(), shuffle_rng);
  std::shuffle(edges.begin(), edges.end(), shuffle_rng);
  return ExchangeGraph::from_parts(map.at(g.root()), std::move(nodes), std::move(edges), g.transform_mode());
}

inline Message random_message(Rng& rng) {
  switch (rng.below(7)) {
    case 0: return Message::hello(rng.coin() ? SessionMode::retroactive : SessionMode::non_retroactive);
    case 1: return Message::hello_ok(rng.coin() ? SessionMode::retroactive : SessionMode::non_retroactive);
    case 2: {
      EnvMap env;
      std::size_t n = rng.below(4);
      for (std::size_t i = 0; i < n; ++i) env["v" + std::to_string(rng.below(10))] = rng.value();
      GraphShape shape;
      shape.nodes = 1 + rng.below(8);
      return Message::step(rng.bits() >> rng.below(64), std::move(env), random_graph(rng, shape));
    }
    case 3: return Message::step_ok(rng.bits() >> 40, rng.text());
    case 4: {
      GraphShape shape;
      shape.nodes = 1 + rng.below(8);
      return Message::step_update(rng.below(1000), random_graph(rng, shape));
    }
    case 5: return Message::error(rng.coin() ? Errc::out_of_order_step : Errc::handler_failure, rng.text());
    default: return Message::bye();
  }
}

}  // namespace fspm_bridge::testing
