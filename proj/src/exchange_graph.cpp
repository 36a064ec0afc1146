#include "fspm_bridge/exchange_graph.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

namespace fspm_bridge {

// ---------------------------------------------------------------------------
// EdgeType

EdgeType EdgeType::foreign(std::string name) {
  EdgeType out(EdgeKind::foreign);
  out.foreign_name_ = std::move(name);
  return out;
}

EdgeType EdgeType::from_name(std::string_view name) {
  if (name == "successor") return EdgeKind::successor;
  if (name == "branch") return EdgeKind::branch;
  if (name == "decomposition") return EdgeKind::decomposition;
  return foreign(std::string(name));
}

std::string_view EdgeType::name() const noexcept {
  switch (kind_) {
    case EdgeKind::successor:
      return "successor";
    case EdgeKind::branch:
      return "branch";
    case EdgeKind::decomposition:
      return "decomposition";
    case EdgeKind::foreign:
      break;
  }
  return foreign_name_;
}

std::strong_ordering EdgeType::operator<=>(const EdgeType& other) const {
  if (auto c = kind_ <=> other.kind_; c != 0) return c;
  return foreign_name_ <=> other.foreign_name_;
}

// ---------------------------------------------------------------------------
// ExchangeGraph

ExchangeGraph ExchangeGraph::from_parts(NodeId root, std::vector<GraphNode> nodes,
                                        std::vector<GraphEdge> edges, TransformMode mode) {
  ExchangeGraph g;
  g.root_ = root;
  g.mode_ = mode;
  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  g.rebuild_index();
  return g;
}

void ExchangeGraph::rebuild_index() {
  index_.clear();
  out_.clear();
  in_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.try_emplace(nodes_[i].id, i);
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    out_[edges_[i].src].push_back(i);
    in_[edges_[i].dst].push_back(i);
  }
}

void ExchangeGraph::add_node(GraphNode node) {
  if (index_.contains(node.id)) {
    throw Error(Errc::duplicate_id, "node id " + std::to_string(node.id.value) + " already present");
  }
  if (nodes_.empty() && root_.value == 0) root_ = node.id;
  index_.emplace(node.id, nodes_.size());
  nodes_.push_back(std::move(node));
}

void ExchangeGraph::add_edge(GraphEdge edge) {
  const GraphNode* src = find(edge.src);
  const GraphNode* dst = find(edge.dst);
  if (src == nullptr || dst == nullptr) {
    NodeId missing = src == nullptr ? edge.src : edge.dst;
    throw Error(Errc::unknown_endpoint, "edge endpoint " + std::to_string(missing.value) +
                                            " is not in the graph");
  }
  if (edge.src == edge.dst) {
    throw Error(Errc::self_loop, "edge " + std::to_string(edge.src.value) + " -> itself");
  }
  if (edge.etype.kind() == EdgeKind::decomposition && dst->scale != src->scale + 1) {
    throw Error(Errc::scale_violation,
                "decomposition edge " + std::to_string(edge.src.value) + " -> " +
                    std::to_string(edge.dst.value) + " goes from scale " +
                    std::to_string(src->scale) + " to scale " + std::to_string(dst->scale));
  }
  out_[edge.src].push_back(edges_.size());
  in_[edge.dst].push_back(edges_.size());
  edges_.push_back(std::move(edge));
}

void ExchangeGraph::remove_nodes(const std::unordered_set<NodeId>& ids) {
  if (ids.empty()) return;
  std::erase_if(nodes_, [&](const GraphNode& n) { return ids.contains(n.id); });
  std::erase_if(edges_, [&](const GraphEdge& e) {
    return ids.contains(e.src) || ids.contains(e.dst);
  });
  rebuild_index();
}

void ExchangeGraph::retype_edge(std::size_t index, EdgeType etype) {
  edges_.at(index).etype = std::move(etype);
}

const GraphNode& ExchangeGraph::node(NodeId id) const {
  if (const GraphNode* n = find(id)) return *n;
  throw Error(Errc::unknown_node, "node " + std::to_string(id.value) + " is not in the graph");
}

GraphNode& ExchangeGraph::mutable_node(NodeId id) {
  if (GraphNode* n = find(id)) return *n;
  throw Error(Errc::unknown_node, "node " + std::to_string(id.value) + " is not in the graph");
}

GraphNode* ExchangeGraph::find(NodeId id) {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const GraphNode* ExchangeGraph::find(NodeId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

std::span<const std::size_t> ExchangeGraph::out_edges(NodeId id) const {
  auto it = out_.find(id);
  if (it == out_.end()) return {};
  return it->second;
}

std::span<const std::size_t> ExchangeGraph::in_edges(NodeId id) const {
  auto it = in_.find(id);
  if (it == in_.end()) return {};
  return it->second;
}

NodeId ExchangeGraph::next_free_id() const {
  std::uint64_t max_id = 0;
  for (const auto& n : nodes_) max_id = std::max(max_id, n.id.value);
  return NodeId{max_id + 1};
}

// ---------------------------------------------------------------------------
// Traversal

std::vector<std::size_t> child_edges(const ExchangeGraph& graph, NodeId id) {
  if (!graph.contains(id)) {
    throw Error(Errc::unknown_node, "node " + std::to_string(id.value) + " is not in the graph");
  }
  auto out = graph.out_edges(id);
  std::vector<std::size_t> result(out.begin(), out.end());
  const auto& edges = graph.edges();
  std::stable_sort(result.begin(), result.end(), [&](std::size_t a, std::size_t b) {
    if (auto c = edges[a].etype <=> edges[b].etype; c != 0) return c < 0;
    return edges[a].dst < edges[b].dst;
  });
  return result;
}

std::vector<NodeId> children(const ExchangeGraph& graph, NodeId id,
                             std::optional<EdgeType> filter) {
  std::vector<NodeId> result;
  for (std::size_t e : child_edges(graph, id)) {
    const auto& edge = graph.edges()[e];
    if (!filter || edge.etype == *filter) result.push_back(edge.dst);
  }
  return result;
}

std::vector<NodeId> canonical_order(const ExchangeGraph& graph) {
  std::vector<NodeId> order;
  if (!graph.contains(graph.root())) return order;
  std::unordered_set<NodeId> seen;
  std::vector<NodeId> stack{graph.root()};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    order.push_back(id);
    auto kids = child_edges(graph, id);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
      NodeId dst = graph.edges()[*it].dst;
      if (graph.contains(dst) && !seen.contains(dst)) stack.push_back(dst);
    }
  }
  return order;
}

namespace {

std::optional<NodeId> first_parent(const ExchangeGraph& graph, NodeId id, auto accept) {
  std::optional<std::pair<EdgeType, NodeId>> best;
  for (std::size_t e : graph.in_edges(id)) {
    const auto& edge = graph.edges()[e];
    if (!accept(edge.etype)) continue;
    std::pair<EdgeType, NodeId> candidate{edge.etype, edge.src};
    if (!best || candidate < *best) best = candidate;
  }
  if (!best) return std::nullopt;
  return best->second;
}

}  // namespace

std::optional<NodeId> topological_parent(const ExchangeGraph& graph, NodeId id) {
  return first_parent(graph, id, [](const EdgeType& t) { return t.is_topological(); });
}

std::optional<NodeId> decomposition_parent(const ExchangeGraph& graph, NodeId id) {
  return first_parent(graph, id,
                      [](const EdgeType& t) { return t.kind() == EdgeKind::decomposition; });
}

// ---------------------------------------------------------------------------
// Validation

std::string_view violation_name(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::missing_root:
      return "missing_root";
    case ViolationKind::invalid_id:
      return "invalid_id";
    case ViolationKind::duplicate_id:
      return "duplicate_id";
    case ViolationKind::dangling_edge:
      return "dangling_edge";
    case ViolationKind::self_loop:
      return "self_loop";
    case ViolationKind::scale_violation:
      return "scale_violation";
    case ViolationKind::successor_fan_out:
      return "successor_fan_out";
    case ViolationKind::root_has_incoming:
      return "root_has_incoming";
    case ViolationKind::unreachable:
      return "unreachable";
  }
  return "unknown";
}

ValidationReport validate(const ExchangeGraph& graph) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, std::string message) {
    report.push_back({kind, std::move(message)});
  };
  auto id_str = [](NodeId id) { return std::to_string(id.value); };

  std::unordered_map<NodeId, int> seen;
  for (const auto& n : graph.nodes()) {
    if (n.id.value == 0) add(ViolationKind::invalid_id, "node '" + n.name + "' has id 0");
    if (++seen[n.id] == 2) add(ViolationKind::duplicate_id, "node id " + id_str(n.id) + " used more than once");
  }
  if (!graph.contains(graph.root())) {
    add(ViolationKind::missing_root, "root " + id_str(graph.root()) + " is not a node of the graph");
  }

  std::unordered_map<NodeId, int> successor_out;
  for (const auto& e : graph.edges()) {
    std::string label = id_str(e.src) + " -> " + id_str(e.dst) + " (" + std::string(e.etype.name()) + ")";
    const GraphNode* src = graph.find(e.src);
    const GraphNode* dst = graph.find(e.dst);
    if (src == nullptr || dst == nullptr) {
      add(ViolationKind::dangling_edge, "edge " + label + " references a missing node");
      continue;
    }
    if (e.src == e.dst) add(ViolationKind::self_loop, "edge " + label + " is a self loop");
    if (e.etype.kind() == EdgeKind::decomposition && dst->scale != src->scale + 1) {
      add(ViolationKind::scale_violation, "edge " + label + " goes from scale " +
                                              std::to_string(src->scale) + " to scale " +
                                              std::to_string(dst->scale));
    }
    if (e.etype.kind() == EdgeKind::successor && ++successor_out[e.src] == 2) {
      add(ViolationKind::successor_fan_out, "node " + id_str(e.src) + " has more than one successor");
    }
    if (e.dst == graph.root()) {
      add(ViolationKind::root_has_incoming, "edge " + label + " enters the root");
    }
  }

  if (graph.contains(graph.root())) {
    std::unordered_set<NodeId> reached{graph.root()};
    std::deque<NodeId> queue{graph.root()};
    while (!queue.empty()) {
      NodeId id = queue.front();
      queue.pop_front();
      for (std::size_t e : graph.out_edges(id)) {
        NodeId dst = graph.edges()[e].dst;
        if (graph.contains(dst) && reached.insert(dst).second) queue.push_back(dst);
      }
    }
    std::unordered_set<NodeId> reported;
    for (const auto& n : graph.nodes()) {
      if (!reached.contains(n.id) && reported.insert(n.id).second) {
        add(ViolationKind::unreachable, "node " + id_str(n.id) + " ('" + n.name + "') is not reachable from the root");
      }
    }
  }
  return report;
}

void require_valid(const ExchangeGraph& graph, Errc code, std::string_view context) {
  auto report = validate(graph);
  if (report.empty()) return;
  std::string detail(context);
  for (const auto& v : report) {
    detail += "; ";
    detail += violation_name(v.kind);
    detail += ": ";
    detail += v.message;
  }
  throw Error(code, detail);
}

// ---------------------------------------------------------------------------
// Canonical comparison

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer over a running combination
  std::uint64_t z = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_str(std::string_view s) { return std::hash<std::string_view>{}(s); }

std::uint64_t edge_type_hash(const EdgeType& t) {
  return mix(static_cast<std::uint64_t>(t.kind()), hash_str(t.name()));
}

// Content that must match exactly. Floating-point payloads are left out so
// that values equal within tolerance land in the same class.
std::uint64_t exact_content_hash(const GraphNode& n) {
  std::uint64_t h = mix(hash_str(n.name), hash_str(n.type_name));
  h = mix(h, n.scale);
  for (const auto& [key, value] : n.properties) {
    h = mix(h, hash_str(key));
    h = mix(h, value.index());
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::int64_t>) {
            h = mix(h, static_cast<std::uint64_t>(v));
          } else if constexpr (std::is_same_v<T, bool>) {
            h = mix(h, v ? 1 : 0);
          } else if constexpr (std::is_same_v<T, std::string>) {
            h = mix(h, hash_str(v));
          } else if constexpr (std::is_same_v<T, DoubleList>) {
            h = mix(h, v.size());
          }
        },
        value);
  }
  h = mix(h, n.local_transform ? 1 : 0);
  h = mix(h, n.global_transform ? 2 : 0);
  return h;
}

using Colors = std::unordered_map<NodeId, std::uint64_t>;

// Colour refinement over out-edges, run jointly on both graphs so that the
// resulting classes are comparable across them.
std::pair<Colors, Colors> refine_colors(const ExchangeGraph& a, const ExchangeGraph& b) {
  Colors ca, cb;
  for (const auto& n : a.nodes()) ca[n.id] = exact_content_hash(n);
  for (const auto& n : b.nodes()) cb[n.id] = exact_content_hash(n);

  auto distinct = [&]() {
    std::unordered_set<std::uint64_t> s;
    for (auto& [_, c] : ca) s.insert(c);
    for (auto& [_, c] : cb) s.insert(c);
    return s.size();
  };
  auto step = [](const ExchangeGraph& g, const Colors& in) {
    Colors out;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> kids;
    for (const auto& n : g.nodes()) {
      kids.clear();
      for (std::size_t e : g.out_edges(n.id)) {
        const auto& edge = g.edges()[e];
        kids.emplace_back(edge_type_hash(edge.etype), in.at(edge.dst));
      }
      std::sort(kids.begin(), kids.end());
      std::uint64_t h = in.at(n.id);
      for (auto [t, c] : kids) h = mix(mix(h, t), c);
      out[n.id] = h;
    }
    return out;
  };

  std::size_t classes = distinct();
  std::size_t max_rounds = std::max(a.node_count(), b.node_count());
  for (std::size_t round = 0; round < max_rounds; ++round) {
    Colors na = step(a, ca);
    Colors nb = step(b, cb);
    ca.swap(na);
    cb.swap(nb);
    std::size_t now = distinct();
    if (now == classes) break;
    classes = now;
  }
  return {std::move(ca), std::move(cb)};
}

std::string describe(const GraphNode& n) {
  return "node '" + n.name + "' (id " + std::to_string(n.id.value) + ", type " + n.type_name + ")";
}

std::string compare_nodes(const GraphNode& x, const GraphNode& y, FloatTolerance tol) {
  if (x.name != y.name) return describe(x) + ": name '" + x.name + "' vs '" + y.name + "'";
  if (x.type_name != y.type_name) {
    return describe(x) + ": type_name '" + x.type_name + "' vs '" + y.type_name + "'";
  }
  if (x.scale != y.scale) {
    return describe(x) + ": scale " + std::to_string(x.scale) + " vs " + std::to_string(y.scale);
  }
  for (const auto& [key, value] : x.properties) {
    auto it = y.properties.find(key);
    if (it == y.properties.end()) return describe(x) + ": property '" + key + "' missing on the other side";
    if (!values_equal(value, it->second, tol)) {
      return describe(x) + ": property '" + key + "' " + std::string(type_tag(type_of(value))) +
             " '" + format_value(value) + "' vs " + std::string(type_tag(type_of(it->second))) +
             " '" + format_value(it->second) + "'";
    }
  }
  for (const auto& [key, _] : y.properties) {
    if (!x.properties.contains(key)) return describe(x) + ": property '" + key + "' only on the other side";
  }
  auto cmp_transform = [&](const std::optional<Matrix4>& p, const std::optional<Matrix4>& q,
                           std::string_view kind) -> std::string {
    if (p.has_value() != q.has_value()) {
      return describe(x) + ": " + std::string(kind) + " transform present on one side only";
    }
    if (p && !values_equal(*p, *q, tol)) {
      return describe(x) + ": " + std::string(kind) + " transform '" + format_value(*p) +
             "' vs '" + format_value(*q) + "'";
    }
    return {};
  };
  if (auto d = cmp_transform(x.local_transform, y.local_transform, "local"); !d.empty()) return d;
  return cmp_transform(x.global_transform, y.global_transform, "global");
}

class Matcher {
 public:
  Matcher(const ExchangeGraph& a, const ExchangeGraph& b, FloatTolerance tol)
      : a_(a), b_(b), tol_(tol) {
    std::tie(ca_, cb_) = refine_colors(a, b);
  }

  bool match(NodeId x, NodeId y, std::string& diff) {
    if (auto it = ab_.find(x); it != ab_.end()) {
      if (it->second == y) return true;
      diff = describe(a_.node(x)) + ": reached along an edge that leads elsewhere in the other graph";
      return false;
    }
    if (ba_.contains(y)) {
      diff = describe(a_.node(x)) + ": counterpart already matched to a different node";
      return false;
    }
    const GraphNode& nx = a_.node(x);
    const GraphNode& ny = b_.node(y);
    if (auto d = compare_nodes(nx, ny, tol_); !d.empty()) {
      diff = std::move(d);
      return false;
    }
    ab_.emplace(x, y);
    ba_.emplace(y, x);
    log_.push_back(x);

    auto ex = child_edges(a_, x);
    auto ey = child_edges(b_, y);
    if (ex.size() != ey.size()) {
      diff = describe(nx) + ": " + std::to_string(ex.size()) + " children vs " + std::to_string(ey.size());
      return false;
    }
    // Group children by (edge type, colour); groups must line up one to one.
    using Key = std::pair<EdgeType, std::uint64_t>;
    std::map<Key, std::vector<NodeId>> gx, gy;
    std::vector<Key> key_order;
    for (std::size_t e : ex) {
      const auto& edge = a_.edges()[e];
      Key k{edge.etype, ca_.at(edge.dst)};
      if (!gx.contains(k)) key_order.push_back(k);
      gx[k].push_back(edge.dst);
    }
    for (std::size_t e : ey) {
      const auto& edge = b_.edges()[e];
      gy[{edge.etype, cb_.at(edge.dst)}].push_back(edge.dst);
    }
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const auto& e1 = a_.edges()[ex[i]];
      const auto& e2 = b_.edges()[ey[i]];
      if (e1.etype != e2.etype) {
        diff = describe(nx) + ": child edge types differ ('" + std::string(e1.etype.name()) +
               "' vs '" + std::string(e2.etype.name()) + "')";
        return false;
      }
    }
    for (const Key& k : key_order) {
      auto it = gy.find(k);
      if (it == gy.end() || it->second.size() != gx[k].size()) {
        // Same edge-type census but different structure: pair positionally to
        // name the first concrete difference.
        for (std::size_t i = 0; i < ex.size(); ++i) {
          std::string d;
          std::size_t mark = log_.size();
          if (!match(a_.edges()[ex[i]].dst, b_.edges()[ey[i]].dst, d)) {
            diff = std::move(d);
            rollback(mark);
            return false;
          }
          rollback(mark);
        }
        diff = describe(nx) + ": children differ structurally";
        return false;
      }
      if (!match_group(gx[k], it->second, diff)) return false;
    }
    return true;
  }

  bool all_matched() const { return ab_.size() == a_.node_count() && ba_.size() == b_.node_count(); }

 private:
  bool match_group(const std::vector<NodeId>& xs, const std::vector<NodeId>& ys, std::string& diff) {
    std::vector<bool> used(ys.size(), false);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::string first_diff;
      bool ok = false;
      for (std::size_t j = 0; j < ys.size() && !ok; ++j) {
        if (used[j]) continue;
        std::size_t mark = log_.size();
        std::string d;
        if (match(xs[i], ys[j], d)) {
          used[j] = true;
          ok = true;
        } else {
          rollback(mark);
          if (first_diff.empty()) first_diff = std::move(d);
        }
      }
      if (!ok) {
        diff = std::move(first_diff);
        return false;
      }
    }
    return true;
  }

  void rollback(std::size_t mark) {
    while (log_.size() > mark) {
      NodeId x = log_.back();
      log_.pop_back();
      ba_.erase(ab_.at(x));
      ab_.erase(x);
    }
  }

  const ExchangeGraph& a_;
  const ExchangeGraph& b_;
  FloatTolerance tol_;
  Colors ca_, cb_;
  std::unordered_map<NodeId, NodeId> ab_, ba_;
  std::vector<NodeId> log_;
};

}  // namespace

Comparison canonical_equal(const ExchangeGraph& a, const ExchangeGraph& b, FloatTolerance tol) {
  require_valid(a, Errc::invalid_graph, "first graph");
  require_valid(b, Errc::invalid_graph, "second graph");
  if (a.transform_mode() != b.transform_mode()) {
    return {false, "transform mode differs"};
  }
  if (a.node_count() != b.node_count()) {
    return {false, "node count " + std::to_string(a.node_count()) + " vs " + std::to_string(b.node_count())};
  }
  if (a.edge_count() != b.edge_count()) {
    return {false, "edge count " + std::to_string(a.edge_count()) + " vs " + std::to_string(b.edge_count())};
  }
  Matcher matcher(a, b, tol);
  std::string diff;
  if (!matcher.match(a.root(), b.root(), diff)) return {false, diff};
  if (!matcher.all_matched()) return {false, "graphs cover different node sets"};
  return {};
}

}  // namespace fspm_bridge
