#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fspm_bridge/error.hpp"
#include "fspm_bridge/property.hpp"

namespace fspm_bridge {

struct NodeId {
  std::uint64_t value = 0;

  auto operator<=>(const NodeId&) const = default;
};

}  // namespace fspm_bridge

template <>
struct std::hash<fspm_bridge::NodeId> {
  std::size_t operator()(fspm_bridge::NodeId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

namespace fspm_bridge {

/// Canonical kinds sort before foreign ones; that order is the sibling order
/// used by every traversal.
enum class EdgeKind : std::uint8_t { successor = 0, branch, decomposition, foreign };

/// Edge tag. Inside the mediating model only the three canonical kinds are
/// meaningful; `foreign` carries a vocabulary name ("refinement", ...) that
/// has not been mapped yet by map_edge_types.
class EdgeType {
 public:
  EdgeType() = default;
  EdgeType(EdgeKind kind) : kind_(kind) {}  // NOLINT: implicit by intent

  static EdgeType foreign(std::string name);
  /// "successor", "branch" and "decomposition" map to canonical kinds; any
  /// other non-empty name becomes a foreign tag.
  static EdgeType from_name(std::string_view name);

  EdgeKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept;
  bool is_canonical() const noexcept { return kind_ != EdgeKind::foreign; }
  /// successor or branch: the edges that define placement and depth.
  bool is_topological() const noexcept {
    return kind_ == EdgeKind::successor || kind_ == EdgeKind::branch;
  }

  bool operator==(const EdgeType&) const = default;
  std::strong_ordering operator<=>(const EdgeType& other) const;

 private:
  EdgeKind kind_ = EdgeKind::successor;
  std::string foreign_name_;
};

enum class TransformMode : std::uint8_t { local, global };

struct GraphNode {
  NodeId id;
  std::string name;
  std::string type_name;
  std::uint32_t scale = 0;  // 0 = coarsest
  PropertyMap properties;
  std::optional<Matrix4> local_transform;
  std::optional<Matrix4> global_transform;
};

struct GraphEdge {
  NodeId src;
  NodeId dst;
  EdgeType etype;
};

/// Single-rooted multiscale property graph. Value type: copies are deep and
/// independent, so stage functions take a const reference and return a new
/// graph.
class ExchangeGraph {
 public:
  ExchangeGraph() = default;

  /// Unchecked construction, used by the file parser so that validate() can
  /// report every problem instead of stopping at the first one.
  static ExchangeGraph from_parts(NodeId root, std::vector<GraphNode> nodes,
                                  std::vector<GraphEdge> edges, TransformMode mode);

  /// Throws DuplicateId. The first node added becomes the root.
  void add_node(GraphNode node);
  /// Throws UnknownEndpoint, SelfLoop, ScaleViolation.
  void add_edge(GraphEdge edge);
  /// Removes the nodes and every edge touching them.
  void remove_nodes(const std::unordered_set<NodeId>& ids);
  /// Rewrites the tag of edges()[index]; the scale rule is not re-checked.
  void retype_edge(std::size_t index, EdgeType etype);

  NodeId root() const noexcept { return root_; }
  void set_root(NodeId id) { root_ = id; }
  TransformMode transform_mode() const noexcept { return mode_; }
  void set_transform_mode(TransformMode mode) noexcept { mode_ = mode; }

  const std::vector<GraphNode>& nodes() const noexcept { return nodes_; }
  const std::vector<GraphEdge>& edges() const noexcept { return edges_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  bool contains(NodeId id) const { return index_.contains(id); }
  /// Throws UnknownNode.
  const GraphNode& node(NodeId id) const;
  GraphNode& mutable_node(NodeId id);
  GraphNode* find(NodeId id);
  const GraphNode* find(NodeId id) const;

  /// Indices into edges() of the edges leaving / entering `id`, insertion order.
  std::span<const std::size_t> out_edges(NodeId id) const;
  std::span<const std::size_t> in_edges(NodeId id) const;

  /// Smallest id greater than every id in the graph.
  NodeId next_free_id() const;

 private:
  void rebuild_index();

  NodeId root_{};
  TransformMode mode_ = TransformMode::local;
  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::unordered_map<NodeId, std::vector<std::size_t>> out_;
  std::unordered_map<NodeId, std::vector<std::size_t>> in_;
};

/// Children of `id` ordered successor, branch, decomposition, foreign (by
/// name); ascending NodeId within a class. Throws UnknownNode.
std::vector<NodeId> children(const ExchangeGraph& graph, NodeId id,
                             std::optional<EdgeType> filter = std::nullopt);
/// Same order as children(), as indices into graph.edges().
std::vector<std::size_t> child_edges(const ExchangeGraph& graph, NodeId id);

/// Depth-first preorder from the root in canonical child order; each
/// reachable node appears once.
std::vector<NodeId> canonical_order(const ExchangeGraph& graph);

/// Source of the incoming successor/branch edge (successor preferred, then
/// the smallest source id). This is the node whose frame `id` is placed in.
std::optional<NodeId> topological_parent(const ExchangeGraph& graph, NodeId id);
/// Source of the incoming decomposition edge, smallest id first.
std::optional<NodeId> decomposition_parent(const ExchangeGraph& graph, NodeId id);

enum class ViolationKind : std::uint8_t {
  missing_root,
  invalid_id,
  duplicate_id,
  dangling_edge,
  self_loop,
  scale_violation,
  successor_fan_out,
  root_has_incoming,
  unreachable,
};

std::string_view violation_name(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

/// Every violated structural invariant; empty means valid.
ValidationReport validate(const ExchangeGraph& graph);
/// Throws Error(code) listing the violations when the graph is not valid.
void require_valid(const ExchangeGraph& graph, Errc code, std::string_view context);

struct Comparison {
  bool equal = true;
  std::string difference;  // first difference found; empty when equal

  explicit operator bool() const noexcept { return equal; }
};

/// Structural equality: both graphs are walked from their roots in
/// canonical child order and matched node by node. Node ids are not
/// compared, so graphs that differ only by id renumbering or edge insertion
/// order are equal. Throws InvalidGraph if either graph fails validate().
Comparison canonical_equal(const ExchangeGraph& a, const ExchangeGraph& b,
                           FloatTolerance tol = FloatTolerance{});

}  // namespace fspm_bridge
