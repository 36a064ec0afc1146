#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fspm_bridge/exchange_graph.hpp"

namespace fspm_bridge {

// ---------------------------------------------------------------------------
// Affine transforms
//
// Right-handed coordinates, column-vector points (p' = M p), row-major
// storage, angles in degrees at the API boundary.

Matrix4 identity_matrix();
/// a * b (b is applied to a point first).
Matrix4 multiply(const Matrix4& a, const Matrix4& b);
/// nullopt when the matrix is singular.
std::optional<Matrix4> invert(const Matrix4& m);
Vec3 transform_point(const Matrix4& m, const Vec3& p);

class AffineTransform {
 public:
  AffineTransform() : m_(identity_matrix()) {}
  /// Throws NonAffine unless the bottom row is exactly (0, 0, 0, 1).
  static AffineTransform from_matrix(const Matrix4& m);

  const Matrix4& matrix() const noexcept { return m_; }
  Vec3 apply(const Vec3& p) const { return transform_point(m_, p); }
  /// (*this) * rhs: rhs first, then this.
  AffineTransform then_after(const AffineTransform& rhs) const;

 private:
  explicit AffineTransform(const Matrix4& m) : m_(m) {}
  Matrix4 m_;
};

struct Translation {
  Vec3 offset;
};
struct Rotation {
  Vec3 axis;
  double angle_deg = 0.0;
};
struct Scaling {
  Vec3 factors;
};
struct RawMatrix {
  Matrix4 m;
};
using TransformStep = std::variant<Translation, Rotation, Scaling, RawMatrix>;

/// Product of the chain with the first step applied first to local
/// coordinates: result = M_n * ... * M_2 * M_1. Throws ZeroAxis, NonAffine.
AffineTransform compose_transforms(std::span<const TransformStep> chain);
Matrix4 step_matrix(const TransformStep& step);

/// Local -> global placement in one traversal. A node is placed in the frame
/// of its topological parent (incoming successor/branch edge) or, failing
/// that, of its decomposition parent. Absent transforms count as identity
/// for propagation and stay absent in the output. Throws WrongMode.
ExchangeGraph globalize(const ExchangeGraph& graph);
/// Exact inverse of globalize. Throws WrongMode, SingularParentTransform.
ExchangeGraph localize(const ExchangeGraph& graph);

/// The node a node is placed relative to, as used by globalize/localize.
std::optional<NodeId> frame_parent(const ExchangeGraph& graph, NodeId id);

/// Effective global frame of every reachable node, in either transform
/// mode (what globalize would compute, including for transform-less nodes).
std::unordered_map<NodeId, Matrix4> effective_frames(const ExchangeGraph& graph);

// ---------------------------------------------------------------------------
// Geometry signatures and the translation dictionary

struct GeometrySignature {
  std::string type_name;
  /// Positional: order is part of the signature's identity.
  std::vector<std::pair<std::string, PropertyValue>> args;

  const PropertyValue* arg(std::string_view name) const;
};

/// Parallelogram, TriangleSet, Cylinder, BezierPatch. Nodes of any other
/// type carry no geometry and pass through translation untouched.
bool is_geometry_type(std::string_view type_name);

/// Geometry arguments of a node in the type's positional order:
///   Parallelogram: origin vec3, u vec3, v vec3
///   TriangleSet:   vertices doublelist (xyz...), indices doublelist (abc...)
///   Cylinder:      radius double, then length or height double
///   BezierPatch:   u_count int, v_count int, control_points doublelist
/// Throws UnsupportedType, BadArgs.
GeometrySignature node_signature(const GraphNode& node);

/// Built-in argument-computation procedures selectable by dictionary entries.
enum class ArgRule {
  identity,
  parallelogram_tri2,
  parallelogram_tri4,
  cylinder_length_to_height,
  cylinder_height_to_length,
  bezier_passthrough,
  bezier_tessellate_8x8,
};

std::string_view arg_rule_name(ArgRule rule) noexcept;
std::optional<ArgRule> parse_arg_rule(std::string_view name) noexcept;

struct DictionaryEntry {
  std::string source_type;
  std::string form_id;
  std::string target_type;
  ArgRule rule = ArgRule::identity;
};

class Dictionary {
 public:
  /// Throws SchemaError when (source_type, form_id) is already present.
  void add_entry(DictionaryEntry entry);
  /// Throws SchemaError when no entry (source_type, form_id) exists.
  void set_default_form(const std::string& source_type, const std::string& form_id);

  const std::vector<DictionaryEntry>& entries() const noexcept { return entries_; }
  const std::map<std::string, std::string>& default_forms() const noexcept { return default_form_; }
  bool covers(std::string_view source_type) const;

  /// Explicit form, else the default form, else the only entry for the
  /// type. Throws NoEntry.
  const DictionaryEntry& resolve(std::string_view source_type,
                                 const std::optional<std::string>& form = std::nullopt) const;

 private:
  std::vector<DictionaryEntry> entries_;
  std::map<std::string, std::string> default_form_;
};

/// `<dictionary><entry source form target rule/>...<default source form/></dictionary>`.
/// Throws SyntaxError, SchemaError.
Dictionary parse_dictionary(std::string_view text);

/// Throws NoEntry, BadArgs. Vertex layout for the parallelogram forms:
/// corners origin, origin+u, origin+u+v, origin+v (indices 0..3); "tri4"
/// appends the centroid as vertex 4 and fans four triangles around it.
std::vector<GeometrySignature> translate_signature(const GeometrySignature& sig,
                                                   const Dictionary& dict,
                                                   const std::optional<std::string>& form = std::nullopt);

/// Parallelogram |u x v|; TriangleSet sum of triangle areas; Cylinder lateral
/// 2 pi r h; BezierPatch summed over control-grid quads. Throws
/// UnsupportedType, BadArgs.
double surface_area(const GeometrySignature& sig);

/// Graph stage: every geometry node is rewritten through the dictionary;
/// `forms` overrides the dictionary default per source type.
ExchangeGraph translate_geometry(const ExchangeGraph& graph, const Dictionary& dict,
                                 const std::map<std::string, std::string>& forms = {});

}  // namespace fspm_bridge
