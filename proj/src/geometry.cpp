#include "fspm_bridge/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "fspm_bridge/xeg.hpp"
#include "fspm_bridge/xml.hpp"

namespace fspm_bridge {

namespace {

using RowMat4 = Eigen::Matrix<double, 4, 4, Eigen::RowMajor>;

Eigen::Map<const RowMat4> view(const Matrix4& m) { return Eigen::Map<const RowMat4>(m.data()); }

Matrix4 to_array(const RowMat4& m) {
  Matrix4 out{};
  Eigen::Map<RowMat4>(out.data()) = m;
  return out;
}

Eigen::Vector3d to_eigen(const Vec3& v) { return {v[0], v[1], v[2]}; }

bool bottom_row_affine(const Matrix4& m) {
  return m[12] == 0.0 && m[13] == 0.0 && m[14] == 0.0 && m[15] == 1.0;
}

}  // namespace

Matrix4 identity_matrix() { return to_array(RowMat4::Identity()); }

Matrix4 multiply(const Matrix4& a, const Matrix4& b) { return to_array(view(a) * view(b)); }

std::optional<Matrix4> invert(const Matrix4& m) {
  Eigen::FullPivLU<RowMat4> lu(view(m));
  if (!lu.isInvertible()) return std::nullopt;
  return to_array(lu.inverse());
}

Vec3 transform_point(const Matrix4& m, const Vec3& p) {
  Eigen::Vector4d r = view(m) * Eigen::Vector4d(p[0], p[1], p[2], 1.0);
  return {r[0], r[1], r[2]};
}

AffineTransform AffineTransform::from_matrix(const Matrix4& m) {
  if (!bottom_row_affine(m)) throw Error(Errc::non_affine, "bottom row must be (0, 0, 0, 1)");
  return AffineTransform(m);
}

AffineTransform AffineTransform::then_after(const AffineTransform& rhs) const {
  return AffineTransform(multiply(m_, rhs.m_));
}

Matrix4 step_matrix(const TransformStep& step) {
  RowMat4 m = RowMat4::Identity();
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Translation>) {
          m.block<3, 1>(0, 3) = to_eigen(s.offset);
        } else if constexpr (std::is_same_v<T, Rotation>) {
          Eigen::Vector3d axis = to_eigen(s.axis);
          double norm = axis.norm();
          if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw Error(Errc::zero_axis, "rotation axis must be nonzero");
          }
          double radians = s.angle_deg * std::numbers::pi / 180.0;
          m.block<3, 3>(0, 0) = Eigen::AngleAxisd(radians, axis / norm).toRotationMatrix();
        } else if constexpr (std::is_same_v<T, Scaling>) {
          m(0, 0) = s.factors[0];
          m(1, 1) = s.factors[1];
          m(2, 2) = s.factors[2];
        } else {
          if (!bottom_row_affine(s.m)) throw Error(Errc::non_affine, "bottom row must be (0, 0, 0, 1)");
          m = view(s.m);
        }
      },
      step);
  return to_array(m);
}

AffineTransform compose_transforms(std::span<const TransformStep> chain) {
  Matrix4 acc = identity_matrix();
  for (const auto& step : chain) acc = multiply(step_matrix(step), acc);
  return AffineTransform::from_matrix(acc);
}

// ---------------------------------------------------------------------------
// local <-> global

std::optional<NodeId> frame_parent(const ExchangeGraph& graph, NodeId id) {
  if (auto p = topological_parent(graph, id)) return p;
  return decomposition_parent(graph, id);
}

namespace {

// Memoised walk up the frame-parent chain. `combine(parent_frame, node)`
// yields the node's effective global frame.
class FrameResolver {
 public:
  template <typename Combine>
  FrameResolver(const ExchangeGraph& graph, Combine combine) : graph_(graph) {
    for (NodeId id : canonical_order(graph)) resolve(id, combine);
  }

  const Matrix4& at(NodeId id) const { return memo_.at(id); }
  std::unordered_map<NodeId, Matrix4> take() && { return std::move(memo_); }

 private:
  template <typename Combine>
  void resolve(NodeId id, Combine& combine) {
    std::vector<NodeId> path;
    std::unordered_set<NodeId> on_path;
    NodeId cur = id;
    while (!memo_.contains(cur)) {
      if (!on_path.insert(cur).second) {
        throw Error(Errc::invalid_graph, "placement cycle through node " + std::to_string(cur.value));
      }
      path.push_back(cur);
      auto parent = frame_parent(graph_, cur);
      if (!parent) break;
      cur = *parent;
    }
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      auto parent = frame_parent(graph_, *it);
      const Matrix4 base = parent ? memo_.at(*parent) : identity_matrix();
      memo_[*it] = combine(base, graph_.node(*it));
    }
  }

  const ExchangeGraph& graph_;
  std::unordered_map<NodeId, Matrix4> memo_;
};

}  // namespace

std::unordered_map<NodeId, Matrix4> effective_frames(const ExchangeGraph& graph) {
  if (graph.transform_mode() == TransformMode::local) {
    return FrameResolver(graph, [](const Matrix4& base, const GraphNode& n) {
             return n.local_transform ? multiply(base, *n.local_transform) : base;
           }).take();
  }
  return FrameResolver(graph, [](const Matrix4& base, const GraphNode& n) {
           return n.global_transform ? *n.global_transform : base;
         }).take();
}

ExchangeGraph globalize(const ExchangeGraph& graph) {
  if (graph.transform_mode() != TransformMode::local) {
    throw Error(Errc::wrong_mode, "globalize needs a graph in local transform mode");
  }
  require_valid(graph, Errc::invalid_graph, "globalize");
  FrameResolver frames(graph, [](const Matrix4& base, const GraphNode& n) {
    return n.local_transform ? multiply(base, *n.local_transform) : base;
  });
  ExchangeGraph out = graph;
  for (const auto& n : graph.nodes()) {
    GraphNode& m = out.mutable_node(n.id);
    m.global_transform.reset();
    if (n.local_transform) m.global_transform = frames.at(n.id);
    m.local_transform.reset();
  }
  out.set_transform_mode(TransformMode::global);
  return out;
}

ExchangeGraph localize(const ExchangeGraph& graph) {
  if (graph.transform_mode() != TransformMode::global) {
    throw Error(Errc::wrong_mode, "localize needs a graph in global transform mode");
  }
  require_valid(graph, Errc::invalid_graph, "localize");
  FrameResolver frames(graph, [](const Matrix4& base, const GraphNode& n) {
    return n.global_transform ? *n.global_transform : base;
  });
  ExchangeGraph out = graph;
  std::unordered_map<NodeId, Matrix4> inverses;
  for (const auto& n : graph.nodes()) {
    GraphNode& m = out.mutable_node(n.id);
    m.local_transform.reset();
    if (n.global_transform) {
      auto parent = frame_parent(graph, n.id);
      if (!parent) {
        m.local_transform = *n.global_transform;
      } else {
        auto it = inverses.find(*parent);
        if (it == inverses.end()) {
          auto inv = invert(frames.at(*parent));
          if (!inv) {
            throw Error(Errc::singular_parent_transform,
                        "frame of node " + std::to_string(parent->value) + " is not invertible");
          }
          it = inverses.emplace(*parent, *inv).first;
        }
        m.local_transform = multiply(it->second, *n.global_transform);
      }
    }
    m.global_transform.reset();
  }
  out.set_transform_mode(TransformMode::local);
  return out;
}

// ---------------------------------------------------------------------------
// Signatures

const PropertyValue* GeometrySignature::arg(std::string_view name) const {
  for (const auto& [key, value] : args) {
    if (key == name) return &value;
  }
  return nullptr;
}

bool is_geometry_type(std::string_view type_name) {
  return type_name == "Parallelogram" || type_name == "TriangleSet" || type_name == "Cylinder" ||
         type_name == "BezierPatch";
}

namespace {

struct ArgSpec {
  std::string_view name;
  PropertyType type;
};

[[noreturn]] void bad_args(const GeometrySignature& sig, const std::string& what) {
  throw Error(Errc::bad_args, sig.type_name + ": " + what);
}

void expect_args(const GeometrySignature& sig, std::initializer_list<ArgSpec> spec) {
  if (sig.args.size() != spec.size()) {
    bad_args(sig, "expected " + std::to_string(spec.size()) + " arguments, got " +
                      std::to_string(sig.args.size()));
  }
  std::size_t i = 0;
  for (const auto& s : spec) {
    const auto& [name, value] = sig.args[i++];
    if (name != s.name || type_of(value) != s.type) {
      bad_args(sig, "argument " + std::to_string(i) + " must be " + std::string(s.name) + ":" +
                        std::string(type_tag(s.type)) + ", got " + name + ":" +
                        std::string(type_tag(type_of(value))));
    }
  }
}

std::array<Vec3, 4> parallelogram_corners(const GeometrySignature& sig) {
  expect_args(sig, {{"origin", PropertyType::vec3}, {"u", PropertyType::vec3}, {"v", PropertyType::vec3}});
  const auto& o = std::get<Vec3>(sig.args[0].second);
  const auto& u = std::get<Vec3>(sig.args[1].second);
  const auto& v = std::get<Vec3>(sig.args[2].second);
  std::array<Vec3, 4> c{};
  for (int k = 0; k < 3; ++k) {
    c[0][k] = o[k];
    c[1][k] = o[k] + u[k];
    c[2][k] = o[k] + u[k] + v[k];
    c[3][k] = o[k] + v[k];
  }
  return c;
}

GeometrySignature triangle_set(std::span<const Vec3> vertices, DoubleList indices) {
  DoubleList flat;
  flat.reserve(vertices.size() * 3);
  for (const auto& p : vertices) flat.insert(flat.end(), p.begin(), p.end());
  return {"TriangleSet", {{"vertices", std::move(flat)}, {"indices", std::move(indices)}}};
}

struct BezierGrid {
  std::size_t nu;
  std::size_t nv;
  const DoubleList* points;

  Vec3 at(std::size_t i, std::size_t j) const {
    std::size_t k = 3 * (i * nv + j);
    return {(*points)[k], (*points)[k + 1], (*points)[k + 2]};
  }
};

BezierGrid bezier_grid(const GeometrySignature& sig) {
  expect_args(sig, {{"u_count", PropertyType::int64},
                    {"v_count", PropertyType::int64},
                    {"control_points", PropertyType::float64_list}});
  auto nu = std::get<std::int64_t>(sig.args[0].second);
  auto nv = std::get<std::int64_t>(sig.args[1].second);
  const auto& pts = std::get<DoubleList>(sig.args[2].second);
  if (nu < 2 || nv < 2) bad_args(sig, "control grid must be at least 2x2");
  if (pts.size() != static_cast<std::size_t>(3 * nu * nv)) {
    bad_args(sig, "control_points must hold 3 * u_count * v_count values");
  }
  return {static_cast<std::size_t>(nu), static_cast<std::size_t>(nv), &pts};
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

double bernstein(std::size_t n, std::size_t i, double t) {
  return binomial(n, i) * std::pow(t, static_cast<double>(i)) * std::pow(1.0 - t, static_cast<double>(n - i));
}

Vec3 bezier_eval(const BezierGrid& g, double u, double v) {
  Vec3 p{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < g.nu; ++i) {
    double bu = bernstein(g.nu - 1, i, u);
    for (std::size_t j = 0; j < g.nv; ++j) {
      double w = bu * bernstein(g.nv - 1, j, v);
      Vec3 c = g.at(i, j);
      for (int k = 0; k < 3; ++k) p[k] += w * c[k];
    }
  }
  return p;
}

constexpr std::size_t kTessellationCells = 8;

GeometrySignature tessellate(const GeometrySignature& sig) {
  BezierGrid grid = bezier_grid(sig);
  constexpr std::size_t n = kTessellationCells;
  std::vector<Vec3> vertices;
  for (std::size_t a = 0; a <= n; ++a) {
    for (std::size_t b = 0; b <= n; ++b) {
      vertices.push_back(bezier_eval(grid, static_cast<double>(a) / n, static_cast<double>(b) / n));
    }
  }
  DoubleList indices;
  auto idx = [](std::size_t a, std::size_t b) { return static_cast<double>(a * (n + 1) + b); };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      indices.insert(indices.end(), {idx(a, b), idx(a + 1, b), idx(a + 1, b + 1)});
      indices.insert(indices.end(), {idx(a, b), idx(a + 1, b + 1), idx(a, b + 1)});
    }
  }
  return triangle_set(vertices, std::move(indices));
}

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

double cross_norm(const Vec3& a, const Vec3& b) {
  return to_eigen(a).cross(to_eigen(b)).norm();
}

}  // namespace

GeometrySignature node_signature(const GraphNode& node) {
  GeometrySignature sig{node.type_name, {}};
  auto take = [&](std::string_view name) {
    auto it = node.properties.find(std::string(name));
    if (it == node.properties.end()) bad_args(sig, "node '" + node.name + "' lacks argument '" + std::string(name) + "'");
    sig.args.emplace_back(std::string(name), it->second);
  };
  if (node.type_name == "Parallelogram") {
    for (auto a : {"origin", "u", "v"}) take(a);
  } else if (node.type_name == "TriangleSet") {
    for (auto a : {"vertices", "indices"}) take(a);
  } else if (node.type_name == "Cylinder") {
    take("radius");
    take(node.properties.contains("height") && !node.properties.contains("length") ? "height" : "length");
  } else if (node.type_name == "BezierPatch") {
    for (auto a : {"u_count", "v_count", "control_points"}) take(a);
  } else {
    throw Error(Errc::unsupported_type, "'" + node.type_name + "' is not a geometry type");
  }
  return sig;
}

std::string_view arg_rule_name(ArgRule rule) noexcept {
  switch (rule) {
    case ArgRule::identity:
      return "identity";
    case ArgRule::parallelogram_tri2:
      return "parallelogram_tri2";
    case ArgRule::parallelogram_tri4:
      return "parallelogram_tri4";
    case ArgRule::cylinder_length_to_height:
      return "cylinder_length_to_height";
    case ArgRule::cylinder_height_to_length:
      return "cylinder_height_to_length";
    case ArgRule::bezier_passthrough:
      return "bezier_passthrough";
    case ArgRule::bezier_tessellate_8x8:
      return "bezier_tessellate_8x8";
  }
  return "unknown";
}

std::optional<ArgRule> parse_arg_rule(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(ArgRule::bezier_tessellate_8x8); ++i) {
    auto rule = static_cast<ArgRule>(i);
    if (arg_rule_name(rule) == name) return rule;
  }
  return std::nullopt;
}

void Dictionary::add_entry(DictionaryEntry entry) {
  for (const auto& e : entries_) {
    if (e.source_type == entry.source_type && e.form_id == entry.form_id) {
      throw Error(Errc::schema_error, "duplicate dictionary entry (" + entry.source_type + ", " +
                                          entry.form_id + ")");
    }
  }
  entries_.push_back(std::move(entry));
}

void Dictionary::set_default_form(const std::string& source_type, const std::string& form_id) {
  for (const auto& e : entries_) {
    if (e.source_type == source_type && e.form_id == form_id) {
      default_form_[source_type] = form_id;
      return;
    }
  }
  throw Error(Errc::schema_error,
              "default form (" + source_type + ", " + form_id + ") has no dictionary entry");
}

bool Dictionary::covers(std::string_view source_type) const {
  for (const auto& e : entries_) {
    if (e.source_type == source_type) return true;
  }
  return false;
}

const DictionaryEntry& Dictionary::resolve(std::string_view source_type,
                                           const std::optional<std::string>& form) const {
  std::optional<std::string> chosen = form;
  if (!chosen) {
    if (auto it = default_form_.find(std::string(source_type)); it != default_form_.end()) {
      chosen = it->second;
    }
  }
  const DictionaryEntry* only = nullptr;
  int count = 0;
  for (const auto& e : entries_) {
    if (e.source_type != source_type) continue;
    if (chosen && e.form_id == *chosen) return e;
    only = &e;
    ++count;
  }
  if (!chosen && count == 1) return *only;
  std::string what = "no dictionary entry for '" + std::string(source_type) + "'";
  if (chosen) {
    what += " in form '" + *chosen + "'";
  } else if (count > 1) {
    what += " without a default form (" + std::to_string(count) + " forms available)";
  }
  throw Error(Errc::no_entry, what);
}

Dictionary parse_dictionary(std::string_view text) {
  xml::Element root = xml::parse(text);
  if (root.name != "dictionary") {
    throw Error(Errc::schema_error, "expected <dictionary> root element at " + root.position());
  }
  Dictionary dict;
  std::vector<std::pair<std::string, std::string>> defaults;
  for (const auto& child : root.children) {
    if (child.name == "entry") {
      check_attributes(child, {"source", "form", "target", "rule"}, false, nullptr);
      DictionaryEntry e;
      e.source_type = required_attribute(child, "source");
      e.form_id = required_attribute(child, "form");
      e.target_type = required_attribute(child, "target");
      const std::string& rule = required_attribute(child, "rule");
      auto parsed = parse_arg_rule(rule);
      if (!parsed) throw Error(Errc::schema_error, "unknown rule '" + rule + "' at " + child.position());
      e.rule = *parsed;
      dict.add_entry(std::move(e));
    } else if (child.name == "default") {
      check_attributes(child, {"source", "form"}, false, nullptr);
      defaults.emplace_back(required_attribute(child, "source"), required_attribute(child, "form"));
    } else {
      throw Error(Errc::schema_error, "unknown element <" + child.name + "> at " + child.position());
    }
  }
  for (const auto& [source, form] : defaults) dict.set_default_form(source, form);
  return dict;
}

std::vector<GeometrySignature> translate_signature(const GeometrySignature& sig, const Dictionary& dict,
                                                   const std::optional<std::string>& form) {
  const DictionaryEntry& entry = dict.resolve(sig.type_name, form);
  GeometrySignature out;
  switch (entry.rule) {
    case ArgRule::identity:
      out = sig;
      break;
    case ArgRule::parallelogram_tri2: {
      auto c = parallelogram_corners(sig);
      out = triangle_set(c, {0, 1, 2, 0, 2, 3});
      break;
    }
    case ArgRule::parallelogram_tri4: {
      auto c = parallelogram_corners(sig);
      std::array<Vec3, 5> v{c[0], c[1], c[2], c[3], {}};
      for (int k = 0; k < 3; ++k) v[4][k] = (c[0][k] + c[1][k] + c[2][k] + c[3][k]) / 4.0;
      out = triangle_set(v, {0, 1, 4, 1, 2, 4, 2, 3, 4, 3, 0, 4});
      break;
    }
    case ArgRule::cylinder_length_to_height:
      expect_args(sig, {{"radius", PropertyType::float64}, {"length", PropertyType::float64}});
      out.args = {{"radius", sig.args[0].second}, {"height", sig.args[1].second}};
      break;
    case ArgRule::cylinder_height_to_length:
      expect_args(sig, {{"radius", PropertyType::float64}, {"height", PropertyType::float64}});
      out.args = {{"radius", sig.args[0].second}, {"length", sig.args[1].second}};
      break;
    case ArgRule::bezier_passthrough:
      bezier_grid(sig);
      out = sig;
      break;
    case ArgRule::bezier_tessellate_8x8:
      out = tessellate(sig);
      break;
  }
  out.type_name = entry.target_type;
  return {std::move(out)};
}

double surface_area(const GeometrySignature& sig) {
  if (sig.type_name == "Parallelogram") {
    expect_args(sig, {{"origin", PropertyType::vec3}, {"u", PropertyType::vec3}, {"v", PropertyType::vec3}});
    return cross_norm(std::get<Vec3>(sig.args[1].second), std::get<Vec3>(sig.args[2].second));
  }
  if (sig.type_name == "TriangleSet") {
    expect_args(sig, {{"vertices", PropertyType::float64_list}, {"indices", PropertyType::float64_list}});
    const auto& v = std::get<DoubleList>(sig.args[0].second);
    const auto& idx = std::get<DoubleList>(sig.args[1].second);
    if (v.size() % 3 != 0 || idx.size() % 3 != 0) bad_args(sig, "vertex/index lists must come in triples");
    std::size_t n = v.size() / 3;
    auto vertex = [&](double i) -> Vec3 {
      if (i < 0 || i != std::floor(i) || static_cast<std::size_t>(i) >= n) {
        bad_args(sig, "triangle index out of range");
      }
      auto k = 3 * static_cast<std::size_t>(i);
      return {v[k], v[k + 1], v[k + 2]};
    };
    double area = 0.0;
    for (std::size_t t = 0; t < idx.size(); t += 3) {
      Vec3 a = vertex(idx[t]);
      area += 0.5 * cross_norm(sub(vertex(idx[t + 1]), a), sub(vertex(idx[t + 2]), a));
    }
    return area;
  }
  if (sig.type_name == "Cylinder") {
    if (sig.args.size() != 2) bad_args(sig, "expected radius and length/height");
    auto r = as_number(sig.args[0].second);
    auto h = as_number(sig.args[1].second);
    if (!r || !h) bad_args(sig, "radius and length/height must be numeric");
    return 2.0 * std::numbers::pi * std::fabs(*r) * std::fabs(*h);
  }
  if (sig.type_name == "BezierPatch") {
    BezierGrid g = bezier_grid(sig);
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < g.nu; ++i) {
      for (std::size_t j = 0; j + 1 < g.nv; ++j) {
        area += 0.5 * cross_norm(sub(g.at(i + 1, j + 1), g.at(i, j)), sub(g.at(i, j + 1), g.at(i + 1, j)));
      }
    }
    return area;
  }
  throw Error(Errc::unsupported_type, "no area rule for '" + sig.type_name + "'");
}

ExchangeGraph translate_geometry(const ExchangeGraph& graph, const Dictionary& dict,
                                 const std::map<std::string, std::string>& forms) {
  ExchangeGraph out = graph;
  for (const auto& n : graph.nodes()) {
    if (!is_geometry_type(n.type_name)) continue;
    try {
      std::optional<std::string> form;
      if (auto it = forms.find(n.type_name); it != forms.end()) form = it->second;
      GeometrySignature sig = node_signature(n);
      auto targets = translate_signature(sig, dict, form);
      if (targets.size() != 1) bad_args(sig, "rule produced more than one signature for a single node");
      GraphNode& m = out.mutable_node(n.id);
      for (const auto& [name, _] : sig.args) m.properties.erase(name);
      for (auto& [name, value] : targets.front().args) m.properties[name] = std::move(value);
      m.type_name = targets.front().type_name;
    } catch (const Error& e) {
      throw Error(e.code(), e.detail() + " (node '" + n.name + "', id " + std::to_string(n.id.value) + ")");
    }
  }
  return out;
}

}  // namespace fspm_bridge
