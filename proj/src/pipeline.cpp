#include "fspm_bridge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "fspm_bridge/io.hpp"
#include "fspm_bridge/xeg.hpp"

namespace fspm_bridge {

// ---------------------------------------------------------------------------
// Export

void ExporterRegistry::add(std::string kind, ExportAdapter adapter) {
  adapters_[std::move(kind)] = std::move(adapter);
}

const ExportAdapter* ExporterRegistry::find(std::string_view kind) const {
  auto it = adapters_.find(kind);
  return it == adapters_.end() ? nullptr : &it->second;
}

ExchangeGraph export_to_eg(const ModelState& source, const ExporterRegistry& registry,
                           const ExportOptions& options) {
  const ExportAdapter* adapter = registry.find(source.kind);
  if (adapter == nullptr) throw Error(Errc::no_adapter, "no exporter registered for model kind '" + source.kind + "'");
  ExchangeGraph graph;
  try {
    graph = (*adapter)(source.state, options);
  } catch (const std::exception& e) {
    throw Error(Errc::adapter_failure, "exporter '" + source.kind + "': " + e.what());
  }
  auto report = validate(graph);
  if (!report.empty()) {
    throw Error(Errc::adapter_failure,
                "exporter '" + source.kind + "' produced an invalid graph: " + report.front().message);
  }
  auto expected = options.global ? TransformMode::global : TransformMode::local;
  if (graph.transform_mode() != expected) {
    throw Error(Errc::adapter_failure, "exporter '" + source.kind + "' produced the wrong transform mode");
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Edge vocabularies

void EdgeTypeMap::add(std::string name, EdgeType canonical) {
  if (!canonical.is_canonical()) {
    throw Error(Errc::schema_error, "edge type '" + name + "' must map to a canonical type");
  }
  if (name.empty()) throw Error(Errc::schema_error, "empty edge type name");
  if (pairs_.contains(name)) throw Error(Errc::schema_error, "edge type '" + name + "' mapped twice");
  if (inverse(canonical)) {
    throw Error(Errc::schema_error, "edge type '" + std::string(canonical.name()) +
                                        "' is already the image of another name");
  }
  pairs_.emplace(std::move(name), std::move(canonical));
}

std::optional<EdgeType> EdgeTypeMap::forward(std::string_view name) const {
  auto it = pairs_.find(name);
  if (it == pairs_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> EdgeTypeMap::inverse(const EdgeType& canonical) const {
  for (const auto& [name, etype] : pairs_) {
    if (etype == canonical) return name;
  }
  return std::nullopt;
}

ExchangeGraph map_edge_types(const ExchangeGraph& graph, const EdgeTypeMap& map, MapDirection direction) {
  ExchangeGraph out = graph;
  for (std::size_t i = 0; i < graph.edges().size(); ++i) {
    const EdgeType& etype = graph.edges()[i].etype;
    std::string_view name = etype.name();
    if (direction == MapDirection::in) {
      if (auto mapped = map.forward(name)) {
        out.retype_edge(i, *mapped);
      } else if (!etype.is_canonical()) {
        throw Error(Errc::unmapped_edge_type, std::string(name));
      }
    } else {
      if (!etype.is_canonical()) throw Error(Errc::unmapped_edge_type, std::string(name));
      if (auto mapped = map.inverse(etype)) out.retype_edge(i, EdgeType::from_name(*mapped));
    }
  }
  require_valid(out, Errc::semantic_error, "after edge-type mapping");
  return out;
}

// ---------------------------------------------------------------------------
// Environment units

namespace {

bool numeric_type(PropertyType t) {
  return t == PropertyType::int64 || t == PropertyType::float64 || t == PropertyType::float32;
}

PropertyValue cast_number(double v, PropertyType type) {
  switch (type) {
    case PropertyType::int64:
      return static_cast<std::int64_t>(std::llround(v));
    case PropertyType::float32:
      return static_cast<float>(v);
    default:
      return v;
  }
}

}  // namespace

void check_unit_rule(const UnitRule& rule) {
  if (!numeric_type(rule.source_type) || !numeric_type(rule.target_type)) {
    throw Error(Errc::schema_error, "unit rule for '" + rule.field + "' needs numeric type tags");
  }
  if (rule.a == 0.0 || !std::isfinite(rule.a) || !std::isfinite(rule.b)) {
    throw Error(Errc::schema_error, "unit rule for '" + rule.field + "' is not invertible");
  }
}

EnvMap convert_env(const EnvMap& env, std::span<const UnitRule> rules, ConvertDirection direction,
                   Warnings* warnings) {
  EnvMap out = env;
  for (const UnitRule& rule : rules) {
    check_unit_rule(rule);
    auto it = env.find(rule.field);
    if (it == env.end()) {
      if (warnings != nullptr) warnings->push_back("environment field '" + rule.field + "' absent; rule skipped");
      continue;
    }
    bool forward = direction == ConvertDirection::forward;
    PropertyType expected = forward ? rule.source_type : rule.target_type;
    if (type_of(it->second) != expected) {
      throw Error(Errc::type_mismatch, "field '" + rule.field + "' is " +
                                           std::string(type_tag(type_of(it->second))) + ", rule expects " +
                                           std::string(type_tag(expected)));
    }
    double x = *as_number(it->second);
    double y = forward ? rule.a * x + rule.b : (x - rule.b) / rule.a;
    out[rule.field] = cast_number(y, forward ? rule.target_type : rule.source_type);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition

void check_scheme(const DecompositionScheme& scheme) {
  if (scheme.parts.empty()) throw Error(Errc::template_arity, "scheme for '" + scheme.composite_type + "' has no parts");
  auto in_range = [&](std::size_t i) { return i < scheme.parts.size(); };
  std::vector<bool> has_intra_parent(scheme.parts.size(), false);
  for (const auto& e : scheme.intra_edges) {
    if (!in_range(e.from) || !in_range(e.to) || e.from == e.to) {
      throw Error(Errc::template_arity, "intra edge references invalid part indices");
    }
    if (!e.etype.is_canonical()) throw Error(Errc::template_arity, "intra edge has a foreign type");
    has_intra_parent[e.to] = true;
  }
  for (const auto& r : scheme.inter_rules) {
    if (!in_range(r.from_part) || !in_range(r.to_part)) {
      throw Error(Errc::template_arity, "attach rule references invalid part indices");
    }
    if (r.etype && !r.etype->is_topological()) {
      throw Error(Errc::template_arity, "attach rules apply to successor or branch edges only");
    }
    if (has_intra_parent[r.to_part]) {
      throw Error(Errc::template_arity, "attachment head '" + scheme.parts[r.to_part].part_name +
                                            "' already has an incoming intra edge");
    }
  }
}

namespace {

double resolve_number(const TemplateNumber& n, const GraphNode& composite, std::string_view part) {
  if (const double* d = std::get_if<double>(&n)) return *d;
  const std::string& field = std::get<std::string>(n);
  auto it = composite.properties.find(field);
  if (it == composite.properties.end()) {
    throw Error(Errc::template_arity, "part '" + std::string(part) + "' references missing field '" + field +
                                          "' on node " + std::to_string(composite.id.value));
  }
  auto v = as_number(it->second);
  if (!v) throw Error(Errc::template_arity, "field '" + field + "' referenced by part '" + std::string(part) + "' is not numeric");
  return *v;
}

Matrix4 part_placement(const PartTemplate& part, const GraphNode& composite) {
  std::vector<TransformStep> chain;
  chain.reserve(part.transform.size());
  for (const TemplateStep& s : part.transform) {
    Vec3 v{};
    for (int k = 0; k < 3; ++k) v[k] = resolve_number(s.vec[k], composite, part.part_name);
    switch (s.kind) {
      case TemplateStep::Kind::translation:
        chain.emplace_back(Translation{v});
        break;
      case TemplateStep::Kind::rotation:
        chain.emplace_back(Rotation{v, resolve_number(s.angle_deg, composite, part.part_name)});
        break;
      case TemplateStep::Kind::scaling:
        chain.emplace_back(Scaling{v});
        break;
    }
  }
  return compose_transforms(chain).matrix();
}

const InterRule* find_attach_rule(const DecompositionScheme& scheme, const EdgeType& etype) {
  for (const auto& r : scheme.inter_rules) {
    if (!r.etype || *r.etype == etype) return &r;
  }
  return nullptr;
}

}  // namespace

ExchangeGraph decompose_scale(const ExchangeGraph& graph, const DecompositionScheme& scheme, Warnings* warnings) {
  if (scheme.composite_type.empty()) throw Error(Errc::unknown_composite_type, "scheme names no composite type");
  check_scheme(scheme);
  require_valid(graph, Errc::invalid_graph, "decompose_scale");

  std::vector<NodeId> composites;
  for (NodeId id : canonical_order(graph)) {
    if (graph.node(id).type_name == scheme.composite_type) composites.push_back(id);
  }
  if (composites.empty()) {
    if (warnings != nullptr) warnings->push_back("no '" + scheme.composite_type + "' nodes to decompose");
    return graph;
  }

  const auto frames = effective_frames(graph);
  ExchangeGraph out = graph;
  std::unordered_map<NodeId, std::vector<NodeId>> parts_of;
  std::unordered_map<NodeId, Matrix4> placement;  // part -> T(p), in the composite frame
  std::unordered_map<NodeId, std::pair<NodeId, std::size_t>> owner;
  NodeId next = graph.next_free_id();

  for (NodeId cid : composites) {
    const GraphNode& composite = graph.node(cid);
    auto& ids = parts_of[cid];
    for (std::size_t pi = 0; pi < scheme.parts.size(); ++pi) {
      const PartTemplate& tmpl = scheme.parts[pi];
      GraphNode part;
      part.id = next;
      next.value += 1;
      part.name = tmpl.part_name;
      part.type_name = tmpl.target_type;
      part.scale = composite.scale + 1;
      part.properties = tmpl.constants;
      for (const auto& [from, to] : tmpl.forward) {
        auto it = composite.properties.find(from);
        if (it == composite.properties.end()) {
          throw Error(Errc::template_arity, "node " + std::to_string(cid.value) + " lacks field '" + from +
                                                "' forwarded to part '" + tmpl.part_name + "'");
        }
        part.properties[to] = it->second;
      }
      placement[part.id] = part_placement(tmpl, composite);
      owner[part.id] = {cid, pi};
      ids.push_back(part.id);
      out.add_node(std::move(part));
      out.add_edge({cid, ids.back(), EdgeKind::decomposition});
    }
    for (const auto& e : scheme.intra_edges) out.add_edge({ids[e.from], ids[e.to], e.etype});
  }

  for (const GraphEdge& e : graph.edges()) {
    if (!e.etype.is_topological()) continue;
    auto src = parts_of.find(e.src);
    auto dst = parts_of.find(e.dst);
    if (src == parts_of.end() || dst == parts_of.end()) continue;
    if (const InterRule* rule = find_attach_rule(scheme, e.etype)) {
      out.add_edge({src->second[rule->from_part], dst->second[rule->to_part], e.etype});
    }
  }

  // World placement of a part is frame(composite) * T(part); store it
  // relative to whatever frame the part ends up attached to.
  auto world = [&](NodeId id) -> Matrix4 {
    if (auto it = owner.find(id); it != owner.end()) return multiply(frames.at(it->second.first), placement.at(id));
    return frames.at(id);
  };
  for (const auto& [cid, ids] : parts_of) {
    for (NodeId pid : ids) {
      GraphNode& part = out.mutable_node(pid);
      if (out.transform_mode() == TransformMode::global) {
        part.global_transform = world(pid);
        continue;
      }
      auto fp = frame_parent(out, pid);
      if (fp && *fp == cid) {
        part.local_transform = placement.at(pid);
      } else if (fp && owner.contains(*fp) && owner.at(*fp).first == cid) {
        auto inv = invert(placement.at(*fp));
        if (!inv) throw Error(Errc::singular_parent_transform, "placement of part " + std::to_string(fp->value));
        part.local_transform = multiply(*inv, placement.at(pid));
      } else if (fp) {
        auto inv = invert(world(*fp));
        if (!inv) throw Error(Errc::singular_parent_transform, "frame of node " + std::to_string(fp->value));
        part.local_transform = multiply(*inv, world(pid));
      } else {
        part.local_transform = world(pid);
      }
    }
  }
  require_valid(out, Errc::invalid_graph, "decompose_scale result");
  return out;
}

// ---------------------------------------------------------------------------
// Upscaling

std::string_view aggregate_op_name(AggregateOp op) noexcept {
  switch (op) {
    case AggregateOp::sum: return "sum";
    case AggregateOp::mean: return "mean";
    case AggregateOp::min: return "min";
    case AggregateOp::max: return "max";
    case AggregateOp::first: return "first";
    case AggregateOp::logical_and: return "logical_and";
    case AggregateOp::logical_or: return "logical_or";
  }
  return "?";
}

std::optional<AggregateOp> parse_aggregate_op(std::string_view name) noexcept {
  for (auto op : {AggregateOp::sum, AggregateOp::mean, AggregateOp::min, AggregateOp::max, AggregateOp::first,
                  AggregateOp::logical_and, AggregateOp::logical_or}) {
    if (aggregate_op_name(op) == name) return op;
  }
  return std::nullopt;
}

PropertyValue aggregate(AggregateOp op, std::span<const PropertyValue> values) {
  if (values.empty()) throw Error(Errc::operator_type_mismatch, "no values to aggregate");
  const PropertyType type = type_of(values.front());
  for (const auto& v : values) {
    if (type_of(v) != type) {
      throw Error(Errc::operator_type_mismatch, std::string(aggregate_op_name(op)) + " over mixed types " +
                                                    std::string(type_tag(type)) + " and " +
                                                    std::string(type_tag(type_of(v))));
    }
  }
  auto mismatch = [&]() -> Error {
    return Error(Errc::operator_type_mismatch,
                 std::string(aggregate_op_name(op)) + " is not defined for " + std::string(type_tag(type)));
  };
  switch (op) {
    case AggregateOp::first:
      return values.front();
    case AggregateOp::logical_and:
    case AggregateOp::logical_or: {
      if (type != PropertyType::boolean) throw mismatch();
      bool acc = op == AggregateOp::logical_and;
      for (const auto& v : values) acc = op == AggregateOp::logical_and ? acc && std::get<bool>(v) : acc || std::get<bool>(v);
      return acc;
    }
    case AggregateOp::min:
    case AggregateOp::max: {
      if (!numeric_type(type)) throw mismatch();
      std::size_t best = 0;
      for (std::size_t i = 1; i < values.size(); ++i) {
        double a = *as_number(values[i]);
        double b = *as_number(values[best]);
        if (op == AggregateOp::min ? a < b : a > b) best = i;
      }
      return values[best];
    }
    case AggregateOp::sum:
    case AggregateOp::mean: {
      if (type == PropertyType::int64) {
        std::int64_t total = 0;
        for (const auto& v : values) total += std::get<std::int64_t>(v);
        if (op == AggregateOp::sum) return total;
        return static_cast<double>(total) / static_cast<double>(values.size());
      }
      if (!numeric_type(type)) throw mismatch();
      double total = 0.0;
      for (const auto& v : values) total += *as_number(v);
      if (op == AggregateOp::mean) total /= static_cast<double>(values.size());
      return cast_number(total, type);
    }
  }
  throw mismatch();
}

ExchangeGraph upscale_properties(const ExchangeGraph& graph, const DecompositionScheme& scheme,
                                 const UpscaleSpec& spec, Warnings* warnings) {
  require_valid(graph, Errc::invalid_graph, "upscale_properties");
  ExchangeGraph out = graph;
  std::unordered_set<NodeId> fine;
  std::set<std::string> dropped;
  bool any = false;

  for (NodeId cid : canonical_order(graph)) {
    if (graph.node(cid).type_name != scheme.composite_type || fine.contains(cid)) continue;
    any = true;
    auto parts = children(graph, cid, EdgeType(EdgeKind::decomposition));
    if (parts.empty()) {
      throw Error(Errc::missing_fine_scale, "node " + std::to_string(cid.value) + " has no decomposition children");
    }
    GraphNode& composite = out.mutable_node(cid);
    for (const UpscaleField& f : spec.fields) {
      std::vector<PropertyValue> values;
      for (NodeId p : parts) {
        const auto& props = graph.node(p).properties;
        if (auto it = props.find(f.name); it != props.end()) values.push_back(it->second);
      }
      if (values.empty()) continue;
      try {
        composite.properties[f.into.empty() ? f.name : f.into] = aggregate(f.op, values);
      } catch (const Error& e) {
        throw Error(e.code(), "field '" + f.name + "' of node " + std::to_string(cid.value) + ": " + e.detail());
      }
    }
    std::vector<NodeId> stack(parts.begin(), parts.end());
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      if (!fine.insert(id).second) continue;
      for (const auto& [name, _] : graph.node(id).properties) {
        bool listed = std::any_of(spec.fields.begin(), spec.fields.end(), [&](const UpscaleField& f) { return f.name == name; });
        if (!listed) dropped.insert(name);
      }
      for (NodeId c : children(graph, id, EdgeType(EdgeKind::decomposition))) stack.push_back(c);
    }
  }
  if (!any) {
    if (warnings != nullptr) warnings->push_back("no '" + scheme.composite_type + "' nodes to upscale");
    return graph;
  }
  if (warnings != nullptr && !dropped.empty()) {
    std::string list;
    for (const auto& name : dropped) list += (list.empty() ? "" : ", ") + name;
    warnings->push_back("fine-scale fields dropped: " + list);
  }
  out.remove_nodes(fine);
  require_valid(out, Errc::invalid_graph, "upscale_properties result");
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

std::string_view stage_name(const Stage& stage) noexcept {
  static constexpr std::string_view names[] = {"map_edge_types", "globalize",       "localize",
                                               "translate_geometry", "convert_env", "decompose_scale",
                                               "upscale_properties"};
  return names[stage.index()];
}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void apply_stage(const Stage& stage, PipelineResult& state, Warnings& warnings) {
  std::visit(Overloaded{
                 [&](const MapEdgeTypesStage& s) { state.graph = map_edge_types(state.graph, s.map, s.direction); },
                 [&](const GlobalizeStage&) { state.graph = globalize(state.graph); },
                 [&](const LocalizeStage&) { state.graph = localize(state.graph); },
                 [&](const TranslateGeometryStage& s) {
                   state.graph = translate_geometry(state.graph, s.dictionary, s.forms);
                 },
                 [&](const ConvertEnvStage& s) { state.env = convert_env(state.env, s.rules, s.direction, &warnings); },
                 [&](const DecomposeScaleStage& s) { state.graph = decompose_scale(state.graph, s.scheme, &warnings); },
                 [&](const UpscalePropertiesStage& s) {
                   state.graph = upscale_properties(state.graph, s.scheme, s.spec, &warnings);
                 },
             },
             stage);
}

}  // namespace

PipelineResult run_pipeline(const ExchangeGraph& graph, const PipelineConfig& config, const EnvMap& env) {
  PipelineResult result{graph, env, {}};
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const Stage& stage = config.stages[i];
    StageLog log{std::string(stage_name(stage)), 0.0, {}};
    auto start = std::chrono::steady_clock::now();
    std::string where = "stage " + std::to_string(i) + " (" + log.stage + "): ";
    try {
      apply_stage(stage, result, log.warnings);
    } catch (const Error& e) {
      throw Error(e.code(), where + e.detail());
    } catch (const std::exception& e) {
      throw Error(Errc::stage_failure, where + e.what());
    }
    log.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(std::move(log));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Configuration files

namespace {

[[noreturn]] void config_fail(const xml::Element& el, const std::string& what) {
  throw Error(Errc::schema_error, "<" + el.name + "> at " + el.position() + ": " + what);
}

double number_attribute(const xml::Element& el, std::string_view name, std::optional<double> fallback = {}) {
  const std::string* text = el.attribute(name);
  if (text == nullptr) {
    if (fallback) return *fallback;
    required_attribute(el, name);
  }
  try {
    return std::get<double>(parse_value(PropertyType::float64, *text));
  } catch (const Error&) {
    config_fail(el, "attribute '" + std::string(name) + "' is not a number: '" + *text + "'");
  }
}

TemplateNumber template_number(const xml::Element& el, std::string_view name, double fallback) {
  const std::string* text = el.attribute(name);
  if (text != nullptr && text->starts_with('@')) {
    if (text->size() == 1) config_fail(el, "empty field reference");
    return text->substr(1);
  }
  return number_attribute(el, name, fallback);
}

PropertyType type_attribute(const xml::Element& el, std::string_view name) {
  const std::string& tag = required_attribute(el, name);
  auto t = parse_type_tag(tag);
  if (!t) config_fail(el, "bad type tag '" + tag + "'");
  return *t;
}

EdgeType canonical_edge_attribute(const xml::Element& el, std::string_view name) {
  EdgeType t = EdgeType::from_name(required_attribute(el, name));
  if (!t.is_canonical()) config_fail(el, "'" + std::string(name) + "' must be successor, branch or decomposition");
  return t;
}

TemplateStep template_step(const xml::Element& el) {
  TemplateStep s;
  if (el.name == "translate") {
    check_attributes(el, {"x", "y", "z"}, false, nullptr);
    s.kind = TemplateStep::Kind::translation;
    s.vec = {template_number(el, "x", 0.0), template_number(el, "y", 0.0), template_number(el, "z", 0.0)};
  } else if (el.name == "rotate") {
    check_attributes(el, {"x", "y", "z", "angle"}, false, nullptr);
    s.kind = TemplateStep::Kind::rotation;
    s.vec = {template_number(el, "x", 0.0), template_number(el, "y", 0.0), template_number(el, "z", 0.0)};
    required_attribute(el, "angle");
    s.angle_deg = template_number(el, "angle", 0.0);
  } else if (el.name == "scale") {
    check_attributes(el, {"x", "y", "z"}, false, nullptr);
    s.kind = TemplateStep::Kind::scaling;
    s.vec = {template_number(el, "x", 1.0), template_number(el, "y", 1.0), template_number(el, "z", 1.0)};
  } else {
    config_fail(el, "expected <translate>, <rotate> or <scale>");
  }
  return s;
}

DecompositionScheme scheme_from_element(const xml::Element& root) {
  if (root.name != "scheme") config_fail(root, "expected <scheme> root element");
  check_attributes(root, {"composite"}, false, nullptr);
  DecompositionScheme scheme;
  scheme.composite_type = required_attribute(root, "composite");
  std::map<std::string, std::size_t, std::less<>> index;
  auto part_index = [&](const xml::Element& el, std::string_view attr) {
    const std::string& name = required_attribute(el, attr);
    auto it = index.find(name);
    if (it == index.end()) config_fail(el, "unknown part '" + name + "'");
    return it->second;
  };
  for (const auto& child : root.children) {
    if (child.name == "part") {
      check_attributes(child, {"name", "type"}, false, nullptr);
      PartTemplate part;
      part.part_name = required_attribute(child, "name");
      part.target_type = required_attribute(child, "type");
      if (!index.emplace(part.part_name, scheme.parts.size()).second) config_fail(child, "duplicate part name");
      for (const auto& sub : child.children) {
        if (sub.name == "forward") {
          check_attributes(sub, {"from", "to"}, false, nullptr);
          const std::string& from = required_attribute(sub, "from");
          const std::string* to = sub.attribute("to");
          part.forward.emplace_back(from, to != nullptr ? *to : from);
        } else if (sub.name == "set") {
          check_attributes(sub, {"name", "type", "value"}, false, nullptr);
          auto [name, value] = property_from_element(sub);
          part.constants[name] = std::move(value);
        } else if (sub.name == "transform") {
          check_attributes(sub, {}, false, nullptr);
          for (const auto& step : sub.children) part.transform.push_back(template_step(step));
        } else {
          config_fail(sub, "unknown element in <part>");
        }
      }
      scheme.parts.push_back(std::move(part));
    } else if (child.name == "intra") {
      check_attributes(child, {"from", "to", "type"}, false, nullptr);
      scheme.intra_edges.push_back({part_index(child, "from"), part_index(child, "to"),
                                    canonical_edge_attribute(child, "type")});
    } else if (child.name == "attach") {
      check_attributes(child, {"from", "to", "type"}, false, nullptr);
      InterRule rule;
      if (child.attribute("type") != nullptr) rule.etype = canonical_edge_attribute(child, "type");
      rule.from_part = part_index(child, "from");
      rule.to_part = part_index(child, "to");
      scheme.inter_rules.push_back(rule);
    } else {
      config_fail(child, "unknown element in <scheme>");
    }
  }
  check_scheme(scheme);
  return scheme;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Stage stage_from_element(const xml::Element& el, const std::filesystem::path& base) {
  const std::string& kind = required_attribute(el, "kind");
  if (kind == "map_edge_types") {
    check_attributes(el, {"kind", "direction"}, false, nullptr);
    MapEdgeTypesStage s;
    const std::string& dir = required_attribute(el, "direction");
    if (dir == "in") {
      s.direction = MapDirection::in;
    } else if (dir == "out") {
      s.direction = MapDirection::out;
    } else {
      config_fail(el, "direction must be in or out");
    }
    for (const auto& m : el.children) {
      if (m.name != "map") config_fail(m, "expected <map>");
      check_attributes(m, {"name", "type"}, false, nullptr);
      s.map.add(required_attribute(m, "name"), canonical_edge_attribute(m, "type"));
    }
    return s;
  }
  if (kind == "globalize" || kind == "localize") {
    check_attributes(el, {"kind"}, false, nullptr);
    if (!el.children.empty()) config_fail(el, "stage takes no children");
    if (kind == "globalize") return GlobalizeStage{};
    return LocalizeStage{};
  }
  if (kind == "translate_geometry") {
    check_attributes(el, {"kind", "dictionary"}, false, nullptr);
    TranslateGeometryStage s{load_dictionary(resolve(base, required_attribute(el, "dictionary"))), {}};
    for (const auto& f : el.children) {
      if (f.name != "form") config_fail(f, "expected <form>");
      check_attributes(f, {"source", "form"}, false, nullptr);
      s.forms[required_attribute(f, "source")] = required_attribute(f, "form");
    }
    return s;
  }
  if (kind == "convert_env") {
    check_attributes(el, {"kind", "direction"}, false, nullptr);
    ConvertEnvStage s;
    const std::string& dir = required_attribute(el, "direction");
    if (dir == "forward") {
      s.direction = ConvertDirection::forward;
    } else if (dir == "inverse") {
      s.direction = ConvertDirection::inverse;
    } else {
      config_fail(el, "direction must be forward or inverse");
    }
    for (const auto& r : el.children) {
      if (r.name != "rule") config_fail(r, "expected <rule>");
      check_attributes(r, {"field", "source_type", "target_type", "a", "b"}, false, nullptr);
      UnitRule rule{required_attribute(r, "field"), type_attribute(r, "source_type"),
                    type_attribute(r, "target_type"), number_attribute(r, "a"), number_attribute(r, "b", 0.0)};
      check_unit_rule(rule);
      s.rules.push_back(std::move(rule));
    }
    return s;
  }
  if (kind == "decompose_scale") {
    check_attributes(el, {"kind", "scheme"}, false, nullptr);
    return DecomposeScaleStage{load_scheme(resolve(base, required_attribute(el, "scheme")))};
  }
  if (kind == "upscale_properties") {
    check_attributes(el, {"kind", "scheme"}, false, nullptr);
    UpscalePropertiesStage s{load_scheme(resolve(base, required_attribute(el, "scheme"))), {}};
    for (const auto& f : el.children) {
      if (f.name != "field") config_fail(f, "expected <field>");
      check_attributes(f, {"name", "op", "into"}, false, nullptr);
      const std::string& op = required_attribute(f, "op");
      auto parsed = parse_aggregate_op(op);
      if (!parsed) config_fail(f, "unknown operator '" + op + "'");
      const std::string* into = f.attribute("into");
      s.spec.fields.push_back({required_attribute(f, "name"), *parsed, into != nullptr ? *into : ""});
    }
    return s;
  }
  config_fail(el, "unknown stage kind '" + kind + "'");
}

}  // namespace

DecompositionScheme parse_scheme(std::string_view text) { return scheme_from_element(xml::parse(text)); }

DecompositionScheme load_scheme(const std::filesystem::path& path) {
  try {
    return parse_scheme(read_file(path));
  } catch (const Error& e) {
    if (e.code() == Errc::io_error) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  try {
    return parse_dictionary(read_file(path));
  } catch (const Error& e) {
    if (e.code() == Errc::io_error) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

PipelineConfig parse_pipeline(std::string_view text, const std::filesystem::path& base_dir) {
  xml::Element root = xml::parse(text);
  if (root.name != "pipeline") config_fail(root, "expected <pipeline> root element");
  check_attributes(root, {"direction"}, false, nullptr);
  PipelineConfig config;
  if (const std::string* d = root.attribute("direction")) config.direction = *d;
  for (const auto& child : root.children) {
    if (child.name != "stage") config_fail(child, "expected <stage>");
    config.stages.push_back(stage_from_element(child, base_dir));
  }
  return config;
}

PipelineConfig load_pipeline(const std::filesystem::path& path) {
  std::string text = read_file(path);
  try {
    return parse_pipeline(text, path.parent_path());
  } catch (const Error& e) {
    if (e.code() == Errc::io_error) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

}  // namespace fspm_bridge
