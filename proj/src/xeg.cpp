#include "fspm_bridge/xeg.hpp"

#include <charconv>
#include <unordered_set>

namespace fspm_bridge {

namespace {

[[noreturn]] void schema_fail(const xml::Element& el, const std::string& what) {
  throw Error(Errc::schema_error, "<" + el.name + "> at " + el.position() + ": " + what);
}

std::uint64_t parse_uint(const xml::Element& el, std::string_view attr, const std::string& text) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    schema_fail(el, "attribute '" + std::string(attr) + "' is not a non-negative integer: '" + text + "'");
  }
  return out;
}

NodeId parse_node_id(const xml::Element& el, std::string_view attr) {
  std::uint64_t v = parse_uint(el, attr, required_attribute(el, attr));
  if (v == 0) schema_fail(el, "attribute '" + std::string(attr) + "' must be a positive id");
  return NodeId{v};
}

bool valid_edge_tag(std::string_view tag) {
  if (tag.empty()) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  if (!alpha(tag.front())) return false;
  for (char c : tag) {
    if (!alpha(c) && !(c >= '0' && c <= '9') && c != '-') return false;
  }
  return true;
}

void unknown_element(const xml::Element& parent, const xml::Element& child, bool lenient,
                     std::vector<std::string>* warnings) {
  std::string what = "unknown element <" + child.name + "> in <" + parent.name + "> at " + child.position();
  if (!lenient) throw Error(Errc::schema_error, what);
  if (warnings != nullptr) warnings->push_back(what);
}

void check_text(std::string_view text) {
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x20 && c != '\t' && c != '\n' && c != '\r') {
      throw Error(Errc::invalid_graph, "control character in text cannot be represented in XEG");
    }
  }
}

}  // namespace

const std::string& required_attribute(const xml::Element& element, std::string_view name) {
  if (const std::string* v = element.attribute(name)) return *v;
  schema_fail(element, "missing required attribute '" + std::string(name) + "'");
}

void check_attributes(const xml::Element& element, std::initializer_list<std::string_view> allowed,
                      bool lenient, std::vector<std::string>* warnings) {
  for (const auto& attr : element.attributes) {
    bool known = false;
    for (auto a : allowed) known = known || a == attr.name;
    if (known) continue;
    std::string what = "unknown attribute '" + attr.name + "' on <" + element.name + "> at " + element.position();
    if (!lenient) throw Error(Errc::schema_error, what);
    if (warnings != nullptr) warnings->push_back(what);
  }
}

std::pair<std::string, PropertyValue> property_from_element(const xml::Element& element) {
  const std::string& name = required_attribute(element, "name");
  const std::string& tag = required_attribute(element, "type");
  const std::string& text = required_attribute(element, "value");
  auto type = parse_type_tag(tag);
  if (!type) schema_fail(element, "bad type tag '" + tag + "'");
  try {
    return {name, parse_value(*type, text)};
  } catch (const Error& e) {
    schema_fail(element, "property '" + name + "': " + e.detail());
  }
}

void write_property_element(std::string& out, int level, std::string_view tag, std::string_view name,
                            const PropertyValue& value) {
  if (const auto* s = std::get_if<std::string>(&value)) check_text(*s);
  check_text(name);
  xml::write_start(out, level, tag,
                   {{"name", std::string(name)},
                    {"type", std::string(type_tag(type_of(value)))},
                    {"value", format_value(value)}},
                   true);
}

ExchangeGraph graph_from_element(const xml::Element& element, const XegParseOptions& options,
                                 std::vector<std::string>* warnings) {
  if (element.name != "graph") schema_fail(element, "expected <graph> element");
  check_attributes(element, {"root", "version", "transforms"}, options.lenient, warnings);
  NodeId root = parse_node_id(element, "root");
  const std::string& version = required_attribute(element, "version");
  if (version != kXegVersion) schema_fail(element, "unsupported version '" + version + "'");
  TransformMode mode = TransformMode::local;
  if (const std::string* t = element.attribute("transforms")) {
    if (*t == "global") {
      mode = TransformMode::global;
    } else if (*t != "local") {
      schema_fail(element, "attribute 'transforms' must be local or global");
    }
  }

  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::unordered_set<NodeId> ids;
  std::vector<const xml::Element*> edge_elements;

  for (const auto& child : element.children) {
    if (child.name == "node") {
      check_attributes(child, {"id", "name", "type", "scale"}, options.lenient, warnings);
      GraphNode node;
      node.id = parse_node_id(child, "id");
      node.name = required_attribute(child, "name");
      node.type_name = required_attribute(child, "type");
      std::uint64_t scale = parse_uint(child, "scale", required_attribute(child, "scale"));
      if (scale > UINT32_MAX) schema_fail(child, "scale out of range");
      node.scale = static_cast<std::uint32_t>(scale);
      if (!ids.insert(node.id).second) {
        schema_fail(child, "duplicate node id " + std::to_string(node.id.value));
      }
      for (const auto& sub : child.children) {
        if (sub.name == "property") {
          check_attributes(sub, {"name", "type", "value"}, options.lenient, warnings);
          auto [name, value] = property_from_element(sub);
          if (!node.properties.emplace(name, std::move(value)).second) {
            schema_fail(sub, "duplicate property '" + name + "'");
          }
        } else if (sub.name == "transform") {
          check_attributes(sub, {"kind", "value"}, options.lenient, warnings);
          const std::string& kind = required_attribute(sub, "kind");
          Matrix4 m{};
          try {
            m = std::get<Matrix4>(parse_value(PropertyType::matrix4, required_attribute(sub, "value")));
          } catch (const Error& e) {
            schema_fail(sub, e.detail());
          }
          std::optional<Matrix4>* slot = nullptr;
          if (kind == "local") {
            slot = &node.local_transform;
          } else if (kind == "global") {
            slot = &node.global_transform;
          } else {
            schema_fail(sub, "transform kind must be local or global, got '" + kind + "'");
          }
          if (slot->has_value()) schema_fail(sub, "duplicate " + kind + " transform");
          *slot = m;
        } else {
          unknown_element(child, sub, options.lenient, warnings);
        }
      }
      nodes.push_back(std::move(node));
    } else if (child.name == "edge") {
      edge_elements.push_back(&child);
    } else {
      unknown_element(element, child, options.lenient, warnings);
    }
  }

  if (!ids.contains(root)) {
    schema_fail(element, "root references unknown node id " + std::to_string(root.value));
  }
  for (const xml::Element* el : edge_elements) {
    check_attributes(*el, {"src_id", "dst_id", "type"}, options.lenient, warnings);
    GraphEdge edge;
    edge.src = parse_node_id(*el, "src_id");
    edge.dst = parse_node_id(*el, "dst_id");
    const std::string& tag = required_attribute(*el, "type");
    if (!valid_edge_tag(tag)) schema_fail(*el, "bad edge type '" + tag + "'");
    edge.etype = EdgeType::from_name(tag);
    for (NodeId end : {edge.src, edge.dst}) {
      if (!ids.contains(end)) {
        schema_fail(*el, "edge references unknown node id " + std::to_string(end.value));
      }
    }
    edges.push_back(std::move(edge));
  }

  ExchangeGraph graph = ExchangeGraph::from_parts(root, std::move(nodes), std::move(edges), mode);
  if (options.check_semantics) require_valid(graph, Errc::semantic_error, "graph at " + element.position());
  return graph;
}

XegDocument parse_xeg_document(std::string_view text, const XegParseOptions& options) {
  XegDocument doc;
  xml::Element root = xml::parse(text);
  doc.graph = graph_from_element(root, options, &doc.warnings);
  return doc;
}

ExchangeGraph parse_xeg(std::string_view text, const XegParseOptions& options) {
  return parse_xeg_document(text, options).graph;
}

void write_graph_element(std::string& out, const ExchangeGraph& graph, int level) {
  require_valid(graph, Errc::invalid_graph, "cannot serialize");
  auto order = canonical_order(graph);

  xml::AttributeList graph_attrs{{"root", std::to_string(graph.root().value)},
                                 {"version", std::string(kXegVersion)}};
  if (graph.transform_mode() == TransformMode::global) graph_attrs.emplace_back("transforms", "global");
  xml::write_start(out, level, "graph", graph_attrs, false);

  for (NodeId id : order) {
    const GraphNode& n = graph.node(id);
    check_text(n.name);
    check_text(n.type_name);
    bool empty = n.properties.empty() && !n.local_transform && !n.global_transform;
    xml::write_start(out, level + 1, "node",
                     {{"id", std::to_string(n.id.value)},
                      {"name", n.name},
                      {"type", n.type_name},
                      {"scale", std::to_string(n.scale)}},
                     empty);
    if (empty) continue;
    for (const auto& [key, value] : n.properties) {
      write_property_element(out, level + 2, "property", key, value);
    }
    if (n.local_transform) {
      xml::write_start(out, level + 2, "transform",
                       {{"kind", "local"}, {"value", format_value(*n.local_transform)}}, true);
    }
    if (n.global_transform) {
      xml::write_start(out, level + 2, "transform",
                       {{"kind", "global"}, {"value", format_value(*n.global_transform)}}, true);
    }
    xml::write_end(out, level + 1, "node");
  }
  for (NodeId id : order) {
    for (std::size_t e : child_edges(graph, id)) {
      const GraphEdge& edge = graph.edges()[e];
      xml::write_start(out, level + 1, "edge",
                       {{"src_id", std::to_string(edge.src.value)},
                        {"dst_id", std::to_string(edge.dst.value)},
                        {"type", std::string(edge.etype.name())}},
                       true);
    }
  }
  xml::write_end(out, level, "graph");
}

std::string serialize_xeg(const ExchangeGraph& graph) {
  std::string out;
  write_graph_element(out, graph, 0);
  return out;
}

}  // namespace fspm_bridge
