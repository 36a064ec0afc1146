#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fspm_bridge/exchange_graph.hpp"
#include "fspm_bridge/xml.hpp"

// XEG: the XML form of an ExchangeGraph.
//
//   <graph root="1" version="1.0">
//     <node id="1" name="plant" type="Plant" scale="0">
//       <property name="age" type="int" value="3"/>
//       <transform kind="local" value="m00 m01 m02 m03 m10 ... m33"/>
//     </node>
//     <edge src_id="1" dst_id="2" type="successor"/>
//   </graph>
//
// Matrices are written row-major. A graph holding global transforms carries
// transforms="global" on the root element; the default is local.
//
// Canonical form: nodes in canonical traversal order, then edges grouped by
// source in the same order with each group in canonical child order;
// properties sorted by name; shortest round-trip decimals; two-space
// indentation; LF line endings; no XML declaration.
namespace fspm_bridge {

inline constexpr std::string_view kXegVersion = "1.0";

struct XegParseOptions {
  /// Unknown elements/attributes become warnings instead of SchemaError.
  bool lenient = false;
  /// Run validate() after parsing and throw SemanticError on violations.
  bool check_semantics = true;
};

struct XegDocument {
  std::string version{kXegVersion};
  ExchangeGraph graph;
  std::vector<std::string> warnings;
};

/// Throws SyntaxError, SchemaError, SemanticError.
XegDocument parse_xeg_document(std::string_view text, const XegParseOptions& options = {});
ExchangeGraph parse_xeg(std::string_view text, const XegParseOptions& options = {});

/// Throws InvalidGraph when the graph fails validate().
std::string serialize_xeg(const ExchangeGraph& graph);

// Element-level pieces, shared with protocol messages that embed a graph.
ExchangeGraph graph_from_element(const xml::Element& element, const XegParseOptions& options,
                                 std::vector<std::string>* warnings);
void write_graph_element(std::string& out, const ExchangeGraph& graph, int level);

/// `<tag name="..." type="..." value="..."/>`, as used for node properties
/// and environment variables.
std::pair<std::string, PropertyValue> property_from_element(const xml::Element& element);
void write_property_element(std::string& out, int level, std::string_view tag,
                            std::string_view name, const PropertyValue& value);

/// Strict check of an element's attribute names. In lenient mode unknown
/// names are appended to `warnings` instead of throwing SchemaError.
void check_attributes(const xml::Element& element, std::initializer_list<std::string_view> allowed,
                      bool lenient, std::vector<std::string>* warnings);
/// Throws SchemaError naming the element and attribute when absent.
const std::string& required_attribute(const xml::Element& element, std::string_view name);

}  // namespace fspm_bridge
