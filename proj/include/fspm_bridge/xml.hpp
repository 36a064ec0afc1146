#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Minimal XML reader/writer for the attribute-based dialect used by .xeg
// files, configuration files and protocol messages. Supports elements,
// attributes, comments, an optional <?xml ...?> declaration and the
// predefined/numeric character references. DOCTYPE, CDATA, processing
// instructions inside the document and non-whitespace character data are
// rejected.
namespace fspm_bridge::xml {

struct Attribute {
  std::string name;
  std::string value;
};

struct Element {
  std::string name;
  std::vector<Attribute> attributes;
  std::vector<Element> children;
  std::size_t line = 0;
  std::size_t column = 0;

  const std::string* attribute(std::string_view key) const;
  /// "line L, column C" of the element's start tag.
  std::string position() const;
};

/// Throws Error(syntax_error) with the line and column of the problem.
Element parse(std::string_view text);

std::string escape(std::string_view value);

using AttributeList = std::vector<std::pair<std::string_view, std::string>>;

/// Appends `<name a="v" ...>` (or `.../>` when `empty`) indented by two
/// spaces per level, followed by LF.
void write_start(std::string& out, int level, std::string_view name, const AttributeList& attrs,
                 bool empty);
void write_end(std::string& out, int level, std::string_view name);

}  // namespace fspm_bridge::xml
