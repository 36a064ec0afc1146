#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fspm_bridge {

using Vec3 = std::array<double, 3>;
/// 4x4 matrix, row-major: element (r, c) lives at index 4 * r + c.
using Matrix4 = std::array<double, 16>;
using DoubleList = std::vector<double>;

/// Tagged property value. The alternative index is the type tag; values are
/// never coerced between alternatives.
using PropertyValue =
    std::variant<std::int64_t, double, float, bool, std::string, Vec3, Matrix4, DoubleList>;

enum class PropertyType : std::uint8_t {
  int64 = 0,
  float64,
  float32,
  boolean,
  text,
  vec3,
  matrix4,
  float64_list,
};

/// Named property fields of a node, or the environment variables of a step.
using PropertyMap = std::map<std::string, PropertyValue>;
using EnvMap = PropertyMap;

inline PropertyType type_of(const PropertyValue& value) {
  return static_cast<PropertyType>(value.index());
}

/// Wire/file tag: int, double, float, bool, string, vec3, matrix4, doublelist.
std::string_view type_tag(PropertyType type) noexcept;
std::optional<PropertyType> parse_type_tag(std::string_view tag) noexcept;

/// Shortest decimal text that parses back to exactly the same value.
std::string format_double(double value);
std::string format_float(float value);

/// Text form of the value as stored in an XML `value` attribute (unescaped).
std::string format_value(const PropertyValue& value);
/// Inverse of format_value. Throws Error(schema_error) on malformed text.
PropertyValue parse_value(PropertyType type, std::string_view text);

struct FloatTolerance {
  double rel = 1e-9;
  double abs = 1e-12;

  static constexpr FloatTolerance exact() { return {0.0, 0.0}; }
  /// Relative tolerance `rel`; the absolute floor is only used when rel > 0.
  static constexpr FloatTolerance relative(double rel) { return {rel, rel > 0.0 ? 1e-12 : 0.0}; }

  bool close(double a, double b) const;
};

/// Same type tag and equal payload; floating components compared with `tol`.
bool values_equal(const PropertyValue& a, const PropertyValue& b, FloatTolerance tol);

/// Numeric view of int/double/float values; nullopt for every other type.
std::optional<double> as_number(const PropertyValue& value);

}  // namespace fspm_bridge
