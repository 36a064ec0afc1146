#include "fspm_bridge/property.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

#include "fspm_bridge/error.hpp"

namespace fspm_bridge {

namespace {

constexpr std::array<std::string_view, 8> kTypeTags = {
    "int", "double", "float", "bool", "string", "vec3", "matrix4", "doublelist"};

template <typename Float>
std::string format_floating(Float value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw Error(Errc::invalid_graph, "cannot format floating-point value");
  return std::string(buf.data(), end);
}

template <typename Number>
Number parse_number(std::string_view text) {
  Number out{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw Error(Errc::schema_error, "bad numeric value '" + std::string(text) + "'");
  }
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::vector<std::string_view> split_ws(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

template <std::size_t N>
std::array<double, N> parse_fixed(std::string_view text, std::string_view what) {
  auto tokens = split_ws(text);
  if (tokens.size() != N) {
    throw Error(Errc::schema_error, std::string(what) + " needs " + std::to_string(N) +
                                        " numbers, got " + std::to_string(tokens.size()));
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_number<double>(tokens[i]);
  return out;
}

template <typename Range>
std::string join_doubles(const Range& values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += ' ';
    out += format_double(v);
  }
  return out;
}

}  // namespace

std::string_view type_tag(PropertyType type) noexcept {
  return kTypeTags[static_cast<std::size_t>(type)];
}

std::optional<PropertyType> parse_type_tag(std::string_view tag) noexcept {
  for (std::size_t i = 0; i < kTypeTags.size(); ++i) {
    if (kTypeTags[i] == tag) return static_cast<PropertyType>(i);
  }
  return std::nullopt;
}

std::string format_double(double value) { return format_floating(value); }
std::string format_float(float value) { return format_floating(value); }

std::string format_value(const PropertyValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(v);
        } else if constexpr (std::is_same_v<T, float>) {
          return format_float(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else {
          return join_doubles(v);
        }
      },
      value);
}

PropertyValue parse_value(PropertyType type, std::string_view text) {
  switch (type) {
    case PropertyType::int64:
      return parse_number<std::int64_t>(text);
    case PropertyType::float64:
      return parse_number<double>(text);
    case PropertyType::float32:
      return parse_number<float>(text);
    case PropertyType::boolean:
      if (text == "true") return true;
      if (text == "false") return false;
      throw Error(Errc::schema_error, "bad bool value '" + std::string(text) + "'");
    case PropertyType::text:
      return std::string(text);
    case PropertyType::vec3:
      return parse_fixed<3>(text, "vec3");
    case PropertyType::matrix4:
      return parse_fixed<16>(text, "matrix4");
    case PropertyType::float64_list: {
      DoubleList out;
      for (auto token : split_ws(text)) out.push_back(parse_number<double>(token));
      return out;
    }
  }
  throw Error(Errc::schema_error, "unknown property type");
}

bool FloatTolerance::close(double a, double b) const {
  if (a == b) return true;
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  if (rel == 0.0 && abs == 0.0) return false;
  double diff = std::fabs(a - b);
  return diff <= abs || diff <= rel * std::max(std::fabs(a), std::fabs(b));
}

bool values_equal(const PropertyValue& a, const PropertyValue& b, FloatTolerance tol) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](const auto& lhs) -> bool {
        using T = std::decay_t<decltype(lhs)>;
        const auto& rhs = std::get<T>(b);
        if constexpr (std::is_same_v<T, double> || std::is_same_v<T, float>) {
          return tol.close(lhs, rhs);
        } else if constexpr (std::is_same_v<T, Vec3> || std::is_same_v<T, Matrix4> ||
                             std::is_same_v<T, DoubleList>) {
          if (lhs.size() != rhs.size()) return false;
          for (std::size_t i = 0; i < lhs.size(); ++i) {
            if (!tol.close(lhs[i], rhs[i])) return false;
          }
          return true;
        } else {
          return lhs == rhs;
        }
      },
      a);
}

std::optional<double> as_number(const PropertyValue& value) {
  if (auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  if (auto* d = std::get_if<double>(&value)) return *d;
  if (auto* f = std::get_if<float>(&value)) return static_cast<double>(*f);
  return std::nullopt;
}

}  // namespace fspm_bridge
