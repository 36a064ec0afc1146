#include "fspm_bridge/xml.hpp"

#include <charconv>
#include <cstdint>

#include "fspm_bridge/error.hpp"

namespace fspm_bridge::xml {

const std::string* Element::attribute(std::string_view key) const {
  for (const auto& a : attributes) {
    if (a.name == key) return &a.value;
  }
  return nullptr;
}

std::string Element::position() const {
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '-' || c == '.' || c == ':' || static_cast<unsigned char>(c) >= 0x80;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  Element document() {
    if (s_.starts_with("\xEF\xBB\xBF")) fail("byte order mark is not allowed");
    if (s_.substr(i_).starts_with("<?xml")) skip_declaration();
    skip_misc();
    if (at_end() || peek() != '<') fail("expected root element");
    Element root = element();
    skip_misc();
    if (!at_end()) fail("content after the root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::syntax_error,
                what + " at line " + std::to_string(line_) + ", column " + std::to_string(col_));
  }

  bool at_end() const { return i_ >= s_.size(); }
  char peek() const { return s_[i_]; }
  bool looking_at(std::string_view token) const { return s_.substr(i_).starts_with(token); }

  void bump() {
    if (s_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void bump(std::size_t n) {
    for (std::size_t k = 0; k < n && !at_end(); ++k) bump();
  }

  void expect(char c) {
    if (at_end() || peek() != c) fail(std::string("expected '") + c + "'");
    bump();
  }

  void skip_space() {
    while (!at_end() && is_space(peek())) bump();
  }

  void skip_declaration() {
    while (!at_end() && !looking_at("?>")) bump();
    if (at_end()) fail("unterminated XML declaration");
    bump(2);
  }

  void skip_comment() {
    bump(4);
    while (!at_end() && !looking_at("-->")) bump();
    if (at_end()) fail("unterminated comment");
    bump(3);
  }

  // Whitespace and comments between markup.
  void skip_misc() {
    for (;;) {
      skip_space();
      if (looking_at("<!--")) {
        skip_comment();
      } else {
        return;
      }
    }
  }

  std::string name() {
    std::size_t start = i_;
    while (!at_end() && is_name_char(peek())) bump();
    if (i_ == start) fail("expected a name");
    return std::string(s_.substr(start, i_ - start));
  }

  void reference(std::string& out) {
    bump();  // '&'
    std::size_t start = i_;
    while (!at_end() && peek() != ';' && i_ - start < 12) bump();
    if (at_end() || peek() != ';') fail("unterminated character reference");
    std::string_view ref = s_.substr(start, i_ - start);
    bump();
    if (ref == "lt") {
      out += '<';
    } else if (ref == "gt") {
      out += '>';
    } else if (ref == "amp") {
      out += '&';
    } else if (ref == "quot") {
      out += '"';
    } else if (ref == "apos") {
      out += '\'';
    } else if (ref.starts_with('#')) {
      bool hex = ref.size() > 1 && ref[1] == 'x';
      std::string_view digits = ref.substr(hex ? 2 : 1);
      std::uint32_t cp = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
      if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty() || cp == 0 ||
          cp > 0x10FFFF) {
        fail("bad character reference '&" + std::string(ref) + ";'");
      }
      append_utf8(out, cp);
    } else {
      fail("unknown entity '&" + std::string(ref) + ";'");
    }
  }

  std::string attribute_value() {
    if (at_end() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
    char quote = peek();
    bump();
    std::string out;
    while (!at_end() && peek() != quote) {
      char c = peek();
      if (c == '<') fail("'<' in attribute value");
      if (c == '&') {
        reference(out);
        continue;
      }
      out += is_space(c) ? ' ' : c;
      bump();
    }
    if (at_end()) fail("unterminated attribute value");
    bump();
    return out;
  }

  Element element() {
    Element el;
    el.line = line_;
    el.column = col_;
    expect('<');
    el.name = name();
    for (;;) {
      bool had_space = !at_end() && is_space(peek());
      skip_space();
      if (at_end()) fail("unterminated start tag <" + el.name + ">");
      if (looking_at("/>")) {
        bump(2);
        return el;
      }
      if (peek() == '>') {
        bump();
        break;
      }
      if (!had_space) fail("expected whitespace before attribute");
      Attribute attr;
      attr.name = name();
      skip_space();
      expect('=');
      skip_space();
      attr.value = attribute_value();
      if (el.attribute(attr.name) != nullptr) fail("duplicate attribute '" + attr.name + "'");
      el.attributes.push_back(std::move(attr));
    }
    for (;;) {
      skip_space();
      if (at_end()) fail("missing end tag </" + el.name + ">");
      if (looking_at("<!--")) {
        skip_comment();
      } else if (looking_at("</")) {
        bump(2);
        std::string closing = name();
        if (closing != el.name) fail("end tag </" + closing + "> does not match <" + el.name + ">");
        skip_space();
        expect('>');
        return el;
      } else if (looking_at("<![CDATA[")) {
        fail("CDATA sections are not supported");
      } else if (looking_at("<!") || looking_at("<?")) {
        fail("unsupported markup");
      } else if (peek() == '<') {
        el.children.push_back(element());
      } else {
        fail("unexpected character data in <" + el.name + ">");
      }
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

}  // namespace

Element parse(std::string_view text) { return Parser(text).document(); }

std::string escape(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\t':
        out += "&#9;";
        break;
      case '\n':
        out += "&#10;";
        break;
      case '\r':
        out += "&#13;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

void write_start(std::string& out, int level, std::string_view name, const AttributeList& attrs,
                 bool empty) {
  out.append(static_cast<std::size_t>(2 * level), ' ');
  out += '<';
  out += name;
  for (const auto& [key, value] : attrs) {
    out += ' ';
    out += key;
    out += "=\"";
    out += escape(value);
    out += '"';
  }
  out += empty ? "/>\n" : ">\n";
}

void write_end(std::string& out, int level, std::string_view name) {
  out.append(static_cast<std::size_t>(2 * level), ' ');
  out += "</";
  out += name;
  out += ">\n";
}

}  // namespace fspm_bridge::xml
