#include "ipa/value.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>

namespace ipa {

std::string_view type_name(ValueType t) {
  switch (t) {
    case ValueType::I64: return "i64";
    case ValueType::F64: return "f64";
    case ValueType::Bool: return "bool";
    case ValueType::I64Array: return "i64[]";
    case ValueType::F64Array: return "f64[]";
  }
  return "?";
}

std::optional<ValueType> parse_type_name(std::string_view s) {
  if (s == "i64") return ValueType::I64;
  if (s == "f64") return ValueType::F64;
  if (s == "bool") return ValueType::Bool;
  if (s == "i64[]") return ValueType::I64Array;
  if (s == "f64[]") return ValueType::F64Array;
  return std::nullopt;
}

bool is_array(ValueType t) {
  return t == ValueType::I64Array || t == ValueType::F64Array;
}

bool is_scalar_numeric(ValueType t) {
  return t == ValueType::I64 || t == ValueType::F64;
}

bool same_double(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool operator==(const Value& a, const Value& b) {
  if (a.type() != b.type()) return false;
  switch (a.type()) {
    case ValueType::I64: return a.as_i64() == b.as_i64();
    case ValueType::F64: return same_double(a.as_f64(), b.as_f64());
    case ValueType::Bool: return a.as_bool() == b.as_bool();
    case ValueType::I64Array: return a.as_i64_array() == b.as_i64_array();
    case ValueType::F64Array: {
      const auto& x = a.as_f64_array();
      const auto& y = b.as_f64_array();
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!same_double(x[i], y[i])) return false;
      }
      return true;
    }
  }
  return false;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  std::string s(buf.data(), end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

namespace {

template <typename T, typename F>
void append_list(std::string& out, const std::vector<T>& xs, F fmt) {
  out += '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  out += ']';
}

}  // namespace

std::string format_value(const Value& v) {
  switch (v.type()) {
    case ValueType::I64: return std::to_string(v.as_i64());
    case ValueType::F64: return format_double(v.as_f64());
    case ValueType::Bool: return v.as_bool() ? "true" : "false";
    case ValueType::I64Array: {
      std::string out;
      append_list(out, v.as_i64_array(), [](std::int64_t x) { return std::to_string(x); });
      return out;
    }
    case ValueType::F64Array: {
      std::string out;
      append_list(out, v.as_f64_array(), [](double x) { return format_double(x); });
      return out;
    }
  }
  return {};
}

std::optional<std::int64_t> parse_i64(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_f64(std::string_view text) {
  if (text.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

namespace {

template <typename T, typename P>
std::optional<std::vector<T>> parse_list(std::string_view text, P parse_one) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') return std::nullopt;
  text = text.substr(1, text.size() - 2);
  std::vector<T> out;
  if (text.empty()) return out;
  while (true) {
    auto comma = text.find(',');
    auto item = parse_one(text.substr(0, comma));
    if (!item) return std::nullopt;
    out.push_back(*item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::optional<Value> parse_value(std::string_view text, ValueType type) {
  switch (type) {
    case ValueType::I64:
      if (auto v = parse_i64(text)) return Value(*v);
      return std::nullopt;
    case ValueType::F64:
      if (auto v = parse_f64(text)) return Value(*v);
      return std::nullopt;
    case ValueType::Bool:
      if (text == "true") return Value(true);
      if (text == "false") return Value(false);
      return std::nullopt;
    case ValueType::I64Array:
      if (auto v = parse_list<std::int64_t>(text, parse_i64)) return Value(std::move(*v));
      return std::nullopt;
    case ValueType::F64Array:
      if (auto v = parse_list<double>(text, parse_f64)) return Value(std::move(*v));
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace ipa
