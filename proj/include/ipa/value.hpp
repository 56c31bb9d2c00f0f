#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ipa {

enum class ValueType { I64, F64, Bool, I64Array, F64Array };

std::string_view type_name(ValueType t);
std::optional<ValueType> parse_type_name(std::string_view s);
bool is_array(ValueType t);
bool is_scalar_numeric(ValueType t);

// A traced variable value. Doubles compare bitwise, except that every NaN
// equals every other NaN, so that faulty values survive a codec round trip.
class Value {
 public:
  using Storage = std::variant<std::int64_t, double, bool,
                               std::vector<std::int64_t>, std::vector<double>>;

  Value() : data_(std::int64_t{0}) {}
  Value(std::int64_t v) : data_(v) {}
  Value(int v) : data_(std::int64_t{v}) {}
  Value(double v) : data_(v) {}
  Value(bool v) : data_(v) {}
  Value(std::vector<std::int64_t> v) : data_(std::move(v)) {}
  Value(std::vector<double> v) : data_(std::move(v)) {}

  ValueType type() const { return static_cast<ValueType>(data_.index()); }
  const Storage& storage() const { return data_; }

  std::int64_t as_i64() const { return std::get<std::int64_t>(data_); }
  double as_f64() const { return std::get<double>(data_); }
  bool as_bool() const { return std::get<bool>(data_); }
  const std::vector<std::int64_t>& as_i64_array() const {
    return std::get<std::vector<std::int64_t>>(data_);
  }
  const std::vector<double>& as_f64_array() const {
    return std::get<std::vector<double>>(data_);
  }

  friend bool operator==(const Value& a, const Value& b);

 private:
  Storage data_;
};

bool same_double(double a, double b);

// Shortest round-trip decimal; always carries a '.', an exponent, or is
// one of nan / inf / -inf so the literal is recognisably floating point.
std::string format_double(double v);
std::string format_value(const Value& v);

// Parses a value literal of a known type. Returns nullopt on malformed text.
std::optional<Value> parse_value(std::string_view text, ValueType type);
std::optional<std::int64_t> parse_i64(std::string_view text);
std::optional<double> parse_f64(std::string_view text);

}  // namespace ipa
