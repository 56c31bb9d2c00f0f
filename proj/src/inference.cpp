#include "ipa/inference.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "ipa/error.hpp"

namespace ipa {

char class_letter(InvariantClass c) { return static_cast<char>('A' + static_cast<int>(c)); }

std::optional<InvariantClass> parse_class_letter(std::string_view s) {
  if (s.size() != 1 || s[0] < 'A' || s[0] > 'H') return std::nullopt;
  return static_cast<InvariantClass>(s[0] - 'A');
}

std::string_view class_description(InvariantClass c) {
  switch (c) {
    case InvariantClass::A: return "ArrayEquality";
    case InvariantClass::B: return "ElementwiseInitialization";
    case InvariantClass::C: return "Elementwise";
    case InvariantClass::D: return "Initialization";
    case InvariantClass::E: return "MultiValue";
    case InvariantClass::F: return "Order";
    case InvariantClass::G: return "Relational";
    case InvariantClass::H: return "ReturnValue";
  }
  return "?";
}

std::string_view relation_symbol(Relation r) {
  switch (r) {
    case Relation::Lt: return "<";
    case Relation::Le: return "<=";
    case Relation::Eq: return "==";
    case Relation::Gt: return ">";
    case Relation::Ge: return ">=";
  }
  return "?";
}

namespace {

std::optional<Relation> parse_relation(std::string_view s) {
  for (auto r : {Relation::Lt, Relation::Le, Relation::Eq, Relation::Gt, Relation::Ge}) {
    if (relation_symbol(r) == s) return r;
  }
  return std::nullopt;
}

double numeric(const Value& v) {
  switch (v.type()) {
    case ValueType::I64: return static_cast<double>(v.as_i64());
    case ValueType::F64: return v.as_f64();
    case ValueType::Bool: return v.as_bool() ? 1.0 : 0.0;
    default: return std::nan("");
  }
}

std::partial_ordering order(const Value& a, const Value& b) {
  if (a.type() == ValueType::I64 && b.type() == ValueType::I64) return a.as_i64() <=> b.as_i64();
  return numeric(a) <=> numeric(b);
}

bool holds(Relation r, std::partial_ordering o) {
  switch (r) {
    case Relation::Lt: return o == std::partial_ordering::less;
    case Relation::Le: return o == std::partial_ordering::less || o == std::partial_ordering::equivalent;
    case Relation::Eq: return o == std::partial_ordering::equivalent;
    case Relation::Gt: return o == std::partial_ordering::greater;
    case Relation::Ge: return o == std::partial_ordering::greater || o == std::partial_ordering::equivalent;
  }
  return false;
}

// Constant equality: exact for like types (NaNs equal each other), numeric otherwise.
bool same(const Value& a, const Value& b) {
  if (a.type() == b.type()) return a == b;
  return order(a, b) == std::partial_ordering::equivalent;
}

std::size_t array_size(const Value& v) {
  if (v.type() == ValueType::I64Array) return v.as_i64_array().size();
  if (v.type() == ValueType::F64Array) return v.as_f64_array().size();
  return 0;
}

Value element(const Value& v, std::size_t i) {
  if (v.type() == ValueType::I64Array) return Value(v.as_i64_array()[i]);
  return Value(v.as_f64_array()[i]);
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  if (s == "true" || s == "false" || s == "nan" || s == "inf") return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::optional<Value> parse_literal(std::string_view s) {
  if (s == "true") return Value(true);
  if (s == "false") return Value(false);
  if (!s.empty() && s.front() == '[') {
    if (auto v = parse_value(s, ValueType::I64Array)) return v;
    return parse_value(s, ValueType::F64Array);
  }
  if (auto v = parse_i64(s)) return Value(*v);
  if (auto v = parse_f64(s)) return Value(*v);
  return std::nullopt;
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == ' ') {
      ++i;
      continue;
    }
    auto j = s.find(' ', i);
    if (j == std::string_view::npos) j = s.size();
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string orig_text(const Predicate& p) {
  const bool array = p.other == "[]";
  std::string lhs = array ? p.var + "[]" : p.var;
  std::string out = lhs + " == orig(" + lhs + ")";
  if (!p.constants.empty()) {
    auto c = p.constants[0].as_i64();
    out += c < 0 ? " - " + std::to_string(-static_cast<std::uint64_t>(c)) : " + " + std::to_string(c);
  }
  return out;
}

}  // namespace

std::string Predicate::text() const {
  switch (kind) {
    case PredicateKind::EqualConst: return var + " == " + format_value(constants.at(0));
    case PredicateKind::LowerBound: return var + " >= " + format_value(constants.at(0));
    case PredicateKind::UpperBound: return var + " <= " + format_value(constants.at(0));
    case PredicateKind::NonZero: return var + " != 0";
    case PredicateKind::OneOf: {
      std::string out = var + " one of {";
      for (std::size_t i = 0; i < constants.size(); ++i) {
        if (i) out += ", ";
        out += format_value(constants[i]);
      }
      return out + "}";
    }
    case PredicateKind::Compare: return var + " " + std::string(relation_symbol(rel)) + " " + other;
    case PredicateKind::ArrayAllEqual:
    case PredicateKind::ArrayInit: return var + "[] == " + format_value(constants.at(0));
    case PredicateKind::Sorted: return var + "[] sorted " + std::string(relation_symbol(rel));
    case PredicateKind::Elementwise:
      return var + "[] " + std::string(relation_symbol(rel)) + " " + other + "[]";
    case PredicateKind::Orig: return orig_text(*this);
  }
  return {};
}

std::optional<Predicate> parse_predicate(std::string_view text) {
  Predicate p;
  if (auto brace = text.find(" one of {"); brace != std::string_view::npos) {
    if (text.back() != '}') return std::nullopt;
    p.kind = PredicateKind::OneOf;
    p.var = std::string(text.substr(0, brace));
    if (!is_identifier(p.var)) return std::nullopt;
    auto body = text.substr(brace + 9, text.size() - brace - 10);
    for (auto item : split_spaces(body)) {
      if (!item.empty() && item.back() == ',') item.remove_suffix(1);
      auto v = parse_literal(item);
      if (!v) return std::nullopt;
      p.constants.push_back(*v);
    }
    if (p.constants.size() < 2) return std::nullopt;
    return p;
  }

  auto tok = split_spaces(text);
  if (tok.size() < 3) return std::nullopt;
  std::string_view lhs = tok[0];
  const bool array = lhs.size() > 2 && lhs.substr(lhs.size() - 2) == "[]";
  if (array) lhs.remove_suffix(2);
  if (!is_identifier(lhs)) return std::nullopt;
  p.var = std::string(lhs);

  if (tok[1] == "==" && tok[2].starts_with("orig(")) {
    const std::string expect = array ? "orig(" + p.var + "[])" : "orig(" + p.var + ")";
    if (tok[2] != expect) return std::nullopt;
    p.kind = PredicateKind::Orig;
    if (array) p.other = "[]";
    if (tok.size() == 3) return p;
    if (tok.size() != 5 || array || (tok[3] != "+" && tok[3] != "-")) return std::nullopt;
    auto c = parse_i64(tok[4]);
    if (!c || *c < 0) return std::nullopt;
    p.constants.push_back(Value(tok[3] == "-" ? -*c : *c));
    return p;
  }
  if (tok.size() != 3) return std::nullopt;

  if (array) {
    if (tok[1] == "sorted") {
      auto r = parse_relation(tok[2]);
      if (!r || (*r != Relation::Le && *r != Relation::Ge)) return std::nullopt;
      p.kind = PredicateKind::Sorted;
      p.rel = *r;
      return p;
    }
    auto r = parse_relation(tok[1]);
    if (!r) return std::nullopt;
    std::string_view rhs = tok[2];
    if (rhs.size() > 2 && rhs.substr(rhs.size() - 2) == "[]" && is_identifier(rhs.substr(0, rhs.size() - 2))) {
      p.kind = PredicateKind::Elementwise;
      p.rel = *r;
      p.other = std::string(rhs.substr(0, rhs.size() - 2));
      return p;
    }
    if (*r != Relation::Eq) return std::nullopt;
    auto v = parse_literal(rhs);
    if (!v) return std::nullopt;
    p.kind = is_array(v->type()) ? PredicateKind::ArrayInit : PredicateKind::ArrayAllEqual;
    p.constants.push_back(*v);
    return p;
  }

  auto r = parse_relation(tok[1]);
  if (is_identifier(tok[2])) {
    if (!r) return std::nullopt;
    p.kind = PredicateKind::Compare;
    p.rel = *r;
    p.other = std::string(tok[2]);
    return p;
  }
  auto v = parse_literal(tok[2]);
  if (!v || is_array(v->type())) return std::nullopt;
  if (tok[1] == "!=") {
    if (!same(*v, Value(std::int64_t{0}))) return std::nullopt;
    p.kind = PredicateKind::NonZero;
    return p;
  }
  if (!r) return std::nullopt;
  switch (*r) {
    case Relation::Eq: p.kind = PredicateKind::EqualConst; break;
    case Relation::Ge: p.kind = PredicateKind::LowerBound; break;
    case Relation::Le: p.kind = PredicateKind::UpperBound; break;
    default: return std::nullopt;
  }
  p.constants.push_back(*v);
  return p;
}

InvariantClass classify(const Predicate& p) {
  if (p.var == "return" || p.other == "return") return InvariantClass::H;
  switch (p.kind) {
    case PredicateKind::ArrayInit: return InvariantClass::B;
    case PredicateKind::ArrayAllEqual: return InvariantClass::A;
    case PredicateKind::Sorted: return InvariantClass::F;
    case PredicateKind::Elementwise: return InvariantClass::C;
    case PredicateKind::Orig: return InvariantClass::D;
    case PredicateKind::OneOf: return InvariantClass::E;
    default: return InvariantClass::G;
  }
}

InvariantClass Invariant::cls() const { return classify(predicate); }

double confidence(const Predicate& p, std::uint64_t n) {
  if (n == 0) throw Error("confidence is undefined without samples");
  const double tail = std::ldexp(1.0, -static_cast<int>(std::min<std::uint64_t>(n, 4096)));
  double k = 1.0;
  switch (p.kind) {
    case PredicateKind::EqualConst:
    case PredicateKind::ArrayAllEqual:
    case PredicateKind::ArrayInit: k = 1.0; break;
    case PredicateKind::OneOf: k = static_cast<double>(p.constants.size()); break;
    default: return 1.0 - tail;
  }
  return std::clamp(1.0 - k * tail, 0.0, 1.0);
}

CheckResult check(const Predicate& p, const TraceSample& s, const TraceSample* orig) {
  const Value* v = s.find(p.var);
  if (!v) return {false, "missing " + p.var};
  const Value* w = nullptr;
  if (p.kind == PredicateKind::Compare || p.kind == PredicateKind::Elementwise) {
    w = s.find(p.other);
    if (!w) return {false, "missing " + p.other};
  }
  auto fail = [&]() {
    std::string why = p.var + " = " + format_value(*v);
    if (w) why += ", " + p.other + " = " + format_value(*w);
    return CheckResult{false, why};
  };
  auto scalar_only = [&](const Value* x) { return x && !is_array(x->type()); };

  switch (p.kind) {
    case PredicateKind::EqualConst:
      return scalar_only(v) && same(*v, p.constants[0]) ? CheckResult{} : fail();
    case PredicateKind::LowerBound:
      return scalar_only(v) && holds(Relation::Ge, order(*v, p.constants[0])) ? CheckResult{} : fail();
    case PredicateKind::UpperBound:
      return scalar_only(v) && holds(Relation::Le, order(*v, p.constants[0])) ? CheckResult{} : fail();
    case PredicateKind::NonZero:
      return scalar_only(v) && order(*v, Value(std::int64_t{0})) != std::partial_ordering::equivalent
                 ? CheckResult{}
                 : fail();
    case PredicateKind::OneOf: {
      if (!scalar_only(v)) return fail();
      for (const auto& c : p.constants) {
        if (same(*v, c)) return {};
      }
      return fail();
    }
    case PredicateKind::Compare:
      return scalar_only(v) && scalar_only(w) && holds(p.rel, order(*v, *w)) ? CheckResult{} : fail();
    case PredicateKind::ArrayAllEqual: {
      if (!is_array(v->type())) return fail();
      for (std::size_t i = 0; i < array_size(*v); ++i) {
        if (!same(element(*v, i), p.constants[0])) return fail();
      }
      return {};
    }
    case PredicateKind::ArrayInit:
      return is_array(v->type()) && same(*v, p.constants[0]) ? CheckResult{} : fail();
    case PredicateKind::Sorted: {
      if (!is_array(v->type())) return fail();
      for (std::size_t i = 1; i < array_size(*v); ++i) {
        if (!holds(p.rel, order(element(*v, i - 1), element(*v, i)))) return fail();
      }
      return {};
    }
    case PredicateKind::Elementwise: {
      if (!is_array(v->type()) || !is_array(w->type()) || array_size(*v) != array_size(*w)) return fail();
      for (std::size_t i = 0; i < array_size(*v); ++i) {
        if (!holds(p.rel, order(element(*v, i), element(*w, i)))) return fail();
      }
      return {};
    }
    case PredicateKind::Orig: {
      if (!orig) return {};
      const Value* o = orig->find(p.var);
      if (!o) return {false, "missing orig(" + p.var + ")"};
      bool ok = false;
      if (p.constants.empty()) {
        ok = same(*v, *o);
      } else if (v->type() == ValueType::I64 && o->type() == ValueType::I64) {
        auto sum = static_cast<std::uint64_t>(o->as_i64()) + static_cast<std::uint64_t>(p.constants[0].as_i64());
        ok = v->as_i64() == static_cast<std::int64_t>(sum);
      }
      if (ok) return {};
      return {false, p.var + " = " + format_value(*v) + ", orig(" + p.var + ") = " + format_value(*o)};
    }
  }
  return fail();
}

double candidate_confidence(const Predicate& p, const std::vector<TraceSample>& samples) {
  for (const auto& s : samples) {
    if (!check(p, s).ok) return 0.0;
  }
  return confidence(p, samples.size());
}

namespace {

// Column of one variable's values across all pooled samples at a point.
struct Column {
  std::string name;
  ValueType type = ValueType::I64;
  std::vector<const Value*> values;
  std::vector<Value> distinct;  // capped at kMaxOneOf + 1 entries
  bool constant() const { return distinct.size() == 1; }
};

constexpr std::size_t kMaxOneOf = 3;

void note_distinct(Column& c, const Value& v) {
  if (c.distinct.size() > kMaxOneOf) return;
  for (const auto& d : c.distinct) {
    if (d == v) return;
  }
  c.distinct.push_back(v);
}

class PointInference {
 public:
  PointInference(const Declaration& decl, double threshold, std::vector<Invariant>& out)
      : decl_(decl), threshold_(threshold), out_(out) {}

  void run(const std::vector<const TraceSample*>& samples,
           const std::vector<std::pair<const TraceSample*, const TraceSample*>>& paired) {
    if (samples.empty()) return;
    n_ = samples.size();
    for (std::size_t i = 0; i < decl_.vars.size(); ++i) {
      Column c{decl_.vars[i].name, decl_.vars[i].type, {}, {}};
      for (const auto* s : samples) {
        c.values.push_back(&s->bindings.at(i).value);
        note_distinct(c, s->bindings[i].value);
      }
      cols_.push_back(std::move(c));
    }
    for (const auto& c : cols_) {
      if (is_array(c.type)) {
        arrays(c);
      } else {
        scalar(c);
      }
    }
    for (std::size_t i = 0; i < cols_.size(); ++i) {
      for (std::size_t j = i + 1; j < cols_.size(); ++j) {
        if (cols_[i].type != cols_[j].type) continue;
        if (cols_[i].type == ValueType::I64 || cols_[i].type == ValueType::F64) pair(cols_[i], cols_[j]);
        if (is_array(cols_[i].type)) elementwise(cols_[i], cols_[j]);
      }
    }
    if (decl_.point.kind == PointKind::FunctionExit && !paired.empty()) {
      for (std::size_t i = 0; i < cols_.size(); ++i) origin(cols_[i], i, paired);
    }
  }

 private:
  void emit(Predicate p, std::uint64_t support) {
    double conf = confidence(p, support);
    if (conf < threshold_) return;
    out_.push_back({decl_.point, std::move(p), support, conf});
  }

  void scalar(const Column& c) {
    if (c.constant()) {
      emit({PredicateKind::EqualConst, c.name, {}, Relation::Eq, {c.distinct[0]}}, n_);
      return;
    }
    if (c.distinct.size() <= kMaxOneOf) {
      if (c.type == ValueType::Bool) return;  // {false, true} says nothing
      auto vals = c.distinct;
      std::sort(vals.begin(), vals.end(), [](const Value& a, const Value& b) {
        auto o = order(a, b);
        if (o == std::partial_ordering::unordered) return format_value(a) < format_value(b);
        return o == std::partial_ordering::less;
      });
      emit({PredicateKind::OneOf, c.name, {}, Relation::Eq, std::move(vals)}, n_);
      return;
    }
    if (c.type == ValueType::Bool) return;
    const Value* lo = c.values[0];
    const Value* hi = c.values[0];
    bool zero_seen = false;
    for (const auto* v : c.values) {
      if (order(*v, *v) == std::partial_ordering::unordered) return;  // NaN: no bounds
      if (order(*v, *lo) == std::partial_ordering::less) lo = v;
      if (order(*v, *hi) == std::partial_ordering::greater) hi = v;
      if (order(*v, Value(std::int64_t{0})) == std::partial_ordering::equivalent) zero_seen = true;
    }
    emit({PredicateKind::LowerBound, c.name, {}, Relation::Ge, {*lo}}, n_);
    emit({PredicateKind::UpperBound, c.name, {}, Relation::Le, {*hi}}, n_);
    if (!zero_seen && numeric(*lo) < 0 && numeric(*hi) > 0) {
      emit({PredicateKind::NonZero, c.name, {}, Relation::Eq, {}}, n_);
    }
  }

  // Strongest relation r with r(x, y) for every pair, or nullopt.
  template <typename Next>
  static std::optional<Relation> strongest(Next next) {
    bool lt = true, le = true, eq = true, gt = true, ge = true;
    std::optional<std::partial_ordering> o;
    while ((o = next())) {
      lt = lt && holds(Relation::Lt, *o);
      le = le && holds(Relation::Le, *o);
      eq = eq && holds(Relation::Eq, *o);
      gt = gt && holds(Relation::Gt, *o);
      ge = ge && holds(Relation::Ge, *o);
      if (!le && !ge) return std::nullopt;
    }
    if (eq) return Relation::Eq;
    if (lt) return Relation::Lt;
    if (le) return Relation::Le;
    if (gt) return Relation::Gt;
    if (ge) return Relation::Ge;
    return std::nullopt;
  }

  void pair(const Column& x, const Column& y) {
    if (x.constant() || y.constant()) return;
    std::size_t k = 0;
    auto r = strongest([&]() -> std::optional<std::partial_ordering> {
      if (k == x.values.size()) return std::nullopt;
      auto o = order(*x.values[k], *y.values[k]);
      ++k;
      return o;
    });
    if (r) emit({PredicateKind::Compare, x.name, y.name, *r, {}}, n_);
  }

  void arrays(const Column& c) {
    std::optional<Value> first;
    bool all_equal = true;
    std::size_t longest = 0;
    for (const auto* v : c.values) {
      longest = std::max(longest, array_size(*v));
      for (std::size_t i = 0; i < array_size(*v) && all_equal; ++i) {
        Value e = element(*v, i);
        if (!first) {
          first = e;
        } else if (!(e == *first)) {
          all_equal = false;
        }
      }
    }
    if (first && all_equal) {
      emit({PredicateKind::ArrayAllEqual, c.name, {}, Relation::Eq, {*first}}, n_);
      fixed_.push_back(c.name);
      return;
    }
    if (c.constant() && longest > 0) {
      if (decl_.point.kind == PointKind::FunctionEntry) {
        emit({PredicateKind::ArrayInit, c.name, {}, Relation::Eq, {c.distinct[0]}}, n_);
        fixed_.push_back(c.name);
        return;
      }
      fixed_.push_back(c.name);
    }
    if (longest < 2) return;
    for (auto r : {Relation::Le, Relation::Ge}) {
      bool sorted = true;
      for (const auto* v : c.values) {
        for (std::size_t i = 1; i < array_size(*v) && sorted; ++i) {
          sorted = holds(r, order(element(*v, i - 1), element(*v, i)));
        }
        if (!sorted) break;
      }
      if (sorted) {
        emit({PredicateKind::Sorted, c.name, {}, r, {}}, n_);
        return;
      }
    }
  }

  bool is_fixed(const std::string& name) const {
    return std::find(fixed_.begin(), fixed_.end(), name) != fixed_.end();
  }

  void elementwise(const Column& a, const Column& b) {
    if (is_fixed(a.name) || is_fixed(b.name)) return;
    bool any = false;
    for (std::size_t k = 0; k < a.values.size(); ++k) {
      if (array_size(*a.values[k]) != array_size(*b.values[k])) return;
      any = any || array_size(*a.values[k]) > 0;
    }
    if (!any) return;
    std::size_t k = 0, i = 0;
    auto r = strongest([&]() -> std::optional<std::partial_ordering> {
      while (k < a.values.size() && i >= array_size(*a.values[k])) {
        ++k;
        i = 0;
      }
      if (k == a.values.size()) return std::nullopt;
      auto o = order(element(*a.values[k], i), element(*b.values[k], i));
      ++i;
      return o;
    });
    if (r) emit({PredicateKind::Elementwise, a.name, b.name, *r, {}}, n_);
  }

  void origin(const Column& c, std::size_t index,
              const std::vector<std::pair<const TraceSample*, const TraceSample*>>& paired) {
    if (c.name == "return" || c.type == ValueType::Bool) return;
    if (c.constant() || is_fixed(c.name)) return;
    const Value* now = nullptr;
    const Value* before = nullptr;
    bool equal = true, offset = c.type == ValueType::I64;
    std::optional<std::uint64_t> delta;
    for (const auto& [exit, enter] : paired) {
      now = &exit->bindings.at(index).value;
      before = enter->find(c.name);
      if (!before) return;
      equal = equal && same(*now, *before);
      if (offset) {
        auto d = static_cast<std::uint64_t>(now->as_i64()) - static_cast<std::uint64_t>(before->as_i64());
        if (delta && *delta != d) offset = false;
        delta = d;
      }
      if (!equal && !offset) return;
    }
    Predicate p{PredicateKind::Orig, c.name, is_array(c.type) ? "[]" : "", Relation::Eq, {}};
    if (!equal) p.constants.push_back(Value(static_cast<std::int64_t>(*delta)));
    emit(std::move(p), paired.size());
  }

  const Declaration& decl_;
  double threshold_;
  std::vector<Invariant>& out_;
  std::uint64_t n_ = 0;
  std::vector<Column> cols_;
  std::vector<std::string> fixed_;  // arrays already pinned by A or B or constant
};

bool canonical_less(const Invariant& a, const Invariant& b) {
  if (auto c = a.point <=> b.point; c != 0) return c < 0;
  auto ca = class_letter(a.cls()), cb = class_letter(b.cls());
  if (ca != cb) return ca < cb;
  return a.predicate.text() < b.predicate.text();
}

std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string InvariantSet::fingerprint() const {
  std::string text;
  for (const auto& inv : invariants) {
    text += inv.point.name();
    text += '\t';
    text += class_letter(inv.cls());
    text += '\t';
    text += inv.predicate.text();
    text += '\n';
  }
  return fnv1a_hex(text);
}

std::vector<std::size_t> InvariantSet::count_by_class() const {
  std::vector<std::size_t> counts(std::size(kAllClasses), 0);
  for (const auto& inv : invariants) ++counts[static_cast<std::size_t>(inv.cls())];
  return counts;
}

InvariantSet infer(const std::vector<TraceFile>& traces, const InferenceOptions& opts) {
  if (traces.empty()) throw Error("inference needs at least one trace");
  for (std::size_t i = 1; i < traces.size(); ++i) {
    if (traces[i].declarations != traces[0].declarations) {
      throw Error("trace " + std::to_string(i) + " declares different program points than trace 0");
    }
  }

  std::map<ProgramPoint, std::vector<const TraceSample*>> pooled;
  std::map<std::string, std::vector<std::pair<const TraceSample*, const TraceSample*>>> paired;
  for (const auto& t : traces) {
    std::map<std::tuple<std::string, std::uint64_t, std::uint64_t>, const TraceSample*> open;
    for (const auto& s : t.samples) {
      pooled[s.point].push_back(&s);
      auto key = std::make_tuple(s.point.function, s.thread_id, s.nonce);
      if (s.point.kind == PointKind::FunctionEntry) {
        open[key] = &s;
      } else if (s.point.kind == PointKind::FunctionExit) {
        if (auto it = open.find(key); it != open.end()) paired[s.point.function].emplace_back(&s, it->second);
      }
    }
  }

  InvariantSet set;
  set.run_count = traces.size();
  set.threshold = opts.threshold;
  set.granularity = opts.granularity;
  static const std::vector<std::pair<const TraceSample*, const TraceSample*>> kNone;
  for (const auto& decl : traces[0].declarations) {
    auto it = pooled.find(decl.point);
    if (it == pooled.end()) continue;
    const auto& pairs = decl.point.kind == PointKind::FunctionExit && paired.count(decl.point.function)
                            ? paired[decl.point.function]
                            : kNone;
    PointInference(decl, opts.threshold, set.invariants).run(it->second, pairs);
  }
  std::sort(set.invariants.begin(), set.invariants.end(), canonical_less);
  return set;
}

std::string write_invariants(const InvariantSet& s) {
  std::ostringstream out;
  out << "# ipa invariants\n";
  out << "# runs=" << s.run_count << " threshold=" << format_double(s.threshold)
      << " granularity=" << granularity_name(s.granularity) << " count=" << s.invariants.size() << "\n";
  for (const auto& inv : s.invariants) {
    out << inv.point.name() << '\t' << class_letter(inv.cls()) << '\t' << inv.predicate.text() << "\tn="
        << inv.support << "\tconf=" << format_double(inv.confidence) << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

void parse_header(std::string_view line, InvariantSet& s) {
  for (auto field : split_spaces(line.substr(1))) {
    auto eq = field.find('=');
    if (eq == std::string_view::npos) continue;
    auto key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "runs") {
      if (auto v = parse_i64(val)) s.run_count = static_cast<std::uint64_t>(*v);
    } else if (key == "threshold") {
      if (auto v = parse_f64(val)) s.threshold = *v;
    } else if (key == "granularity") {
      if (auto g = parse_granularity(val)) s.granularity = *g;
    }
  }
}

}  // namespace

InvariantSet parse_invariants(std::string_view text) {
  InvariantSet s;
  std::size_t lineno = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_header(line, s);
      continue;
    }
    auto f = split_tabs(line);
    if (f.size() != 5) throw ParseError(lineno, "expected 5 tab-separated fields");
    Invariant inv;
    if (!parse_point_name(f[0], inv.point)) throw ParseError(lineno, "bad program point '" + std::string(f[0]) + "'");
    auto cls = parse_class_letter(f[1]);
    if (!cls) throw ParseError(lineno, "bad invariant class '" + std::string(f[1]) + "'");
    auto pred = parse_predicate(f[2]);
    if (!pred) throw ParseError(lineno, "bad predicate '" + std::string(f[2]) + "'");
    inv.predicate = std::move(*pred);
    if (inv.cls() != *cls) {
      throw ParseError(lineno, "predicate '" + std::string(f[2]) + "' is not of class " + std::string(f[1]));
    }
    if (!f[3].starts_with("n=") || !f[4].starts_with("conf=")) throw ParseError(lineno, "expected n= and conf=");
    auto n = parse_i64(f[3].substr(2));
    auto conf = parse_f64(f[4].substr(5));
    if (!n || *n < 0 || !conf) throw ParseError(lineno, "bad support or confidence");
    inv.support = static_cast<std::uint64_t>(*n);
    inv.confidence = *conf;
    s.invariants.push_back(std::move(inv));
  }
  std::stable_sort(s.invariants.begin(), s.invariants.end(), canonical_less);
  return s;
}

InvariantSet read_invariant_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open invariant file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_invariants(buf.str());
}

void write_invariant_file(const std::string& path, const InvariantSet& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write invariant file " + path);
  out << write_invariants(s);
}

double invariant_density(const InvariantSet& s, const Program& p) {
  if (p.metrics.lines_of_code == 0) throw Error("program has no lines of code");
  return 100.0 * static_cast<double>(s.size()) / static_cast<double>(p.metrics.lines_of_code);
}

StabilityCurve stability_curve(const std::function<TraceFile(std::size_t)>& generator,
                               const std::vector<std::size_t>& ns, const InferenceOptions& opts) {
  StabilityCurve curve;
  std::vector<TraceFile> traces;
  for (auto n : ns) {
    if (n == 0) throw Error("stability needs n >= 1");
    while (traces.size() < n) traces.push_back(generator(traces.size()));
    std::vector<TraceFile> prefix(traces.begin(), traces.begin() + static_cast<std::ptrdiff_t>(n));
    auto set = infer(prefix, opts);
    curve.rows.push_back({n, set.size(), set.fingerprint()});
  }
  if (curve.rows.size() >= 2) {
    const auto& rows = curve.rows;
    curve.converged = rows[rows.size() - 1].fingerprint == rows[rows.size() - 2].fingerprint;
  }
  return curve;
}

}  // namespace ipa
