#include "ipa/trace.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "ipa/error.hpp"

namespace ipa {

std::string ProgramPoint::name() const {
  switch (kind) {
    case PointKind::FunctionEntry: return function + ":::ENTER";
    case PointKind::FunctionExit: return function + ":::EXIT";
    case PointKind::BasicBlockEntry: return function + ":::BB:" + block;
  }
  return function;
}

std::strong_ordering operator<=>(const ProgramPoint& a, const ProgramPoint& b) {
  if (auto c = a.function <=> b.function; c != 0) return c;
  if (auto c = static_cast<int>(a.kind) <=> static_cast<int>(b.kind); c != 0) return c;
  return a.block <=> b.block;
}

namespace {

bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  auto head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto tail = [&](char c) { return head(c) || std::isdigit(static_cast<unsigned char>(c)); };
  if (!head(s.front())) return false;
  for (char c : s) {
    if (!tail(c)) return false;
  }
  return true;
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    auto j = line.find(' ', i);
    if (j == std::string_view::npos) j = line.size();
    out.push_back(line.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

}  // namespace

bool parse_point_name(std::string_view text, ProgramPoint& out) {
  auto sep = text.find(":::");
  if (sep == std::string_view::npos) return false;
  auto fn = text.substr(0, sep);
  auto rest = text.substr(sep + 3);
  if (!is_ident(fn)) return false;
  if (rest == "ENTER") {
    out = ProgramPoint::entry(std::string(fn));
  } else if (rest == "EXIT") {
    out = ProgramPoint::exit(std::string(fn));
  } else if (rest.starts_with("BB:") && is_ident(rest.substr(3))) {
    out = ProgramPoint::block_entry(std::string(fn), std::string(rest.substr(3)));
  } else {
    return false;
  }
  return true;
}

const Value* TraceSample::find(std::string_view var) const {
  for (const auto& b : bindings) {
    if (b.name == var) return &b.value;
  }
  return nullptr;
}

const Declaration* TraceFile::declaration(const ProgramPoint& p) const {
  for (const auto& d : declarations) {
    if (d.point == p) return &d;
  }
  return nullptr;
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    auto nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) {
      throw ParseError(line_no_ + 1, "missing final newline");
    }
    line = text_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    ++line_no_;
    return true;
  }

  std::string_view expect(const char* what) {
    std::string_view line;
    if (!next(line)) throw ParseError(line_no_ + 1, std::string("unexpected end of file, expected ") + what);
    return line;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

std::uint64_t parse_field(std::string_view tok, std::string_view key, std::size_t line) {
  if (!tok.starts_with(key)) throw ParseError(line, "expected '" + std::string(key) + "'");
  auto v = parse_i64(tok.substr(key.size()));
  if (!v || *v < 0) throw ParseError(line, "bad value for '" + std::string(key) + "'");
  return static_cast<std::uint64_t>(*v);
}

}  // namespace

TraceFile parse_trace(std::string_view text) {
  LineReader in(text);
  TraceFile t;
  if (in.expect("header") != "IPATRACE 1") throw ParseError(1, "expected 'IPATRACE 1'");

  std::set<ProgramPoint> declared;
  while (true) {
    auto line = in.expect("declaration or blank line");
    if (line.empty()) break;
    auto toks = split_spaces(line);
    if (toks.size() < 2 || toks[0] != "DECL") throw ParseError(in.line_no(), "expected DECL");
    Declaration d;
    if (!parse_point_name(toks[1], d.point)) throw ParseError(in.line_no(), "bad program point name");
    if (!declared.insert(d.point).second) throw ParseError(in.line_no(), "duplicate declaration of " + d.point.name());
    std::set<std::string, std::less<>> names;
    for (std::size_t i = 2; i < toks.size(); ++i) {
      auto colon = toks[i].find(':');
      if (colon == std::string_view::npos) throw ParseError(in.line_no(), "bad variable signature");
      auto name = toks[i].substr(0, colon);
      auto type = parse_type_name(toks[i].substr(colon + 1));
      if (!is_ident(name) || !type) throw ParseError(in.line_no(), "bad variable signature");
      if (!names.emplace(name).second) throw ParseError(in.line_no(), "duplicate variable " + std::string(name));
      d.vars.push_back({std::string(name), *type});
    }
    t.declarations.push_back(std::move(d));
  }
  if (in.expect("SAMPLES") != "SAMPLES") throw ParseError(in.line_no(), "expected SAMPLES");

  // (function, tid, nonce) -> {entered, exited}
  std::map<std::tuple<std::string, std::uint64_t, std::uint64_t>, std::pair<bool, bool>> pairing;
  std::string_view line;
  while (in.next(line)) {
    auto toks = split_spaces(line);
    if (toks.size() != 4 || toks[0] != "S") throw ParseError(in.line_no(), "expected sample header");
    TraceSample s;
    if (!parse_point_name(toks[1], s.point)) throw ParseError(in.line_no(), "bad program point name");
    s.nonce = parse_field(toks[2], "nonce=", in.line_no());
    s.thread_id = parse_field(toks[3], "tid=", in.line_no());
    s.seq = t.samples.size();
    const Declaration* decl = t.declaration(s.point);
    if (!decl) throw ParseError(in.line_no(), "undeclared program point " + s.point.name());

    if (s.point.kind != PointKind::BasicBlockEntry) {
      auto& state = pairing[{s.point.function, s.thread_id, s.nonce}];
      if (s.point.kind == PointKind::FunctionEntry) {
        if (state.first) throw ParseError(in.line_no(), "duplicate ENTER nonce");
        state.first = true;
      } else {
        if (!state.first) throw ParseError(in.line_no(), "EXIT without matching ENTER");
        if (state.second) throw ParseError(in.line_no(), "duplicate EXIT nonce");
        state.second = true;
      }
    }

    std::size_t idx = 0;
    while (true) {
      auto b = in.expect("binding or END");
      if (b == "END") break;
      auto eq = b.find(" = ");
      if (eq == std::string_view::npos) throw ParseError(in.line_no(), "expected 'name = value'");
      if (idx >= decl->vars.size()) throw ParseError(in.line_no(), "more bindings than declared");
      const auto& sig = decl->vars[idx];
      if (b.substr(0, eq) != sig.name) throw ParseError(in.line_no(), "binding does not match declaration, expected " + sig.name);
      auto v = parse_value(b.substr(eq + 3), sig.type);
      if (!v) throw ParseError(in.line_no(), "bad " + std::string(type_name(sig.type)) + " value");
      s.bindings.push_back({sig.name, std::move(*v)});
      ++idx;
    }
    if (idx != decl->vars.size()) throw ParseError(in.line_no(), "fewer bindings than declared");
    t.samples.push_back(std::move(s));
  }
  return t;
}

std::string write_trace(const TraceFile& t) {
  std::string out = "IPATRACE 1\n";
  for (const auto& d : t.declarations) {
    out += "DECL ";
    out += d.point.name();
    for (const auto& v : d.vars) {
      out += ' ';
      out += v.name;
      out += ':';
      out += type_name(v.type);
    }
    out += '\n';
  }
  out += "\nSAMPLES\n";
  for (const auto& s : t.samples) {
    out += "S ";
    out += s.point.name();
    out += " nonce=" + std::to_string(s.nonce);
    out += " tid=" + std::to_string(s.thread_id);
    out += '\n';
    for (const auto& b : s.bindings) {
      out += b.name;
      out += " = ";
      out += format_value(b.value);
      out += '\n';
    }
    out += "END\n";
  }
  return out;
}

std::map<ProgramPoint, std::vector<TraceSample>> group_samples(const TraceFile& t) {
  std::map<ProgramPoint, std::vector<TraceSample>> groups;
  for (const auto& s : t.samples) groups[s.point].push_back(s);
  return groups;
}

std::vector<std::size_t> sample_line_numbers(const TraceFile& t) {
  std::vector<std::size_t> lines;
  lines.reserve(t.samples.size());
  std::size_t line = t.declarations.size() + 4;
  for (const auto& s : t.samples) {
    lines.push_back(line);
    line += s.bindings.size() + 2;
  }
  return lines;
}

TraceFile read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trace file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trace(ss.str());
}

void write_trace_file(const std::string& path, const TraceFile& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace file " + path);
  out << write_trace(t);
}

}  // namespace ipa
