#include "ipa/program.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "ipa/error.hpp"

namespace ipa {

std::string_view opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Const: return "const";
    case Opcode::Mov: return "mov";
    case Opcode::Add: return "add";
    case Opcode::Sub: return "sub";
    case Opcode::Mul: return "mul";
    case Opcode::Div: return "div";
    case Opcode::Cmp: return "cmp";
    case Opcode::Br: return "br";
    case Opcode::BrCond: return "br_cond";
    case Opcode::Call: return "call";
    case Opcode::Ret: return "ret";
    case Opcode::Alloc: return "alloc";
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::Len: return "len";
    case Opcode::Lock: return "lock";
    case Opcode::Unlock: return "unlock";
    case Opcode::SemWait: return "sem_wait";
    case Opcode::SemPost: return "sem_post";
    case Opcode::Spawn: return "spawn";
    case Opcode::Join: return "join";
    case Opcode::IoRead: return "io_read";
    case Opcode::IoWrite: return "io_write";
    case Opcode::Output: return "output";
  }
  return "?";
}

std::string_view cmp_name(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "lt";
    case CmpOp::Le: return "le";
    case CmpOp::Eq: return "eq";
    case CmpOp::Ne: return "ne";
    case CmpOp::Gt: return "gt";
    case CmpOp::Ge: return "ge";
  }
  return "?";
}

int Function::block_index(std::string_view label) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].label == label) return static_cast<int>(i);
  }
  return -1;
}

int Program::function_index(std::string_view fn) const {
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].name == fn) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s.front())) && s.front() != '_') return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  while (true) {
    auto p = s.find(sep);
    out.push_back(trim(s.substr(0, p)));
    if (p == std::string_view::npos) break;
    s.remove_prefix(p + 1);
  }
  return out;
}

// Splits "word rest" at the first whitespace.
std::pair<std::string_view, std::string_view> head_word(std::string_view s) {
  s = trim(s);
  auto p = s.find_first_of(" \t");
  if (p == std::string_view::npos) return {s, {}};
  return {s.substr(0, p), trim(s.substr(p + 1))};
}

std::optional<Scalar> parse_literal(std::string_view s) {
  if (s.find_first_of(".eEn") != std::string_view::npos || s == "inf" || s == "-inf") {
    if (auto d = parse_f64(s)) return Scalar{*d};
    return std::nullopt;
  }
  if (auto i = parse_i64(s)) return Scalar{*i};
  return std::nullopt;
}

struct RawFunction {
  Function fn;
  std::size_t line = 0;
  bool open = true;
};

class Assembler {
 public:
  explicit Assembler(const LoadOptions& opts) : opts_(opts) {}

  Program run(std::string_view source) {
    prog_.source = std::string(source);
    std::size_t line_no = 0;
    std::string_view rest = source;
    while (!rest.empty()) {
      auto nl = rest.find('\n');
      auto raw = rest.substr(0, nl);
      rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
      ++line_no;
      auto cpos = raw.find_first_of(";#");
      auto line = trim(raw.substr(0, cpos));
      if (line.empty()) continue;
      ++prog_.metrics.lines_of_code;
      line_ = line_no;
      parse_line(line);
    }
    if (current_) throw ParseError(line_no, "unterminated function " + current_->fn.name);
    finish();
    return std::move(prog_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  void parse_line(std::string_view line) {
    if (current_) {
      if (line == "}") {
        close_function();
      } else if (line.back() == ':' && is_ident(line.substr(0, line.size() - 1))) {
        auto label = std::string(line.substr(0, line.size() - 1));
        if (current_->fn.block_index(label) >= 0) fail("duplicate label " + label);
        current_->fn.blocks.push_back({label, {}});
      } else {
        if (current_->fn.blocks.empty()) current_->fn.blocks.push_back({"entry", {}});
        current_->fn.blocks.back().code.push_back(parse_instruction(line));
      }
      return;
    }
    auto [word, rest] = head_word(line);
    if (word == "func") {
      open_function(rest);
    } else if (word == "entry") {
      if (!is_ident(rest)) fail("bad entry name");
      entry_name_ = std::string(rest);
    } else if (word == "mutex") {
      if (!is_ident(rest)) fail("bad mutex name");
      declare_global(rest);
      prog_.mutexes.emplace_back(rest);
    } else if (word == "sem") {
      auto [name, count] = head_word(rest);
      auto init = parse_i64(count);
      if (!is_ident(name) || !init || *init < 0) fail("expected 'sem NAME COUNT'");
      declare_global(name);
      prog_.semaphores.push_back({std::string(name), *init});
    } else if (word == "output") {
      if (rest == "unordered") prog_.output_unordered = true;
      else if (rest == "ordered") prog_.output_unordered = false;
      else fail("expected 'output ordered' or 'output unordered'");
    } else if (word == "default_input") {
      default_input_ = std::string(rest);
      default_input_line_ = line_;
    } else {
      fail("unexpected '" + std::string(word) + "' outside a function");
    }
  }

  void declare_global(std::string_view name) {
    if (!globals_.emplace(name).second) fail("duplicate declaration of " + std::string(name));
    ++prog_.metrics.declarations;
  }

  void open_function(std::string_view sig) {
    if (sig.empty() || sig.back() != '{') fail("expected '{' after function signature");
    sig = trim(sig.substr(0, sig.size() - 1));
    auto lp = sig.find('(');
    auto rp = sig.rfind(')');
    if (lp == std::string_view::npos || rp == std::string_view::npos || rp < lp) fail("expected '(params)'");
    RawFunction raw;
    raw.line = line_;
    raw.fn.name = std::string(trim(sig.substr(0, lp)));
    if (!is_ident(raw.fn.name)) fail("bad function name");
    if (prog_.function_index(raw.fn.name) >= 0) fail("duplicate function " + raw.fn.name);
    for (auto p : split(sig.substr(lp + 1, rp - lp - 1), ',')) {
      auto colon = p.find(':');
      if (colon == std::string_view::npos) fail("parameter needs a type: " + std::string(p));
      auto name = trim(p.substr(0, colon));
      auto type = parse_type_name(trim(p.substr(colon + 1)));
      if (!is_ident(name) || !type || *type == ValueType::Bool) fail("bad parameter " + std::string(p));
      for (const auto& q : raw.fn.params) {
        if (q.name == name) fail("duplicate parameter " + std::string(name));
      }
      raw.fn.params.push_back({std::string(name), *type});
      raw.fn.registers.emplace_back(name);
      ++prog_.metrics.declarations;
      if (is_array(*type)) ++prog_.metrics.array_declarations;
    }
    auto tail = trim(sig.substr(rp + 1));
    if (!tail.empty()) {
      if (!tail.starts_with("->")) fail("expected '-> type'");
      auto t = parse_type_name(trim(tail.substr(2)));
      if (!t || !is_scalar_numeric(*t)) fail("return type must be i64 or f64");
      raw.fn.return_type = *t;
    }
    ++prog_.metrics.functions;
    current_ = std::move(raw);
  }

  int reg(std::string_view name) {
    if (!is_ident(name)) fail("bad register name '" + std::string(name) + "'");
    auto& regs = current_->fn.registers;
    for (std::size_t i = 0; i < regs.size(); ++i) {
      if (regs[i] == name) return static_cast<int>(i);
    }
    regs.emplace_back(name);
    return static_cast<int>(regs.size() - 1);
  }

  Operand operand(std::string_view s) {
    s = trim(s);
    Operand o;
    if (s.empty()) fail("missing operand");
    if (std::isdigit(static_cast<unsigned char>(s.front())) || s.front() == '-' || s.front() == '.') {
      auto lit = parse_literal(s);
      if (!lit) fail("bad literal '" + std::string(s) + "'");
      o.imm = *lit;
    } else {
      o.reg = reg(s);
    }
    return o;
  }

  std::vector<Operand> operands(std::string_view s, std::size_t expected) {
    auto parts = split(s, ',');
    if (parts.size() != expected) {
      fail("expected " + std::to_string(expected) + " operand(s), got " + std::to_string(parts.size()));
    }
    std::vector<Operand> out;
    for (auto p : parts) out.push_back(operand(p));
    return out;
  }

  // "name(a, b)" -> name, operands
  void call_target(std::string_view s, Instruction& in) {
    auto lp = s.find('(');
    if (lp == std::string_view::npos || s.back() != ')') fail("expected 'fn(args)'");
    in.target = std::string(trim(s.substr(0, lp)));
    if (!is_ident(in.target)) fail("bad function name");
    for (auto a : split(s.substr(lp + 1, s.size() - lp - 2), ',')) in.args.push_back(operand(a));
  }

  Instruction parse_instruction(std::string_view line) {
    Instruction in;
    in.line = line_;
    std::string_view dst_name;
    auto eq = line.find('=');
    if (eq != std::string_view::npos) {
      dst_name = trim(line.substr(0, eq));
      line = trim(line.substr(eq + 1));
    }
    auto [word, rest] = head_word(line);
    bool wants_dst = true;
    if (word == "const") {
      in.op = Opcode::Const;
      auto lit = parse_literal(rest);
      if (!lit) fail("bad literal '" + std::string(rest) + "'");
      in.args.push_back(Operand{-1, *lit});
    } else if (word == "mov") {
      in.op = Opcode::Mov;
      in.args = operands(rest, 1);
    } else if (word == "add" || word == "sub" || word == "mul" || word == "div") {
      in.op = word == "add" ? Opcode::Add : word == "sub" ? Opcode::Sub : word == "mul" ? Opcode::Mul : Opcode::Div;
      in.args = operands(rest, 2);
    } else if (word == "cmp") {
      in.op = Opcode::Cmp;
      auto [pred, ops] = head_word(rest);
      static const std::map<std::string_view, CmpOp> preds{
          {"lt", CmpOp::Lt}, {"le", CmpOp::Le}, {"eq", CmpOp::Eq},
          {"ne", CmpOp::Ne}, {"gt", CmpOp::Gt}, {"ge", CmpOp::Ge}};
      auto it = preds.find(pred);
      if (it == preds.end()) fail("unknown comparison '" + std::string(pred) + "'");
      in.cmp = it->second;
      in.args = operands(ops, 2);
    } else if (word == "br") {
      in.op = Opcode::Br;
      wants_dst = false;
      if (!is_ident(rest)) fail("expected label");
      in.target = std::string(rest);
    } else if (word == "br_cond") {
      in.op = Opcode::BrCond;
      wants_dst = false;
      auto parts = split(rest, ',');
      if (parts.size() != 3 || !is_ident(parts[1]) || !is_ident(parts[2])) fail("expected 'br_cond c, then, else'");
      in.args.push_back(operand(parts[0]));
      in.target = std::string(parts[1]);
      in.else_target = std::string(parts[2]);
      ++prog_.metrics.branches;
    } else if (word == "call" || word == "spawn") {
      in.op = word == "call" ? Opcode::Call : Opcode::Spawn;
      wants_dst = in.op == Opcode::Spawn;
      call_target(rest, in);
      if (in.op == Opcode::Call && !dst_name.empty()) wants_dst = true;
    } else if (word == "ret") {
      in.op = Opcode::Ret;
      wants_dst = false;
      if (!rest.empty()) in.args.push_back(operand(rest));
    } else if (word == "alloc") {
      in.op = Opcode::Alloc;
      auto [type, size] = head_word(rest);
      if (type == "i64") in.elem = ValueType::I64;
      else if (type == "f64") in.elem = ValueType::F64;
      else fail("alloc element type must be i64 or f64");
      in.args = operands(size, 1);
      ++prog_.metrics.array_declarations;
    } else if (word == "load") {
      in.op = Opcode::Load;
      in.args = operands(rest, 2);
    } else if (word == "store") {
      in.op = Opcode::Store;
      wants_dst = false;
      in.args = operands(rest, 3);
    } else if (word == "len") {
      in.op = Opcode::Len;
      in.args = operands(rest, 1);
    } else if (word == "lock" || word == "unlock" || word == "sem_wait" || word == "sem_post") {
      in.op = word == "lock" ? Opcode::Lock : word == "unlock" ? Opcode::Unlock
              : word == "sem_wait" ? Opcode::SemWait : Opcode::SemPost;
      wants_dst = false;
      if (!is_ident(rest)) fail("expected a synchronisation object name");
      in.target = std::string(rest);
    } else if (word == "join") {
      in.op = Opcode::Join;
      wants_dst = false;
      in.args = operands(rest, 1);
    } else if (word == "io_read") {
      in.op = Opcode::IoRead;
      in.args = operands(rest, 2);
    } else if (word == "io_write") {
      in.op = Opcode::IoWrite;
      wants_dst = false;
      in.args = operands(rest, 2);
    } else if (word == "output") {
      in.op = Opcode::Output;
      wants_dst = false;
      in.args = operands(rest, 1);
    } else {
      fail("unknown instruction '" + std::string(word) + "'");
    }
    if (wants_dst && dst_name.empty()) fail(std::string(word) + " needs a destination register");
    if (!wants_dst && !dst_name.empty()) fail(std::string(word) + " does not produce a value");
    if (!dst_name.empty()) in.dst = reg(dst_name);
    ++prog_.metrics.statements;
    return in;
  }

  void close_function() {
    auto& fn = current_->fn;
    if (fn.blocks.empty() || (fn.blocks.size() == 1 && fn.blocks[0].code.empty())) {
      fail("empty body in function " + fn.name);
    }
    for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
      auto& code = fn.blocks[b].code;
      for (std::size_t i = 0; i + 1 < code.size(); ++i) {
        if (code[i].is_terminator()) {
          line_ = code[i + 1].line;
          fail("unreachable instruction after terminator in block " + fn.blocks[b].label);
        }
      }
      if (code.empty() || !code.back().is_terminator()) {
        if (b + 1 == fn.blocks.size()) fail("block " + fn.blocks[b].label + " of " + fn.name + " falls off the end");
        Instruction br;
        br.op = Opcode::Br;
        br.target = fn.blocks[b + 1].label;
        br.line = code.empty() ? line_ : code.back().line;
        code.push_back(br);
      }
    }
    prog_.functions.push_back(std::move(fn));
    current_.reset();
  }

  void normalize_exits(Function& fn) {
    std::size_t rets = 0;
    for (const auto& b : fn.blocks) rets += b.code.back().op == Opcode::Ret;
    if (rets <= 1) return;
    std::string label = "exit";
    while (fn.block_index(label) >= 0) label += "_";
    int rv = -1;
    if (fn.return_type) {
      std::string name = "retval";
      while (std::find(fn.registers.begin(), fn.registers.end(), name) != fn.registers.end()) name += "_";
      fn.registers.push_back(name);
      rv = static_cast<int>(fn.registers.size() - 1);
    }
    for (auto& b : fn.blocks) {
      auto& last = b.code.back();
      if (last.op != Opcode::Ret) continue;
      std::size_t line = last.line;
      Instruction br;
      br.op = Opcode::Br;
      br.target = label;
      br.line = line;
      if (rv >= 0) {
        Instruction mv;
        mv.op = Opcode::Mov;
        mv.dst = rv;
        mv.args = last.args;
        mv.line = line;
        last = mv;
        b.code.push_back(br);
      } else {
        last = br;
      }
    }
    Instruction ret;
    ret.op = Opcode::Ret;
    ret.line = fn.blocks.back().code.back().line;
    if (rv >= 0) ret.args.push_back(Operand{rv, std::int64_t{0}});
    fn.blocks.push_back({label, {ret}});
  }

  void resolve(Function& fn) {
    for (auto& b : fn.blocks) {
      for (auto& in : b.code) {
        line_ = in.line;
        switch (in.op) {
          case Opcode::Br:
            in.target_index = fn.block_index(in.target);
            if (in.target_index < 0) fail("undefined label " + in.target);
            break;
          case Opcode::BrCond:
            in.target_index = fn.block_index(in.target);
            in.else_index = fn.block_index(in.else_target);
            if (in.target_index < 0) fail("undefined label " + in.target);
            if (in.else_index < 0) fail("undefined label " + in.else_target);
            break;
          case Opcode::Call:
          case Opcode::Spawn: {
            in.target_index = prog_.function_index(in.target);
            if (in.target_index < 0) fail("undefined function " + in.target);
            const auto& callee = prog_.functions[in.target_index];
            if (callee.params.size() != in.args.size()) {
              fail("call to " + in.target + " expects " + std::to_string(callee.params.size()) + " argument(s)");
            }
            if (in.op == Opcode::Call && in.dst >= 0 && !callee.return_type) {
              fail("function " + in.target + " does not return a value");
            }
            break;
          }
          case Opcode::Ret:
            if (fn.return_type && in.args.empty()) fail("ret needs a value in " + fn.name);
            if (!fn.return_type && !in.args.empty()) fail(fn.name + " does not return a value");
            break;
          case Opcode::Lock:
          case Opcode::Unlock: {
            auto it = std::find(prog_.mutexes.begin(), prog_.mutexes.end(), in.target);
            if (it == prog_.mutexes.end()) fail("undefined mutex " + in.target);
            in.target_index = static_cast<int>(it - prog_.mutexes.begin());
            break;
          }
          case Opcode::SemWait:
          case Opcode::SemPost: {
            in.target_index = -1;
            for (std::size_t i = 0; i < prog_.semaphores.size(); ++i) {
              if (prog_.semaphores[i].name == in.target) in.target_index = static_cast<int>(i);
            }
            if (in.target_index < 0) fail("undefined semaphore " + in.target);
            break;
          }
          default:
            break;
        }
      }
    }
  }

  void finish() {
    if (prog_.functions.empty()) throw ParseError(line_, "program has no functions");
    if (entry_name_.empty()) entry_name_ = "main";
    prog_.entry = prog_.function_index(entry_name_);
    if (prog_.entry < 0) throw ParseError(line_, "entry function " + entry_name_ + " not defined");
    for (auto& fn : prog_.functions) {
      if (opts_.normalize) normalize_exits(fn);
      resolve(fn);
    }
    if (default_input_) {
      line_ = default_input_line_;
      const auto& params = prog_.entry_function().params;
      if (params.empty()) fail("default_input needs an entry parameter");
      auto data = parse_data_list(*default_input_, params.back().type);
      if (!data) fail("bad default_input '" + *default_input_ + "'");
      prog_.default_data = std::move(*data);
    }
  }

  LoadOptions opts_;
  Program prog_;
  std::optional<RawFunction> current_;
  std::set<std::string, std::less<>> globals_;
  std::string entry_name_;
  std::optional<std::string> default_input_;
  std::size_t default_input_line_ = 0;
  std::size_t line_ = 0;
};

}  // namespace

Program load_program(std::string_view source, const LoadOptions& opts) {
  return Assembler(opts).run(source);
}

std::optional<Value> parse_data_list(std::string_view text, ValueType type) {
  std::vector<std::int64_t> ints;
  std::vector<double> floats;
  const bool integral = type == ValueType::I64Array || type == ValueType::I64;
  for (auto item : split(text, ',')) {
    if (item.empty()) return std::nullopt;
    if (integral) {
      auto v = parse_i64(item);
      if (!v) return std::nullopt;
      ints.push_back(*v);
    } else {
      auto v = parse_f64(item);
      if (!v) return std::nullopt;
      floats.push_back(*v);
    }
  }
  switch (type) {
    case ValueType::I64Array: return Value(std::move(ints));
    case ValueType::F64Array: return Value(std::move(floats));
    case ValueType::I64:
      if (ints.size() != 1) return std::nullopt;
      return Value(ints[0]);
    case ValueType::F64:
      if (floats.size() != 1) return std::nullopt;
      return Value(floats[0]);
    default: return std::nullopt;
  }
}

}  // namespace ipa
