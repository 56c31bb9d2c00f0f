#include "ipa/vm.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "ipa/error.hpp"
#include "ipa/rng.hpp"

namespace ipa {

std::string_view granularity_name(Granularity g) {
  return g == Granularity::Function ? "function" : "block";
}

std::optional<Granularity> parse_granularity(std::string_view s) {
  if (s == "function") return Granularity::Function;
  if (s == "block" || s == "basicblock") return Granularity::BasicBlock;
  return std::nullopt;
}

std::string Outcome::describe() const {
  switch (kind) {
    case Kind::Normal: return "Normal";
    case Kind::Timeout: return "Timeout";
    case Kind::Trap: return "Trap(" + reason + ")";
  }
  return "?";
}

namespace {

constexpr std::int64_t kHandleBase = 0x1000;
constexpr std::int64_t kHandleStride = 0x10;
constexpr std::int64_t kMaxAllocation = 1 << 20;
constexpr std::size_t kMaxFrames = 4096;

struct Trap {
  std::string reason;
};

std::int64_t to_i64(const Scalar& s) {
  if (const auto* i = std::get_if<std::int64_t>(&s)) return *i;
  double d = std::get<double>(s);
  if (std::isnan(d)) return 0;
  if (d >= 9.2233720368547758e18) return std::numeric_limits<std::int64_t>::max();
  if (d <= -9.2233720368547758e18) return std::numeric_limits<std::int64_t>::min();
  return static_cast<std::int64_t>(d);
}

double to_f64(const Scalar& s) {
  if (const auto* i = std::get_if<std::int64_t>(&s)) return static_cast<double>(*i);
  return std::get<double>(s);
}

// Array-typed registers hold handles, which are integers.
Scalar coerce(const Scalar& s, ValueType t) {
  if (t == ValueType::F64) return to_f64(s);
  return to_i64(s);
}

Value scalar_value(const Scalar& s) {
  if (const auto* i = std::get_if<std::int64_t>(&s)) return Value(*i);
  return Value(std::get<double>(s));
}

struct Slot {
  Scalar value = std::int64_t{0};
  bool set = false;
};

struct Frame {
  int fn = 0;
  int block = 0;
  std::size_t pc = 0;
  std::vector<Slot> regs;
  int ret_dst = -1;  // caller register receiving the result
  std::uint64_t nonce = 0;
  std::optional<int> corrupt_result_bit;  // pending DataCorruption on a call result
};

struct Thread {
  std::vector<Frame> stack;
  std::uint64_t next_nonce = 0;
  bool finished = false;
};

struct HeapObject {
  ValueType elem = ValueType::I64;
  std::vector<Scalar> cells;
};

struct SiteRef {
  int fn = -1;
  int block = -1;
  std::size_t index = 0;
};

class Machine {
 public:
  Machine(const Program& p, const ExecOptions& opts)
      : prog_(p), opts_(opts), rng_(opts.seed),
        budget_(opts.step_budget ? opts.step_budget : kMaxSteps) {
    result_.trace.declarations = trace_declarations(p, opts.granularity);
    mutex_owner_.assign(p.mutexes.size(), -1);
    for (const auto& s : p.semaphores) sem_count_.push_back(s.initial);
    if (opts.count_executions) {
      result_.counts.resize(p.functions.size());
      for (std::size_t f = 0; f < p.functions.size(); ++f) {
        for (const auto& b : p.functions[f].blocks) result_.counts[f].emplace_back(b.code.size(), 0);
      }
    }
    if (opts.plan) {
      validate_plan(p, *opts.plan);
      site_.fn = p.function_index(opts.plan->site.function);
      site_.block = p.functions[site_.fn].block_index(opts.plan->site.block);
      site_.index = opts.plan->site.index;
    }
  }

  RunResult run(const std::vector<Value>& input) {
    const auto& entry = prog_.entry_function();
    if (input.size() != entry.params.size()) {
      throw Error("entry function " + entry.name + " expects " + std::to_string(entry.params.size()) +
                  " input value(s), got " + std::to_string(input.size()));
    }
    std::vector<Scalar> args;
    for (std::size_t i = 0; i < input.size(); ++i) args.push_back(bind_input(input[i], entry.params[i]));
    threads_.emplace_back();
    try {
      push_frame(0, prog_.entry, args, -1);
      loop();
    } catch (const Trap& t) {
      result_.outcome = {Outcome::Kind::Trap, t.reason};
    }
    return std::move(result_);
  }

 private:
  Scalar bind_input(const Value& v, const Param& p) {
    switch (v.type()) {
      case ValueType::I64: return coerce(v.as_i64(), p.type);
      case ValueType::F64: return coerce(v.as_f64(), p.type);
      case ValueType::Bool: return std::int64_t{v.as_bool()};
      case ValueType::I64Array:
      case ValueType::F64Array: {
        if (!is_array(p.type)) throw Error("array input bound to scalar parameter " + p.name);
        HeapObject obj;
        obj.elem = p.type == ValueType::F64Array ? ValueType::F64 : ValueType::I64;
        if (v.type() == ValueType::I64Array) {
          for (auto x : v.as_i64_array()) obj.cells.push_back(coerce(x, obj.elem));
        } else {
          for (auto x : v.as_f64_array()) obj.cells.push_back(coerce(x, obj.elem));
        }
        return allocate(std::move(obj));
      }
    }
    return std::int64_t{0};
  }

  std::int64_t allocate(HeapObject obj) {
    std::int64_t h = kHandleBase + kHandleStride * static_cast<std::int64_t>(heap_.size());
    heap_.emplace(h, std::move(obj));
    return h;
  }

  HeapObject& deref(const Scalar& handle) {
    const auto* h = std::get_if<std::int64_t>(&handle);
    if (!h) throw Trap{"invalid_address"};
    auto it = heap_.find(*h);
    if (it == heap_.end()) throw Trap{"invalid_address"};
    return it->second;
  }

  bool instrumented(int fn) const { return prog_.instrumented(fn); }

  Value traced(const Frame& f, std::size_t reg, ValueType type) const {
    const Scalar& s = f.regs[reg].value;
    if (!is_array(type)) return scalar_value(coerce(s, type));
    const HeapObject* obj = nullptr;
    if (const auto* h = std::get_if<std::int64_t>(&s)) {
      auto it = heap_.find(*h);
      if (it != heap_.end()) obj = &it->second;
    }
    if (type == ValueType::I64Array) {
      std::vector<std::int64_t> xs;
      if (obj) for (const auto& c : obj->cells) xs.push_back(to_i64(c));
      return Value(std::move(xs));
    }
    std::vector<double> xs;
    if (obj) for (const auto& c : obj->cells) xs.push_back(to_f64(c));
    return Value(std::move(xs));
  }

  void sample(std::size_t tid, const Frame& f, ProgramPoint point, const std::optional<Scalar>& ret) {
    const auto& fn = prog_.functions[f.fn];
    TraceSample s;
    s.point = std::move(point);
    s.nonce = f.nonce;
    s.thread_id = tid;
    s.seq = result_.trace.samples.size();
    for (std::size_t i = 0; i < fn.params.size(); ++i) {
      s.bindings.push_back({fn.params[i].name, traced(f, i, fn.params[i].type)});
    }
    if (ret) s.bindings.push_back({"return", scalar_value(coerce(*ret, *fn.return_type))});
    result_.trace.samples.push_back(std::move(s));
  }

  void enter_block(std::size_t tid, Frame& f, int block) {
    f.block = block;
    f.pc = 0;
    if (opts_.granularity == Granularity::BasicBlock && instrumented(f.fn)) {
      const auto& fn = prog_.functions[f.fn];
      sample(tid, f, ProgramPoint::block_entry(fn.name, fn.blocks[block].label), std::nullopt);
    }
  }

  void push_frame(std::size_t tid, int fn_index, const std::vector<Scalar>& args, int ret_dst) {
    auto& th = threads_[tid];
    if (th.stack.size() >= kMaxFrames) throw Trap{"stack_overflow"};
    const auto& fn = prog_.functions[fn_index];
    Frame f;
    f.fn = fn_index;
    f.regs.resize(fn.registers.size());
    for (std::size_t i = 0; i < args.size(); ++i) f.regs[i] = {coerce(args[i], fn.params[i].type), true};
    f.ret_dst = ret_dst;
    f.nonce = th.next_nonce++;
    th.stack.push_back(std::move(f));
    Frame& top = th.stack.back();
    if (instrumented(fn_index)) sample(tid, top, ProgramPoint::entry(fn.name), std::nullopt);
    enter_block(tid, top, 0);
  }

  // Whether the thread's next instruction can execute now.
  bool runnable(std::size_t tid) const {
    const auto& th = threads_[tid];
    if (th.finished) return false;
    const auto& f = th.stack.back();
    const auto& in = prog_.functions[f.fn].blocks[f.block].code[f.pc];
    switch (in.op) {
      case Opcode::Lock:
        if (fake_lock(f.fn, f.block, f.pc)) return true;
        return mutex_owner_[in.target_index] < 0;
      case Opcode::SemWait:
        return sem_count_[in.target_index] > 0;
      case Opcode::Join: {
        const auto& op = in.args[0];
        Scalar t = op.is_reg() ? f.regs[op.reg].value : op.imm;
        const auto* id = std::get_if<std::int64_t>(&t);
        if (!id || *id < 0 || static_cast<std::size_t>(*id) >= threads_.size()) return true;  // traps on execution
        return threads_[*id].finished;
      }
      default:
        return true;
    }
  }

  bool at_site(int fn, int block, std::size_t pc) const {
    return opts_.plan && site_.fn == fn && site_.block == block && site_.index == pc;
  }

  bool fake_lock(int fn, int block, std::size_t pc) const {
    return at_site(fn, block, pc) && opts_.plan->type == FaultType::RaceCondition;
  }

  void loop() {
    std::vector<std::size_t> ready;
    while (true) {
      ready.clear();
      bool alive = false;
      for (std::size_t t = 0; t < threads_.size(); ++t) {
        if (!threads_[t].finished) alive = true;
        if (runnable(t)) ready.push_back(t);
      }
      if (!alive) return;
      if (ready.empty()) throw Trap{"deadlock"};
      if (result_.steps >= budget_) {
        result_.outcome = {Outcome::Kind::Timeout, {}};
        return;
      }
      std::size_t tid = ready.size() == 1 ? ready[0] : ready[rng_.below(ready.size())];
      ++result_.steps;
      step(tid);
    }
  }

  Scalar read(const Frame& f, const Operand& op) const {
    if (!op.is_reg()) return op.imm;
    const auto& slot = f.regs[op.reg];
    if (!slot.set) throw Trap{"uninitialized_register"};
    return slot.value;
  }

  static std::int64_t wrap(std::uint64_t v) { return static_cast<std::int64_t>(v); }

  static Scalar arith(Opcode op, const Scalar& a, const Scalar& b) {
    const auto* x = std::get_if<std::int64_t>(&a);
    const auto* y = std::get_if<std::int64_t>(&b);
    if (x && y) {
      auto ux = static_cast<std::uint64_t>(*x);
      auto uy = static_cast<std::uint64_t>(*y);
      switch (op) {
        case Opcode::Add: return wrap(ux + uy);
        case Opcode::Sub: return wrap(ux - uy);
        case Opcode::Mul: return wrap(ux * uy);
        default:
          if (*y == 0) throw Trap{"div_by_zero"};
          if (*x == std::numeric_limits<std::int64_t>::min() && *y == -1) return *x;
          return *x / *y;
      }
    }
    double dx = to_f64(a), dy = to_f64(b);
    switch (op) {
      case Opcode::Add: return dx + dy;
      case Opcode::Sub: return dx - dy;
      case Opcode::Mul: return dx * dy;
      default: return dx / dy;
    }
  }

  static bool compare(CmpOp op, const Scalar& a, const Scalar& b) {
    const auto* x = std::get_if<std::int64_t>(&a);
    const auto* y = std::get_if<std::int64_t>(&b);
    if (x && y) {
      switch (op) {
        case CmpOp::Lt: return *x < *y;
        case CmpOp::Le: return *x <= *y;
        case CmpOp::Eq: return *x == *y;
        case CmpOp::Ne: return *x != *y;
        case CmpOp::Gt: return *x > *y;
        case CmpOp::Ge: return *x >= *y;
      }
    }
    double dx = to_f64(a), dy = to_f64(b);
    switch (op) {
      case CmpOp::Lt: return dx < dy;
      case CmpOp::Le: return dx <= dy;
      case CmpOp::Eq: return dx == dy;
      case CmpOp::Ne: return dx != dy;
      case CmpOp::Gt: return dx > dy;
      case CmpOp::Ge: return dx >= dy;
    }
    return false;
  }

  static bool truthy(const Scalar& s) {
    if (const auto* i = std::get_if<std::int64_t>(&s)) return *i != 0;
    return std::get<double>(s) != 0.0;
  }

  std::size_t index_of(const HeapObject& obj, const Scalar& idx) const {
    std::int64_t i = to_i64(idx);
    if (i < 0 || static_cast<std::uint64_t>(i) >= obj.cells.size()) throw Trap{"out_of_bounds"};
    return static_cast<std::size_t>(i);
  }

  void step(std::size_t tid) {
    Frame* f = &threads_[tid].stack.back();
    const auto& fn = prog_.functions[f->fn];
    const auto& in = fn.blocks[f->block].code[f->pc];
    if (opts_.count_executions) ++result_.counts[f->fn][f->block][f->pc];

    // Decide whether the fault fires on this dynamic instance.
    bool fire = false;
    if (at_site(f->fn, f->block, f->pc)) {
      ++site_hits_;
      if (opts_.plan->type == FaultType::RaceCondition) {
        result_.activated = true;
      } else if (!fired_ && site_hits_ == opts_.plan->site.occurrence) {
        fire = true;
        fired_ = true;
        result_.activated = true;
      }
    }
    const FaultPlan* plan = fire ? opts_.plan : nullptr;
    auto set = [&](int reg, Scalar v) {
      if (plan && plan->type == FaultType::DataCorruption) v = flip_bit(v, *plan->bit);
      f->regs[reg] = {v, true};
    };

    ++f->pc;
    switch (in.op) {
      case Opcode::Const:
        set(in.dst, in.args[0].imm);
        break;
      case Opcode::Mov:
        set(in.dst, read(*f, in.args[0]));
        break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::Div:
        set(in.dst, arith(in.op, read(*f, in.args[0]), read(*f, in.args[1])));
        break;
      case Opcode::Cmp:
        set(in.dst, std::int64_t{compare(in.cmp, read(*f, in.args[0]), read(*f, in.args[1]))});
        break;
      case Opcode::Br:
        enter_block(tid, *f, in.target_index);
        break;
      case Opcode::BrCond:
        enter_block(tid, *f, truthy(read(*f, in.args[0])) ? in.target_index : in.else_index);
        break;
      case Opcode::Call:
      case Opcode::Spawn: {
        std::vector<Scalar> args;
        for (const auto& a : in.args) args.push_back(read(*f, a));
        if (plan && plan->type == FaultType::FunctionCallCorruption) {
          args[*plan->arg] = flip_bit(args[*plan->arg], *plan->bit);
        }
        if (in.op == Opcode::Spawn) {
          auto new_tid = threads_.size();
          set(in.dst, static_cast<std::int64_t>(new_tid));
          threads_.emplace_back();
          push_frame(new_tid, in.target_index, args, -1);
        } else {
          if (plan && plan->type == FaultType::DataCorruption) f->corrupt_result_bit = *plan->bit;
          push_frame(tid, in.target_index, args, in.dst);
        }
        break;
      }
      case Opcode::Ret:
        do_return(tid, in);
        break;
      case Opcode::Alloc: {
        std::int64_t n = to_i64(read(*f, in.args[0]));
        if (plan && plan->type == FaultType::BufferOverflowMalloc) n = shrink_size(n, *plan->delta);
        if (n < 0 || n > kMaxAllocation) throw Trap{"bad_alloc"};
        HeapObject obj;
        obj.elem = in.elem;
        obj.cells.assign(static_cast<std::size_t>(n), coerce(std::int64_t{0}, in.elem));
        std::int64_t h = allocate(std::move(obj));
        if (plan && plan->type == FaultType::InvalidPointer) h = flip_bit(h, *plan->bit);
        set(in.dst, h);
        break;
      }
      case Opcode::Load: {
        auto& obj = deref(read(*f, in.args[0]));
        set(in.dst, obj.cells[index_of(obj, read(*f, in.args[1]))]);
        break;
      }
      case Opcode::Store: {
        auto& obj = deref(read(*f, in.args[0]));
        obj.cells[index_of(obj, read(*f, in.args[1]))] = coerce(read(*f, in.args[2]), obj.elem);
        break;
      }
      case Opcode::Len:
        set(in.dst, static_cast<std::int64_t>(deref(read(*f, in.args[0])).cells.size()));
        break;
      case Opcode::Lock:
        if (!fake_lock(f->fn, f->block, f->pc - 1)) mutex_owner_[in.target_index] = static_cast<int>(tid);
        break;
      case Opcode::Unlock:
        if (mutex_owner_[in.target_index] == static_cast<int>(tid)) mutex_owner_[in.target_index] = -1;
        break;
      case Opcode::SemWait:
        --sem_count_[in.target_index];
        break;
      case Opcode::SemPost:
        ++sem_count_[in.target_index];
        break;
      case Opcode::Join: {
        std::int64_t t = to_i64(read(*f, in.args[0]));
        if (t < 0 || static_cast<std::size_t>(t) >= threads_.size()) throw Trap{"invalid_thread"};
        break;  // runnable() only lets the join through once the target finished
      }
      case Opcode::IoRead: {
        auto& obj = deref(read(*f, in.args[0]));
        std::int64_t n = to_i64(read(*f, in.args[1]));
        if (plan && plan->type == FaultType::FileIoBufferOverflow) n = grow_size(n, *plan->delta);
        if (n < 0) throw Trap{"invalid_size"};
        std::size_t avail = file_.size() - file_pos_;
        std::size_t k = std::min<std::uint64_t>(static_cast<std::uint64_t>(n), avail);
        if (k > obj.cells.size()) throw Trap{"out_of_bounds"};
        for (std::size_t i = 0; i < k; ++i) obj.cells[i] = coerce(file_[file_pos_ + i], obj.elem);
        file_pos_ += k;
        set(in.dst, static_cast<std::int64_t>(k));
        break;
      }
      case Opcode::IoWrite: {
        auto& obj = deref(read(*f, in.args[0]));
        std::int64_t n = to_i64(read(*f, in.args[1]));
        if (plan && plan->type == FaultType::FileIoBufferOverflow) n = grow_size(n, *plan->delta);
        if (n < 0) throw Trap{"invalid_size"};
        if (static_cast<std::uint64_t>(n) > obj.cells.size()) throw Trap{"out_of_bounds"};
        file_.insert(file_.end(), obj.cells.begin(), obj.cells.begin() + n);
        break;
      }
      case Opcode::Output:
        result_.output.push_back(scalar_value(read(*f, in.args[0])));
        break;
    }
  }

  void do_return(std::size_t tid, const Instruction& in) {
    auto& th = threads_[tid];
    Frame& f = th.stack.back();
    const auto& fn = prog_.functions[f.fn];
    std::optional<Scalar> ret;
    if (!in.args.empty()) ret = coerce(read(f, in.args[0]), *fn.return_type);
    if (instrumented(f.fn)) sample(tid, f, ProgramPoint::exit(fn.name), ret);
    int dst = f.ret_dst;
    th.stack.pop_back();
    if (th.stack.empty()) {
      th.finished = true;
      return;
    }
    Frame& caller = th.stack.back();
    if (dst >= 0 && ret) {
      Scalar v = *ret;
      if (caller.corrupt_result_bit) v = flip_bit(v, *caller.corrupt_result_bit);
      caller.regs[dst] = {v, true};
    }
    caller.corrupt_result_bit.reset();
  }

  const Program& prog_;
  const ExecOptions& opts_;
  SplitMix64 rng_;
  std::uint64_t budget_;
  RunResult result_;
  std::vector<Thread> threads_;
  std::map<std::int64_t, HeapObject> heap_;
  std::vector<int> mutex_owner_;
  std::vector<std::int64_t> sem_count_;
  std::vector<Scalar> file_;
  std::size_t file_pos_ = 0;
  SiteRef site_;
  std::uint64_t site_hits_ = 0;
  bool fired_ = false;
};

}  // namespace

std::vector<Declaration> trace_declarations(const Program& p, Granularity g) {
  std::vector<Declaration> decls;
  for (std::size_t i = 0; i < p.functions.size(); ++i) {
    if (!p.instrumented(static_cast<int>(i))) continue;
    const auto& fn = p.functions[i];
    std::vector<VarSig> params;
    for (const auto& prm : fn.params) params.push_back({prm.name, prm.type});
    decls.push_back({ProgramPoint::entry(fn.name), params});
    auto exit_vars = params;
    if (fn.return_type) exit_vars.push_back({"return", *fn.return_type});
    decls.push_back({ProgramPoint::exit(fn.name), exit_vars});
    if (g == Granularity::BasicBlock) {
      for (const auto& b : fn.blocks) decls.push_back({ProgramPoint::block_entry(fn.name, b.label), params});
    }
  }
  return decls;
}

RunResult execute(const Program& p, const std::vector<Value>& input, const ExecOptions& opts) {
  return Machine(p, opts).run(input);
}

std::vector<Value> make_input(const Program& p, std::int64_t threads, std::optional<Value> data) {
  const auto& params = p.entry_function().params;
  if (params.size() != 2 || params[0].type != ValueType::I64) {
    throw Error("entry function " + p.entry_function().name + " does not take (threads:i64, data)");
  }
  if (threads < 1) throw Error("thread count must be >= 1");
  if (!data) data = p.default_data;
  if (!data) {
    data = params[1].type == ValueType::F64Array ? Value(std::vector<double>{}) : Value(std::vector<std::int64_t>{});
  }
  return {Value(threads), *data};
}

std::uint64_t default_step_budget(const Program& p, const std::vector<Value>& input, std::uint64_t multiplier) {
  ExecOptions opts;
  opts.seed = 0;
  auto r = execute(p, input, opts);
  if (r.outcome.kind != Outcome::Kind::Normal) {
    throw Error("fault-free reference run of " + p.name + " ended with " + r.outcome.describe());
  }
  return std::max<std::uint64_t>(1, r.steps * multiplier);
}

std::vector<TraceFile> golden_runs(const Program& p, const std::vector<Value>& input,
                                   const std::vector<std::uint64_t>& seeds, Granularity g,
                                   std::uint64_t step_budget) {
  std::vector<TraceFile> traces;
  traces.reserve(seeds.size());
  for (auto seed : seeds) {
    ExecOptions opts;
    opts.seed = seed;
    opts.granularity = g;
    opts.step_budget = step_budget;
    auto r = execute(p, input, opts);
    if (r.outcome.kind != Outcome::Kind::Normal) {
      throw Error("golden run of " + p.name + " with seed " + std::to_string(seed) + " ended with " +
                  r.outcome.describe());
    }
    traces.push_back(std::move(r.trace));
  }
  return traces;
}

}  // namespace ipa
