#include "ipa/builtins.hpp"

#include <array>

#include "ipa/error.hpp"

namespace ipa {

namespace {

// Thread-safe work queue: workers push chunks into a shared array guarded by
// a semaphore and a mutex. Chunk order is irrelevant to the output.
constexpr const char* kWorkqueue = R"(; workqueue: concurrent producers appending to a shared queue
entry main
output unordered
default_input 0, 1, 2, 3
mutex m
sem free_slots 64

func addChunk(x:i64, queue:i64, next:i64) -> i64 {
entry:
  sem_wait free_slots
  lock m
  idx = load next, 0
  store queue, idx, x
  idx = add idx, 1
  store next, 0, idx
  unlock m
  bad = cmp lt x, 0
  br_cond bad, reject, accept
reject:
  rc = const 0
  br done
accept:
  rc = const 1
  br done
done:
  ret rc
}

func worker(id:i64, stride:i64, data:i64[], queue:i64, next:i64) {
entry:
  n = len data
  i = mov id
  br head
head:
  more = cmp lt i, n
  br_cond more, body, done
body:
  x = load data, i
  rc = call addChunk(x, queue, next)
  i = add i, stride
  br head
done:
  ret
}

func main(threads:i64, data:i64[]) {
entry:
  n = len data
  queue = alloc i64 n
  next = alloc i64 1
  tids = alloc i64 threads
  t = const 0
  br spawn_head
spawn_head:
  more = cmp lt t, threads
  br_cond more, spawn_body, join_init
spawn_body:
  h = spawn worker(t, threads, data, queue, next)
  store tids, t, h
  t = add t, 1
  br spawn_head
join_init:
  t = const 0
  br join_head
join_head:
  more = cmp lt t, threads
  br_cond more, join_body, emit_init
join_body:
  h = load tids, t
  join h
  t = add t, 1
  br join_head
emit_init:
  i = const 0
  br emit_head
emit_head:
  more = cmp lt i, n
  br_cond more, emit_body, done
emit_body:
  v = load queue, i
  output v
  i = add i, 1
  br emit_head
done:
  ret
}
)";

// Concurrent sort: each thread quicksorts its own segment, then the segments
// are merged. Outputs the sorted sequence followed by a status code.
constexpr const char* kQsortmt = R"(; qsortmt: segment-parallel quicksort with a final merge
entry main
output ordered
default_input 23, 5, 17, 42, 8, 15, 4, 16, 31, 9, 27, 1, 12, 36, 20, 3
mutex m

func partition(a:i64[], lo:i64, hi:i64) -> i64 {
entry:
  pivot = load a, hi
  i = mov lo
  j = mov lo
  br head
head:
  more = cmp lt j, hi
  br_cond more, body, finish
body:
  v = load a, j
  small = cmp lt v, pivot
  br_cond small, swap, next
swap:
  t = load a, i
  store a, i, v
  store a, j, t
  i = add i, 1
  br next
next:
  j = add j, 1
  br head
finish:
  t = load a, i
  store a, i, pivot
  store a, hi, t
  ret i
}

func quicksort(a:i64[], lo:i64, hi:i64) {
entry:
  go = cmp lt lo, hi
  br_cond go, split, done
split:
  p = call partition(a, lo, hi)
  left = sub p, 1
  call quicksort(a, lo, left)
  right = add p, 1
  call quicksort(a, right, hi)
  br done
done:
  ret
}

func sorter(seg:i64[], finished:i64) {
entry:
  n = len seg
  hi = sub n, 1
  call quicksort(seg, 0, hi)
  lock m
  c = load finished, 0
  c = add c, 1
  store finished, 0, c
  unlock m
  ret
}

func merge(a:i64[], b:i64[], out:i64[]) {
entry:
  na = len a
  nb = len b
  i = const 0
  j = const 0
  k = const 0
  br head
head:
  ina = cmp lt i, na
  inb = cmp lt j, nb
  both = mul ina, inb
  br_cond both, pick, tail_a
pick:
  x = load a, i
  y = load b, j
  le = cmp le x, y
  br_cond le, take_a, take_b
take_a:
  store out, k, x
  i = add i, 1
  k = add k, 1
  br head
take_b:
  store out, k, y
  j = add j, 1
  k = add k, 1
  br head
tail_a:
  ina = cmp lt i, na
  br_cond ina, copy_a, tail_b
copy_a:
  x = load a, i
  store out, k, x
  i = add i, 1
  k = add k, 1
  br tail_a
tail_b:
  inb = cmp lt j, nb
  br_cond inb, copy_b, done
copy_b:
  y = load b, j
  store out, k, y
  j = add j, 1
  k = add k, 1
  br tail_b
done:
  ret
}

func main(threads:i64, data:i64[]) {
entry:
  n = len data
  segs = alloc i64 threads
  tids = alloc i64 threads
  finished = alloc i64 1
  t = const 0
  br split_head
split_head:
  more = cmp lt t, threads
  br_cond more, split_body, join_init
split_body:
  lo = mul t, n
  lo = div lo, threads
  t1 = add t, 1
  hi = mul t1, n
  hi = div hi, threads
  size = sub hi, lo
  seg = alloc i64 size
  store segs, t, seg
  k = const 0
  br copy_head
copy_head:
  more = cmp lt k, size
  br_cond more, copy_body, launch
copy_body:
  src = add lo, k
  v = load data, src
  store seg, k, v
  k = add k, 1
  br copy_head
launch:
  h = spawn sorter(seg, finished)
  store tids, t, h
  t = add t, 1
  br split_head
join_init:
  t = const 0
  br join_head
join_head:
  more = cmp lt t, threads
  br_cond more, join_body, merge_init
join_body:
  h = load tids, t
  join h
  t = add t, 1
  br join_head
merge_init:
  acc = load segs, 0
  t = const 1
  br merge_head
merge_head:
  more = cmp lt t, threads
  br_cond more, merge_body, emit_init
merge_body:
  seg = load segs, t
  na = len acc
  nb = len seg
  total = add na, nb
  out = alloc i64 total
  call merge(acc, seg, out)
  acc = mov out
  t = add t, 1
  br merge_head
emit_init:
  i = const 0
  br emit_head
emit_head:
  more = cmp lt i, n
  br_cond more, emit_body, status
emit_body:
  v = load acc, i
  output v
  i = add i, 1
  br emit_head
status:
  c = load finished, 0
  ok = cmp eq c, threads
  output ok
  ret
}
)";

// Option-pricing style kernel with dynamic work distribution. cndf carries
// the sign-flip branch and splits into six basic blocks.
constexpr const char* kNumerikernel = R"(; numerikernel: normal-CDF pricing over a shared work index
entry main
output ordered
default_input -1.5, 0.7, -0.3, 2.2, -2.8, 1.1, 0.4, -0.9, 1.9, -1.2, 0.25, -0.6
mutex m

func nprime(x:f64) -> f64 {
entry:
  k = mul x, 0.196854
  t = add k, 1.0
  x2 = mul x, x
  k = mul x2, 0.115194
  t = add t, k
  x3 = mul x2, x
  k = mul x3, 0.000344
  t = add t, k
  x4 = mul x2, x2
  k = mul x4, 0.019527
  t = add t, k
  t2 = mul t, t
  t4 = mul t2, t2
  tail = div 0.5, t4
  p = sub 1.0, tail
  ret p
}

func cndf(x:f64) -> f64 {
bb1:
  neg = cmp lt x, 0.0
  br_cond neg, bb2, bb3
bb2:
  x = sub 0.0, x
  sign = const 1
  br bb4
bb3:
  sign = const 0
  br bb4
bb4:
  out = call nprime(x)
  br_cond sign, bb5, bb6
bb5:
  out = sub 1.0, out
  br bb6
bb6:
  ret out
}

func worker(data:f64[], prices:i64, next:i64, total:i64, acc:f64, drift:f64, count:i64) {
entry:
  n = len data
  br head
head:
  lock m
  i = load next, 0
  i1 = add i, 1
  store next, 0, i1
  unlock m
  more = cmp lt i, n
  br_cond more, body, flush
body:
  x = load data, i
  p = call cndf(x)
  store prices, i, p
  acc = mul acc, 0.75
  acc = add acc, p
  drift = mul drift, 0.6
  drift = add drift, x
  count = add count, 1
  br head
flush:
  lock m
  s = load total, 0
  s = add s, acc
  store total, 0, s
  unlock m
  acc = const 0.0
  drift = const 0.0
  count = const 0
  ret
}

func check(prices:f64[], floors:f64[]) -> i64 {
entry:
  n = len prices
  i = const 0
  ok = const 0
  br head
head:
  more = cmp lt i, n
  br_cond more, body, done
body:
  p = load prices, i
  f = load floors, i
  good = cmp gt p, f
  ok = add ok, good
  i = add i, 1
  br head
done:
  ret ok
}

func main(threads:i64, data:f64[]) {
entry:
  n = len data
  prices = alloc f64 n
  next = alloc i64 1
  total = alloc f64 1
  tids = alloc i64 threads
  t = const 0
  br spawn_head
spawn_head:
  more = cmp lt t, threads
  br_cond more, spawn_body, join_init
spawn_body:
  h = spawn worker(data, prices, next, total, 0.0, 0.0, 0)
  store tids, t, h
  t = add t, 1
  br spawn_head
join_init:
  t = const 0
  br join_head
join_head:
  more = cmp lt t, threads
  br_cond more, join_body, halves
join_body:
  h = load tids, t
  join h
  t = add t, 1
  br join_head
halves:
  half = div n, 2
  rest = sub n, half
  lo = alloc f64 half
  hi = alloc f64 rest
  flo = alloc f64 half
  fhi = alloc f64 rest
  i = const 0
  br split_head
split_head:
  more = cmp lt i, n
  br_cond more, split_body, validate
split_body:
  p = load prices, i
  first = cmp lt i, half
  br_cond first, to_lo, to_hi
to_lo:
  store lo, i, p
  store flo, i, -1.0
  br split_next
to_hi:
  j = sub i, half
  store hi, j, p
  store fhi, j, -1.0
  br split_next
split_next:
  i = add i, 1
  br split_head
validate:
  okl = call check(lo, flo)
  okh = call check(hi, fhi)
  ok = add okl, okh
  i = const 0
  br emit_head
emit_head:
  more = cmp lt i, n
  br_cond more, emit_body, done
emit_body:
  p = load prices, i
  output p
  i = add i, 1
  br emit_head
done:
  output ok
  ret
}
)";

// Shared counter incremented by every thread under one mutex.
constexpr const char* kRacer = R"(; racer: mutex-protected shared counter
entry main
output ordered
default_input 25
mutex m

func increment(counter:i64) -> i64 {
entry:
  lock m
  v = load counter, 0
  v = add v, 1
  store counter, 0, v
  unlock m
  ret v
}

func worker(counter:i64, iters:i64) {
entry:
  i = const 0
  br head
head:
  more = cmp lt i, iters
  br_cond more, body, done
body:
  v = call increment(counter)
  i = add i, 1
  br head
done:
  ret
}

func main(threads:i64, iters:i64) {
entry:
  counter = alloc i64 1
  tids = alloc i64 threads
  t = const 0
  br spawn_head
spawn_head:
  more = cmp lt t, threads
  br_cond more, spawn_body, join_init
spawn_body:
  h = spawn worker(counter, iters)
  store tids, t, h
  t = add t, 1
  br spawn_head
join_init:
  t = const 0
  br join_head
join_head:
  more = cmp lt t, threads
  br_cond more, join_body, done
join_body:
  h = load tids, t
  join h
  t = add t, 1
  br join_head
done:
  v = load counter, 0
  output v
  ret
}
)";

// Request dispatch loop. Requests are logged to and read back from the
// simulated file; handlers take no parameters.
constexpr const char* kHttpish = R"(; httpish: request dispatcher with parameterless handlers
entry main
output ordered
default_input 1, 2, 1, 3, 2, 9, 1, 3, 9, 1
mutex m

func handle_get() -> i64 {
entry:
  st = const 200
  ret st
}

func handle_post() -> i64 {
entry:
  st = const 201
  ret st
}

func handle_head() -> i64 {
entry:
  st = const 204
  ret st
}

func not_found() -> i64 {
entry:
  st = const 404
  ret st
}

func dispatch(code:i64) -> i64 {
entry:
  is_get = cmp eq code, 1
  br_cond is_get, get, not_get
get:
  st = call handle_get()
  br done
not_get:
  is_post = cmp eq code, 2
  br_cond is_post, post, not_post
post:
  st = call handle_post()
  br done
not_post:
  is_head = cmp eq code, 3
  br_cond is_head, head, missing
head:
  st = call handle_head()
  br done
missing:
  st = call not_found()
  br done
done:
  ret st
}

func server(id:i64, stride:i64, reqs:i64, results:i64, served:i64) {
entry:
  n = len reqs
  i = mov id
  br head
head:
  more = cmp lt i, n
  br_cond more, body, done
body:
  code = load reqs, i
  st = call dispatch(code)
  store results, i, st
  lock m
  c = load served, 0
  c = add c, 1
  store served, 0, c
  unlock m
  i = add i, stride
  br head
done:
  ret
}

func main(threads:i64, data:i64[]) {
entry:
  n = len data
  io_write data, n
  reqs = alloc i64 n
  got = io_read reqs, n
  results = alloc i64 n
  served = alloc i64 1
  tids = alloc i64 threads
  t = const 0
  br spawn_head
spawn_head:
  more = cmp lt t, threads
  br_cond more, spawn_body, join_init
spawn_body:
  h = spawn server(t, threads, reqs, results, served)
  store tids, t, h
  t = add t, 1
  br spawn_head
join_init:
  t = const 0
  br join_head
join_head:
  more = cmp lt t, threads
  br_cond more, join_body, respond
join_body:
  h = load tids, t
  join h
  t = add t, 1
  br join_head
respond:
  io_write results, n
  i = const 0
  br emit_head
emit_head:
  more = cmp lt i, n
  br_cond more, emit_body, done
emit_body:
  v = load results, i
  output v
  i = add i, 1
  br emit_head
done:
  c = load served, 0
  output c
  output got
  ret
}
)";

struct Entry {
  const char* name;
  const char* source;
};

constexpr std::array<Entry, 5> kBuiltins{{
    {"workqueue", kWorkqueue},
    {"qsortmt", kQsortmt},
    {"numerikernel", kNumerikernel},
    {"racer", kRacer},
    {"httpish", kHttpish},
}};

}  // namespace

std::vector<std::string> builtin_names() {
  std::vector<std::string> names;
  for (const auto& e : kBuiltins) names.emplace_back(e.name);
  return names;
}

std::string_view builtin_source(std::string_view name) {
  for (const auto& e : kBuiltins) {
    if (name == e.name) return e.source;
  }
  throw Error("unknown builtin '" + std::string(name) + "'");
}

Program builtin(std::string_view name) {
  Program p = load_program(builtin_source(name));
  p.name = std::string(name);
  return p;
}

}  // namespace ipa
