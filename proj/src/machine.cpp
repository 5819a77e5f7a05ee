#include "uwram/machine.hpp"

#include <algorithm>
#include <bit>
#include <iomanip>

namespace uwram {

namespace {

// Smallest t with t^den >= w^num (integer-exact).
unsigned ceil_pow_rational(unsigned w, unsigned num, unsigned den) {
  auto pow_u = [](unsigned __int128 b, unsigned e) {
    unsigned __int128 r = 1;
    for (unsigned i = 0; i < e; ++i) r *= b;
    return r;
  };
  unsigned __int128 target = pow_u(w, num);
  unsigned t = 1;
  while (pow_u(t, den) < target) ++t;
  return t;
}

}  // namespace

MachineConfig MachineConfig::full_width(unsigned w, addr_t capacity,
                                        bool validate) {
  MachineConfig cfg;
  cfg.word_bits = w;
  cfg.lanes = w;
  cfg.eps_num = 1;
  cfg.eps_den = 1;
  word_t max_addr = cfg.word_mask();
  cfg.arena_capacity = std::min<addr_t>(capacity, max_addr);
  cfg.validate = validate;
  cfg.check();
  return cfg;
}

MachineConfig MachineConfig::narrow(unsigned w, unsigned p, unsigned q,
                                    addr_t capacity, bool validate) {
  if (p == 0 || q == 0 || p > q)
    throw UsageError("epsilon must be a rational in (0, 1]");
  MachineConfig cfg;
  cfg.word_bits = w;
  unsigned k = ceil_pow_rational(w, p, q);
  if (k % 2 != 0) ++k;
  cfg.lanes = std::clamp(k, 2u, w);
  cfg.eps_num = p;
  cfg.eps_den = q;
  word_t max_addr = cfg.word_mask();
  cfg.arena_capacity = std::min<addr_t>(capacity, max_addr);
  cfg.validate = validate;
  cfg.check();
  return cfg;
}

void MachineConfig::check() const {
  if (word_bits < 8 || word_bits > 64 || word_bits % 2 != 0)
    throw UsageError("word width must be even and in [8, 64]");
  if (lanes < 2 || lanes > word_bits || lanes % 2 != 0)
    throw UsageError("lane count must be even and in [2, w]");
  if (arena_capacity < 2) throw UsageError("arena capacity too small");
  if (word_bits < 64 && arena_capacity > word_mask())
    throw UsageError("arena capacity must fit in a w-bit address");
}

Ultraword Ultraword::from_lanes(const MachineConfig& cfg,
                                std::span<const word_t> values) {
  if (values.size() != cfg.lanes)
    throw UsageError("lane initializer has wrong length");
  Ultraword u(cfg.lanes, cfg.word_bits);
  for (unsigned i = 0; i < cfg.lanes; ++i) {
    if (values[i] > cfg.word_mask())
      throw UsageError("lane value exceeds 2^w - 1");
    u.lane_[i] = values[i];
  }
  return u;
}

Machine::Machine(MachineConfig cfg) : cfg_(cfg), mask_(cfg.word_mask()) {
  cfg_.check();
  cells_.assign(16, 0);
  // Address 0 is scratch; the allocator owns [1, capacity).
  add_free(1, cfg_.arena_capacity - 1);
  used_words_ = 1;
  peak_used_words_ = 1;

  zero_ = Ultraword::zeros(cfg_);
  iota_ = Ultraword::zeros(cfg_);
  guard_ = Ultraword::zeros(cfg_);
  for (unsigned i = 0; i < cfg_.lanes; ++i) {
    iota_.set_lane(i, i);
    if (i % 2 == 1) guard_.set_lane(i, word_t{1} << (cfg_.word_bits - 1));
  }
  not_guard_ = Ultraword::zeros(cfg_);
  for (unsigned i = 0; i < cfg_.lanes; ++i)
    not_guard_.set_lane(i, ~guard_.lane(i) & mask_);
}

void Machine::check_config(const Ultraword& x) const {
  if (x.lane_count() != cfg_.lanes || x.word_bits() != cfg_.word_bits)
    throw UsageError("ultraword built under a different machine config");
}

void Machine::check_pair(const Ultraword& x, const Ultraword& y) const {
  check_config(x);
  check_config(y);
}

Ultraword Machine::arith(Arith op, const Ultraword& x, const Ultraword& y) {
  check_pair(x, y);
  Ultraword z(cfg_.lanes, cfg_.word_bits);
  for (unsigned i = 0; i < cfg_.lanes; ++i) {
    word_t a = x.lane_[i], b = y.lane_[i], r = 0;
    switch (op) {
      case Arith::kAdd: r = (a + b) & mask_; break;
      case Arith::kSub: r = (a - b) & mask_; break;
      case Arith::kMul: r = (a * b) & mask_; break;
      case Arith::kLess: r = a < b ? 1 : 0; break;
      case Arith::kAnd: r = a & b; break;
      case Arith::kOr: r = a | b; break;
    }
    z.lane_[i] = r;
  }
  counters_.ultra_ops += 1;
  return z;
}

Ultraword Machine::cw_add(const Ultraword& x, const Ultraword& y) {
  return arith(Arith::kAdd, x, y);
}
Ultraword Machine::cw_sub(const Ultraword& x, const Ultraword& y) {
  return arith(Arith::kSub, x, y);
}
Ultraword Machine::cw_mul(const Ultraword& x, const Ultraword& y) {
  return arith(Arith::kMul, x, y);
}
Ultraword Machine::cw_less(const Ultraword& x, const Ultraword& y) {
  return arith(Arith::kLess, x, y);
}
Ultraword Machine::cw_and(const Ultraword& x, const Ultraword& y) {
  return arith(Arith::kAnd, x, y);
}
Ultraword Machine::cw_or(const Ultraword& x, const Ultraword& y) {
  return arith(Arith::kOr, x, y);
}

Ultraword Machine::cw_not(const Ultraword& x) {
  check_config(x);
  Ultraword z(cfg_.lanes, cfg_.word_bits);
  for (unsigned i = 0; i < cfg_.lanes; ++i) z.lane_[i] = ~x.lane_[i] & mask_;
  counters_.ultra_ops += 1;
  return z;
}

Ultraword Machine::shift_left(const Ultraword& x, unsigned bits) {
  check_config(x);
  counters_.ultra_ops += 1;
  Ultraword z(cfg_.lanes, cfg_.word_bits);
  if (bits >= cfg_.register_bits()) return z;
  const unsigned w = cfg_.word_bits;
  const unsigned q = bits / w, r = bits % w;
  for (unsigned i = 0; i < cfg_.lanes; ++i) {
    word_t v = 0;
    if (i >= q) {
      v = x.lane_[i - q] << r;
      if (r > 0 && i >= q + 1) v |= x.lane_[i - q - 1] >> (w - r);
    }
    z.lane_[i] = v & mask_;
  }
  return z;
}

Ultraword Machine::shift_right(const Ultraword& x, unsigned bits) {
  check_config(x);
  counters_.ultra_ops += 1;
  Ultraword z(cfg_.lanes, cfg_.word_bits);
  if (bits >= cfg_.register_bits()) return z;
  const unsigned w = cfg_.word_bits;
  const unsigned q = bits / w, r = bits % w;
  for (unsigned i = 0; i < cfg_.lanes; ++i) {
    word_t v = 0;
    if (i + q < cfg_.lanes) {
      v = x.lane_[i + q] >> r;
      if (r > 0 && i + q + 1 < cfg_.lanes) v |= x.lane_[i + q + 1] << (w - r);
    }
    z.lane_[i] = v & mask_;
  }
  return z;
}

Ultraword Machine::cw_blend(const Ultraword& x, const Ultraword& y,
                            const Ultraword& sel) {
  check_pair(x, y);
  check_config(sel);
  if (cfg_.validate) {
    for (unsigned i = 0; i < cfg_.lanes; ++i)
      if (sel.lane_[i] > 1)
        throw UsageError("blend selector component outside {0, 1}");
  }
  // sel' = <0,...,0> - sel turns each 1 into an all-ones component.
  Ultraword expanded = cw_sub(zero(), sel);
  Ultraword keep = cw_and(x, cw_not(expanded));
  Ultraword take = cw_and(y, expanded);
  return cw_or(keep, take);
}

Ultraword Machine::cw_equal(const Ultraword& x, const Ultraword& y) {
  Ultraword lt = cw_less(x, y);
  Ultraword gt = cw_less(y, x);
  Ultraword ne = cw_or(lt, gt);
  Ultraword ones = broadcast(1);
  return cw_sub(ones, ne);
}

Ultraword Machine::full_add(const Ultraword& x, const Ultraword& y) {
  Ultraword z(cfg_.lanes, cfg_.word_bits);
  word_t carry = 0;
  for (unsigned i = 0; i < cfg_.lanes; ++i) {
    // With w < 64 the lane sum fits natively; with w == 64 detect wrap.
    if (cfg_.word_bits == 64) {
      word_t partial = x.lane_[i] + y.lane_[i];
      word_t out = partial + carry;
      carry = (partial < x.lane_[i] || (carry != 0 && out == 0)) ? 1 : 0;
      z.lane_[i] = out;
    } else {
      word_t s = x.lane_[i] + y.lane_[i] + carry;
      z.lane_[i] = s & mask_;
      carry = s >> cfg_.word_bits;
    }
  }
  counters_.ultra_ops += 1;
  return z;
}

Ultraword Machine::full_xor(const Ultraword& x, const Ultraword& y) {
  Ultraword z(cfg_.lanes, cfg_.word_bits);
  for (unsigned i = 0; i < cfg_.lanes; ++i)
    z.lane_[i] = x.lane_[i] ^ y.lane_[i];
  counters_.ultra_ops += 1;
  return z;
}

Ultraword Machine::add_2w_blocks(const Ultraword& x, const Ultraword& y) {
  // Clear the top guard bit of each 2w block, add with free carry
  // propagation (cannot cross a block), then restore the guard bits.
  Ultraword xl = cw_and(x, not_guard_);
  Ultraword yl = cw_and(y, not_guard_);
  Ultraword sum = full_add(xl, yl);
  Ultraword xg = cw_and(x, guard_);
  Ultraword yg = cw_and(y, guard_);
  return full_xor(sum, full_xor(xg, yg));
}

Ultraword Machine::cw_mul_2w(const Ultraword& x, const Ultraword& y) {
  check_pair(x, y);
  if (cfg_.validate) {
    for (unsigned i = 1; i < cfg_.lanes; i += 2)
      if (x.lane_[i] != 0 || y.lane_[i] != 0)
        throw UsageError("2w-bit multiply operands must be zero at odd lanes");
  }
  const unsigned h = cfg_.word_bits / 2;
  Ultraword half_mask = broadcast((word_t{1} << h) - 1);
  Ultraword xlo = cw_and(x, half_mask);
  Ultraword xhi = cw_and(shift_right(x, h), half_mask);
  Ultraword ylo = cw_and(y, half_mask);
  Ultraword yhi = cw_and(shift_right(y, h), half_mask);

  Ultraword hh = cw_mul(xhi, yhi);
  Ultraword hl = cw_mul(xhi, ylo);
  Ultraword lh = cw_mul(xlo, yhi);
  Ultraword ll = cw_mul(xlo, ylo);

  Ultraword acc = add_2w_blocks(shift_left(hh, cfg_.word_bits),
                                shift_left(hl, h));
  acc = add_2w_blocks(acc, shift_left(lh, h));
  return add_2w_blocks(acc, ll);
}

word_t Machine::compress(const Ultraword& x) {
  check_config(x);
  counters_.ultra_ops += 1;
  word_t out = 0;
  for (unsigned i = 0; i < cfg_.lanes; ++i)
    out |= (x.lane_[i] & 1) << i;
  return out;
}

unsigned Machine::msb_index(word_t x) {
  if (x == 0) throw UsageError("msb_index of zero");
  counters_.word_ops += 1;
  return 63 - static_cast<unsigned>(std::countl_zero(x));
}

word_t Machine::extract_lane(const Ultraword& x, unsigned lane) {
  check_config(x);
  if (lane >= cfg_.lanes) throw UsageError("lane index out of range");
  counters_.ultra_ops += 1;
  counters_.word_ops += 1;
  return x.lane_[lane];
}

Ultraword Machine::zero() {
  counters_.ultra_ops += 1;
  return zero_;
}

Ultraword Machine::iota() {
  counters_.ultra_ops += 1;
  return iota_;
}

void Machine::ensure_mapped(addr_t a, std::uint64_t n) {
  if (a >= cfg_.arena_capacity || n > cfg_.arena_capacity - a)
    throw MemoryFault("address " + std::to_string(a) +
                      " outside arena capacity");
  if (a + n > cells_.size()) {
    std::uint64_t grown = std::max<std::uint64_t>(a + n, cells_.size() * 2);
    cells_.resize(std::min<std::uint64_t>(grown, cfg_.arena_capacity), 0);
  }
}

Ultraword Machine::broadcast(word_t x) {
  if (x > mask_) throw UsageError("broadcast value exceeds 2^w - 1");
  // Zero the register, write x to address 0, scattered read of <0,...,0>.
  counters_.ultra_ops += 1;
  counters_.contiguous_accesses += 1;
  cells_[0] = x;
  Ultraword addrs = zero_;
  return scatter_read(addrs);
}

Ultraword Machine::scatter_read(const Ultraword& addrs) {
  check_config(addrs);
  counters_.scattered_reads += 1;
  Ultraword z(cfg_.lanes, cfg_.word_bits);
  for (unsigned i = 0; i < cfg_.lanes; ++i) {
    ensure_mapped(addrs.lane_[i], 1);
    z.lane_[i] = cells_[addrs.lane_[i]];
  }
  return z;
}

void Machine::scatter_write(const Ultraword& addrs, const Ultraword& values) {
  check_pair(addrs, values);
  if (cfg_.validate) {
    std::array<word_t, kMaxLanes> sorted;
    for (unsigned i = 0; i < cfg_.lanes; ++i) sorted[i] = addrs.lane_[i];
    std::sort(sorted.begin(), sorted.begin() + cfg_.lanes);
    for (unsigned i = 1; i < cfg_.lanes; ++i)
      if (sorted[i] == sorted[i - 1])
        throw UsageError("scattered write addresses must be distinct");
  }
  counters_.scattered_writes += 1;
  for (unsigned i = 0; i < cfg_.lanes; ++i) {
    ensure_mapped(addrs.lane_[i], 1);
    cells_[addrs.lane_[i]] = values.lane_[i];
  }
}

word_t Machine::read_word(addr_t a) {
  ensure_mapped(a, 1);
  counters_.contiguous_accesses += 1;
  return cells_[a];
}

void Machine::write_word(addr_t a, word_t v) {
  if (v > mask_) throw UsageError("stored word exceeds 2^w - 1");
  ensure_mapped(a, 1);
  counters_.contiguous_accesses += 1;
  cells_[a] = v;
}

void Machine::read_block(addr_t a, std::span<word_t> out) {
  if (out.empty()) return;
  ensure_mapped(a, out.size());
  counters_.contiguous_accesses +=
      (out.size() + cfg_.word_bits - 1) / cfg_.word_bits;
  std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(a), out.size(),
              out.begin());
}

void Machine::write_block(addr_t a, std::span<const word_t> in) {
  if (in.empty()) return;
  ensure_mapped(a, in.size());
  counters_.contiguous_accesses +=
      (in.size() + cfg_.word_bits - 1) / cfg_.word_bits;
  if (cfg_.validate) {
    for (word_t v : in)
      if (v > mask_) throw UsageError("stored word exceeds 2^w - 1");
  }
  std::copy(in.begin(), in.end(),
            cells_.begin() + static_cast<std::ptrdiff_t>(a));
}

void Machine::add_free(addr_t a, std::uint64_t len) {
  free_blocks_[a] = len;
  free_by_len_[len].insert(a);
}

void Machine::drop_free(std::map<addr_t, std::uint64_t>::iterator it) {
  auto by_len = free_by_len_.find(it->second);
  by_len->second.erase(it->first);
  if (by_len->second.empty()) free_by_len_.erase(by_len);
  free_blocks_.erase(it);
}

addr_t Machine::alloc(std::uint64_t n) {
  if (n == 0) throw UsageError("alloc of zero words");
  auto fit = free_by_len_.lower_bound(n);
  if (fit == free_by_len_.end())
    throw OutOfMemory("arena exhausted allocating " + std::to_string(n) +
                      " words (capacity " +
                      std::to_string(cfg_.arena_capacity) + ")");
  addr_t base = *fit->second.begin();
  std::uint64_t len = free_blocks_.at(base);
  drop_free(free_blocks_.find(base));
  if (len > n) add_free(base + n, len - n);
  ensure_mapped(base, n);
  std::fill_n(cells_.begin() + static_cast<std::ptrdiff_t>(base), n, 0);
  counters_.contiguous_accesses += (n + cfg_.word_bits - 1) / cfg_.word_bits;
  used_words_ += n;
  peak_used_words_ = std::max(peak_used_words_, used_words_);
  if (cfg_.validate) live_allocs_[base] = n;
  return base;
}

void Machine::dealloc(addr_t a, std::uint64_t n) {
  if (n == 0) return;
  if (cfg_.validate) {
    auto it = live_allocs_.find(a);
    if (it == live_allocs_.end() || it->second != n)
      throw UsageError("dealloc of a block that was not allocated");
    live_allocs_.erase(it);
  }
  if (free_blocks_.count(a)) throw UsageError("double free");
  used_words_ -= n;
  addr_t base = a;
  std::uint64_t len = n;
  // Coalesce with the following and preceding blocks.
  auto next = free_blocks_.lower_bound(a);
  if (next != free_blocks_.end() && a + n == next->first) {
    len += next->second;
    drop_free(next);
  }
  auto prev = free_blocks_.lower_bound(a);
  if (prev != free_blocks_.begin()) {
    --prev;
    if (prev->first + prev->second == a) {
      base = prev->first;
      len += prev->second;
      drop_free(prev);
    }
  }
  add_free(base, len);
}

UltraConst Machine::store_const(const Ultraword& v) {
  check_config(v);
  UltraConst c;
  c.addr = alloc(cfg_.lanes);
  c.value = v;
  std::vector<word_t> words(cfg_.lanes);
  for (unsigned i = 0; i < cfg_.lanes; ++i) words[i] = v.lane(i);
  write_block(c.addr, words);
  return c;
}

void Machine::release_const(UltraConst& c) {
  if (c.addr != 0) dealloc(c.addr, cfg_.lanes);
  c.addr = 0;
}

Ultraword Machine::load_const(const UltraConst& c) {
  counters_.contiguous_accesses += 1;
  return c.value;
}

void Machine::dump_arena(std::ostream& os, addr_t lo, addr_t hi) {
  hi = std::min<addr_t>(hi, cfg_.arena_capacity);
  for (addr_t a = lo; a < hi; ++a) {
    word_t v = a < cells_.size() ? cells_[a] : 0;
    os << std::hex << std::setw(8) << std::setfill('0') << a << ": "
       << std::setw(16) << std::setfill('0') << v << std::dec << "\n";
  }
}

}  // namespace uwram
