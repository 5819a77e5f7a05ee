#pragma once

// Simulated ultra-wide word RAM: registers of K w-bit components, a
// word-addressable arena with scattered access, and per-instruction cost
// counters.
//
// Cost accounting (deterministic; replaying a sequence of operations yields
// identical counter totals):
//
//   componentwise add/sub/mul/less/and/or/not, whole-register shifts,
//   compress, zero(), iota()                      -> ultra_ops += 1
//   cw_blend                                      -> ultra_ops += 6
//   cw_equal                                      -> ultra_ops += 4, plus one
//                                                    broadcast (see below)
//   cw_mul_2w                                     -> ultra_ops += 35, plus one
//                                                    broadcast
//   scatter_read / scatter_write                  -> scattered_reads/writes += 1
//   broadcast                                     -> ultra_ops += 1,
//                                                    contiguous_accesses += 1,
//                                                    scattered_reads += 1
//   read_word / write_word                        -> contiguous_accesses += 1
//   read_block / write_block / alloc (zero fill)  -> contiguous_accesses +=
//                                                    ceil(words / w)
//   load_const                                    -> contiguous_accesses += 1
//   msb_index                                     -> word_ops += 1
//   extract_lane                                  -> ultra_ops += 1, word_ops += 1
//   count_word_ops(n)                             -> word_ops += n (hook for
//                                                    scalar arithmetic in
//                                                    structures)
//
// Machine-internal cached masks used by composite operations are ordinary
// registers and are not charged.

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwram {

using word_t = std::uint64_t;
using addr_t = std::uint64_t;

inline constexpr unsigned kMaxLanes = 64;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MemoryFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfMemory : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Static machine parameters. Use the factories: they round and clamp the
/// lane count and arena capacity to legal values.
struct MachineConfig {
  unsigned word_bits = 64;   // w; even, 8 <= w <= 64
  unsigned lanes = 64;       // K; even, 2 <= K <= w
  addr_t arena_capacity = 1u << 20;  // in words; always < 2^w
  bool validate = true;
  unsigned eps_num = 1;  // exponent K ~ w^(eps_num/eps_den), echoed in reports
  unsigned eps_den = 1;

  // K = w (ultrawords of w*w bits).
  static MachineConfig full_width(unsigned w, addr_t capacity,
                                  bool validate = true);
  // K = even-rounded ceil(w^(p/q)), clamped to [2, w].
  static MachineConfig narrow(unsigned w, unsigned p, unsigned q,
                              addr_t capacity, bool validate = true);

  word_t word_mask() const {
    return word_bits == 64 ? ~word_t{0} : (word_t{1} << word_bits) - 1;
  }
  unsigned register_bits() const { return word_bits * lanes; }
  void check() const;
};

/// One ultraword register value: K components of w bits, component 0
/// rightmost. Immutable in practice; machine operations return fresh values.
class Ultraword {
 public:
  Ultraword() = default;
  Ultraword(unsigned lanes, unsigned word_bits)
      : lanes_(static_cast<std::uint8_t>(lanes)),
        bits_(static_cast<std::uint8_t>(word_bits)) {}

  static Ultraword zeros(const MachineConfig& cfg) {
    return Ultraword(cfg.lanes, cfg.word_bits);
  }
  static Ultraword from_lanes(const MachineConfig& cfg,
                              std::span<const word_t> values);

  unsigned lane_count() const { return lanes_; }
  unsigned word_bits() const { return bits_; }
  word_t lane(unsigned i) const { return lane_[i]; }
  void set_lane(unsigned i, word_t v) {
    lane_[i] = v & mask();
  }

  bool operator==(const Ultraword& o) const {
    if (lanes_ != o.lanes_ || bits_ != o.bits_) return false;
    for (unsigned i = 0; i < lanes_; ++i)
      if (lane_[i] != o.lane_[i]) return false;
    return true;
  }

 private:
  word_t mask() const {
    return bits_ == 64 ? ~word_t{0} : (word_t{1} << bits_) - 1;
  }
  std::array<word_t, kMaxLanes> lane_{};
  std::uint8_t lanes_ = 0;
  std::uint8_t bits_ = 0;

  friend class Machine;
};

struct CostCounters {
  std::uint64_t word_ops = 0;
  std::uint64_t ultra_ops = 0;
  std::uint64_t scattered_reads = 0;
  std::uint64_t scattered_writes = 0;
  std::uint64_t contiguous_accesses = 0;

  std::uint64_t total() const {
    return word_ops + ultra_ops + scattered_reads + scattered_writes +
           contiguous_accesses;
  }
  void reset() { *this = CostCounters{}; }
  CostCounters operator-(const CostCounters& b) const {
    return {word_ops - b.word_ops, ultra_ops - b.ultra_ops,
            scattered_reads - b.scattered_reads,
            scattered_writes - b.scattered_writes,
            contiguous_accesses - b.contiguous_accesses};
  }
  bool operator==(const CostCounters&) const = default;
};

/// An ultraword constant spilled to the arena (K words) with a cached
/// register copy. Structures account for their constants this way.
struct UltraConst {
  addr_t addr = 0;
  Ultraword value;
};

class Machine {
 public:
  explicit Machine(MachineConfig cfg);

  const MachineConfig& config() const { return cfg_; }
  bool validating() const { return cfg_.validate; }
  const CostCounters& counters() const { return counters_; }
  void reset_counters() { counters_.reset(); }

  // ---- componentwise register operations ----
  Ultraword cw_add(const Ultraword& x, const Ultraword& y);
  Ultraword cw_sub(const Ultraword& x, const Ultraword& y);
  Ultraword cw_mul(const Ultraword& x, const Ultraword& y);
  // z<i> = 1 iff x<i> < y<i>
  Ultraword cw_less(const Ultraword& x, const Ultraword& y);
  Ultraword cw_and(const Ultraword& x, const Ultraword& y);
  Ultraword cw_or(const Ultraword& x, const Ultraword& y);
  Ultraword cw_not(const Ultraword& x);
  // Whole-register shifts by a bit count; counts >= K*w produce zero.
  Ultraword shift_left(const Ultraword& x, unsigned bits);
  Ultraword shift_right(const Ultraword& x, unsigned bits);

  // z<i> = x<i> if sel<i> == 0 else y<i>; sel components must be 0 or 1.
  Ultraword cw_blend(const Ultraword& x, const Ultraword& y,
                     const Ultraword& sel);
  // z<i> = 1 iff x<i> == y<i> (composed from cw_less/cw_or/cw_sub).
  Ultraword cw_equal(const Ultraword& x, const Ultraword& y);

  // Exact 2w-bit products of the even components. Operands must have all odd
  // components zero; block (2i+1, 2i) of the result holds the high and low
  // halves of x<2i> * y<2i>.
  Ultraword cw_mul_2w(const Ultraword& x, const Ultraword& y);

  // K-bit word of the least significant bits of each component.
  word_t compress(const Ultraword& x);

  // Index of the most significant set bit; x must be nonzero.
  unsigned msb_index(word_t x);

  word_t extract_lane(const Ultraword& x, unsigned lane);

  // All-zero register / <K-1, ..., 1, 0>.
  Ultraword zero();
  Ultraword iota();

  // ---- memory ----
  Ultraword broadcast(word_t x);
  Ultraword scatter_read(const Ultraword& addrs);
  void scatter_write(const Ultraword& addrs, const Ultraword& values);

  word_t read_word(addr_t a);
  void write_word(addr_t a, word_t v);
  void read_block(addr_t a, std::span<word_t> out);
  void write_block(addr_t a, std::span<const word_t> in);

  // Best-fit allocator over a coalescing free list (smallest fitting block,
  // lowest address first); blocks are zero filled. Address 0 is reserved
  // scratch and never handed out.
  addr_t alloc(std::uint64_t n);
  void dealloc(addr_t a, std::uint64_t n);

  UltraConst store_const(const Ultraword& v);
  void release_const(UltraConst& c);
  Ultraword load_const(const UltraConst& c);

  void count_word_ops(std::uint64_t n) { counters_.word_ops += n; }

  std::uint64_t allocated_words() const { return used_words_; }
  std::uint64_t peak_allocated_words() const { return peak_used_words_; }

  // Hex listing, one "address: word" line per word in [lo, hi).
  void dump_arena(std::ostream& os, addr_t lo, addr_t hi);

  Machine(const Machine&) = delete;
  Machine& operator=(const Machine&) = delete;

 private:
  enum class Arith { kAdd, kSub, kMul, kLess, kAnd, kOr };
  Ultraword arith(Arith op, const Ultraword& x, const Ultraword& y);
  void check_config(const Ultraword& x) const;
  void check_pair(const Ultraword& x, const Ultraword& y) const;
  void ensure_mapped(addr_t a, std::uint64_t n);

  // Full-register primitives used by composite operations (native ultraword
  // instructions in the model): big-integer add across the whole register and
  // bitwise xor. Each counts one ultra_op.
  Ultraword full_add(const Ultraword& x, const Ultraword& y);
  Ultraword full_xor(const Ultraword& x, const Ultraword& y);
  // Addition that carries within each 2w-bit block but not across blocks,
  // via the carry-guard trick on full_add.
  Ultraword add_2w_blocks(const Ultraword& x, const Ultraword& y);

  void add_free(addr_t a, std::uint64_t len);
  void drop_free(std::map<addr_t, std::uint64_t>::iterator it);

  MachineConfig cfg_;
  word_t mask_;
  std::vector<word_t> cells_;
  std::map<addr_t, std::uint64_t> free_blocks_;            // addr -> length
  std::map<std::uint64_t, std::set<addr_t>> free_by_len_;  // length -> addrs
  std::map<addr_t, std::uint64_t> live_allocs_;  // validating mode only
  std::uint64_t used_words_ = 0;
  std::uint64_t peak_used_words_ = 0;
  CostCounters counters_;

  Ultraword zero_;
  Ultraword iota_;
  Ultraword guard_;      // top bit of each 2w-bit block
  Ultraword not_guard_;
};

}  // namespace uwram
