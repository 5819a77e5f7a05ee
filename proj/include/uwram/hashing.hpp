#pragma once

// Multiply-shift universal hashing: h(x) = (a*x mod 2^w) >> (w - c) with a
// odd, mapping w-bit keys to c-bit values. Scalar evaluation plus a
// constant-time lane-parallel evaluation of K independent functions.

#include <cstdint>

#include "uwram/machine.hpp"

namespace uwram {

struct MultiplyShift {
  word_t multiplier = 1;  // odd, 0 < a < 2^w
  unsigned out_bits = 1;  // c, 1 <= c <= w

  bool valid_for(unsigned word_bits) const {
    if (multiplier == 0 || multiplier % 2 == 0) return false;
    if (word_bits < 64 && multiplier >> word_bits != 0) return false;
    return out_bits >= 1 && out_bits <= word_bits;
  }
};

// Pure formula; the oracle used by tests and by callers that do not charge
// the cost model.
inline word_t ms_hash_value(const MultiplyShift& f, word_t x,
                            unsigned word_bits) {
  word_t mask = word_bits == 64 ? ~word_t{0} : (word_t{1} << word_bits) - 1;
  word_t prod = (f.multiplier * x) & mask;
  return prod >> (word_bits - f.out_bits);
}

// Counted scalar evaluation (one multiply, one shift).
inline word_t ms_hash(Machine& m, const MultiplyShift& f, word_t x) {
  m.count_word_ops(2);
  return ms_hash_value(f, x, m.config().word_bits);
}

// Evaluates K multiply-shift functions at once: lane i of the result is
// (a_i * x_i mod 2^w) >> (w - c_i), where a = multipliers, x = keys and
// shifts holds 2^(c_i). The parity constant must be <0,1,...,0,1>. Costs a
// fixed number of operations independent of K.
//
// Requires every multiplier lane odd and every shift lane a power of two in
// [2, 2^(w-1)] (so c_i <= w - 1; the scalar form alone supports c = w).
Ultraword ms_hash_lanes(Machine& m, const Ultraword& keys,
                        const Ultraword& multipliers, const Ultraword& shifts,
                        const Ultraword& parity);

// <0,1,0,1,...> with 1 at even lanes; the constant consumed by
// ms_hash_lanes. Callers typically spill it once via Machine::store_const.
Ultraword make_parity_constant(const MachineConfig& cfg);

namespace detail {
// Step producing hash values at the even lanes only (odd lanes are
// unspecified). Exposed for tests.
Ultraword ms_hash_even_lanes(Machine& m, const Ultraword& keys,
                             const Ultraword& multipliers,
                             const Ultraword& shifts, const Ultraword& parity);
}  // namespace detail

}  // namespace uwram
