#include "uwram/hashing.hpp"

#include <bit>

namespace uwram {

Ultraword make_parity_constant(const MachineConfig& cfg) {
  Ultraword m = Ultraword::zeros(cfg);
  for (unsigned i = 0; i < cfg.lanes; i += 2) m.set_lane(i, 1);
  return m;
}

namespace detail {

Ultraword ms_hash_even_lanes(Machine& m, const Ultraword& keys,
                             const Ultraword& multipliers,
                             const Ultraword& shifts,
                             const Ultraword& parity) {
  const unsigned w = m.config().word_bits;
  // Zero the odd lanes of the shift table and of a*x, then widen: the top
  // half of the 2w-bit product (a_i x_i mod 2^w) * 2^(c_i) is the hash.
  Ultraword shifts_even = m.cw_mul(shifts, parity);
  Ultraword prods = m.cw_mul(multipliers, keys);
  Ultraword prods_even = m.cw_mul(prods, parity);
  Ultraword wide = m.cw_mul_2w(shifts_even, prods_even);
  return m.shift_right(wide, w);
}

}  // namespace detail

Ultraword ms_hash_lanes(Machine& m, const Ultraword& keys,
                        const Ultraword& multipliers, const Ultraword& shifts,
                        const Ultraword& parity) {
  const unsigned w = m.config().word_bits;
  if (m.validating()) {
    for (unsigned i = 0; i < m.config().lanes; ++i) {
      if (multipliers.lane(i) % 2 == 0)
        throw UsageError("hash multiplier lane must be odd");
      word_t s = shifts.lane(i);
      if (s < 2 || !std::has_single_bit(s))
        throw UsageError("hash shift lane must be a power of two >= 2");
    }
  }
  Ultraword even =
      detail::ms_hash_even_lanes(m, keys, multipliers, shifts, parity);
  // Align the odd lanes onto the even slots, repeat, and shift back.
  Ultraword odd = m.shift_left(
      detail::ms_hash_even_lanes(m, m.shift_right(keys, w),
                                 m.shift_right(multipliers, w),
                                 m.shift_right(shifts, w), parity),
      w);
  Ultraword ones = m.broadcast(1);
  Ultraword odd_mask = m.cw_sub(ones, parity);
  return m.cw_blend(even, odd, odd_mask);
}

}  // namespace uwram
