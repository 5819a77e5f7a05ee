#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "uwram/hashing.hpp"
#include "uwram/machine.hpp"

using namespace uwram;

namespace {

Machine make_machine(unsigned w, unsigned lanes = 0) {
  addr_t cap = w == 64 ? (1u << 20) : ((word_t{1} << w) - 1);
  if (lanes == 0) return Machine(MachineConfig::full_width(w, cap));
  MachineConfig cfg = MachineConfig::full_width(w, cap);
  cfg.lanes = lanes;
  cfg.check();
  return Machine(cfg);
}

word_t rand_word(std::mt19937_64& rng, unsigned w) {
  return rng() & (w == 64 ? ~word_t{0} : (word_t{1} << w) - 1);
}

word_t rand_odd(std::mt19937_64& rng, unsigned w) {
  return rand_word(rng, w) | 1;
}

struct LaneInputs {
  std::vector<word_t> keys, mults, shifts;
  std::vector<unsigned> out_bits;
};

LaneInputs random_lanes(std::mt19937_64& rng, unsigned w, unsigned lanes) {
  LaneInputs in;
  in.keys.resize(lanes);
  in.mults.resize(lanes);
  in.shifts.resize(lanes);
  in.out_bits.resize(lanes);
  for (unsigned i = 0; i < lanes; ++i) {
    in.keys[i] = rand_word(rng, w);
    in.mults[i] = rand_odd(rng, w);
    in.out_bits[i] = 1 + rng() % (w - 1);  // c in [1, w-1]
    in.shifts[i] = word_t{1} << in.out_bits[i];
  }
  return in;
}

}  // namespace

TEST_CASE("scalar multiply-shift formula") {
  MultiplyShift f{5, 3};
  CHECK(ms_hash_value(f, 7, 8) == 1);  // (35 mod 256) >> 5
  CHECK(ms_hash_value(f, 0, 8) == 0);
}

TEST_CASE("zero always hashes to zero, the top key never does") {
  for (unsigned w : {8u, 16u}) {
    word_t top = word_t{1} << (w - 1);
    for (word_t a = 1; a < (word_t{1} << std::min(w, 10u)); a += 2) {
      for (unsigned c = 1; c <= w; ++c) {
        MultiplyShift f{a, c};
        CHECK(ms_hash_value(f, 0, w) == 0);
        CHECK(ms_hash_value(f, top, w) >= 1);
      }
    }
  }
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20000; ++t) {
    unsigned w = 64;
    MultiplyShift f{rand_odd(rng, w), 1 + static_cast<unsigned>(rng() % w)};
    CHECK(ms_hash_value(f, 0, w) == 0);
    CHECK(ms_hash_value(f, word_t{1} << 63, w) >= 1);
  }
}

TEST_CASE("parallel evaluation: zero keys, broadcast lanes") {
  Machine m = make_machine(8);
  Ultraword parity = make_parity_constant(m.config());

  std::vector<word_t> a(8, 5), c(8, word_t{1} << 3), x0(8, 0), x7(8, 7);
  Ultraword h0 =
      ms_hash_lanes(m, Ultraword::from_lanes(m.config(), x0),
                    Ultraword::from_lanes(m.config(), a),
                    Ultraword::from_lanes(m.config(), c), parity);
  for (unsigned i = 0; i < 8; ++i) CHECK(h0.lane(i) == 0);

  Ultraword h7 =
      ms_hash_lanes(m, Ultraword::from_lanes(m.config(), x7),
                    Ultraword::from_lanes(m.config(), a),
                    Ultraword::from_lanes(m.config(), c), parity);
  for (unsigned i = 0; i < 8; ++i) CHECK(h7.lane(i) == 1);
}

TEST_CASE("parallel evaluation matches the scalar oracle on every lane") {
  for (unsigned w : {8u, 16u, 32u, 64u}) {
    Machine m = make_machine(w);
    Ultraword parity = make_parity_constant(m.config());
    std::mt19937_64 rng(w * 31 + 1);
    for (int t = 0; t < 3000; ++t) {
      LaneInputs in = random_lanes(rng, w, m.config().lanes);
      Ultraword h = ms_hash_lanes(
          m, Ultraword::from_lanes(m.config(), in.keys),
          Ultraword::from_lanes(m.config(), in.mults),
          Ultraword::from_lanes(m.config(), in.shifts), parity);
      for (unsigned i = 0; i < m.config().lanes; ++i) {
        MultiplyShift f{in.mults[i], in.out_bits[i]};
        CHECK(h.lane(i) == ms_hash_value(f, in.keys[i], w));
      }
    }
  }
}

TEST_CASE("even-lane step alone already has the even results") {
  Machine m = make_machine(16);
  Ultraword parity = make_parity_constant(m.config());
  std::mt19937_64 rng(99);
  LaneInputs in = random_lanes(rng, 16, m.config().lanes);
  Ultraword even = detail::ms_hash_even_lanes(
      m, Ultraword::from_lanes(m.config(), in.keys),
      Ultraword::from_lanes(m.config(), in.mults),
      Ultraword::from_lanes(m.config(), in.shifts), parity);
  for (unsigned i = 0; i < m.config().lanes; i += 2) {
    MultiplyShift f{in.mults[i], in.out_bits[i]};
    CHECK(even.lane(i) == ms_hash_value(f, in.keys[i], 16));
  }
}

TEST_CASE("empirical universality at w=16, c=8") {
  const unsigned w = 16, c = 8;
  const word_t x = 0x1234, y = 0x8235;
  const int trials = 100000;
  std::mt19937_64 rng(20240801);
  int collisions = 0;
  for (int t = 0; t < trials; ++t) {
    MultiplyShift f{rand_odd(rng, w), c};
    if (ms_hash_value(f, x, w) == ms_hash_value(f, y, w)) ++collisions;
  }
  double p0 = 2.0 / (1u << c);
  double se = std::sqrt(p0 * (1 - p0) / trials);
  CHECK(static_cast<double>(collisions) / trials <= p0 + 3 * se);
}

TEST_CASE("parallel evaluation cost is flat in the lane count") {
  Machine m8 = make_machine(8);            // K = 8
  Machine m64 = make_machine(64);          // K = 64
  auto cost = [](Machine& m) {
    Ultraword parity = make_parity_constant(m.config());
    std::vector<word_t> a(m.config().lanes, 3), c(m.config().lanes, 4),
        x(m.config().lanes, 1);
    CostCounters before = m.counters();
    (void)ms_hash_lanes(m, Ultraword::from_lanes(m.config(), x),
                        Ultraword::from_lanes(m.config(), a),
                        Ultraword::from_lanes(m.config(), c), parity);
    return m.counters() - before;
  };
  CostCounters c8 = cost(m8), c64 = cost(m64);
  CHECK(c8.ultra_ops == c64.ultra_ops);
  CHECK(c8.scattered_reads == c64.scattered_reads);
  CHECK(c8.contiguous_accesses == c64.contiguous_accesses);
}

TEST_CASE("validating mode rejects bad lane parameters") {
  Machine m = make_machine(8);
  Ultraword parity = make_parity_constant(m.config());
  std::vector<word_t> even_mult(8, 2), odd_mult(8, 3), good_shift(8, 4),
      bad_shift(8, 6), keys(8, 1);
  CHECK_THROWS_AS(
      ms_hash_lanes(m, Ultraword::from_lanes(m.config(), keys),
                    Ultraword::from_lanes(m.config(), even_mult),
                    Ultraword::from_lanes(m.config(), good_shift), parity),
      UsageError);
  CHECK_THROWS_AS(
      ms_hash_lanes(m, Ultraword::from_lanes(m.config(), keys),
                    Ultraword::from_lanes(m.config(), odd_mult),
                    Ultraword::from_lanes(m.config(), bad_shift), parity),
      UsageError);
}
