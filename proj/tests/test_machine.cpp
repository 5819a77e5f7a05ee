#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "uwram/machine.hpp"

using namespace uwram;

namespace {

Machine make_machine(unsigned w, addr_t capacity = 1u << 16,
                     bool validate = true) {
  return Machine(MachineConfig::full_width(
      w, std::min<addr_t>(capacity, (w == 64 ? ~word_t{0}
                                             : (word_t{1} << w) - 1)),
      validate));
}

Ultraword uw(Machine& m, std::vector<word_t> lanes_low_first) {
  lanes_low_first.resize(m.config().lanes, 0);
  return Ultraword::from_lanes(m.config(), lanes_low_first);
}

word_t rand_word(std::mt19937_64& rng, unsigned w) {
  return rng() & (w == 64 ? ~word_t{0} : (word_t{1} << w) - 1);
}

}  // namespace

TEST_CASE("componentwise add wraps mod 2^w") {
  Machine m = make_machine(8);
  Ultraword x = uw(m, {250});
  Ultraword y = uw(m, {10});
  Ultraword z = m.cw_add(x, y);
  CHECK(z.lane(0) == 4);
  for (unsigned i = 1; i < 8; ++i) CHECK(z.lane(i) == 0);
}

TEST_CASE("componentwise less is irreflexive") {
  Machine m = make_machine(16);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<word_t> lanes(m.config().lanes);
    for (auto& v : lanes) v = rand_word(rng, 16);
    Ultraword x = Ultraword::from_lanes(m.config(), lanes);
    Ultraword z = m.cw_less(x, x);
    for (unsigned i = 0; i < m.config().lanes; ++i) CHECK(z.lane(i) == 0);
  }
}

TEST_CASE("componentwise mul example") {
  Machine m = make_machine(8);
  Ultraword x = uw(m, {5, 3});
  Ultraword y = uw(m, {9, 7});
  Ultraword z = m.cw_mul(x, y);
  CHECK(z.lane(0) == 45);
  CHECK(z.lane(1) == 21);
}

TEST_CASE("componentwise ops agree with scalar oracle") {
  for (unsigned w : {8u, 16u, 32u, 64u}) {
    Machine m = make_machine(w);
    word_t mask = m.config().word_mask();
    std::mt19937_64 rng(w);
    for (int t = 0; t < 200; ++t) {
      std::vector<word_t> a(m.config().lanes), b(m.config().lanes);
      for (unsigned i = 0; i < m.config().lanes; ++i) {
        a[i] = rand_word(rng, w);
        b[i] = rand_word(rng, w);
      }
      Ultraword x = Ultraword::from_lanes(m.config(), a);
      Ultraword y = Ultraword::from_lanes(m.config(), b);
      Ultraword sum = m.cw_add(x, y), dif = m.cw_sub(x, y),
                prd = m.cw_mul(x, y), lss = m.cw_less(x, y),
                con = m.cw_and(x, y), dis = m.cw_or(x, y), neg = m.cw_not(x);
      for (unsigned i = 0; i < m.config().lanes; ++i) {
        CHECK(sum.lane(i) == ((a[i] + b[i]) & mask));
        CHECK(dif.lane(i) == ((a[i] - b[i]) & mask));
        CHECK(prd.lane(i) == ((a[i] * b[i]) & mask));
        CHECK(lss.lane(i) == (a[i] < b[i] ? 1u : 0u));
        CHECK(con.lane(i) == (a[i] & b[i]));
        CHECK(dis.lane(i) == (a[i] | b[i]));
        CHECK(neg.lane(i) == (~a[i] & mask));
      }
    }
  }
}

TEST_CASE("whole-register shifts match a bit-level oracle") {
  for (unsigned w : {8u, 16u, 64u}) {
    Machine m = make_machine(w);
    const unsigned K = m.config().lanes;
    std::mt19937_64 rng(3 * w);
    auto bit_of = [&](const Ultraword& u, unsigned j) {
      return (u.lane(j / w) >> (j % w)) & 1;
    };
    for (int t = 0; t < 40; ++t) {
      std::vector<word_t> a(K);
      for (auto& v : a) v = rand_word(rng, w);
      Ultraword x = Ultraword::from_lanes(m.config(), a);
      unsigned total = K * w;
      for (unsigned s : {0u, 1u, w - 1, w, w + 3, total - 1, total,
                         total + 5}) {
        Ultraword l = m.shift_left(x, s);
        Ultraword r = m.shift_right(x, s);
        for (unsigned j = 0; j < total; ++j) {
          word_t expect_l = (j >= s && s < total) ? bit_of(x, j - s) : 0;
          word_t expect_r =
              (j + s < total) ? bit_of(x, j + s) : 0;
          CHECK(bit_of(l, j) == expect_l);
          CHECK(bit_of(r, j) == expect_r);
        }
      }
    }
  }
}

TEST_CASE("blend selects per component") {
  Machine m = make_machine(8);
  std::mt19937_64 rng(11);
  std::vector<word_t> a(8), b(8);
  for (unsigned i = 0; i < 8; ++i) {
    a[i] = rand_word(rng, 8);
    b[i] = rand_word(rng, 8);
  }
  Ultraword x = Ultraword::from_lanes(m.config(), a);
  Ultraword y = Ultraword::from_lanes(m.config(), b);

  CHECK(m.cw_blend(x, y, uw(m, {})) == x);
  CHECK(m.cw_blend(x, y, uw(m, {1, 1, 1, 1, 1, 1, 1, 1})) == y);

  Ultraword sel = uw(m, {1, 0, 1, 0, 1, 0, 1, 0});
  Ultraword z = m.cw_blend(x, y, sel);
  for (unsigned i = 0; i < 8; ++i)
    CHECK(z.lane(i) == (sel.lane(i) ? b[i] : a[i]));
}

TEST_CASE("blend example with four meaningful lanes") {
  Machine m = make_machine(8);
  // <1,2,3,4> / <5,6,7,8> in component notation, component 0 rightmost.
  Ultraword x = uw(m, {4, 3, 2, 1});
  Ultraword y = uw(m, {8, 7, 6, 5});
  Ultraword sel = uw(m, {1, 0, 1, 0});
  Ultraword z = m.cw_blend(x, y, sel);
  CHECK(z.lane(0) == 8);
  CHECK(z.lane(1) == 3);
  CHECK(z.lane(2) == 6);
  CHECK(z.lane(3) == 1);
}

TEST_CASE("blend rejects selectors outside {0,1} in validating mode") {
  Machine m = make_machine(8);
  Ultraword x = uw(m, {1});
  CHECK_THROWS_AS(m.cw_blend(x, x, uw(m, {2})), UsageError);
}

TEST_CASE("compress concatenates low bits") {
  Machine m = make_machine(8);
  CHECK(m.compress(uw(m, {})) == 0);
  CHECK(m.compress(uw(m, {1, 1, 1, 1, 1, 1, 1, 1})) == 0xFF);
  CHECK(m.compress(uw(m, {0, 3, 1, 2, 0, 0, 0, 0})) == 0b0110);
}

TEST_CASE("cw_equal marks equal lanes") {
  Machine m = make_machine(16);
  Ultraword x = uw(m, {7, 9, 100, 0});
  Ultraword y = uw(m, {7, 8, 100, 1});
  Ultraword e = m.cw_equal(x, y);
  CHECK(e.lane(0) == 1);
  CHECK(e.lane(1) == 0);
  CHECK(e.lane(2) == 1);
  CHECK(e.lane(3) == 0);
}

TEST_CASE("2w-bit multiplication: zeros and a worked product") {
  Machine m = make_machine(8);
  Ultraword z = m.cw_mul_2w(uw(m, {}), uw(m, {}));
  CHECK(z == uw(m, {}));

  Ultraword x = uw(m, {200});
  Ultraword y = uw(m, {200});
  Ultraword p = m.cw_mul_2w(x, y);
  CHECK(p.lane(0) == 0x40);  // 200*200 = 40000 = 0x9C40
  CHECK(p.lane(1) == 0x9C);
}

TEST_CASE("2w-bit multiplication rejects nonzero odd lanes when validating") {
  Machine m = make_machine(8);
  Ultraword bad = uw(m, {0, 1});
  CHECK_THROWS_AS(m.cw_mul_2w(bad, uw(m, {})), UsageError);
}

TEST_CASE("2w-bit multiplication agrees with a wide-integer oracle") {
  for (unsigned w : {16u, 32u, 64u}) {
    Machine m = make_machine(w);
    const unsigned K = m.config().lanes;
    word_t mask = m.config().word_mask();
    std::mt19937_64 rng(w + 1);
    for (int t = 0; t < 2000; ++t) {
      std::vector<word_t> a(K, 0), b(K, 0);
      for (unsigned i = 0; i < K; i += 2) {
        a[i] = rand_word(rng, w);
        b[i] = rand_word(rng, w);
      }
      Ultraword x = Ultraword::from_lanes(m.config(), a);
      Ultraword y = Ultraword::from_lanes(m.config(), b);
      Ultraword z = m.cw_mul_2w(x, y);
      for (unsigned i = 0; i < K; i += 2) {
        unsigned __int128 prod =
            static_cast<unsigned __int128>(a[i]) * b[i];
        CHECK(z.lane(i) == static_cast<word_t>(prod & mask));
        CHECK(z.lane(i + 1) == static_cast<word_t>((prod >> w) & mask));
      }
    }
  }
}

TEST_CASE("broadcast fills every component") {
  Machine m = make_machine(16);
  Ultraword z = m.broadcast(0);
  for (unsigned i = 0; i < 16; ++i) CHECK(z.lane(i) == 0);
  Ultraword f = m.broadcast(5);
  for (unsigned i = 0; i < 16; ++i) CHECK(f.lane(i) == 5);

  Ultraword cmp = m.cw_less(m.broadcast(3), m.broadcast(7));
  CHECK(m.compress(cmp) == m.config().word_mask());
}

TEST_CASE("scattered reads, duplicate addresses allowed") {
  Machine m = make_machine(8, 255);
  addr_t a = m.alloc(1);
  m.write_word(a, 42);
  Ultraword dup = m.broadcast(static_cast<word_t>(a));
  Ultraword r = m.scatter_read(dup);
  for (unsigned i = 0; i < 8; ++i) CHECK(r.lane(i) == 42);

  addr_t base = m.alloc(8);
  for (unsigned i = 0; i < 8; ++i)
    m.write_word(base + i, i);
  std::vector<word_t> addrs(8);
  for (unsigned i = 0; i < 8; ++i) addrs[i] = base + i;
  Ultraword seq = m.scatter_read(Ultraword::from_lanes(m.config(), addrs));
  for (unsigned i = 0; i < 8; ++i) CHECK(seq.lane(i) == i);

  m.write_word(a, 255);
  CHECK(m.scatter_read(dup).lane(3) == 255);
}

TEST_CASE("scattered write round-trips and enforces distinct addresses") {
  Machine m = make_machine(16, 4096);
  std::mt19937_64 rng(5);
  addr_t base = m.alloc(256);
  std::set<word_t> used;
  std::vector<word_t> addrs, vals;
  while (addrs.size() < 16) {
    word_t a = base + rng() % 256;
    if (used.insert(a).second) {
      addrs.push_back(a);
      vals.push_back(rand_word(rng, 16));
    }
  }
  Ultraword av = Ultraword::from_lanes(m.config(), addrs);
  Ultraword vv = Ultraword::from_lanes(m.config(), vals);
  m.scatter_write(av, vv);
  CHECK(m.scatter_read(av) == vv);

  std::vector<word_t> dup_addrs(16, base);
  CHECK_THROWS_AS(
      m.scatter_write(Ultraword::from_lanes(m.config(), dup_addrs), vv),
      UsageError);
}

TEST_CASE("out-of-bounds scattered access faults") {
  Machine m = make_machine(16, 128);
  std::vector<word_t> addrs(16, 0);
  addrs[3] = 4000;  // beyond capacity
  CHECK_THROWS_AS(m.scatter_read(Ultraword::from_lanes(m.config(), addrs)),
                  MemoryFault);
}

TEST_CASE("msb_index") {
  Machine m = make_machine(16);
  CHECK(m.msb_index(1) == 0);
  CHECK(m.msb_index(word_t{1} << 15) == 15);
  CHECK(m.msb_index(0b0010110) == 4);
  CHECK_THROWS_AS(m.msb_index(0), UsageError);
}

TEST_CASE("allocator hands out distinct zeroed blocks and reuses freed ones") {
  Machine m = make_machine(16, 4096);
  addr_t a = m.alloc(4), b = m.alloc(4);
  CHECK(a != b);
  CHECK(a != 0);
  for (unsigned i = 0; i < 4; ++i) CHECK(m.read_word(a + i) == 0);
  m.write_word(a, 77);
  m.dealloc(a, 4);
  addr_t c = m.alloc(4);
  CHECK(c == a);  // first fit reuses the hole
  CHECK(m.read_word(c) == 0);
  m.dealloc(b, 4);
  m.dealloc(c, 4);
  CHECK(m.allocated_words() == 1);  // scratch only
}

TEST_CASE("arena exhaustion raises out-of-memory") {
  Machine m = make_machine(16, 64);
  CHECK_THROWS_AS(m.alloc(1000), OutOfMemory);
}

TEST_CASE("counters replay deterministically") {
  auto run = [](Machine& m) {
    Ultraword x = m.broadcast(9);
    Ultraword y = m.cw_add(x, m.broadcast(3));
    addr_t a = m.alloc(m.config().lanes);
    Ultraword addrs = m.cw_add(m.broadcast(static_cast<word_t>(a)), m.iota());
    m.scatter_write(addrs, y);
    Ultraword back = m.scatter_read(addrs);
    (void)m.compress(back);
    m.dealloc(a, m.config().lanes);
  };
  Machine m1 = make_machine(16), m2 = make_machine(16);
  run(m1);
  run(m2);
  CHECK(m1.counters() == m2.counters());
  CHECK(m1.counters().total() > 0);

  CostCounters before = m1.counters();
  run(m1);
  CostCounters delta = m1.counters() - before;
  CHECK(delta == m2.counters());
}

TEST_CASE("documented counter charges") {
  Machine m = make_machine(16);
  Ultraword x = m.broadcast(1);
  CostCounters s0 = m.counters();
  (void)m.cw_add(x, x);
  CHECK((m.counters() - s0).ultra_ops == 1);

  s0 = m.counters();
  (void)m.cw_blend(x, x, m.broadcast(0));
  CostCounters blend_cost = m.counters() - s0;
  // one broadcast (1 ultra) plus the 6-op blend
  CHECK(blend_cost.ultra_ops == 7);

  s0 = m.counters();
  (void)m.broadcast(3);
  CostCounters b = m.counters() - s0;
  CHECK(b.ultra_ops == 1);
  CHECK(b.contiguous_accesses == 1);
  CHECK(b.scattered_reads == 1);
}

TEST_CASE("arena dump format") {
  Machine m = make_machine(16, 4096);
  addr_t a = m.alloc(2);
  m.write_word(a, 0xBEEF);
  std::ostringstream os;
  m.dump_arena(os, a, a + 1);
  std::string line = os.str();
  CHECK(line.find(": 000000000000beef\n") != std::string::npos);
}

TEST_CASE("config invariants") {
  CHECK_THROWS_AS(MachineConfig::full_width(7, 1000).check(), UsageError);
  CHECK_THROWS_AS(MachineConfig::full_width(128, 1000), UsageError);
  MachineConfig c = MachineConfig::full_width(8, 1u << 20);
  CHECK(c.arena_capacity == 255);  // clamped below 2^w
  MachineConfig n = MachineConfig::narrow(64, 1, 2, 1u << 20);
  CHECK(n.lanes == 8);
  MachineConfig n3 = MachineConfig::narrow(64, 1, 3, 1u << 20);
  CHECK(n3.lanes == 4);
  MachineConfig n16 = MachineConfig::narrow(16, 1, 2, 1u << 20);
  CHECK(n16.lanes == 4);
}
