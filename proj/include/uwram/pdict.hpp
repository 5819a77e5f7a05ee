#pragma once

// Dynamic perfect hashing over w-bit keys with lane-parallel membership and
// retrieval. Two levels of multiply-shift functions: a top function splits
// the keys into buckets, each bucket resolves collisions with its own
// function into a table where the slot a key hashes to stores the key.
//
// Membership for K keys at once runs a fixed sequence of register and
// scattered-memory operations; its cost does not depend on the number of
// stored keys. Updates are scalar and amortized expected constant via bucket
// redraws and periodic global rebuilds.
//
// Keys 0 and 2^(w-1) double as the empty-slot sentinels, so they are kept in
// two presence flags beside the table; parallel queries patch those lanes
// with broadcast/compare/blend steps at fixed extra cost.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "uwram/hashing.hpp"
#include "uwram/machine.hpp"

namespace uwram {

class ParallelDict {
 public:
  // satellite = true stores one data word (typically an address) per key and
  // enables pretrieve at two words per slot.
  ParallelDict(Machine& m, std::uint64_t seed, bool satellite);
  ~ParallelDict();

  ParallelDict(const ParallelDict&) = delete;
  ParallelDict& operator=(const ParallelDict&) = delete;

  void insert(word_t key, word_t data = 0);
  void erase(word_t key);

  bool contains(word_t key);
  std::optional<word_t> find_data(word_t key);

  // Lane i of the result is 1 iff lane i of keys is stored.
  Ultraword pmember(const Ultraword& keys);
  // As pmember, plus the stored data word per hit lane (miss lanes carry an
  // unspecified value).
  std::pair<Ultraword, Ultraword> pretrieve(const Ultraword& keys);

  std::size_t size() const { return count_; }
  bool satellite() const { return satellite_; }

  // Host-side scan over all stored (key, data) pairs, table order, reserved
  // keys last. Used by tests and by owners tearing down per-key data.
  void for_each(const std::function<void(word_t, word_t)>& fn);

  // Structural scan: sentinels, per-bucket injectivity, bookkeeping words.
  // Throws UsageError on any violation.
  void check_invariants();

 private:
  struct Tuple {
    addr_t sub = 0;
    word_t range = 0;  // 2^(c_j)
    word_t mult = 0;   // a_j
    word_t size = 0;   // b_j
    word_t cap = 0;    // largest size before the bucket must grow
  };
  struct Slot {
    word_t bucket = 0;
    word_t index = 0;
    addr_t addr = 0;
    bool present = false;
  };

  Tuple read_tuple(word_t j);
  void write_tuple(word_t j, const Tuple& t);
  Slot locate(word_t key);
  word_t sentinel_at(word_t index) const;
  word_t draw_odd();
  static word_t cap_for_range(word_t range);
  void rehash_bucket(word_t j, std::vector<std::pair<word_t, word_t>> keys);
  void collect_bucket(const Tuple& t,
                      std::vector<std::pair<word_t, word_t>>& out);
  void rebuild();
  void consume_budget();
  std::pair<Ultraword, Ultraword> probe(const Ultraword& keys, bool want_data);

  Machine& m_;
  bool satellite_;
  unsigned slot_w_;
  unsigned w_;
  word_t top_key_;  // 2^(w-1)

  word_t top_a_ = 1;
  unsigned top_c_ = 4;
  addr_t top_addr_ = 0;
  addr_t reserved_addr_ = 0;  // [flag0, data0, flag_top, data_top]
  addr_t shared_empty_ = 0;   // read-only table backing every empty bucket
  UltraConst parity_;

  std::size_t count_ = 0;        // stored keys including reserved
  std::size_t table_count_ = 0;  // stored keys excluding reserved
  std::int64_t updates_left_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace uwram
