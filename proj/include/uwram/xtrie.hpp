#pragma once

// Constant-time predecessor over (w-1)-bit keys, with a w-bit front that
// splits on the leading bit.
//
// The structure keeps the compacted binary trie of the key set implicitly:
// a parallel dictionary maps each trie edge's padded label to a two-word
// block holding the addresses of the smallest and largest leaf below the
// edge, and a sorted doubly linked leaf list ties the leaves together. A
// query broadcasts all w prefixes of the key, probes them in one parallel
// retrieval, picks the deepest hit, and resolves the answer through that
// edge's min/max block. Updates splice the leaf list, touch a constant
// number of dictionary entries, and repair stale min/max pointers along the
// whole root path with one scattered read-compare-blend-write round.
//
// Below w elements the trie is torn down and a bounded sorted array serves
// queries instead (entering trie form at n >= w, leaving at n <= w/2), which
// keeps total space linear in n at all times.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "uwram/machine.hpp"
#include "uwram/pdict.hpp"

namespace uwram {

// w-bit key for the length-len prefix of the (w-1)-bit value x: the prefix
// bits, then a single 1, then zeros.
inline word_t prefix_mask(unsigned w, unsigned len) {
  word_t full = w == 64 ? ~word_t{0} : (word_t{1} << w) - 1;
  if (len == 0) return 0;
  return full & ~((word_t{1} << (w - len)) - 1);
}
inline word_t prefix_marker(unsigned w, unsigned len) {
  return word_t{1} << (w - 1 - len);
}
inline word_t prefix_key(unsigned w, word_t x, unsigned len) {
  return ((x << 1) & prefix_mask(w, len)) | prefix_marker(w, len);
}

// Per-length prefix constants: first = mask lanes, second = marker lanes,
// lane i serving prefix length i. Charges O(K) word ops.
std::pair<Ultraword, Ultraword> build_prefix_constants(Machine& m);

namespace detail {
// Independent enumeration of the compacted-trie edges of a sorted value set:
// edge key -> (smallest, largest leaf value below the edge). Used by
// validating scans and tests.
std::map<word_t, std::pair<word_t, word_t>> reference_edges(
    unsigned w, const std::vector<word_t>& sorted_values);
}  // namespace detail

class PredecessorTrie {
 public:
  PredecessorTrie(Machine& m, std::uint64_t seed);
  ~PredecessorTrie();

  PredecessorTrie(const PredecessorTrie&) = delete;
  PredecessorTrie& operator=(const PredecessorTrie&) = delete;

  // Keys are values below 2^(w-1).
  bool insert(word_t x);
  bool erase(word_t x);
  std::optional<word_t> predecessor(word_t x);

  std::size_t size() const { return n_; }
  bool trie_form() const { return trie_; }
  std::optional<word_t> min_value();
  std::optional<word_t> max_value();

  // Full structural scan against an oracle's sorted contents. Throws
  // UsageError on any violation.
  void check_invariants(const std::vector<word_t>& expected_sorted);

 private:
  struct QueryCtx {
    bool has_exit = false;
    unsigned lane = 0;
    addr_t block = 0;
    addr_t min_addr = 0, max_addr = 0;
    word_t min_val = 0, max_val = 0;
    Ultraword hits, blocks;
    std::optional<word_t> pred;
    addr_t pred_node = 0;
  };

  Ultraword prefix_labels(word_t x);
  QueryCtx query(word_t x);
  bool trie_insert(word_t x);
  bool trie_erase(word_t x);
  void repair_pointers(const Ultraword& hits, const Ultraword& blocks,
                       unsigned exit_lane, bool max_side, addr_t old_addr,
                       addr_t new_addr);
  void splice_after(addr_t node, addr_t pred_node);
  void unlink(addr_t node);
  void enter_trie_form();
  void leave_trie_form();
  std::vector<word_t> list_values();

  // Bounded sorted array used below the trie threshold.
  void fb_create(const std::vector<word_t>& values);
  void fb_destroy();
  std::vector<word_t> fb_read();
  void fb_write(const std::vector<word_t>& values);

  Machine& m_;
  const unsigned w_;
  std::mt19937_64 rng_;
  std::size_t n_ = 0;
  bool trie_ = false;

  addr_t fb_addr_ = 0;
  std::uint64_t fb_cap_ = 0;

  std::optional<ParallelDict> dict_;
  UltraConst masks_, markers_;
  addr_t dump_addr_ = 0;  // K scratch slots absorbing dead repair lanes
  addr_t head_ = 0, tail_ = 0;
};

// w-bit keys: one PredecessorTrie per value of the leading bit.
class PredecessorSet {
 public:
  PredecessorSet(Machine& m, std::uint64_t seed)
      : w_(m.config().word_bits),
        low_(m, seed),
        high_(m, seed ^ 0x9E3779B97F4A7C15ull) {}

  bool insert(word_t x);
  bool erase(word_t x);
  std::optional<word_t> predecessor(word_t x);
  std::size_t size() const { return low_.size() + high_.size(); }
  std::optional<word_t> max_value();

  void check_invariants(const std::vector<word_t>& expected_sorted);

 private:
  word_t low_bits(word_t x) const {
    return x & ((word_t{1} << (w_ - 1)) - 1);
  }

  const unsigned w_;
  PredecessorTrie low_, high_;
};

}  // namespace uwram
