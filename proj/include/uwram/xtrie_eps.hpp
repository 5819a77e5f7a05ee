#pragma once

// Predecessor over w-bit keys for machines whose registers carry only
// K = ~w^eps components, K < w.
//
// The key set is chopped into runs of about w consecutive values, each run
// in a sorted bucket block. One representative per bucket goes into an
// uncompacted trie: every prefix of every representative is a dictionary
// entry with min/max leaf addresses, kept per side of the leading bit. A
// query cannot probe all w prefixes at once with K lanes, so a static B-tree
// over the prefix lengths drives a K-way search: each node stores up to K
// prefix mask/marker constants, one parallel membership round picks the
// deepest match among them and the child range to continue in. The number
// of rounds is bounded by ceil(1/eps) + 1.
//
// Bucket updates are local; splits and merges add or remove one
// representative, costing up to w - 1 sequential dictionary updates,
// amortized against the ~w bucket updates between them.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "uwram/machine.hpp"
#include "uwram/pdict.hpp"
#include "uwram/xtrie.hpp"

namespace uwram {

class BucketedPredecessor {
 public:
  // The machine decides K (build it with MachineConfig::narrow).
  BucketedPredecessor(Machine& m, std::uint64_t seed);
  ~BucketedPredecessor();

  BucketedPredecessor(const BucketedPredecessor&) = delete;
  BucketedPredecessor& operator=(const BucketedPredecessor&) = delete;

  bool insert(word_t x);
  bool erase(word_t x);
  std::optional<word_t> predecessor(word_t x);

  std::size_t size() const { return n_; }
  bool bucket_form() const { return full_; }

  unsigned round_bound() const { return round_bound_; }
  unsigned max_rounds_seen() const { return max_rounds_; }
  std::uint64_t split_count() const { return splits_; }
  std::uint64_t merge_count() const { return merges_; }

  void check_invariants(const std::vector<word_t>& expected_sorted);

 private:
  struct Side {
    std::optional<ParallelDict> dict;
    addr_t head = 0, tail = 0;    // separator list nodes
    addr_t bhead = 0, btail = 0;  // bucket chain
    std::size_t buckets = 0;
  };

  // ---- B-tree of prefix constants ----
  addr_t build_btree(unsigned lo, unsigned hi);
  unsigned lcp_search(Side& side, word_t xlow);

  // ---- separator trie (uncompacted) ----
  addr_t sep_pred_node(Side& side, word_t xlow);
  void sep_attach(Side& side, word_t sep, addr_t node);
  void sep_detach(Side& side, word_t sep, addr_t node);
  void splice_node(Side& side, addr_t node, addr_t after);
  void unlink_node(Side& side, addr_t node);

  // ---- buckets ----
  addr_t bucket_alloc();
  std::vector<word_t> bucket_read(addr_t b);
  void bucket_write(addr_t b, const std::vector<word_t>& elems);
  addr_t route(Side& side, word_t x);
  void split_if_needed(Side& side, addr_t b, std::vector<word_t> elems);
  void remove_bucket(Side& side, addr_t b);

  // ---- form switches / fallback array ----
  void enter_full_form();
  void leave_full_form();
  std::vector<word_t> all_values();
  void fb_create(const std::vector<word_t>& values);
  void fb_destroy();
  std::vector<word_t> fb_read();
  void fb_write(const std::vector<word_t>& values);

  bool full_insert(word_t x);
  bool full_erase(word_t x);
  std::optional<word_t> full_predecessor(word_t x);

  word_t low_bits(word_t x) const {
    return x & ((word_t{1} << (w_ - 1)) - 1);
  }
  Side& side_of(word_t x) { return sides_[x >> (w_ - 1)]; }

  Machine& m_;
  const unsigned w_;
  const unsigned lanes_;
  std::mt19937_64 rng_;
  std::size_t n_ = 0;
  bool full_ = false;

  addr_t fb_addr_ = 0;
  std::uint64_t fb_cap_ = 0;

  addr_t btree_root_ = 0;
  std::vector<addr_t> btree_nodes_;
  unsigned btree_node_words_ = 0;

  Side sides_[2];

  unsigned round_bound_ = 0;
  unsigned max_rounds_ = 0;
  std::uint64_t splits_ = 0;
  std::uint64_t merges_ = 0;
};

}  // namespace uwram
