#include "uwram/xtrie.hpp"

#include <algorithm>

namespace uwram {

namespace {
constexpr unsigned kNodeWords = 3;  // value, prev, next
constexpr unsigned kValue = 0, kPrev = 1, kNext = 2;
}  // namespace

std::pair<Ultraword, Ultraword> build_prefix_constants(Machine& m) {
  const MachineConfig& cfg = m.config();
  Ultraword masks = Ultraword::zeros(cfg);
  Ultraword markers = Ultraword::zeros(cfg);
  for (unsigned i = 0; i < cfg.lanes; ++i) {
    masks.set_lane(i, prefix_mask(cfg.word_bits, i));
    markers.set_lane(i, prefix_marker(cfg.word_bits, i));
  }
  m.count_word_ops(cfg.lanes);
  return {masks, markers};
}

namespace detail {

namespace {
void collect_edges(unsigned w, const std::vector<word_t>& v, std::size_t lo,
                   std::size_t hi, unsigned depth,
                   std::map<word_t, std::pair<word_t, word_t>>& out) {
  // [lo, hi) is the leaf range of a branching node (or the root) at the
  // given depth; all values share their top `depth` bits.
  for (unsigned bit : {0u, 1u}) {
    std::size_t mid = lo;
    while (mid < hi && ((v[mid] >> (w - 2 - depth)) & 1) == 0) ++mid;
    std::size_t sub_lo = bit == 0 ? lo : mid;
    std::size_t sub_hi = bit == 0 ? mid : hi;
    if (sub_lo == sub_hi) continue;
    out[prefix_key(w, v[sub_lo], depth + 1)] = {v[sub_lo], v[sub_hi - 1]};
    if (sub_hi - sub_lo >= 2) {
      word_t diff = v[sub_lo] ^ v[sub_hi - 1];
      unsigned k = 63 - static_cast<unsigned>(std::countl_zero(diff));
      collect_edges(w, v, sub_lo, sub_hi, w - 2 - k, out);
    }
  }
}
}  // namespace

std::map<word_t, std::pair<word_t, word_t>> reference_edges(
    unsigned w, const std::vector<word_t>& sorted_values) {
  std::map<word_t, std::pair<word_t, word_t>> out;
  if (!sorted_values.empty())
    collect_edges(w, sorted_values, 0, sorted_values.size(), 0, out);
  return out;
}

}  // namespace detail

PredecessorTrie::PredecessorTrie(Machine& m, std::uint64_t seed)
    : m_(m), w_(m.config().word_bits), rng_(seed) {
  fb_create({});
}

PredecessorTrie::~PredecessorTrie() {
  if (trie_) leave_trie_form();
  fb_destroy();
}

// ---- bounded sorted array form ----

void PredecessorTrie::fb_create(const std::vector<word_t>& values) {
  fb_cap_ = std::max<std::uint64_t>(8, 2 * values.size());
  fb_addr_ = m_.alloc(fb_cap_);
  fb_write(values);
  n_ = values.size();
  trie_ = false;
}

void PredecessorTrie::fb_destroy() {
  if (fb_addr_ != 0) m_.dealloc(fb_addr_, fb_cap_);
  fb_addr_ = 0;
  fb_cap_ = 0;
}

std::vector<word_t> PredecessorTrie::fb_read() {
  std::vector<word_t> values(n_);
  m_.read_block(fb_addr_, values);
  return values;
}

void PredecessorTrie::fb_write(const std::vector<word_t>& values) {
  if (values.size() > fb_cap_) {
    std::uint64_t grown = fb_cap_ * 2;
    m_.dealloc(fb_addr_, fb_cap_);
    fb_cap_ = grown;
    fb_addr_ = m_.alloc(fb_cap_);
  }
  m_.write_block(fb_addr_, values);
}

// ---- leaf list ----

void PredecessorTrie::splice_after(addr_t node, addr_t pred_node) {
  addr_t next = pred_node == 0 ? head_ : m_.read_word(pred_node + kNext);
  m_.write_word(node + kPrev, pred_node);
  m_.write_word(node + kNext, next);
  if (pred_node == 0)
    head_ = node;
  else
    m_.write_word(pred_node + kNext, node);
  if (next == 0)
    tail_ = node;
  else
    m_.write_word(next + kPrev, node);
}

void PredecessorTrie::unlink(addr_t node) {
  addr_t prev = m_.read_word(node + kPrev);
  addr_t next = m_.read_word(node + kNext);
  if (prev == 0)
    head_ = next;
  else
    m_.write_word(prev + kNext, next);
  if (next == 0)
    tail_ = prev;
  else
    m_.write_word(next + kPrev, prev);
}

std::vector<word_t> PredecessorTrie::list_values() {
  std::vector<word_t> out;
  out.reserve(n_);
  for (addr_t node = head_; node != 0; node = m_.read_word(node + kNext))
    out.push_back(m_.read_word(node + kValue));
  return out;
}

// ---- queries ----

Ultraword PredecessorTrie::prefix_labels(word_t x) {
  m_.count_word_ops(1);  // align the key above the marker bit
  Ultraword keys = m_.broadcast(x << 1);
  Ultraword masked = m_.cw_and(keys, m_.load_const(masks_));
  return m_.cw_or(masked, m_.load_const(markers_));
}

PredecessorTrie::QueryCtx PredecessorTrie::query(word_t x) {
  QueryCtx q;
  Ultraword labels = prefix_labels(x);
  auto [hits, blocks] = dict_->pretrieve(labels);
  q.hits = hits;
  q.blocks = blocks;
  word_t c = m_.compress(hits);
  if (c == 0) {
    // No exit edge: the root lacks an edge on x's first bit, so either
    // everything stored is smaller (take the maximum) or everything is
    // larger (no predecessor).
    q.has_exit = false;
    if (((x >> (w_ - 2)) & 1) == 1 && tail_ != 0) {
      q.pred_node = tail_;
      q.pred = m_.read_word(tail_ + kValue);
    }
    return q;
  }
  q.has_exit = true;
  q.lane = m_.msb_index(c);
  q.block = m_.extract_lane(blocks, q.lane);
  q.min_addr = m_.read_word(q.block);
  q.max_addr = m_.read_word(q.block + 1);
  q.min_val = m_.read_word(q.min_addr + kValue);
  q.max_val = m_.read_word(q.max_addr + kValue);
  if (x >= q.max_val) {
    q.pred = q.max_val;
    q.pred_node = q.max_addr;
  } else {
    if (m_.validating() && x >= q.min_val)
      throw UsageError("query fell strictly inside an edge's leaf range");
    addr_t prev = m_.read_word(q.min_addr + kPrev);
    if (prev != 0) {
      q.pred_node = prev;
      q.pred = m_.read_word(prev + kValue);
    }
  }
  return q;
}

std::optional<word_t> PredecessorTrie::predecessor(word_t x) {
  if (!trie_) {
    std::vector<word_t> values = fb_read();
    auto it = std::upper_bound(values.begin(), values.end(), x);
    if (it == values.begin()) return std::nullopt;
    return *std::prev(it);
  }
  return query(x).pred;
}

std::optional<word_t> PredecessorTrie::min_value() {
  if (n_ == 0) return std::nullopt;
  if (!trie_) return fb_read().front();
  return m_.read_word(head_ + kValue);
}

std::optional<word_t> PredecessorTrie::max_value() {
  if (n_ == 0) return std::nullopt;
  if (!trie_) return fb_read().back();
  return m_.read_word(tail_ + kValue);
}

// ---- pointer repair ----

void PredecessorTrie::repair_pointers(const Ultraword& hits,
                                      const Ultraword& blocks,
                                      unsigned exit_lane, bool max_side,
                                      addr_t old_addr, addr_t new_addr) {
  // Drop the exit edge's lane; the remaining hit lanes are exactly the edges
  // on the path above it.
  Ultraword lane_mask = m_.shift_left(
      m_.shift_right(m_.broadcast(m_.config().word_mask()),
                     (m_.config().lanes - 1) * w_),
      exit_lane * w_);
  Ultraword path = m_.cw_and(hits, m_.cw_not(lane_mask));

  // Miss lanes carry arbitrary block values; point them at private dump
  // slots so the scattered write stays on distinct, writable addresses.
  Ultraword offset = m_.broadcast(max_side ? 1 : 0);
  Ultraword targets = m_.cw_add(blocks, offset);
  Ultraword dump = m_.cw_add(m_.broadcast(dump_addr_), m_.iota());
  targets = m_.cw_blend(dump, targets, path);

  Ultraword current = m_.scatter_read(targets);
  Ultraword stale = m_.cw_equal(current, m_.broadcast(old_addr));
  Ultraword repair = m_.cw_and(path, stale);
  Ultraword replacement = m_.broadcast(new_addr);
  Ultraword patched = m_.cw_blend(current, replacement, repair);
  m_.scatter_write(targets, patched);
}

// ---- updates ----

bool PredecessorTrie::insert(word_t x) {
  if (m_.validating() && (x >> (w_ - 1)) != 0)
    throw UsageError("key does not fit in w-1 bits");
  if (trie_) {
    if (!trie_insert(x)) return false;
    return true;
  }
  std::vector<word_t> values = fb_read();
  auto it = std::lower_bound(values.begin(), values.end(), x);
  if (it != values.end() && *it == x) return false;
  values.insert(it, x);
  fb_write(values);
  ++n_;
  if (n_ >= w_) enter_trie_form();
  return true;
}

bool PredecessorTrie::erase(word_t x) {
  if (trie_) {
    if (!trie_erase(x)) return false;
    if (n_ <= w_ / 2) leave_trie_form();
    return true;
  }
  std::vector<word_t> values = fb_read();
  auto it = std::lower_bound(values.begin(), values.end(), x);
  if (it == values.end() || *it != x) return false;
  values.erase(it);
  fb_write(values);
  --n_;
  return true;
}

bool PredecessorTrie::trie_insert(word_t x) {
  QueryCtx q = query(x);
  if (q.pred == x) return false;

  addr_t node = m_.alloc(kNodeWords);
  m_.write_word(node + kValue, x);
  splice_after(node, q.pred_node);

  if (!q.has_exit) {
    // New direct edge from the root.
    addr_t block = m_.alloc(2);
    m_.write_word(block, node);
    m_.write_word(block + 1, node);
    dict_->insert(prefix_key(w_, x, 1), block);
    ++n_;
    return true;
  }

  bool right = x > q.max_val;
  if (m_.validating() && !right && x >= q.min_val)
    throw UsageError("insert point neither left nor right of the exit edge");
  word_t anchor = right ? q.max_val : q.min_val;
  m_.count_word_ops(1);
  unsigned k = m_.msb_index(x ^ anchor);
  unsigned len = w_ - 1 - k;  // label length of the two new edges

  // The exit edge keeps its key and block as the upper remnant; only the
  // pointer on the branching side moves to the new leaf.
  m_.write_word(q.block + (right ? 1 : 0), node);

  addr_t leaf_block = m_.alloc(2);
  m_.write_word(leaf_block, node);
  m_.write_word(leaf_block + 1, node);
  m_.count_word_ops(1);
  word_t key_leaf = prefix_key(w_, x, len);
  dict_->insert(key_leaf, leaf_block);

  addr_t lower_block = m_.alloc(2);
  m_.write_word(lower_block, q.min_addr);
  m_.write_word(lower_block + 1, q.max_addr);
  dict_->insert(key_leaf ^ (word_t{1} << (w_ - len)), lower_block);

  repair_pointers(q.hits, q.blocks, q.lane, right,
                  right ? q.max_addr : q.min_addr, node);
  ++n_;
  return true;
}

bool PredecessorTrie::trie_erase(word_t x) {
  QueryCtx q = query(x);
  if (q.pred != x) return false;
  if (m_.validating() && (q.min_addr != q.max_addr))
    throw UsageError("exit edge of a stored key is not its leaf edge");
  addr_t node = q.min_addr;
  unsigned len = q.lane;
  m_.count_word_ops(1);
  word_t key_leaf = prefix_key(w_, x, len);

  if (len == 1) {
    // Parent is the root: drop the single edge.
    dict_->erase(key_leaf);
    m_.dealloc(q.block, 2);
    unlink(node);
    m_.dealloc(node, kNodeWords);
    --n_;
    return true;
  }

  bool was_right = (x >> (w_ - 1 - len)) & 1;
  addr_t replacement =
      was_right ? m_.read_word(node + kPrev) : m_.read_word(node + kNext);
  if (m_.validating() && replacement == 0)
    throw UsageError("leaf with an internal parent has no list neighbor");

  // Ancestors pointing at x now point at the surviving subtree's extreme.
  repair_pointers(q.hits, q.blocks, q.lane, was_right, node, replacement);

  // Remove the leaf edge and its sibling; the parent edge's entry silently
  // becomes the merged edge, already repaired above.
  word_t key_sibling = key_leaf ^ (word_t{1} << (w_ - len));
  std::optional<word_t> sibling_block = dict_->find_data(key_sibling);
  if (!sibling_block)
    throw UsageError("sibling edge missing from the dictionary");
  dict_->erase(key_leaf);
  m_.dealloc(q.block, 2);
  dict_->erase(key_sibling);
  m_.dealloc(*sibling_block, 2);

  unlink(node);
  m_.dealloc(node, kNodeWords);
  --n_;
  return true;
}

// ---- form switches ----

void PredecessorTrie::enter_trie_form() {
  std::vector<word_t> values = fb_read();
  fb_destroy();

  auto [masks, markers] = build_prefix_constants(m_);
  masks_ = m_.store_const(masks);
  markers_ = m_.store_const(markers);
  dump_addr_ = m_.alloc(m_.config().lanes);
  dict_.emplace(m_, rng_(), true);
  head_ = tail_ = 0;
  n_ = 0;
  trie_ = true;
  for (word_t v : values) trie_insert(v);
}

void PredecessorTrie::leave_trie_form() {
  std::vector<word_t> values = list_values();

  std::vector<word_t> blocks;
  dict_->for_each([&](word_t, word_t block) { blocks.push_back(block); });
  for (word_t block : blocks) m_.dealloc(block, 2);
  dict_.reset();
  m_.release_const(masks_);
  m_.release_const(markers_);
  m_.dealloc(dump_addr_, m_.config().lanes);
  dump_addr_ = 0;
  addr_t node = head_;
  while (node != 0) {
    addr_t next = m_.read_word(node + kNext);
    m_.dealloc(node, kNodeWords);
    node = next;
  }
  head_ = tail_ = 0;
  trie_ = false;
  fb_create(values);
}

// ---- validation ----

void PredecessorTrie::check_invariants(
    const std::vector<word_t>& expected_sorted) {
  if (expected_sorted.size() != n_)
    throw UsageError("size differs from the oracle");
  if (!trie_) {
    if (fb_read() != expected_sorted)
      throw UsageError("array form differs from the oracle");
    return;
  }
  std::vector<word_t> values = list_values();
  if (values != expected_sorted)
    throw UsageError("leaf list differs from the oracle");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i - 1] >= values[i])
      throw UsageError("leaf list is not strictly increasing");

  // Rebuild node addresses: value -> list node.
  std::map<word_t, addr_t> node_of;
  for (addr_t node = head_; node != 0; node = m_.read_word(node + kNext))
    node_of[m_.read_word(node + kValue)] = node;

  auto expect = detail::reference_edges(w_, expected_sorted);
  std::size_t seen = 0;
  bool ok = true;
  dict_->for_each([&](word_t key, word_t block) {
    ++seen;
    auto it = expect.find(key);
    if (it == expect.end()) {
      ok = false;
      return;
    }
    addr_t min_addr = m_.read_word(block);
    addr_t max_addr = m_.read_word(block + 1);
    if (min_addr != node_of[it->second.first] ||
        max_addr != node_of[it->second.second])
      ok = false;
  });
  if (!ok) throw UsageError("dictionary edge set diverges from the trie");
  if (seen != expect.size())
    throw UsageError("dictionary holds a wrong number of edges");
  if (n_ >= 1 && seen > 2 * n_ - 1)
    throw UsageError("more edges than a compacted trie allows");
  dict_->check_invariants();
}

// ---- w-bit front ----

bool PredecessorSet::insert(word_t x) {
  return (x >> (w_ - 1)) ? high_.insert(low_bits(x)) : low_.insert(x);
}

bool PredecessorSet::erase(word_t x) {
  return (x >> (w_ - 1)) ? high_.erase(low_bits(x)) : low_.erase(x);
}

std::optional<word_t> PredecessorSet::predecessor(word_t x) {
  const word_t top = word_t{1} << (w_ - 1);
  if ((x >> (w_ - 1)) == 0) return low_.predecessor(x);
  std::optional<word_t> r = high_.predecessor(low_bits(x));
  if (r) return *r | top;
  return low_.max_value();
}

std::optional<word_t> PredecessorSet::max_value() {
  const word_t top = word_t{1} << (w_ - 1);
  if (std::optional<word_t> r = high_.max_value()) return *r | top;
  return low_.max_value();
}

void PredecessorSet::check_invariants(
    const std::vector<word_t>& expected_sorted) {
  const word_t top = word_t{1} << (w_ - 1);
  std::vector<word_t> lows, highs;
  for (word_t v : expected_sorted) {
    if (v >= top)
      highs.push_back(v - top);
    else
      lows.push_back(v);
  }
  low_.check_invariants(lows);
  high_.check_invariants(highs);
}

}  // namespace uwram
