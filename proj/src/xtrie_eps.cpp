#include "uwram/xtrie_eps.hpp"

#include <algorithm>

namespace uwram {

namespace {
// Separator list node: value, prev, next, owning bucket.
constexpr unsigned kNodeWords = 4;
constexpr unsigned kValue = 0, kPrev = 1, kNext = 2, kBucket = 3;
// Bucket block header: size, prev, next, separator node.
constexpr unsigned kBSize = 0, kBPrev = 1, kBNext = 2, kBNode = 3,
                   kBHeader = 4;
}  // namespace

BucketedPredecessor::BucketedPredecessor(Machine& m, std::uint64_t seed)
    : m_(m),
      w_(m.config().word_bits),
      lanes_(m.config().lanes),
      rng_(seed) {
  const unsigned p = m.config().eps_num, q = m.config().eps_den;
  round_bound_ = (q + p - 1) / p + 1;
  // Node: key count, K lengths, K+1 children, K masks, K markers.
  btree_node_words_ = 1 + lanes_ + (lanes_ + 1) + lanes_ + lanes_;
  btree_root_ = build_btree(1, w_ - 1);
  fb_create({});
}

BucketedPredecessor::~BucketedPredecessor() {
  if (full_) leave_full_form();
  fb_destroy();
  for (addr_t node : btree_nodes_) m_.dealloc(node, btree_node_words_);
}

// ---- B-tree over prefix lengths ----

addr_t BucketedPredecessor::build_btree(unsigned lo, unsigned hi) {
  if (lo > hi) return 0;
  const unsigned count = hi - lo + 1;
  const unsigned K = lanes_;
  std::vector<word_t> lens;
  std::vector<addr_t> children;
  if (count <= K) {
    for (unsigned l = lo; l <= hi; ++l) lens.push_back(l);
    children.assign(count + 1, 0);
  } else {
    unsigned prev = lo - 1;
    for (unsigned i = 0; i < K; ++i) {
      unsigned key = lo + ((i + 1) * count) / (K + 1);
      lens.push_back(key);
      children.push_back(build_btree(prev + 1, key - 1));
      prev = key;
    }
    children.push_back(build_btree(prev + 1, hi));
  }
  addr_t node = m_.alloc(btree_node_words_);
  btree_nodes_.push_back(node);
  std::vector<word_t> words(btree_node_words_, 0);
  const unsigned k = lens.size();
  words[0] = k;
  for (unsigned i = 0; i < k; ++i) words[1 + i] = lens[i];
  for (unsigned i = 0; i < children.size(); ++i)
    words[1 + K + i] = children[i];
  for (unsigned i = 0; i < k; ++i) {
    words[1 + K + (K + 1) + i] = prefix_mask(w_, lens[i]);
    words[1 + K + (K + 1) + K + i] = prefix_marker(w_, lens[i]);
  }
  m_.write_block(node, words);
  return node;
}

unsigned BucketedPredecessor::lcp_search(Side& side, word_t xlow) {
  const unsigned K = lanes_;
  unsigned best = 0;
  unsigned rounds = 0;
  m_.count_word_ops(1);
  word_t xkey = xlow << 1;
  addr_t node = btree_root_;
  while (node != 0) {
    if (++rounds > round_bound_)
      throw UsageError("prefix search exceeded its round bound");
    word_t k = m_.read_word(node);
    std::vector<word_t> lens(k);
    m_.read_block(node + 1, lens);

    Ultraword mask_addrs =
        m_.cw_add(m_.broadcast(node + 1 + K + (K + 1)), m_.iota());
    Ultraword masks = m_.scatter_read(mask_addrs);
    Ultraword marker_addrs =
        m_.cw_add(m_.broadcast(node + 1 + K + (K + 1) + K), m_.iota());
    Ultraword markers = m_.scatter_read(marker_addrs);
    // Zero the lanes past this node's key count; a zero label never matches.
    Ultraword live = m_.shift_right(m_.broadcast(m_.config().word_mask()),
                                    (K - static_cast<unsigned>(k)) * w_);
    masks = m_.cw_and(masks, live);
    markers = m_.cw_and(markers, live);

    Ultraword labels =
        m_.cw_or(m_.cw_and(m_.broadcast(xkey), masks), markers);
    Ultraword hits = side.dict->pmember(labels);
    word_t c = m_.compress(hits);
    unsigned child_index = 0;
    if (c != 0) {
      unsigned lane = m_.msb_index(c);
      best = static_cast<unsigned>(lens[lane]);
      child_index = lane + 1;
    }
    node = m_.read_word(node + 1 + K + child_index);
  }
  max_rounds_ = std::max(max_rounds_, rounds);
  return best;
}

// ---- separator list ----

void BucketedPredecessor::splice_node(Side& side, addr_t node, addr_t after) {
  addr_t next = after == 0 ? side.head : m_.read_word(after + kNext);
  m_.write_word(node + kPrev, after);
  m_.write_word(node + kNext, next);
  if (after == 0)
    side.head = node;
  else
    m_.write_word(after + kNext, node);
  if (next == 0)
    side.tail = node;
  else
    m_.write_word(next + kPrev, node);
}

void BucketedPredecessor::unlink_node(Side& side, addr_t node) {
  addr_t prev = m_.read_word(node + kPrev);
  addr_t next = m_.read_word(node + kNext);
  if (prev == 0)
    side.head = next;
  else
    m_.write_word(prev + kNext, next);
  if (next == 0)
    side.tail = prev;
  else
    m_.write_word(next + kPrev, prev);
}

addr_t BucketedPredecessor::sep_pred_node(Side& side, word_t xlow) {
  if (side.head == 0) return 0;
  unsigned len = lcp_search(side, xlow);
  if (len == 0) {
    // No shared prefix: all separators sit on the other half of this side's
    // key space.
    if (((xlow >> (w_ - 2)) & 1) == 1) return side.tail;
    return 0;
  }
  m_.count_word_ops(1);
  std::optional<word_t> block =
      side.dict->find_data(prefix_key(w_, xlow, len));
  if (!block) throw UsageError("prefix search returned an absent label");
  addr_t min_addr = m_.read_word(*block);
  addr_t max_addr = m_.read_word(*block + 1);
  word_t max_val = m_.read_word(max_addr + kValue);
  if (xlow >= max_val) return max_addr;
  addr_t prev = m_.read_word(min_addr + kPrev);
  if (m_.validating() && xlow >= m_.read_word(min_addr + kValue))
    throw UsageError("separator search fell inside a subtree range");
  return prev;
}

// ---- uncompacted trie maintenance, one length at a time ----

void BucketedPredecessor::sep_attach(Side& side, word_t sep, addr_t node) {
  for (unsigned len = 1; len < w_; ++len) {
    word_t key = prefix_key(w_, sep, len);
    m_.count_word_ops(1);
    if (std::optional<word_t> block = side.dict->find_data(key)) {
      addr_t min_addr = m_.read_word(*block);
      addr_t max_addr = m_.read_word(*block + 1);
      if (sep < m_.read_word(min_addr + kValue))
        m_.write_word(*block, node);
      if (sep > m_.read_word(max_addr + kValue))
        m_.write_word(*block + 1, node);
    } else {
      addr_t fresh = m_.alloc(2);
      m_.write_word(fresh, node);
      m_.write_word(fresh + 1, node);
      side.dict->insert(key, fresh);
    }
  }
}

void BucketedPredecessor::sep_detach(Side& side, word_t sep, addr_t node) {
  // Call while the node is still linked: neighbors replace its pointers.
  addr_t next = m_.read_word(node + kNext);
  addr_t prev = m_.read_word(node + kPrev);
  for (unsigned len = w_ - 1; len >= 1; --len) {
    word_t key = prefix_key(w_, sep, len);
    m_.count_word_ops(1);
    std::optional<word_t> block = side.dict->find_data(key);
    if (!block) throw UsageError("separator edge missing on removal");
    addr_t min_addr = m_.read_word(*block);
    addr_t max_addr = m_.read_word(*block + 1);
    if (min_addr == node && max_addr == node) {
      side.dict->erase(key);
      m_.dealloc(*block, 2);
      continue;
    }
    if (min_addr == node) m_.write_word(*block, next);
    if (max_addr == node) m_.write_word(*block + 1, prev);
  }
}

// ---- buckets ----

addr_t BucketedPredecessor::bucket_alloc() {
  return m_.alloc(kBHeader + 2 * w_ + 1);
}

std::vector<word_t> BucketedPredecessor::bucket_read(addr_t b) {
  word_t size = m_.read_word(b + kBSize);
  std::vector<word_t> elems(size);
  m_.read_block(b + kBHeader, elems);
  return elems;
}

void BucketedPredecessor::bucket_write(addr_t b,
                                       const std::vector<word_t>& elems) {
  m_.write_word(b + kBSize, elems.size());
  m_.write_block(b + kBHeader, elems);
}

addr_t BucketedPredecessor::route(Side& side, word_t x) {
  if (side.bhead == 0) return 0;
  addr_t node = sep_pred_node(side, low_bits(x));
  if (node == 0) return side.bhead;
  word_t sep = m_.read_word(node + kValue);
  addr_t bucket = m_.read_word(node + kBucket);
  if (sep == low_bits(x)) return bucket;
  addr_t next = m_.read_word(bucket + kBNext);
  return next != 0 ? next : bucket;
}

void BucketedPredecessor::split_if_needed(Side& side, addr_t b,
                                          std::vector<word_t> elems) {
  if (elems.size() <= 2 * w_) {
    bucket_write(b, elems);
    return;
  }
  ++splits_;
  addr_t b_node = m_.read_word(b + kBNode);
  word_t b_sep = m_.read_word(b_node + kValue);
  if (m_.read_word(b + kBNext) == 0 && low_bits(elems.back()) != b_sep) {
    // The rightmost bucket absorbs everything above its separator; re-seat
    // the separator at the current maximum so both split halves fall below
    // their representatives. The node keeps its list position: it was and
    // stays the largest separator of this side.
    sep_detach(side, b_sep, b_node);
    b_sep = low_bits(elems.back());
    m_.write_word(b_node + kValue, b_sep);
    sep_attach(side, b_sep, b_node);
  }

  std::size_t half = elems.size() / 2;
  std::vector<word_t> lower(elems.begin(), elems.begin() + half);
  std::vector<word_t> upper(elems.begin() + half, elems.end());

  addr_t nb = bucket_alloc();
  addr_t b_prev = m_.read_word(b + kBPrev);
  m_.write_word(nb + kBPrev, b_prev);
  m_.write_word(nb + kBNext, b);
  if (b_prev == 0)
    side.bhead = nb;
  else
    m_.write_word(b_prev + kBNext, nb);
  m_.write_word(b + kBPrev, nb);
  ++side.buckets;

  word_t lower_sep = low_bits(lower.back());
  addr_t lower_node = m_.alloc(kNodeWords);
  m_.write_word(lower_node + kValue, lower_sep);
  m_.write_word(lower_node + kBucket, nb);
  m_.write_word(nb + kBNode, lower_node);
  splice_node(side, lower_node, m_.read_word(b_node + kPrev));
  sep_attach(side, lower_sep, lower_node);

  bucket_write(nb, lower);
  bucket_write(b, upper);
}

void BucketedPredecessor::remove_bucket(Side& side, addr_t b) {
  addr_t node = m_.read_word(b + kBNode);
  sep_detach(side, m_.read_word(node + kValue), node);
  unlink_node(side, node);
  m_.dealloc(node, kNodeWords);
  addr_t prev = m_.read_word(b + kBPrev);
  addr_t next = m_.read_word(b + kBNext);
  if (prev == 0)
    side.bhead = next;
  else
    m_.write_word(prev + kBNext, next);
  if (next == 0)
    side.btail = prev;
  else
    m_.write_word(next + kBPrev, prev);
  m_.dealloc(b, kBHeader + 2 * w_ + 1);
  --side.buckets;
}

// ---- full-form operations ----

std::optional<word_t> BucketedPredecessor::full_predecessor(word_t x) {
  Side& side = side_of(x);
  addr_t b = route(side, x);
  if (b != 0) {
    std::vector<word_t> elems = bucket_read(b);
    auto it = std::upper_bound(elems.begin(), elems.end(), x);
    if (it != elems.begin()) return *std::prev(it);
    addr_t prev = m_.read_word(b + kBPrev);
    if (prev != 0) {
      word_t size = m_.read_word(prev + kBSize);
      return m_.read_word(prev + kBHeader + size - 1);
    }
  }
  if ((x >> (w_ - 1)) == 1 && sides_[0].btail != 0) {
    addr_t last = sides_[0].btail;
    word_t size = m_.read_word(last + kBSize);
    return m_.read_word(last + kBHeader + size - 1);
  }
  return std::nullopt;
}

bool BucketedPredecessor::full_insert(word_t x) {
  Side& side = side_of(x);
  addr_t b = route(side, x);
  if (b == 0) {
    b = bucket_alloc();
    bucket_write(b, {x});
    side.bhead = side.btail = b;
    side.buckets = 1;
    addr_t node = m_.alloc(kNodeWords);
    m_.write_word(node + kValue, low_bits(x));
    m_.write_word(node + kBucket, b);
    m_.write_word(b + kBNode, node);
    splice_node(side, node, 0);
    sep_attach(side, low_bits(x), node);
    ++n_;
    return true;
  }
  std::vector<word_t> elems = bucket_read(b);
  auto it = std::lower_bound(elems.begin(), elems.end(), x);
  if (it != elems.end() && *it == x) return false;
  elems.insert(it, x);
  split_if_needed(side, b, std::move(elems));
  ++n_;
  return true;
}

bool BucketedPredecessor::full_erase(word_t x) {
  Side& side = side_of(x);
  addr_t b = route(side, x);
  if (b == 0) return false;
  std::vector<word_t> elems = bucket_read(b);
  auto it = std::lower_bound(elems.begin(), elems.end(), x);
  if (it == elems.end() || *it != x) return false;
  elems.erase(it);
  --n_;
  if (elems.size() < w_ / 4 && side.buckets > 1) {
    ++merges_;
    addr_t next = m_.read_word(b + kBNext);
    if (next != 0) {
      std::vector<word_t> merged = std::move(elems);
      std::vector<word_t> rest = bucket_read(next);
      merged.insert(merged.end(), rest.begin(), rest.end());
      remove_bucket(side, b);
      split_if_needed(side, next, std::move(merged));
    } else {
      addr_t prev = m_.read_word(b + kBPrev);
      std::vector<word_t> merged = bucket_read(prev);
      merged.insert(merged.end(), elems.begin(), elems.end());
      remove_bucket(side, b);
      split_if_needed(side, prev, std::move(merged));
    }
    return true;
  }
  if (elems.empty() && side.buckets == 1) {
    remove_bucket(side, b);
    return true;
  }
  bucket_write(b, elems);
  return true;
}

// ---- public operations with the small-n array form ----

bool BucketedPredecessor::insert(word_t x) {
  if (full_) return full_insert(x);
  std::vector<word_t> values = fb_read();
  auto it = std::lower_bound(values.begin(), values.end(), x);
  if (it != values.end() && *it == x) return false;
  values.insert(it, x);
  fb_write(values);
  ++n_;
  if (n_ >= w_) enter_full_form();
  return true;
}

bool BucketedPredecessor::erase(word_t x) {
  if (full_) {
    if (!full_erase(x)) return false;
    if (n_ <= w_ / 2) leave_full_form();
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

std::optional<word_t> BucketedPredecessor::predecessor(word_t x) {
  if (full_) return full_predecessor(x);
  std::vector<word_t> values = fb_read();
  auto it = std::upper_bound(values.begin(), values.end(), x);
  if (it == values.begin()) return std::nullopt;
  return *std::prev(it);
}

// ---- form switches ----

void BucketedPredecessor::enter_full_form() {
  std::vector<word_t> values = fb_read();
  fb_destroy();
  full_ = true;
  sides_[0].dict.emplace(m_, rng_(), true);
  sides_[1].dict.emplace(m_, rng_(), true);

  const word_t top = word_t{1} << (w_ - 1);
  std::size_t side_start = 0;
  for (unsigned s = 0; s < 2; ++s) {
    Side& side = sides_[s];
    std::vector<word_t> mine;
    while (side_start < values.size() &&
           (values[side_start] >= top) == (s == 1)) {
      mine.push_back(values[side_start]);
      ++side_start;
    }
    for (std::size_t at = 0; at < mine.size(); at += w_) {
      std::size_t len = std::min<std::size_t>(w_, mine.size() - at);
      if (len < w_ / 4 && side.btail != 0) {
        // Fold a short final run into the previous bucket.
        std::vector<word_t> prev = bucket_read(side.btail);
        prev.insert(prev.end(), mine.begin() + at, mine.begin() + at + len);
        bucket_write(side.btail, prev);
        break;
      }
      addr_t b = bucket_alloc();
      std::vector<word_t> chunk(mine.begin() + at, mine.begin() + at + len);
      bucket_write(b, chunk);
      m_.write_word(b + kBPrev, side.btail);
      m_.write_word(b + kBNext, 0);
      if (side.btail == 0)
        side.bhead = b;
      else
        m_.write_word(side.btail + kBNext, b);
      side.btail = b;
      ++side.buckets;
      word_t sep = low_bits(chunk.back());
      addr_t node = m_.alloc(kNodeWords);
      m_.write_word(node + kValue, sep);
      m_.write_word(node + kBucket, b);
      m_.write_word(b + kBNode, node);
      splice_node(side, node, side.tail);
      sep_attach(side, sep, node);
    }
  }
}

std::vector<word_t> BucketedPredecessor::all_values() {
  std::vector<word_t> out;
  out.reserve(n_);
  for (Side& side : sides_)
    for (addr_t b = side.bhead; b != 0; b = m_.read_word(b + kBNext)) {
      std::vector<word_t> elems = bucket_read(b);
      out.insert(out.end(), elems.begin(), elems.end());
    }
  return out;
}

void BucketedPredecessor::leave_full_form() {
  std::vector<word_t> values = all_values();
  for (Side& side : sides_) {
    std::vector<word_t> blocks;
    side.dict->for_each(
        [&](word_t, word_t block) { blocks.push_back(block); });
    for (word_t block : blocks) m_.dealloc(block, 2);
    side.dict.reset();
    addr_t node = side.head;
    while (node != 0) {
      addr_t next = m_.read_word(node + kNext);
      m_.dealloc(node, kNodeWords);
      node = next;
    }
    addr_t b = side.bhead;
    while (b != 0) {
      addr_t next = m_.read_word(b + kBNext);
      m_.dealloc(b, kBHeader + 2 * w_ + 1);
      b = next;
    }
    side.head = side.tail = side.bhead = side.btail = 0;
    side.buckets = 0;
  }
  full_ = false;
  fb_create(values);
}

// ---- array form plumbing ----

void BucketedPredecessor::fb_create(const std::vector<word_t>& values) {
  fb_cap_ = std::max<std::uint64_t>(8, 2 * values.size());
  fb_addr_ = m_.alloc(fb_cap_);
  m_.write_block(fb_addr_, values);
  n_ = values.size();
  full_ = false;
}

void BucketedPredecessor::fb_destroy() {
  if (fb_addr_ != 0) m_.dealloc(fb_addr_, fb_cap_);
  fb_addr_ = 0;
  fb_cap_ = 0;
}

std::vector<word_t> BucketedPredecessor::fb_read() {
  std::vector<word_t> values(n_);
  m_.read_block(fb_addr_, values);
  return values;
}

void BucketedPredecessor::fb_write(const std::vector<word_t>& values) {
  if (values.size() > fb_cap_) {
    m_.dealloc(fb_addr_, fb_cap_);
    fb_cap_ *= 2;
    fb_addr_ = m_.alloc(fb_cap_);
  }
  m_.write_block(fb_addr_, values);
}

// ---- validation ----

void BucketedPredecessor::check_invariants(
    const std::vector<word_t>& expected_sorted) {
  if (n_ != expected_sorted.size())
    throw UsageError("size differs from the oracle");
  if (!full_) {
    if (fb_read() != expected_sorted)
      throw UsageError("array form differs from the oracle");
    return;
  }
  std::vector<word_t> values = all_values();
  if (values != expected_sorted)
    throw UsageError("bucket contents differ from the oracle");

  for (unsigned s = 0; s < 2; ++s) {
    Side& side = sides_[s];
    std::size_t buckets_seen = 0;
    word_t prev_sep = 0;
    bool have_prev_sep = false;
    std::vector<word_t> seps;
    for (addr_t b = side.bhead; b != 0; b = m_.read_word(b + kBNext)) {
      ++buckets_seen;
      std::vector<word_t> elems = bucket_read(b);
      bool last = m_.read_word(b + kBNext) == 0;
      bool only = side.buckets == 1;
      if (!only && !last &&
          (elems.size() < w_ / 4 || elems.size() > 2 * w_))
        throw UsageError("bucket size out of bounds");
      if ((last || only) && elems.size() > 2 * w_)
        throw UsageError("rightmost bucket overfull");
      for (std::size_t i = 1; i < elems.size(); ++i)
        if (elems[i - 1] >= elems[i])
          throw UsageError("bucket not strictly increasing");
      for (word_t v : elems)
        if ((v >> (w_ - 1)) != s) throw UsageError("value on the wrong side");
      addr_t node = m_.read_word(b + kBNode);
      if (m_.read_word(node + kBucket) != b)
        throw UsageError("bucket and separator node disagree");
      word_t sep = m_.read_word(node + kValue);
      seps.push_back(sep);
      if (have_prev_sep && prev_sep >= sep)
        throw UsageError("separators not strictly increasing");
      for (word_t v : elems) {
        if (have_prev_sep && low_bits(v) <= prev_sep)
          throw UsageError("element at or below the previous separator");
        if (!last && low_bits(v) > sep)
          throw UsageError("element above its bucket separator");
      }
      prev_sep = sep;
      have_prev_sep = true;
    }
    if (buckets_seen != side.buckets)
      throw UsageError("bucket count out of sync");

    // The uncompacted trie must hold exactly every prefix of every
    // separator, with min/max pointing at the extreme separators below it.
    std::map<word_t, std::pair<word_t, word_t>> expect;
    for (word_t sep : seps)
      for (unsigned len = 1; len < w_; ++len) {
        word_t key = prefix_key(w_, sep, len);
        auto [it, fresh] = expect.emplace(key, std::make_pair(sep, sep));
        if (!fresh) {
          it->second.first = std::min(it->second.first, sep);
          it->second.second = std::max(it->second.second, sep);
        }
      }
    std::map<word_t, addr_t> node_of;
    for (addr_t node = side.head; node != 0;
         node = m_.read_word(node + kNext))
      node_of[m_.read_word(node + kValue)] = node;
    std::size_t seen = 0;
    bool ok = true;
    side.dict->for_each([&](word_t key, word_t block) {
      ++seen;
      auto it = expect.find(key);
      if (it == expect.end()) {
        ok = false;
        return;
      }
      if (m_.read_word(block) != node_of[it->second.first] ||
          m_.read_word(block + 1) != node_of[it->second.second])
        ok = false;
    });
    if (!ok || seen != expect.size())
      throw UsageError("separator trie diverges from the separator set");
    side.dict->check_invariants();
  }
}

}  // namespace uwram
