#include "uwram/pdict.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <string>

namespace uwram {

namespace {
constexpr unsigned kTupleWords = 5;
constexpr int kRedrawsPerGrowth = 64;

word_t pow2_at_least(word_t v, unsigned max_log2) {
  unsigned lg = 0;
  while ((word_t{1} << lg) < v && lg < max_log2) ++lg;
  return word_t{1} << lg;
}
}  // namespace

ParallelDict::ParallelDict(Machine& m, std::uint64_t seed, bool satellite)
    : m_(m),
      satellite_(satellite),
      slot_w_(satellite ? 2 : 1),
      w_(m.config().word_bits),
      top_key_(word_t{1} << (w_ - 1)),
      rng_(seed) {
  reserved_addr_ = m_.alloc(4);
  shared_empty_ = m_.alloc(2 * slot_w_);
  m_.write_word(shared_empty_, top_key_);
  parity_ = m_.store_const(make_parity_constant(m_.config()));

  // 2^c = smallest power of two >= 4 * max(n0, 4) with n0 = 1.
  top_c_ = 4;
  top_a_ = draw_odd();
  word_t buckets = word_t{1} << top_c_;
  top_addr_ = m_.alloc(buckets * kTupleWords);
  std::vector<word_t> tuples(buckets * kTupleWords);
  for (word_t j = 0; j < buckets; ++j) {
    tuples[j * kTupleWords + 0] = shared_empty_;
    tuples[j * kTupleWords + 1] = 2;
    tuples[j * kTupleWords + 2] = 1;
    tuples[j * kTupleWords + 3] = 0;
    tuples[j * kTupleWords + 4] = cap_for_range(2);
  }
  m_.write_block(top_addr_, tuples);
  updates_left_ = 4;
}

ParallelDict::~ParallelDict() {
  word_t buckets = word_t{1} << top_c_;
  for (word_t j = 0; j < buckets; ++j) {
    Tuple t = read_tuple(j);
    if (t.sub != shared_empty_) m_.dealloc(t.sub, t.range * slot_w_);
  }
  m_.dealloc(top_addr_, buckets * kTupleWords);
  m_.dealloc(shared_empty_, 2 * slot_w_);
  m_.dealloc(reserved_addr_, 4);
  m_.release_const(parity_);
}

word_t ParallelDict::draw_odd() {
  return (rng_() & m_.config().word_mask()) | 1;
}

word_t ParallelDict::cap_for_range(word_t range) {
  word_t b = 1;
  while ((b + 1) * b <= range) ++b;
  return b;
}

word_t ParallelDict::sentinel_at(word_t index) const {
  return index == 0 ? top_key_ : 0;
}

ParallelDict::Tuple ParallelDict::read_tuple(word_t j) {
  std::array<word_t, kTupleWords> words;
  m_.read_block(top_addr_ + j * kTupleWords, words);
  return Tuple{words[0], words[1], words[2], words[3], words[4]};
}

void ParallelDict::write_tuple(word_t j, const Tuple& t) {
  std::array<word_t, kTupleWords> words{t.sub, t.range, t.mult, t.size, t.cap};
  m_.write_block(top_addr_ + j * kTupleWords, words);
}

ParallelDict::Slot ParallelDict::locate(word_t key) {
  word_t j = ms_hash(m_, MultiplyShift{top_a_, top_c_}, key);
  Tuple t = read_tuple(j);
  unsigned cj = static_cast<unsigned>(std::countr_zero(t.range));
  word_t k = ms_hash(m_, MultiplyShift{t.mult, cj}, key);
  Slot s;
  s.bucket = j;
  s.index = k;
  s.addr = t.sub + k * slot_w_;
  s.present = m_.read_word(s.addr) == key;
  return s;
}

bool ParallelDict::contains(word_t key) {
  if (key == 0) return m_.read_word(reserved_addr_) == 1;
  if (key == top_key_) return m_.read_word(reserved_addr_ + 2) == 1;
  return locate(key).present;
}

std::optional<word_t> ParallelDict::find_data(word_t key) {
  if (!satellite_) throw UsageError("dictionary stores no satellite data");
  if (key == 0)
    return m_.read_word(reserved_addr_) == 1
               ? std::optional<word_t>(m_.read_word(reserved_addr_ + 1))
               : std::nullopt;
  if (key == top_key_)
    return m_.read_word(reserved_addr_ + 2) == 1
               ? std::optional<word_t>(m_.read_word(reserved_addr_ + 3))
               : std::nullopt;
  Slot s = locate(key);
  if (!s.present) return std::nullopt;
  return m_.read_word(s.addr + 1);
}

void ParallelDict::collect_bucket(const Tuple& t,
                                  std::vector<std::pair<word_t, word_t>>& out) {
  if (t.sub == shared_empty_) return;
  std::vector<word_t> words(t.range * slot_w_);
  m_.read_block(t.sub, words);
  for (word_t s = 0; s < t.range; ++s) {
    word_t key = words[s * slot_w_];
    if (key == sentinel_at(s)) continue;
    out.emplace_back(key, slot_w_ == 2 ? words[s * slot_w_ + 1] : 0);
  }
}

void ParallelDict::rehash_bucket(word_t j,
                                 std::vector<std::pair<word_t, word_t>> keys) {
  Tuple old = read_tuple(j);
  const word_t b = keys.size();
  word_t range = std::max<word_t>(old.range, 2);
  const word_t max_range = word_t{1} << (w_ - 1);
  while (b * (b - 1) > range && range < max_range) range <<= 1;

  word_t mult = old.mult;
  std::vector<word_t> slots;
  int attempts = 0;
  int total_attempts = 0;
  for (;;) {
    mult = draw_odd();
    unsigned cj = static_cast<unsigned>(std::countr_zero(range));
    m_.count_word_ops(2 * b);
    slots.clear();
    for (auto& [key, data] : keys)
      slots.push_back(ms_hash_value(MultiplyShift{mult, cj}, key, w_));
    std::vector<word_t> sorted = slots;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end())
      break;
    if (++attempts >= kRedrawsPerGrowth) {
      if (range < max_range) range <<= 1;
      attempts = 0;
    }
    if (++total_attempts > 1 << 16)
      throw UsageError("bucket cannot be made collision-free at w=" +
                       std::to_string(w_));
  }

  addr_t sub = m_.alloc(range * slot_w_);
  m_.write_word(sub, top_key_);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    m_.write_word(sub + slots[i] * slot_w_, keys[i].first);
    if (slot_w_ == 2)
      m_.write_word(sub + slots[i] * slot_w_ + 1, keys[i].second);
  }
  if (old.sub != shared_empty_) m_.dealloc(old.sub, old.range * slot_w_);
  write_tuple(j, Tuple{sub, range, mult, b, cap_for_range(range)});
}

void ParallelDict::insert(word_t key, word_t data) {
  if (key == 0 || key == top_key_) {
    addr_t base = reserved_addr_ + (key == 0 ? 0 : 2);
    bool was = m_.read_word(base) == 1;
    m_.write_word(base, 1);
    m_.write_word(base + 1, data);
    if (!was) ++count_;
    return;
  }
  Slot s = locate(key);
  if (s.present) {
    if (slot_w_ == 2) m_.write_word(s.addr + 1, data);
    return;
  }
  Tuple t = read_tuple(s.bucket);
  word_t stored = m_.read_word(s.addr);
  bool empty_slot = stored == sentinel_at(s.index);
  if (empty_slot && t.size + 1 <= t.cap && t.sub != shared_empty_) {
    m_.write_word(s.addr, key);
    if (slot_w_ == 2) m_.write_word(s.addr + 1, data);
    ++t.size;
    write_tuple(s.bucket, t);
  } else {
    std::vector<std::pair<word_t, word_t>> contents;
    collect_bucket(t, contents);
    contents.emplace_back(key, data);
    rehash_bucket(s.bucket, std::move(contents));
  }
  ++table_count_;
  ++count_;
  consume_budget();
}

void ParallelDict::erase(word_t key) {
  if (key == 0 || key == top_key_) {
    addr_t base = reserved_addr_ + (key == 0 ? 0 : 2);
    if (m_.read_word(base) == 1) {
      m_.write_word(base, 0);
      m_.write_word(base + 1, 0);
      --count_;
    }
    return;
  }
  Slot s = locate(key);
  if (!s.present) return;
  Tuple t = read_tuple(s.bucket);
  m_.write_word(s.addr, sentinel_at(s.index));
  if (slot_w_ == 2) m_.write_word(s.addr + 1, 0);
  --t.size;
  write_tuple(s.bucket, t);
  --table_count_;
  --count_;
  consume_budget();
}

void ParallelDict::consume_budget() {
  if (--updates_left_ >= 0) return;
  rebuild();
}

void ParallelDict::rebuild() {
  word_t old_buckets = word_t{1} << top_c_;
  std::vector<std::pair<word_t, word_t>> all;
  all.reserve(table_count_);
  for (word_t j = 0; j < old_buckets; ++j) {
    Tuple t = read_tuple(j);
    collect_bucket(t, all);
    if (t.sub != shared_empty_) m_.dealloc(t.sub, t.range * slot_w_);
  }
  m_.dealloc(top_addr_, old_buckets * kTupleWords);

  // 2^c = Theta(n): smallest power of two >= 2n, floor 16, ceiling 2^(w-1).
  word_t want = 2 * std::max<word_t>(all.size(), 8);
  word_t buckets = pow2_at_least(std::max<word_t>(want, 16), w_ - 1);
  top_c_ = static_cast<unsigned>(std::countr_zero(buckets));

  // Redraw the top function until the pair mass is small; any draw still
  // works, this only keeps the expected sub-table space tight.
  std::vector<word_t> sizes(buckets);
  for (int tries = 0; tries < 32; ++tries) {
    top_a_ = draw_odd();
    std::fill(sizes.begin(), sizes.end(), 0);
    m_.count_word_ops(2 * all.size());
    word_t pair_mass = 0;
    for (auto& [key, data] : all) {
      word_t j = ms_hash_value(MultiplyShift{top_a_, top_c_}, key, w_);
      pair_mass += 2 * sizes[j];
      ++sizes[j];
    }
    if (pair_mass <= 4 * std::max<word_t>(all.size(), 1)) break;
  }

  top_addr_ = m_.alloc(buckets * kTupleWords);
  std::vector<word_t> tuples(buckets * kTupleWords);
  for (word_t j = 0; j < buckets; ++j) {
    tuples[j * kTupleWords + 0] = shared_empty_;
    tuples[j * kTupleWords + 1] = 2;
    tuples[j * kTupleWords + 2] = 1;
    tuples[j * kTupleWords + 3] = 0;
    tuples[j * kTupleWords + 4] = cap_for_range(2);
  }
  m_.write_block(top_addr_, tuples);

  std::map<word_t, std::vector<std::pair<word_t, word_t>>> grouped;
  for (auto& kv : all)
    grouped[ms_hash_value(MultiplyShift{top_a_, top_c_}, kv.first, w_)]
        .push_back(kv);
  for (auto& [j, contents] : grouped) rehash_bucket(j, std::move(contents));

  updates_left_ = std::max<std::int64_t>(4, count_ / 2);
}

std::pair<Ultraword, Ultraword> ParallelDict::probe(const Ultraword& keys,
                                                    bool want_data) {
  Ultraword parity = m_.load_const(parity_);
  Ultraword top_mult = m_.broadcast(top_a_);
  Ultraword top_range = m_.broadcast(word_t{1} << top_c_);
  Ultraword buckets = ms_hash_lanes(m_, keys, top_mult, top_range, parity);

  Ultraword stride = m_.broadcast(kTupleWords);
  Ultraword top_base = m_.broadcast(top_addr_);
  Ultraword tuple_addr = m_.cw_add(top_base, m_.cw_mul(stride, buckets));
  Ultraword ones = m_.broadcast(1);
  Ultraword subs = m_.scatter_read(tuple_addr);
  tuple_addr = m_.cw_add(tuple_addr, ones);
  Ultraword ranges = m_.scatter_read(tuple_addr);
  tuple_addr = m_.cw_add(tuple_addr, ones);
  Ultraword mults = m_.scatter_read(tuple_addr);

  Ultraword idx = ms_hash_lanes(m_, keys, mults, ranges, parity);
  if (slot_w_ == 2) idx = m_.cw_mul(idx, m_.broadcast(2));
  Ultraword slot_addr = m_.cw_add(subs, idx);
  Ultraword stored = m_.scatter_read(slot_addr);
  Ultraword hits = m_.cw_equal(keys, stored);

  Ultraword data = Ultraword::zeros(m_.config());
  if (want_data)
    data = m_.scatter_read(m_.cw_add(slot_addr, ones));

  // Patch the lanes probing the two reserved key values.
  Ultraword zero_lane = m_.cw_equal(keys, m_.zero());
  Ultraword flag0 = m_.broadcast(m_.read_word(reserved_addr_));
  hits = m_.cw_blend(hits, flag0, zero_lane);
  Ultraword top_lane = m_.cw_equal(keys, m_.broadcast(top_key_));
  Ultraword flag_top = m_.broadcast(m_.read_word(reserved_addr_ + 2));
  hits = m_.cw_blend(hits, flag_top, top_lane);
  if (want_data) {
    Ultraword data0 = m_.broadcast(m_.read_word(reserved_addr_ + 1));
    data = m_.cw_blend(data, data0, zero_lane);
    Ultraword data_top = m_.broadcast(m_.read_word(reserved_addr_ + 3));
    data = m_.cw_blend(data, data_top, top_lane);
  }
  return {hits, data};
}

Ultraword ParallelDict::pmember(const Ultraword& keys) {
  return probe(keys, false).first;
}

std::pair<Ultraword, Ultraword> ParallelDict::pretrieve(
    const Ultraword& keys) {
  if (!satellite_) throw UsageError("pretrieve requires satellite mode");
  return probe(keys, true);
}

void ParallelDict::for_each(const std::function<void(word_t, word_t)>& fn) {
  word_t buckets = word_t{1} << top_c_;
  std::vector<std::pair<word_t, word_t>> contents;
  for (word_t j = 0; j < buckets; ++j) {
    contents.clear();
    collect_bucket(read_tuple(j), contents);
    for (auto& [key, data] : contents) fn(key, data);
  }
  if (m_.read_word(reserved_addr_) == 1)
    fn(0, m_.read_word(reserved_addr_ + 1));
  if (m_.read_word(reserved_addr_ + 2) == 1)
    fn(top_key_, m_.read_word(reserved_addr_ + 3));
}

void ParallelDict::check_invariants() {
  word_t buckets = word_t{1} << top_c_;
  std::size_t seen = 0;
  for (word_t j = 0; j < buckets; ++j) {
    Tuple t = read_tuple(j);
    if (t.range < 2 || !std::has_single_bit(t.range))
      throw UsageError("bucket range is not a power of two >= 2");
    if (t.mult % 2 == 0) throw UsageError("bucket multiplier is even");
    if (t.cap != cap_for_range(t.range))
      throw UsageError("bucket capacity word out of date");
    if (t.sub == shared_empty_) {
      if (t.size != 0) throw UsageError("empty bucket with nonzero size");
      continue;
    }
    unsigned cj = static_cast<unsigned>(std::countr_zero(t.range));
    std::vector<word_t> words(t.range * slot_w_);
    m_.read_block(t.sub, words);
    word_t found = 0;
    for (word_t s = 0; s < t.range; ++s) {
      word_t key = words[s * slot_w_];
      if (key == sentinel_at(s)) continue;
      if (key == 0 || key == top_key_)
        throw UsageError("reserved key stored in the table");
      ++found;
      if (ms_hash_value(MultiplyShift{top_a_, top_c_}, key, w_) != j)
        throw UsageError("key stored in the wrong bucket");
      if (ms_hash_value(MultiplyShift{t.mult, cj}, key, w_) != s)
        throw UsageError("key stored at the wrong slot");
    }
    if (found != t.size) throw UsageError("bucket size word out of date");
    seen += found;
  }
  if (seen != table_count_) throw UsageError("table count out of sync");
}

}  // namespace uwram
