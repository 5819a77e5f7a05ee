#include "uwram/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace uwram {

namespace {

std::optional<OpKind> kind_from_name(const std::string& s) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i)
    if (s == kOpNames[i]) return static_cast<OpKind>(i);
  return std::nullopt;
}

word_t parse_value(const std::string& tok, std::size_t line,
                   const MachineConfig& cfg) {
  word_t v = 0;
  if (tok.rfind("0b", 0) == 0) {
    if (tok.size() == 2) throw TraceParseError(line, "empty binary literal");
    for (std::size_t i = 2; i < tok.size(); ++i) {
      if (tok[i] != '0' && tok[i] != '1')
        throw TraceParseError(line, "bad binary digit in '" + tok + "'");
      if (v >> 63) throw TraceParseError(line, "value overflows 64 bits");
      v = (v << 1) | static_cast<word_t>(tok[i] - '0');
    }
  } else {
    try {
      std::size_t used = 0;
      v = std::stoull(tok, &used, 10);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw TraceParseError(line, "bad value '" + tok + "'");
    }
  }
  if (v > cfg.word_mask())
    throw TraceParseError(line, "value '" + tok + "' exceeds 2^w - 1");
  return v;
}

}  // namespace

std::vector<TraceOp> parse_trace(std::istream& in, const MachineConfig& cfg) {
  std::vector<TraceOp> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word) || word[0] == '#') continue;
    std::optional<OpKind> kind = kind_from_name(word);
    if (!kind) throw TraceParseError(lineno, "unknown operation '" + word + "'");
    TraceOp op{*kind, {}};
    std::string tok;
    while (ls >> tok) op.operands.push_back(parse_value(tok, lineno, cfg));
    std::size_t want = op.kind == OpKind::kPMember ? cfg.lanes : 1;
    if (op.operands.size() != want)
      throw TraceParseError(lineno, "expected " + std::to_string(want) +
                                        " operand(s), got " +
                                        std::to_string(op.operands.size()));
    out.push_back(std::move(op));
  }
  return out;
}

void write_trace(std::ostream& out, const std::vector<TraceOp>& trace) {
  for (const TraceOp& op : trace) {
    out << kOpNames[static_cast<std::size_t>(op.kind)];
    for (word_t v : op.operands) out << ' ' << v;
    out << '\n';
  }
}

std::optional<Profile> profile_from_name(const std::string& name) {
  if (name == "uniform") return Profile::kUniform;
  if (name == "clustered") return Profile::kClustered;
  if (name == "sorted") return Profile::kSorted;
  if (name == "adversarial-dense") return Profile::kAdversarialDense;
  return std::nullopt;
}

const char* profile_name(Profile p) {
  switch (p) {
    case Profile::kUniform: return "uniform";
    case Profile::kClustered: return "clustered";
    case Profile::kSorted: return "sorted";
    case Profile::kAdversarialDense: return "adversarial-dense";
  }
  return "?";
}

namespace {

// Key pools sized to the model: every pointer must fit a w-bit component,
// so small machines can only address small structures. At w=8 the 255-word
// arena cannot hold the trie or bucket forms at all (they appear at n >= 8),
// so those pools stay below that threshold.
std::size_t pool_size(const MachineConfig& cfg, StructureKind target,
                      std::size_t ops) {
  switch (cfg.word_bits) {
    case 8:
      return target == StructureKind::kPDict ? 8 : 7;
    case 16:
      return target == StructureKind::kPDict ? 1024 : 512;
    default:
      return std::max<std::size_t>(64, std::min<std::size_t>(2 * ops, 1u << 17));
  }
}

}  // namespace

std::vector<TraceOp> gen_trace(const MachineConfig& cfg, StructureKind target,
                               Profile profile, std::size_t n,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const word_t mask = cfg.word_mask();
  std::vector<word_t> pool(pool_size(cfg, target, n));
  switch (profile) {
    case Profile::kUniform:
      for (word_t& v : pool) v = rng() & mask;
      break;
    case Profile::kClustered: {
      std::size_t clusters = std::max<std::size_t>(1, pool.size() / 64);
      std::vector<word_t> centers(clusters);
      for (word_t& c : centers) c = rng() & mask & ~word_t{63};
      for (word_t& v : pool)
        v = (centers[rng() % clusters] + (rng() & 63)) & mask;
      break;
    }
    case Profile::kSorted: {
      for (word_t& v : pool) v = rng() & mask;
      std::sort(pool.begin(), pool.end());
      break;
    }
    case Profile::kAdversarialDense: {
      word_t base = rng() & mask & ~word_t{0xFFF};
      for (std::size_t i = 0; i < pool.size(); ++i)
        pool[i] = (base + i) & mask;
      break;
    }
  }

  std::vector<TraceOp> out;
  out.reserve(n);
  std::size_t next_sorted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    unsigned roll = rng() % 100;
    if (roll < 45) {
      word_t v = profile == Profile::kSorted
                     ? pool[next_sorted++ % pool.size()]
                     : pool[rng() % pool.size()];
      out.push_back({OpKind::kInsert, {v}});
    } else if (roll < 70) {
      out.push_back({OpKind::kDelete, {pool[rng() % pool.size()]}});
    } else if (target == StructureKind::kPDict) {
      if (roll >= 96) {
        TraceOp op{OpKind::kPMember, {}};
        for (unsigned lane = 0; lane < cfg.lanes; ++lane)
          op.operands.push_back(pool[rng() % pool.size()]);
        out.push_back(std::move(op));
      } else {
        out.push_back({OpKind::kMember, {pool[rng() % pool.size()]}});
      }
    } else {
      word_t v = (pool[rng() % pool.size()] + (rng() & 0x3)) & mask;
      out.push_back({OpKind::kPred, {v}});
    }
  }
  return out;
}

std::optional<word_t> oracle_predecessor(const std::vector<word_t>& sorted,
                                         word_t x) {
  auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
  if (it == sorted.begin()) return std::nullopt;
  return *std::prev(it);
}

bool oracle_member(const std::vector<word_t>& sorted, word_t x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

namespace trace_detail {

void record_mismatch(RunReport& r, std::size_t index,
                     const std::string& expected, const std::string& got) {
  ++r.mismatch_count;
  if (r.first_mismatches.size() < 8)
    r.first_mismatches.push_back({index, expected, got});
}

}  // namespace trace_detail

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct ClassField {
  const char* name;
  std::uint64_t CostCounters::* member;
};

constexpr ClassField kClasses[] = {
    {"word_ops", &CostCounters::word_ops},
    {"ultra_ops", &CostCounters::ultra_ops},
    {"scattered_reads", &CostCounters::scattered_reads},
    {"scattered_writes", &CostCounters::scattered_writes},
    {"contiguous_accesses", &CostCounters::contiguous_accesses},
};

}  // namespace

void RunReport::write_text(std::ostream& os) const {
  os << "structure: " << structure << "\n";
  os << "w: " << w << "\n";
  os << "lanes: " << lanes << "\n";
  os << "epsilon: " << eps_num << "/" << eps_den << "\n";
  os << "seed: " << seed << "\n";
  os << "validate: " << (validate ? "true" : "false") << "\n";
  os << "arena_capacity: " << arena_capacity << "\n";
  std::uint64_t total = 0;
  for (std::uint64_t c : op_counts) total += c;
  os << "ops_total: " << total << "\n";
  for (std::size_t k = 0; k < kOpNames.size(); ++k)
    os << "ops_" << kOpNames[k] << ": " << op_counts[k] << "\n";
  os << "mismatches: " << mismatch_count << "\n";
  for (const Mismatch& mm : first_mismatches)
    os << "mismatch: op=" << mm.op_index << " expected=" << mm.expected
       << " got=" << mm.got << "\n";
  os << "final_size: " << final_size << "\n";
  os << "peak_arena_words: " << peak_arena_words << "\n";
  for (std::size_t k = 0; k < kOpNames.size(); ++k) {
    const KindCost& kc = costs[k];
    if (kc.count == 0) continue;
    for (const ClassField& cf : kClasses) {
      os << "cost_" << kOpNames[k] << "_" << cf.name << "_mean: "
         << fixed3(static_cast<double>(kc.sum.*(cf.member)) /
                   static_cast<double>(kc.count))
         << "\n";
      os << "cost_" << kOpNames[k] << "_" << cf.name
         << "_max: " << kc.max.*(cf.member) << "\n";
    }
  }
}

void RunReport::write_json_lines(std::ostream& os) const {
  os << "{\"type\":\"config\",\"structure\":\"" << structure
     << "\",\"w\":" << w << ",\"lanes\":" << lanes << ",\"epsilon\":\""
     << eps_num << "/" << eps_den << "\",\"seed\":" << seed
     << ",\"validate\":" << (validate ? "true" : "false")
     << ",\"arena_capacity\":" << arena_capacity << "}\n";
  for (std::size_t k = 0; k < kOpNames.size(); ++k) {
    const KindCost& kc = costs[k];
    if (kc.count == 0) continue;
    os << "{\"type\":\"op_cost\",\"op\":\"" << kOpNames[k]
       << "\",\"count\":" << kc.count;
    for (const ClassField& cf : kClasses)
      os << ",\"" << cf.name << "_mean\":"
         << fixed3(static_cast<double>(kc.sum.*(cf.member)) /
                   static_cast<double>(kc.count))
         << ",\"" << cf.name << "_max\":" << kc.max.*(cf.member);
    os << "}\n";
  }
  for (const Mismatch& mm : first_mismatches)
    os << "{\"type\":\"mismatch\",\"op\":" << mm.op_index
       << ",\"expected\":\"" << mm.expected << "\",\"got\":\"" << mm.got
       << "\"}\n";
  std::uint64_t total = 0;
  for (std::uint64_t c : op_counts) total += c;
  os << "{\"type\":\"summary\",\"ops\":" << total
     << ",\"mismatches\":" << mismatch_count
     << ",\"final_size\":" << final_size
     << ",\"peak_arena_words\":" << peak_arena_words << "}\n";
}

}  // namespace uwram
